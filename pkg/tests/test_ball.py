import math
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))

from src.ball import (
    build_axisym_grid,
    full_quotient,
    graded_angles,
    initial_starts,
    minimize_full_quotient,
    pair_trial_upper_bound,
    symmetry_gap,
    trial_upper_bound,
)
from src.configuration import SolveOptions
from src.errors import ParameterError
from src.quotient import minimize_quotient
from src.radial import minimize_radial_quotient
from src.weight import ProblemParams, scaling_exponent

TIGHT = SolveOptions(quotient_rtol=1e-14, grad_tol=1e-8)


def _pair(N: int, p: float, R: float, alpha: float, n_r: int = 48, n_theta: int = 24, opts: SolveOptions = TIGHT):
    params = ProblemParams(N=N, p=p, R=R, alpha=alpha)
    grid = build_axisym_grid(params, n_r, n_theta)
    full = minimize_full_quotient(params, grid, opts)
    radial = minimize_radial_quotient(params, grid.radial, opts)
    return radial, full


@pytest.fixture(scope="module")
def symmetric_pair():
    return _pair(2, 3.0, 1.0, 10.0)


def test_grid_total_measure_is_the_ball_volume() -> None:
    three = build_axisym_grid(ProblemParams(N=3, p=2.0, R=0.4, alpha=10.0), 40, 20)
    assert three.total_measure == pytest.approx(4.0 * math.pi / 3.0, abs=1e-10)
    two = build_axisym_grid(ProblemParams(N=2, p=3.0, R=0.4, alpha=10.0), 40, 20)
    assert two.total_measure == pytest.approx(math.pi, abs=1e-10)
    assert two.node_count == 41 * 20


def test_line_grid_for_one_dimension() -> None:
    grid = build_axisym_grid(ProblemParams(N=1, p=3.0, R=0.5, alpha=4.0), 32, 0)
    assert grid.node_count == 2 * 32 + 1
    assert grid.line[0] == -1.0 and grid.line[-1] == 1.0
    np.testing.assert_allclose(grid.line, -grid.line[::-1], rtol=0.0, atol=0.0)
    assert grid.total_measure == pytest.approx(2.0, abs=1e-12)


def test_angles_cluster_symmetrically_at_both_poles() -> None:
    for alpha in (20.0, 320.0):
        theta = graded_angles(64, alpha, 12.0)
        assert theta[0] == 0.0 and theta[-1] == math.pi
        assert np.all(np.diff(theta) > 0.0)
        np.testing.assert_allclose(theta, math.pi - theta[::-1], rtol=0.0, atol=1e-12)
        assert theta[1] < 1.0 / alpha
    np.testing.assert_allclose(graded_angles(33, 100.0, 0.0), np.linspace(0.0, math.pi, 33), atol=1e-9)


def test_grid_validation() -> None:
    params = ProblemParams(N=3, p=2.0, R=0.4, alpha=10.0)
    with pytest.raises(ParameterError, match="n_r >= 32"):
        build_axisym_grid(params, 16, 32)
    with pytest.raises(ParameterError, match="n_theta >= 16"):
        build_axisym_grid(params, 32, 8)
    grid = build_axisym_grid(params, 32, 16)
    with pytest.raises(ParameterError, match="grid was built for"):
        full_quotient(params.with_R(0.2), grid)


def test_angle_independent_fields_reproduce_the_radial_quotient() -> None:
    from src.radial import radial_quotient

    params = ProblemParams(N=3, p=2.0, R=0.3, alpha=6.0)
    grid = build_axisym_grid(params, 40, 20)
    radial = radial_quotient(params, grid.radial)
    profile = np.random.default_rng(2).uniform(0.2, 1.0, radial.size)
    # origin first, then every (r_i, theta_j) with r_i > 0
    lifted = np.r_[profile[0], np.repeat(profile[1:], grid.n_theta)]
    assert full_quotient(params, grid).quotient(lifted) == pytest.approx(radial.quotient(profile), rel=1e-12)


def test_full_minimum_never_exceeds_the_radial_minimum(symmetric_pair) -> None:
    radial, full = symmetric_pair
    assert full.S_full <= radial.S_rad * (1.0 + 1e-6)
    assert full.nehari_residual <= 1e-8
    assert 0.0 <= full.s_peak < 1.0
    assert full.beta_peak == float(np.max(full.field.values))
    assert np.all(full.field.values[-1] == 0.0)


def test_boundary_weight_groundstate_is_radial(symmetric_pair) -> None:
    radial, full = symmetric_pair
    assert full.asym_index <= 1e-5
    assert full.S_full == pytest.approx(radial.S_rad, rel=1e-6)
    gap, broken = symmetry_gap(radial, full)
    assert not broken
    assert abs(gap) <= 1e-6 * radial.S_rad
    assert {record.label for record in full.starts} == {"radial", "boundary-bump", "origin-bump"}


def test_constant_weight_is_not_broken() -> None:
    radial, full = _pair(2, 3.0, 0.0, 0.0)
    _, broken = symmetry_gap(radial, full)
    assert not broken


def test_one_dimensional_solve_is_even_for_the_boundary_weight() -> None:
    radial, full = _pair(1, 3.0, 1.0, 6.0, n_r=64)
    assert full.asym_index <= 1e-5
    assert full.S_full <= radial.S_rad * (1.0 + 1e-6)


def test_extra_starts_never_raise_the_minimum() -> None:
    params = ProblemParams(N=2, p=3.0, R=0.5, alpha=12.0)
    grid = build_axisym_grid(params, 40, 20)
    base = minimize_full_quotient(params, grid, TIGHT)
    more = minimize_full_quotient(params, grid, SolveOptions(quotient_rtol=1e-14, grad_tol=1e-8, extra_random_starts=2, seed=4))
    assert more.S_full <= base.S_full * (1.0 + 1e-10)
    assert [record.label for record in more.starts][-2:] == ["random-0", "random-1"]


def test_threaded_starts_match_the_sequential_run() -> None:
    params = ProblemParams(N=2, p=3.0, R=0.5, alpha=12.0)
    grid = build_axisym_grid(params, 40, 20)
    sequential = minimize_full_quotient(params, grid, TIGHT)
    threaded = minimize_full_quotient(params, grid, SolveOptions(quotient_rtol=1e-14, grad_tol=1e-8, threads=3))
    assert threaded.S_full == sequential.S_full
    assert threaded.asym_index == sequential.asym_index


def test_trial_bound_lies_above_the_full_minimum() -> None:
    params = ProblemParams(N=2, p=3.0, R=0.0, alpha=20.0)
    grid = build_axisym_grid(params, 64, 32)
    full = minimize_full_quotient(params, grid, TIGHT)
    assert trial_upper_bound(params) >= full.S_full * (1.0 - 1e-6)


def test_trial_bound_scales_with_alpha() -> None:
    for N, p in ((2, 3.0), (3, 2.0)):
        params = ProblemParams(N=N, p=p, R=0.0, alpha=200.0)
        ratio = trial_upper_bound(params.with_alpha(400.0)) / trial_upper_bound(params)
        assert ratio == pytest.approx(2.0 ** scaling_exponent(N, p), rel=0.02)


def test_trial_bound_requires_room_for_a_bump() -> None:
    with pytest.raises(ParameterError, match="no bump"):
        trial_upper_bound(ProblemParams(N=3, p=2.0, R=0.5, alpha=3.0))
    assert trial_upper_bound(ProblemParams(N=1, p=3.0, R=0.5, alpha=10.0)) > 0.0


def test_pair_bound_is_never_below_the_single_bump() -> None:
    params = ProblemParams(N=3, p=2.0, R=0.5, alpha=20.0)
    single = trial_upper_bound(params)
    for t in (0.2, 0.5, 0.8):
        assert pair_trial_upper_bound(params, t) >= single * (1.0 - 1e-12)
    with pytest.raises(ParameterError, match="t must lie"):
        pair_trial_upper_bound(params, 1.5)
    with pytest.raises(ParameterError, match="paired trial"):
        pair_trial_upper_bound(params.with_R(0.0))


def test_symmetry_gap_requires_both_gap_and_asymmetry() -> None:
    radial = SimpleNamespace(S_rad=10.0)
    assert symmetry_gap(radial, SimpleNamespace(S_full=9.0, asym_index=0.3)) == (1.0, True)
    assert symmetry_gap(radial, SimpleNamespace(S_full=9.0, asym_index=1e-6))[1] is False
    assert symmetry_gap(radial, SimpleNamespace(S_full=10.0 - 1e-5, asym_index=0.3))[1] is False
    assert symmetry_gap(radial, SimpleNamespace(S_full=9.99, asym_index=0.3), rel_tol=1e-2)[1] is False


@pytest.mark.slow
def test_henon_weight_breaks_symmetry_at_large_alpha() -> None:
    radial, full = _pair(2, 3.0, 0.0, 100.0, n_r=128, n_theta=64)
    gap, broken = symmetry_gap(radial, full)
    assert broken
    assert gap > 0.0
    assert full.asym_index > 1e-2


def test_boundary_weight_groundstate_is_radial_in_three_dimensions() -> None:
    radial, full = _pair(3, 2.0, 1.0, 10.0)
    gap, broken = symmetry_gap(radial, full)
    assert not broken
    assert abs(gap) <= 1e-4 * radial.S_rad
    assert full.asym_index <= 1e-5


def test_boundary_bump_start_settles_on_the_lower_branch() -> None:
    params = ProblemParams(N=3, p=2.0, R=0.0, alpha=160.0)
    grid = build_axisym_grid(params, 128, 32)
    problem = full_quotient(params, grid)
    r = np.r_[0.0, np.repeat(grid.radial.nodes[1:-1], grid.n_theta)]
    theta = np.r_[0.0, np.tile(grid.theta, grid.radial.n - 2)]
    outcomes = {
        label: minimize_quotient(problem, start, SolveOptions(), label=label)
        for label, start in initial_starts(params, r, theta, SolveOptions())
    }
    assert outcomes["boundary-bump"].value < 0.5 * outcomes["radial"].value

    full = minimize_full_quotient(params, grid, SolveOptions())
    assert full.S_full == pytest.approx(min(outcome.value for outcome in outcomes.values()), rel=1e-6)
    assert full.asym_index > 1e-2
    assert full.s_peak > 0.9


@pytest.mark.slow
@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("alpha", [40.0, 160.0])
def test_boundary_weight_stays_radial_at_large_alpha(N: int, alpha: float) -> None:
    radial, full = _pair(N, 3.0 if N == 2 else 2.0, 1.0, alpha, n_r=96, n_theta=48)
    gap, broken = symmetry_gap(radial, full)
    assert not broken
    assert abs(gap) <= 1e-4 * radial.S_rad
    assert full.asym_index <= 1e-5
