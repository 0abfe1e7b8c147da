import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

sys.path.append(str(Path(__file__).resolve().parents[1]))

from src.errors import DimensionError, DomainError, ParameterError, SingularPointError
from src.special import c_epsilon
from src.weight import (
    I_R,
    R0,
    ProblemParams,
    blowup_lower_bound,
    compute_constants,
    condition_check,
    eval_V,
    eval_V_prime,
    integral_V,
    log_min_exponential,
    lower_constant_2d,
    moving_shell_epsilon,
    radial_asymptotic_lower_bound,
    sobolev_lower_bound,
    sphere_area,
    upper_envelope,
)


def _params(N: int = 3, p: float = 2.0, R: float = 0.5, alpha: float = 3.0) -> ProblemParams:
    return ProblemParams(N=N, p=p, R=R, alpha=alpha)


def test_problem_params_validation_names_the_constraint() -> None:
    with pytest.raises(ParameterError, match="not Sobolev-subcritical for N=3"):
        _params(p=6.0)
    with pytest.raises(ParameterError, match="R must lie in"):
        _params(R=1.5)
    with pytest.raises(ParameterError, match="alpha must be"):
        _params(alpha=-1.0)
    with pytest.raises(ParameterError, match="integer dimension"):
        ProblemParams(N=2.5, p=2.0, R=0.0, alpha=1.0)
    with pytest.raises(ParameterError, match="> 1 for the groundstate"):
        _params(p=1.0).require_superlinear()


def test_eval_V_examples() -> None:
    assert eval_V(_params(R=0.5, alpha=7.0), 0.5) == 0.0
    assert eval_V(_params(R=0.5, alpha=7.0), 0.0) == 1.0
    assert eval_V(_params(R=0.0, alpha=3.0), 0.5) == pytest.approx(0.125, rel=1e-15)
    assert eval_V(_params(R=1.0, alpha=2.0), 1.0) == 0.0


def test_eval_V_shape_and_range() -> None:
    r = np.linspace(0.0, 1.0, 2001)
    for R in (0.0, 0.2, 0.5, 0.9, 1.0):
        for alpha in (0.0, 0.5, 3.0, 80.0, 900.0):
            values = eval_V(_params(R=R, alpha=alpha), r)
            assert np.all(values >= 0.0) and np.all(values <= 1.0)
            if 0.0 < R < 1.0 and alpha > 0.0:
                assert eval_V(_params(R=R, alpha=alpha), R) == 0.0
                assert eval_V(_params(R=R, alpha=alpha), 1.0) == 1.0


def test_eval_V_log_space_underflows_to_zero() -> None:
    params = _params(R=0.0, alpha=2000.0)
    assert eval_V(params, 0.5) == 0.0
    assert eval_V(params, 0.999) == pytest.approx(0.999**2000, rel=1e-12)


def test_eval_V_rejects_points_outside_the_interval() -> None:
    with pytest.raises(DomainError):
        eval_V(_params(), 1.2)


def test_eval_V_prime_examples_and_sign() -> None:
    assert eval_V_prime(_params(R=0.0, alpha=2.0), 0.5) == pytest.approx(1.0, rel=1e-15)
    for r in (0.1, 0.5, 0.9):
        assert eval_V_prime(_params(R=1.0, alpha=1.0), r) == pytest.approx(-1.0, rel=1e-15)
    params = _params(R=0.4, alpha=2.5)
    assert np.all(eval_V_prime(params, np.linspace(0.01, 0.39, 20)) < 0.0)
    assert np.all(eval_V_prime(params, np.linspace(0.41, 0.99, 20)) > 0.0)


def test_eval_V_prime_matches_finite_differences() -> None:
    params = _params(R=0.3, alpha=4.0)
    h = 1e-6
    for r in (0.1, 0.2, 0.6, 0.95):
        numeric = (eval_V(params, r + h) - eval_V(params, r - h)) / (2 * h)
        assert eval_V_prime(params, r) == pytest.approx(numeric, rel=1e-6)


def test_eval_V_prime_at_the_shell() -> None:
    assert eval_V_prime(_params(R=0.5, alpha=3.0), 0.5) == 0.0
    with pytest.raises(SingularPointError, match="unbounded"):
        eval_V_prime(_params(R=0.5, alpha=0.5), 0.5)
    with pytest.raises(SingularPointError) as info:
        eval_V_prime(_params(R=0.5, alpha=1.0), 0.5)
    assert info.value.left == pytest.approx(-2.0)
    assert info.value.right == pytest.approx(2.0)


def test_integral_V_closed_forms() -> None:
    for R in (0.0, 0.3, 1.0):
        for alpha in (0.0, 2.0, 150.0):
            value = integral_V(_params(N=1, p=3.0, R=R, alpha=alpha))
            assert value == pytest.approx(2.0 / (alpha + 1.0), rel=1e-14)
    for alpha in (0.0, 1.0, 17.0):
        assert integral_V(_params(N=3, R=0.0, alpha=alpha)) == pytest.approx(4 * math.pi / (3 + alpha), rel=1e-13)


def test_integral_V_matches_quadrature_and_bound() -> None:
    rng = np.random.default_rng(11)
    for _ in range(50):
        N = int(rng.integers(1, 6))
        p = 1.5 if N < 5 else 1.2
        params = ProblemParams(N=N, p=p, R=float(rng.uniform(0.0, 1.0)), alpha=float(rng.uniform(0.0, 200.0)))
        integrand = lambda r: eval_V(params, r) * r ** (N - 1)  # noqa: E731
        left, _ = quad(integrand, 0.0, params.R, epsabs=0.0, epsrel=1e-12, limit=500)
        right, _ = quad(integrand, params.R, 1.0, epsabs=0.0, epsrel=1e-12, limit=500)
        exact = integral_V(params)
        assert exact == pytest.approx(sphere_area(N) * (left + right), rel=1e-10)
        bound = sphere_area(N) / (params.alpha + 1.0)
        if N == 1:
            assert exact == pytest.approx(bound, rel=1e-13)
        else:
            assert exact < bound


def test_I_R_examples() -> None:
    assert I_R(_params(R=0.7, alpha=1.0), 0.5) == pytest.approx(0.7**1.5 / 1.5, rel=1e-13)
    assert I_R(_params(R=0.0, alpha=3.0), 0.5) == 0.0
    assert I_R(_params(R=1.0, alpha=2.0), 1.0) == pytest.approx(1.0 / 6.0, rel=1e-13)
    with pytest.raises(DomainError, match="beta > -1"):
        I_R(_params(), -1.0)


def test_I_R_matches_quadrature() -> None:
    for alpha in (1.5, 10.0, 100.0):
        for beta_exp, R in ((0.5, 0.6), (-0.5, 0.3), (2.0, 0.9)):
            params = _params(R=R, alpha=alpha)
            value, _ = quad(lambda r: r**0, 0.0, R, weight="alg", wvar=(beta_exp, alpha - 1.0))
            assert I_R(params, beta_exp) == pytest.approx(value * R ** (1.0 - alpha), rel=1e-9)


def test_compute_constants_examples() -> None:
    constants = compute_constants(3, 2.0)
    assert constants.K == pytest.approx(0.25, rel=1e-13)
    assert constants.beta_exp == pytest.approx(0.5)
    assert constants.sphere_area == pytest.approx(4 * math.pi)
    assert compute_constants(2, 3.0).sphere_area == pytest.approx(2 * math.pi)


def test_compute_constants_consistency_identity() -> None:
    rng = np.random.default_rng(3)
    for _ in range(50):
        N = int(rng.integers(3, 9))
        p = float(rng.uniform(1.05, (N + 2) / (N - 2) - 0.01))
        c = compute_constants(N, p)
        factor = (p + 1) / 2 * ((p - 1) / (2 * (p + 1))) ** ((p + 1) / 2)
        assert abs(c.K - factor * c.K_lower) <= 1e-12 * c.K
        assert c.beta_exp > -1.0


def test_compute_constants_refuses_low_dimensions() -> None:
    constants = compute_constants(2, 3.0)
    assert constants.K is None and constants.K_lower is None
    assert constants.require("K_star") > 0.0
    with pytest.raises(DimensionError, match="requires N >= 3"):
        constants.require("K")
    with pytest.raises(DimensionError, match="requires N >= 2"):
        compute_constants(1, 3.0).require("K_star")


def test_R0_value_monotonicity_and_condition_cross_check() -> None:
    S = 9.5
    expected = math.exp(-8.0 / 3.0) * 4.0 ** (2.0 / 3.0) / S
    assert R0(3, 2.0, S) == pytest.approx(expected, rel=1e-12)
    assert R0(3, 2.0, 12.0) < R0(3, 2.0, 9.0)
    radius = R0(3, 2.0, S)
    assert condition_check(_params(R=radius * 0.99), S)
    assert compute_constants(3, 2.0, S).R0 == pytest.approx(radius)


def test_R0_errors() -> None:
    with pytest.raises(DomainError, match="critical exponent"):
        R0(3, 5.0, 10.0)
    with pytest.raises(DimensionError):
        R0(2, 3.0, 10.0)


def test_condition_check_limits() -> None:
    assert condition_check(_params(R=0.0), 1e6)
    assert not condition_check(_params(R=0.999), 10.0)
    assert not condition_check(_params(R=1.0), 2.0 * sobolev_lower_bound(3, 2.0))
    assert condition_check(_params(R=1.0), 0.5 * sobolev_lower_bound(3, 2.0))
    # the boundary exponential is the smaller one below R = 1/2
    assert log_min_exponential(0.01, 2.0) == pytest.approx(4.0 / (3.0 * 0.99))
    assert log_min_exponential(0.99, 2.0) == pytest.approx(4.0 / (3.0 * 0.99))


def test_min_exponential_bounded_by_e_8_over_p1() -> None:
    for p in (1.5, 2.0, 4.0):
        for R in np.linspace(0.01, 0.99, 99):
            assert log_min_exponential(float(R), p) <= 8.0 / (p + 1) + 1e-15
        assert log_min_exponential(0.0, p) == pytest.approx(4.0 / (p + 1))
        assert log_min_exponential(1.0, p) == pytest.approx(4.0 / (p + 1))


def test_sobolev_lower_bound_value() -> None:
    expected = (4 * math.pi) ** (1 / 3) * (math.sqrt(math.pi) / 2) ** (-2 / 3) * math.exp(-4 / 3)
    assert sobolev_lower_bound(3, 2.0) == pytest.approx(expected, rel=1e-13)
    for N, p in ((3, 1.5), (4, 2.5), (5, 1.1)):
        assert sobolev_lower_bound(N, p) > 0.0
    with pytest.raises(DimensionError):
        sobolev_lower_bound(2, 3.0)


def test_envelopes_and_asymptotic_bounds() -> None:
    S = 10.0
    assert upper_envelope(_params(R=0.0), S) == pytest.approx(math.exp(4 / 3) * S)
    assert upper_envelope(_params(R=0.5), S) == pytest.approx(math.exp(8 / 3) * S)
    K = compute_constants(3, 2.0).K
    assert radial_asymptotic_lower_bound(3, 2.0, 1.0) == pytest.approx(K ** (-2 / 3))
    assert radial_asymptotic_lower_bound(3, 2.0, 0.1) > radial_asymptotic_lower_bound(3, 2.0, 0.5)


def test_blowup_lower_bound_grows_with_alpha() -> None:
    S = 20.0
    low = blowup_lower_bound(_params(R=1.0, alpha=10.0), S)
    high = blowup_lower_bound(_params(R=1.0, alpha=100.0), S)
    assert high > low > 0.0
    params = _params(R=1.0, alpha=10.0)
    assert low ** 3 * integral_V(params) == pytest.approx(S**3, rel=1e-12)


def test_lower_constant_2d_and_moving_shell_epsilon() -> None:
    p, eps = 3.0, 0.25
    K2, beta_exp = lower_constant_2d(p, eps)
    assert beta_exp == pytest.approx(0.0)
    expected = 4.0 * math.pi ** (-1.0) * 4.0 * 2.0 ** (-2.0) * c_epsilon(eps) ** 4
    assert K2 == pytest.approx(expected, rel=1e-13)
    with pytest.raises(DomainError, match="eps must lie"):
        lower_constant_2d(p, 0.5)

    for delta in (0.1, 1.0, 10.0, 1e4):
        eps = moving_shell_epsilon(delta, p)
        assert 0.0 < eps < 2.0 / (p + 1)
    assert moving_shell_epsilon(1.0, 3.0) == pytest.approx(0.2)
