from __future__ import annotations

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from .configuration import SolveOptions
from .errors import ParameterError
from .quotient import (
    RADIAL_GAUSS_ORDER,
    DiscreteQuotient,
    MinimizerOutcome,
    element_quadrature,
    interpolation_matrix,
    lumped_weights,
    minimize_quotient,
    stiffness_matrix,
    weighted_mass_matrix,
)
from .radial import RadialGrid, RadialResult, build_radial_grid, least_energy
from .weight import ProblemParams, eval_V, sphere_area

logger = logging.getLogger(__name__)

ANGULAR_GAUSS_ORDER = 3
TRIAL_GAUSS_POINTS = 160
# starts whose quotients agree to this relative level count as tied
TIE_RTOL = 1e-10
DEFAULT_GRADING = 12.0


@dataclass(frozen=True, eq=False)
class AxisymGrid:
    """Tensor (r, theta) mesh for N >= 2; for N = 1 the mirrored radial nodes on [-1, 1]."""

    N: int
    R: float
    radial: RadialGrid
    theta: np.ndarray | None
    theta_weights: np.ndarray | None
    line: np.ndarray | None = None

    @property
    def n_r(self) -> int:
        return self.radial.n - 1

    @property
    def n_theta(self) -> int:
        return 0 if self.theta is None else int(self.theta.size)

    @property
    def node_count(self) -> int:
        if self.line is not None:
            return int(self.line.size)
        return self.radial.n * self.n_theta

    @property
    def total_measure(self) -> float:
        if self.line is not None:
            return float(np.sum(_line_weights(self.line)))
        assert self.theta_weights is not None
        return sphere_area(self.N - 1) * float(np.sum(self.radial.measure_weights)) * float(np.sum(self.theta_weights))


@dataclass(frozen=True, eq=False)
class AxisymField:
    grid: AxisymGrid
    values: np.ndarray


@dataclass(frozen=True)
class StartRecord:
    label: str
    S: float
    asym_index: float
    iterations: int


@dataclass(frozen=True, eq=False)
class BallResult:
    params: ProblemParams
    S_full: float
    C_full: float
    field: AxisymField
    s_peak: float
    beta_peak: float
    asym_index: float
    nehari_residual: float
    iterations: int
    starts: tuple[StartRecord, ...] = ()


@dataclass(frozen=True, eq=False)
class _BallSystem:
    problem: DiscreteQuotient
    coordinates: tuple[np.ndarray, np.ndarray]
    to_field: Callable[[np.ndarray], np.ndarray]
    asymmetry: Callable[[np.ndarray], float]


def _sin_power_integral(N: int) -> float:
    """int_0^pi sin^{N-2}(theta) dtheta."""
    return math.exp(0.5 * math.log(math.pi) + float(gammaln((N - 1) / 2.0) - gammaln(N / 2.0)))


def _angular_rule(theta: np.ndarray, N: int):
    rule = element_quadrature(theta, order=ANGULAR_GAUSS_ORDER)
    weights = rule.weights * np.sin(rule.points) ** (N - 2)
    weights *= _sin_power_integral(N) / np.sum(weights)
    return rule, weights


def _line_weights(line: np.ndarray) -> np.ndarray:
    rule = element_quadrature(line, order=2)
    return lumped_weights(rule, line.size, rule.weights)


def graded_angles(n_theta: int, alpha: float, grading_strength: float) -> np.ndarray:
    """n_theta angles on [0, pi], mirror-symmetric, clustered logarithmically at both poles on the scale 1/alpha.

    At the default strength half of the nodes sit in the two polar clusters, so a bump of
    width 1/alpha on the axis keeps the same number of nodes across it for every alpha.
    """
    layer = 1.0 / max(alpha, 4.0)
    share = grading_strength / DEFAULT_GRADING
    span = math.log((math.pi + layer) / layer)
    fine = 0.5 * math.pi * (1.0 - np.cos(np.linspace(0.0, math.pi, max(40 * n_theta, 4001))))
    cumulative = fine / math.pi + share / (2.0 * span) * (np.log1p(fine / layer) - np.log1p(-fine / (math.pi + layer)))
    cumulative /= cumulative[-1]
    theta = np.interp(np.linspace(0.0, 1.0, n_theta), cumulative, fine)
    theta = 0.5 * (theta + (math.pi - theta[::-1]))
    theta[0], theta[-1] = 0.0, math.pi
    return theta


def build_axisym_grid(params: ProblemParams, n_r: int, n_theta: int, grading_strength: float = 12.0) -> AxisymGrid:
    if n_r < 32:
        raise ParameterError(f"the ball grid needs n_r >= 32, got {n_r}")
    radial = build_radial_grid(params, n_r + 1, grading_strength)
    if params.N == 1:
        line = np.concatenate([-radial.nodes[::-1], radial.nodes[1:]])
        return AxisymGrid(N=1, R=params.R, radial=radial, theta=None, theta_weights=None, line=line)
    if n_theta < 16:
        raise ParameterError(f"the ball grid needs n_theta >= 16, got {n_theta}")
    theta = graded_angles(n_theta, params.alpha, grading_strength)
    rule, weights = _angular_rule(theta, params.N)
    return AxisymGrid(
        N=params.N,
        R=params.R,
        radial=radial,
        theta=theta,
        theta_weights=lumped_weights(rule, n_theta, weights),
    )


def _line_system(params: ProblemParams, grid: AxisymGrid) -> _BallSystem:
    assert grid.line is not None
    x = grid.line
    breakpoints = [-params.R, params.R] if 0.0 < params.R < 1.0 else []
    rule = element_quadrature(x, breakpoints, order=RADIAL_GAUSS_ORDER)
    interpolation = interpolation_matrix(rule, x.size)[:, 1:-1]
    weighted_V = rule.weights * eval_V(params, np.abs(rule.points))
    problem = DiscreteQuotient(stiffness_matrix(x, 0)[1:-1, 1:-1], interpolation, weighted_V, params.p)
    mass = _line_weights(x)

    def to_field(u: np.ndarray) -> np.ndarray:
        values = np.zeros(x.size)
        values[1:-1] = u
        return values

    def asymmetry(values: np.ndarray) -> float:
        even = 0.5 * (values + values[::-1])
        return math.sqrt(float(mass @ (values - even) ** 2) / float(mass @ values**2))

    interior = x[1:-1]
    return _BallSystem(problem, (np.abs(interior), np.where(interior < 0.0, math.pi, 0.0)), to_field, asymmetry)


def _tensor_system(params: ProblemParams, grid: AxisymGrid) -> _BallSystem:
    assert grid.theta is not None and grid.theta_weights is not None
    N = params.N
    r_nodes, theta = grid.radial.nodes, grid.theta
    n_rad, n_ang = r_nodes.size, theta.size
    free = n_rad - 1

    breakpoints = [params.R] if 0.0 < params.R < 1.0 else []
    rule_r = element_quadrature(r_nodes, breakpoints, order=max(RADIAL_GAUSS_ORDER, N // 2 + 1))
    interp_r = interpolation_matrix(rule_r, n_rad)[:, :-1]
    w_r = rule_r.weights * rule_r.points ** (N - 1)
    K_r = stiffness_matrix(r_nodes, N - 1)[:-1, :-1]
    # the origin row carries no angular energy
    keep = sparse.diags(np.r_[0.0, np.ones(free - 1)])
    M_r = keep @ weighted_mass_matrix(rule_r, n_rad, rule_r.weights * rule_r.points ** (N - 3))[:-1, :-1] @ keep

    rule_t, w_t = _angular_rule(theta, N)
    interp_t = interpolation_matrix(rule_t, n_ang)
    width = theta[rule_t.element + 1] - theta[rule_t.element]
    rows = np.arange(rule_t.points.size)
    slope_t = sparse.csr_matrix(
        (np.r_[-1.0 / width, 1.0 / width], (np.r_[rows, rows], np.r_[rule_t.element, rule_t.element + 1])),
        shape=(rule_t.points.size, n_ang),
    )
    M_t = (interp_t.T @ sparse.diags(w_t) @ interp_t).tocsr()
    K_t = (slope_t.T @ sparse.diags(w_t) @ slope_t).tocsr()

    # prolongation from (origin, r_1..r_{n-2} x theta) to the full (r, theta) index i * n_theta + j
    reduced = 1 + (free - 1) * n_ang
    full_rows = np.arange(free * n_ang)
    full_cols = np.r_[np.zeros(n_ang, dtype=int), 1 + np.arange((free - 1) * n_ang)]
    T = sparse.csr_matrix((np.ones(full_rows.size), (full_rows, full_cols)), shape=(free * n_ang, reduced))

    c = sphere_area(N - 1)
    stiffness = c * (T.T @ (sparse.kron(K_r, M_t) + sparse.kron(M_r, K_t)) @ T)
    interpolation = sparse.kron(interp_r, interp_t, format="csr") @ T
    weighted_V = c * np.kron(w_r * eval_V(params, rule_r.points), w_t)
    problem = DiscreteQuotient(stiffness, interpolation, weighted_V, params.p)

    mass = np.outer(grid.radial.measure_weights, grid.theta_weights)
    ang = grid.theta_weights / np.sum(grid.theta_weights)

    def to_field(u: np.ndarray) -> np.ndarray:
        values = np.zeros((n_rad, n_ang))
        values[:-1] = (T @ u).reshape(free, n_ang)
        return values

    def asymmetry(values: np.ndarray) -> float:
        average = values @ ang
        return math.sqrt(float(np.sum(mass * (values - average[:, None]) ** 2)) / float(np.sum(mass * values**2)))

    rr, tt = np.meshgrid(r_nodes[1:-1], theta, indexing="ij")
    coordinates = (np.r_[0.0, rr.ravel()], np.r_[0.0, tt.ravel()])
    return _BallSystem(problem, coordinates, to_field, asymmetry)


def _ball_system(params: ProblemParams, grid: AxisymGrid) -> _BallSystem:
    if grid.N != params.N or grid.R != params.R:
        raise ParameterError(f"grid was built for (N={grid.N}, R={grid.R:g}), not (N={params.N}, R={params.R:g})")
    return _line_system(params, grid) if params.N == 1 else _tensor_system(params, grid)


def full_quotient(params: ProblemParams, grid: AxisymGrid) -> DiscreteQuotient:
    return _ball_system(params, grid).problem


def initial_starts(params: ProblemParams, r: np.ndarray, theta: np.ndarray, opts: SolveOptions) -> list[tuple[str, np.ndarray]]:
    scale = max(params.alpha, 2.0)
    envelope = 1.0 - r**2
    radial_center = 1.0 - 1.0 / scale if params.R < 0.5 else 0.0
    radial_width = max(1.0 / scale, 0.05)
    bump_width = max(2.0 / scale, 0.1)
    center = 1.0 - 1.0 / scale
    # squared distance to (center, theta = 0) in the meridian plane
    distance = r**2 + center**2 - 2.0 * r * center * np.cos(theta)
    starts = [
        ("radial", np.exp(-(((r - radial_center) / radial_width) ** 2)) + 1e-3 * envelope),
        ("boundary-bump", np.exp(-distance / bump_width**2) + 1e-3 * envelope),
        ("origin-bump", np.exp(-((r / bump_width) ** 2)) + 1e-3 * envelope),
    ]
    for k in range(opts.extra_random_starts):
        rng = np.random.default_rng([opts.seed, k])
        starts.append((f"random-{k}", (0.5 + rng.random(r.size)) * envelope))
    return starts


def _orient(grid: AxisymGrid, values: np.ndarray) -> tuple[np.ndarray, float]:
    """Reflect so the maximum sits on the positive axis; returns the field and the radius of the maximum."""
    if grid.line is not None:
        if grid.line[int(np.argmax(values))] < 0.0:
            values = values[::-1].copy()
        return values, float(grid.line[int(np.argmax(values))])
    i, j = np.unravel_index(int(np.argmax(values)), values.shape)
    if j > (values.shape[1] - 1) / 2:
        values = values[:, ::-1].copy()
    i, _ = np.unravel_index(int(np.argmax(values)), values.shape)
    return values, float(grid.radial.nodes[i])


def minimize_full_quotient(params: ProblemParams, grid: AxisymGrid, opts: SolveOptions) -> BallResult:
    params.require_superlinear()
    system = _ball_system(params, grid)
    r, theta = system.coordinates
    starts = initial_starts(params, r, theta, opts)
    tag = f"ball N={params.N} p={params.p:g} R={params.R:g} alpha={params.alpha:g}"

    def run(start: tuple[str, np.ndarray]) -> MinimizerOutcome:
        return minimize_quotient(system.problem, start[1], opts, label=f"{tag} [{start[0]}]")

    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=min(opts.threads, len(starts))) as pool:
            outcomes = list(pool.map(run, starts))
    else:
        outcomes = [run(start) for start in starts]

    records = []
    for (label, _), outcome in zip(starts, outcomes):
        record = StartRecord(label, outcome.value, system.asymmetry(system.to_field(outcome.u)), outcome.iterations)
        logger.debug("%s start %s: S=%.15g asym=%.3e iterations=%d", tag, label, record.S, record.asym_index, record.iterations)
        records.append(record)

    lowest = min(record.S for record in records)
    tied = [k for k, record in enumerate(records) if record.S <= lowest * (1.0 + TIE_RTOL)]
    best = max(tied, key=lambda k: records[k].asym_index)
    if len(tied) > 1:
        logger.info("%s: %d starts tied at S=%.15g, keeping %s", tag, len(tied), lowest, records[best].label)

    p = params.p
    S_full = records[best].S
    u = S_full ** (1.0 / (p - 1.0)) * outcomes[best].u
    energy = system.problem.energy(u)
    values, s_peak = _orient(grid, system.to_field(u))
    result = BallResult(
        params=params,
        S_full=S_full,
        C_full=least_energy(S_full, p),
        field=AxisymField(grid=grid, values=values),
        s_peak=s_peak,
        beta_peak=float(np.max(values)),
        asym_index=records[best].asym_index,
        nehari_residual=abs(energy - system.problem.denominator(u)) / energy,
        iterations=sum(record.iterations for record in records),
        starts=tuple(records),
    )
    logger.info("%s: S_full=%.15g asym=%.3e from start %s", tag, S_full, result.asym_index, records[best].label)
    return result


def _bump_profile(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """omega(s) = exp(-1/(1-s^2)) and its radial derivative, for s in (-1, 1)."""
    gap = 1.0 - s**2
    omega = np.exp(-1.0 / gap)
    return omega, -2.0 * s / gap**2 * omega


def _bump_parts(params: ProblemParams, center: float, rho: float) -> tuple[float, float]:
    """(int |grad w|^2, int V |w|^{p+1}) for w(x) = omega((x - center e_1)/rho)."""
    N, p = params.N, params.p
    nodes, weights = np.polynomial.legendre.leggauss(TRIAL_GAUSS_POINTS)
    if N == 1:
        omega, slope = _bump_profile(nodes)
        energy = float(weights @ slope**2) / rho
        radius = np.minimum(np.abs(center + rho * nodes), 1.0)
        return energy, rho * float(weights @ (eval_V(params, radius) * omega ** (p + 1.0)))

    s = 0.5 * (nodes + 1.0)
    w_s = 0.5 * weights
    omega, slope = _bump_profile(s)
    energy = sphere_area(N) * rho ** (N - 2) * float(w_s @ (slope**2 * s ** (N - 1)))

    phi = 0.5 * math.pi * (nodes + 1.0)
    w_phi = 0.5 * math.pi * weights * np.sin(phi) ** (N - 2)
    ss, pp = np.meshgrid(s, phi, indexing="ij")
    radius = np.sqrt(np.maximum(center**2 + 2.0 * center * rho * ss * np.cos(pp) + (rho * ss) ** 2, 0.0))
    integrand = eval_V(params, np.minimum(radius, 1.0)) * (omega ** (p + 1.0) * s ** (N - 1))[:, None]
    denominator = sphere_area(N - 1) * rho**N * float(w_s @ integrand @ w_phi)
    return energy, denominator


def _admissible_bumps(params: ProblemParams, bump_width: float) -> dict[str, float]:
    """Bump centres whose support stays clear of the shell."""
    centers: dict[str, float] = {}
    if params.alpha <= 0.0:
        return centers
    rho = bump_width / params.alpha
    if params.R < 1.0 and params.alpha > 2.0 * bump_width / (1.0 - params.R):
        centers["boundary"] = 1.0 - rho
    if params.R > 0.0 and params.alpha > 2.0 * bump_width / params.R:
        centers["origin"] = rho
    return centers


def trial_upper_bound(params: ProblemParams, bump_width: float = 1.0) -> float:
    params.require_superlinear()
    centers = _admissible_bumps(params, bump_width)
    if not centers:
        raise ParameterError(
            f"no bump of width {bump_width:g}/alpha fits beside the shell for R={params.R:g}, alpha={params.alpha:g} "
            f"(needs alpha > {2 * bump_width:g}/(1-R) or alpha > {2 * bump_width:g}/R)"
        )
    rho = bump_width / params.alpha
    values = []
    for name, center in centers.items():
        energy, denominator = _bump_parts(params, center, rho)
        values.append(energy / denominator ** (2.0 / (params.p + 1.0)))
        logger.debug("trial bump %s at %.6g: quotient %.12g", name, center, values[-1])
    return min(values)


def pair_trial_upper_bound(params: ProblemParams, t: float = 0.5, bump_width: float = 1.0) -> float:
    """Quotient of t w_origin + (1-t) w_boundary; both bumps must fit on their side of the shell."""
    params.require_superlinear()
    if not 0.0 < t < 1.0:
        raise ParameterError(f"t must lie in (0, 1), got {t!r}")
    centers = _admissible_bumps(params, bump_width)
    if set(centers) != {"origin", "boundary"}:
        raise ParameterError(
            f"the paired trial needs alpha > {2 * bump_width:g}/R and alpha > {2 * bump_width:g}/(1-R), "
            f"got R={params.R:g}, alpha={params.alpha:g}"
        )
    rho = bump_width / params.alpha
    E1, D1 = _bump_parts(params, centers["origin"], rho)
    E2, D2 = _bump_parts(params, centers["boundary"], rho)
    p = params.p
    energy = t**2 * E1 + (1.0 - t) ** 2 * E2
    denominator = t ** (p + 1.0) * D1 + (1.0 - t) ** (p + 1.0) * D2
    return energy / denominator ** (2.0 / (p + 1.0))


def symmetry_gap(radial: RadialResult, full: BallResult, rel_tol: float = 1e-4) -> tuple[float, bool]:
    gap = radial.S_rad - full.S_full
    broken = gap > rel_tol * radial.S_rad and full.asym_index > 10.0 * rel_tol
    return gap, bool(broken)
