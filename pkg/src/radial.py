from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, eigsh

from .configuration import SolveOptions
from .errors import ConvergenceError, ParameterError
from .quotient import (
    RADIAL_GAUSS_ORDER,
    DiscreteQuotient,
    QuadratureRule,
    avoid_shell,
    element_quadrature,
    graded_nodes,
    interpolation_matrix,
    lumped_weights,
    minimize_quotient,
    stiffness_matrix,
)
from .weight import (
    ProblemParams,
    boundary_term,
    compute_constants,
    eval_V,
    eval_V_prime,
    lower_estimate_constants,
    scaling_exponent,
    shell_term,
    sphere_area,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    N: int
    R: float
    nodes: np.ndarray
    measure_weights: np.ndarray
    grading: dict[str, float]

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.diff(self.nodes)))


@dataclass(frozen=True, eq=False)
class RadialProfile:
    grid: RadialGrid
    values: np.ndarray


@dataclass(frozen=True)
class DiagnosticReport:
    nehari_residual: float
    pohozaev_residual: float
    boundary_flux: float
    ni_violation: float | None
    lemma1_slack: float | None
    lemma2_slack: float | None
    lemma3_slack: float | None
    A_alpha: float | None
    B_alpha: float | None

    @property
    def A_over_B(self) -> float | None:
        if self.A_alpha is None or not self.B_alpha:
            return None
        return self.A_alpha / self.B_alpha

    def to_dict(self) -> dict[str, float | None]:
        return {
            "nehari_residual": self.nehari_residual,
            "pohozaev_residual": self.pohozaev_residual,
            "boundary_flux": self.boundary_flux,
            "ni_violation": self.ni_violation,
            "lemma1_slack": self.lemma1_slack,
            "lemma2_slack": self.lemma2_slack,
            "lemma3_slack": self.lemma3_slack,
            "A_alpha": self.A_alpha,
            "B_alpha": self.B_alpha,
        }


@dataclass(frozen=True, eq=False)
class RadialResult:
    params: ProblemParams
    S_rad: float
    C_rad: float
    profile: RadialProfile
    beta_peak: float
    s_peak: float
    iterations: int = 0
    residuals: DiagnosticReport | None = None


@dataclass(frozen=True, eq=False)
class _RadialSystem:
    problem: DiscreteQuotient
    rule: QuadratureRule
    area: float


def _measure_weights(nodes: np.ndarray, N: int) -> np.ndarray:
    rule = element_quadrature(nodes, order=max(RADIAL_GAUSS_ORDER, N // 2 + 1))
    return lumped_weights(rule, nodes.size, rule.weights * rule.points ** (N - 1))


def build_radial_grid(params: ProblemParams, n: int, grading_strength: float = 12.0) -> RadialGrid:
    if n < 16:
        raise ParameterError(f"a radial grid needs n >= 16 nodes, got {n}")
    nodes = graded_nodes(params, n, grading_strength)
    return RadialGrid(
        N=params.N,
        R=params.R,
        nodes=nodes,
        measure_weights=_measure_weights(nodes, params.N),
        grading={"strength": float(grading_strength), "layer": 1.0 / max(params.alpha, 4.0)},
    )


def radial_grid_from_nodes(params: ProblemParams, nodes: np.ndarray, grading: dict[str, float] | None = None) -> RadialGrid:
    """Rebuild a grid from archived nodes."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.size < 16 or nodes[0] != 0.0 or nodes[-1] != 1.0 or np.any(np.diff(nodes) <= 0.0):
        raise ParameterError("archived nodes must increase strictly from 0 to 1 with at least 16 entries")
    if 0.0 < params.R < 1.0 and np.any(nodes == params.R):
        raise ParameterError(f"archived nodes contain the shell radius R={params.R:g}")
    return RadialGrid(
        N=params.N, R=params.R, nodes=nodes, measure_weights=_measure_weights(nodes, params.N), grading=dict(grading or {})
    )


def refine_radial_grid(grid: RadialGrid) -> RadialGrid:
    """Nested refinement: every element bisected, 2n - 1 nodes."""
    midpoints = 0.5 * (grid.nodes[1:] + grid.nodes[:-1])
    if 0.0 < grid.R < 1.0:
        hit = np.isclose(midpoints, grid.R, rtol=0.0, atol=1e-14)
        midpoints[hit] = 0.5 * (midpoints[hit] + grid.nodes[:-1][hit])
    nodes = np.empty(2 * grid.n - 1)
    nodes[0::2] = grid.nodes
    nodes[1::2] = midpoints
    return replace(grid, nodes=nodes, measure_weights=_measure_weights(nodes, grid.N))


def _radial_system(params: ProblemParams, grid: RadialGrid) -> _RadialSystem:
    if grid.N != params.N or grid.R != params.R:
        raise ParameterError(f"grid was built for (N={grid.N}, R={grid.R:g}), not (N={params.N}, R={params.R:g})")
    breakpoints = [params.R] if 0.0 < params.R < 1.0 else []
    rule = element_quadrature(grid.nodes, breakpoints, order=max(RADIAL_GAUSS_ORDER, params.N // 2 + 1))
    area = sphere_area(params.N)
    interpolation = interpolation_matrix(rule, grid.n)[:, :-1]
    weighted_V = area * rule.weights * rule.points ** (params.N - 1) * eval_V(params, rule.points)
    stiffness = area * stiffness_matrix(grid.nodes, params.N - 1)[:-1, :-1]
    return _RadialSystem(DiscreteQuotient(stiffness, interpolation, weighted_V, params.p), rule, area)


def radial_quotient(params: ProblemParams, grid: RadialGrid) -> DiscreteQuotient:
    """The discrete radial quotient on the free nodes (all but r = 1)."""
    return _radial_system(params, grid).problem


def initial_radial_guess(params: ProblemParams, nodes: np.ndarray) -> np.ndarray:
    scale = max(params.alpha, 2.0)
    center = 1.0 - 1.0 / scale if params.R < 0.5 else 0.0
    width = max(1.0 / scale, 0.05)
    r = nodes[:-1]
    return np.exp(-(((r - center) / width) ** 2)) + 1e-3 * (1.0 - r**2)


def minimize_radial_quotient(params: ProblemParams, grid: RadialGrid, opts: SolveOptions) -> RadialResult:
    params.require_superlinear()
    system = _radial_system(params, grid)
    outcome = minimize_quotient(
        system.problem,
        initial_radial_guess(params, grid.nodes),
        opts,
        label=f"radial N={params.N} p={params.p:g} R={params.R:g} alpha={params.alpha:g}",
    )
    p = params.p
    S_rad = outcome.value
    values = np.zeros(grid.n)
    values[:-1] = S_rad ** (1.0 / (p - 1.0)) * outcome.u
    peak = int(np.argmax(values))
    result = RadialResult(
        params=params,
        S_rad=S_rad,
        C_rad=least_energy(S_rad, p),
        profile=RadialProfile(grid=grid, values=values),
        beta_peak=float(values[peak]),
        s_peak=float(grid.nodes[peak]),
        iterations=outcome.iterations,
    )
    logger.info(
        "radial N=%d p=%g R=%g alpha=%g: S_rad=%.15g after %d iterations (%s)",
        params.N, p, params.R, params.alpha, S_rad, outcome.iterations, outcome.stopped_by,
    )
    return replace(result, residuals=diagnostics(params, result, eps=opts.log_estimate_eps))


def least_energy(S: float, p: float) -> float:
    """C = (p-1)/(2(p+1)) S^{(p+1)/(p-1)}, the inverse of S = (2(p+1)/(p-1))^{(p-1)/(p+1)} C^{(p-1)/(p+1)}."""
    return (p - 1.0) / (2.0 * (p + 1.0)) * S ** ((p + 1.0) / (p - 1.0))


def boundary_slope(nodes: np.ndarray, values: np.ndarray) -> float:
    """u'(1) from the quadratic through the last three nodes."""
    x0, x1, x2 = nodes[-3:]
    f0, f1, f2 = values[-3:]
    return float(
        f0 * (x2 - x1) / ((x0 - x1) * (x0 - x2))
        + f1 * (x2 - x0) / ((x1 - x0) * (x1 - x2))
        + f2 * (2.0 * x2 - x0 - x1) / ((x2 - x0) * (x2 - x1))
    )


def diagnostics(params: ProblemParams, result: RadialResult, *, eps: float | None = None) -> DiagnosticReport:
    grid = result.profile.grid
    system = _radial_system(params, grid)
    N, p, alpha = params.N, params.p, params.alpha
    u = result.profile.values[:-1]

    energy = system.problem.energy(u)
    weighted = system.problem.denominator(u)
    nehari = abs(energy - weighted) / energy

    flux = system.area * boundary_slope(grid.nodes, result.profile.values) ** 2
    rule = system.rule
    at_points = np.abs(system.problem.interpolation @ u) ** (p + 1.0)
    derivative = eval_V_prime(params, rule.points)
    radial_moment = system.area * float(np.sum(rule.weights * rule.points**N * derivative * at_points))
    rhs = scaling_exponent(N, p) * weighted + 2.0 / (p + 1.0) * radial_moment
    pohozaev = abs(flux - rhs) / max(abs(flux), abs(rhs), np.finfo(float).tiny)

    ni_violation = None
    if N >= 3:
        r = grid.nodes[1:]
        bound = math.sqrt(energy / (system.area * (N - 2))) * r ** (-(N - 2) / 2.0)
        ni_violation = max(0.0, float(np.max(result.profile.values[1:] - bound)))

    lemma1 = lemma2 = lemma3 = A_alpha = B_alpha = None
    if N >= 2:
        C = result.C_rad
        K_star = compute_constants(N, p).require("K_star")
        K_lower, beta_exp = lower_estimate_constants(params, eps)
        A_alpha = shell_term(params, C, K_lower, beta_exp)
        B_alpha = boundary_term(params, C, K_star)
        lhs = (2.0 * (N + alpha) / (p + 1.0) - (N - 2)) * 2.0 * (p + 1.0) / (p - 1.0) * C
        lemma1 = B_alpha - flux
        lemma2 = flux - (lhs - A_alpha)
        lemma3 = A_alpha + B_alpha - lhs

    return DiagnosticReport(
        nehari_residual=nehari,
        pohozaev_residual=pohozaev,
        boundary_flux=flux,
        ni_violation=ni_violation,
        lemma1_slack=lemma1,
        lemma2_slack=lemma2,
        lemma3_slack=lemma3,
        A_alpha=A_alpha,
        B_alpha=B_alpha,
    )


def eigen_lower_bound_p1(params: ProblemParams, grid: RadialGrid) -> float:
    """First eigenvalue of -Lap u = lambda (1-|x|)^alpha u on radial functions."""
    if params.p != 1.0 or params.R != 1.0:
        raise ParameterError(f"the weighted eigenvalue problem needs p = 1 and R = 1, got p={params.p:g}, R={params.R:g}")
    system = _radial_system(params, grid)
    problem = system.problem
    mass = (problem.interpolation.T @ sparse.diags(problem.weighted_V) @ problem.interpolation).tocsc()
    solve = LinearOperator(problem.stiffness.shape, matvec=problem.solve, dtype=float)
    mu = eigsh(mass, k=1, M=problem.stiffness, Minv=solve, which="LA", v0=np.ones(problem.size), return_eigenvectors=False)
    return 1.0 / float(mu[0])


def shooting_quotient(params: ProblemParams, *, rtol: float = 1e-11, max_bisections: int = 200) -> float:
    """Radial quotient of the positive solution found by shooting on u(0) for u'' + (N-1)u'/r + V u^p = 0."""
    params.require_superlinear()
    N, p = params.N, params.p
    area = sphere_area(N)
    r0 = 1e-6

    def rhs(r: float, y: np.ndarray) -> list[float]:
        weight = eval_V(params, min(r, 1.0))
        u, v = y[0], y[1]
        power = abs(u) ** (p - 1.0) * u
        return [v, -(N - 1) / r * v - weight * power, area * weight * abs(u) ** (p + 1.0) * r ** (N - 1)]

    def hits_zero(r: float, y: np.ndarray) -> float:
        return y[0]

    hits_zero.terminal = True  # type: ignore[attr-defined]
    hits_zero.direction = -1  # type: ignore[attr-defined]

    def shoot(a: float):
        start = eval_V(params, r0) * a**p
        y0 = [a - start * r0**2 / (2 * N), -start * r0 / N, 0.0]
        return solve_ivp(rhs, (r0, 1.0), y0, method="DOP853", rtol=rtol, atol=1e-13, events=hits_zero)

    def crosses(a: float) -> bool:
        return shoot(a).t_events[0].size > 0

    high = 1.0
    for _ in range(200):
        if crosses(high):
            break
        high *= 2.0
    else:
        raise ConvergenceError("shooting: no initial value reaches zero before r = 1", grad_norm=math.nan, iterations=200)
    low = 0.5 * high
    while crosses(low):
        high, low = low, 0.5 * low

    for _ in range(max_bisections):
        if high - low <= 1e-13 * high:
            break
        mid = 0.5 * (low + high)
        if crosses(mid):
            high = mid
        else:
            low = mid

    total = float(shoot(low).y[2, -1])
    return total ** ((p - 1.0) / (p + 1.0))
