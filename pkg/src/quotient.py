from __future__ import annotations

import logging
import math
import threading
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .configuration import SolveOptions
from .errors import ConvergenceError, DegenerateWeightError
from .weight import ProblemParams

logger = logging.getLogger(__name__)

RADIAL_GAUSS_ORDER = 4
MAX_BACKTRACK = 30
LOG_EVERY = 500


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss points of a 1D P1 mesh; cells are split at every breakpoint so kinks of V are never straddled."""

    points: np.ndarray
    weights: np.ndarray
    element: np.ndarray
    left: np.ndarray
    right: np.ndarray


def element_quadrature(nodes: np.ndarray, breakpoints: Sequence[float] = (), order: int = RADIAL_GAUSS_ORDER) -> QuadratureRule:
    inside = [x for x in breakpoints if nodes[0] < x < nodes[-1]]
    bounds = np.union1d(nodes, np.asarray(inside, dtype=float))
    lo, hi = bounds[:-1], bounds[1:]
    cell_elem = np.searchsorted(nodes, lo, side="right") - 1

    gauss_x, gauss_w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (hi - lo)
    points = (lo[:, None] + half[:, None] * (gauss_x[None, :] + 1.0)).ravel()
    weights = (half[:, None] * gauss_w[None, :]).ravel()
    element = np.repeat(cell_elem, order)
    width = nodes[element + 1] - nodes[element]
    right = (points - nodes[element]) / width
    return QuadratureRule(points=points, weights=weights, element=element, left=1.0 - right, right=right)


def interpolation_matrix(rule: QuadratureRule, n_nodes: int) -> sparse.csr_matrix:
    rows = np.arange(rule.points.size)
    return sparse.csr_matrix(
        (
            np.concatenate([rule.left, rule.right]),
            (np.concatenate([rows, rows]), np.concatenate([rule.element, rule.element + 1])),
        ),
        shape=(rule.points.size, n_nodes),
    )


def stiffness_matrix(nodes: np.ndarray, power: int) -> sparse.csr_matrix:
    """Exact int r^power phi_i' phi_j' dr for P1 hats, power >= 0."""
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    moment = h if power == 0 else (b ** (power + 1) - a ** (power + 1)) / (power + 1)
    k = moment / h**2
    main = np.zeros(nodes.size)
    main[:-1] += k
    main[1:] += k
    return sparse.diags([main, -k, -k], [0, 1, -1], format="csr")


def weighted_mass_matrix(rule: QuadratureRule, n_nodes: int, weights: np.ndarray) -> sparse.csr_matrix:
    interp = interpolation_matrix(rule, n_nodes)
    return (interp.T @ sparse.diags(weights) @ interp).tocsr()


def lumped_weights(rule: QuadratureRule, n_nodes: int, weights: np.ndarray) -> np.ndarray:
    """Hat-function integrals against the given quadrature weights."""
    return np.asarray(interpolation_matrix(rule, n_nodes).T @ weights).ravel()


def graded_nodes(params: ProblemParams, n: int, grading_strength: float) -> np.ndarray:
    """n nodes on [0, 1] equidistributing a density peaked at r = 1, at the shell and at the origin side of it."""
    layer = 1.0 / max(params.alpha, 4.0)
    fine = np.linspace(0.0, 1.0, max(20 * n, 4001))
    density = 1.0 + grading_strength / (1.0 + (1.0 - fine) / layer)
    if 0.0 < params.R < 1.0:
        density += grading_strength / (1.0 + np.abs(fine - params.R) / layer)
    if params.R > 0.0:
        density += grading_strength / (1.0 + fine / (layer * params.R))
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(fine))])
    cumulative /= cumulative[-1]
    nodes = np.interp(np.linspace(0.0, 1.0, n), cumulative, fine)
    nodes[0], nodes[-1] = 0.0, 1.0
    return avoid_shell(nodes, params.R)


def avoid_shell(nodes: np.ndarray, R: float) -> np.ndarray:
    """Move the interior node nearest to R off the shell, toward its neighbour."""
    if not 0.0 < R < 1.0:
        return nodes
    nodes = nodes.copy()
    i = int(np.argmin(np.abs(nodes - R)))
    if i == 0 or i == nodes.size - 1:
        return nodes
    spacing = min(nodes[i + 1] - nodes[i], nodes[i] - nodes[i - 1])
    if abs(nodes[i] - R) < 0.25 * spacing:
        nodes[i] = 0.5 * (R + nodes[i + 1]) if nodes[i] >= R else 0.5 * (R + nodes[i - 1])
    return nodes


class DiscreteQuotient:
    """Q(u) = E(u) / D(u)^{2/(p+1)} with E = u^T A u and D = sum_q w_q V_q |(P u)_q|^{p+1}."""

    def __init__(self, stiffness: sparse.spmatrix, interpolation: sparse.spmatrix, weighted_V: np.ndarray, p: float) -> None:
        if not np.sum(weighted_V) > 0.0:
            raise DegenerateWeightError(
                "the weight V vanishes at every quadrature point; alpha is too large for this grid"
            )
        self.stiffness = sparse.csc_matrix(stiffness)
        self.interpolation = sparse.csr_matrix(interpolation)
        self.weighted_V = np.asarray(weighted_V, dtype=float)
        self.p = float(p)
        self._lu = splu(self.stiffness)
        # SuperLU handles are not safe to share between concurrent solves
        self._lu_lock = threading.Lock()

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]

    def energy(self, u: np.ndarray) -> float:
        return float(u @ (self.stiffness @ u))

    def denominator(self, u: np.ndarray) -> float:
        values = self.interpolation @ u
        return float(self.weighted_V @ np.abs(values) ** (self.p + 1.0))

    def quotient(self, u: np.ndarray) -> float:
        return self.energy(u) / self.denominator(u) ** (2.0 / (self.p + 1.0))

    def normalize(self, u: np.ndarray) -> np.ndarray | None:
        value = self.denominator(u)
        if not value > 0.0 or not math.isfinite(value):
            return None
        return u / value ** (1.0 / (self.p + 1.0))

    def constraint_gradient(self, u: np.ndarray) -> np.ndarray:
        values = self.interpolation @ u
        return self.interpolation.T @ (self.weighted_V * np.abs(values) ** (self.p - 1.0) * values)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        with self._lu_lock:
            return self._lu.solve(rhs)

    def a_norm(self, u: np.ndarray) -> float:
        return math.sqrt(max(self.energy(u), 0.0))


@dataclass(frozen=True, eq=False)
class MinimizerOutcome:
    u: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    stopped_by: str


def minimize_quotient(problem: DiscreteQuotient, u0: np.ndarray, opts: SolveOptions, *, label: str = "quotient") -> MinimizerOutcome:
    """Preconditioned descent on {D = 1} with Barzilai-Borwein steps and |.| after every step.

    The direction u - E A^{-1} g(u) vanishes exactly at constrained critical points; the step
    u - d is the normalized inverse iteration, BB steps accelerate it and a nonmonotone
    backtracking against the last ``opts.quotient_window`` values keeps it stable. When the
    windowed maximum stops decreasing the iteration is caught in a cycle: from then on every
    step must lower the current value and the BB length restarts from 1.
    """
    u = problem.normalize(np.abs(np.asarray(u0, dtype=float)))
    if u is None:
        raise DegenerateWeightError(f"{label}: the initial guess does not meet the support of V")
    energy = problem.energy(u)
    history = [energy]
    previous_u: np.ndarray | None = None
    previous_d: np.ndarray | None = None
    low, high = opts.bb_clip
    window = opts.quotient_window
    grad_norm = math.inf
    monotone = False

    for iteration in range(1, opts.max_iter + 1):
        direction = u - energy * problem.solve(problem.constraint_gradient(u))
        grad_norm = problem.a_norm(direction) / math.sqrt(energy)
        if grad_norm < opts.grad_tol:
            logger.debug("%s: gradient tolerance met at iteration %d (Q=%.15g)", label, iteration, energy)
            return MinimizerOutcome(u, energy, iteration, grad_norm, "gradient")

        step = 1.0
        if previous_u is not None and previous_d is not None:
            s = u - previous_u
            y = direction - previous_d
            sy = float(s @ (problem.stiffness @ y))
            if sy > 0.0:
                step = min(max(problem.energy(s) / sy, low), high)

        reference = energy if monotone else max(history[-window:])
        accepted: tuple[np.ndarray, float] | None = None
        fallback: tuple[np.ndarray, float] | None = None
        for _ in range(MAX_BACKTRACK):
            trial = problem.normalize(np.abs(u - step * direction))
            if trial is not None:
                fallback = (trial, problem.energy(trial))
                if (fallback[1] < energy) if monotone else (fallback[1] <= reference * (1.0 + 1e-14)):
                    accepted = fallback
                    break
            step *= 0.5

        if accepted is None:
            if monotone or fallback is None:
                logger.debug("%s: no descent step left at iteration %d (Q=%.15g grad=%.3e)", label, iteration, energy, grad_norm)
                return MinimizerOutcome(u, energy, iteration, grad_norm, "quotient")
            accepted = fallback

        previous_u, previous_d = u, direction
        u, energy = accepted
        history.append(energy)
        if iteration % LOG_EVERY == 0:
            logger.debug("%s: iteration %d Q=%.15g grad=%.3e step=%.3g", label, iteration, energy, grad_norm, step)
        if len(history) > window and abs(history[-window - 1] - energy) <= opts.quotient_rtol * energy:
            logger.debug("%s: quotient stalled at iteration %d (Q=%.15g)", label, iteration, energy)
            return MinimizerOutcome(u, energy, iteration, grad_norm, "quotient")
        cycling = len(history) > 2 * window and max(history[-window:]) >= max(history[-2 * window : -window]) * (1.0 - opts.quotient_rtol)
        if cycling and not monotone:
            logger.debug("%s: windowed maximum stopped decreasing at iteration %d, switching to monotone steps", label, iteration)
            monotone = True
            previous_u = previous_d = None

    raise ConvergenceError(f"{label}: no convergence within max_iter={opts.max_iter}", grad_norm=grad_norm, iterations=opts.max_iter)
