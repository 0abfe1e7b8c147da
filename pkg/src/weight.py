from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np
from scipy.special import betaln, comb, gammaln

from .errors import DimensionError, DomainError, ParameterError, SingularPointError
from .special import c_epsilon

# Below this log-value exp() underflows in double precision.
LOG_UNDERFLOW = -745.0
LOG_SPACE_ALPHA = 50.0


@dataclass(frozen=True)
class ProblemParams:
    """One instance (N, p, R, alpha) of -Lap u = V_{R,alpha}(|x|) u^p on the unit ball."""

    N: int
    p: float
    R: float
    alpha: float

    def __post_init__(self) -> None:
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise ParameterError(f"N must be an integer dimension >= 1, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "alpha", float(self.alpha))
        if not self.p >= 1.0:
            raise ParameterError(f"p must be >= 1, got {self.p!r}")
        if self.N >= 3 and not self.p < critical_exponent(self.N):
            raise ParameterError(
                f"p={self.p:g} is not Sobolev-subcritical for N={self.N} (requires p < {critical_exponent(self.N):g})"
            )
        if not 0.0 <= self.R <= 1.0:
            raise ParameterError(f"R must lie in [0, 1], got {self.R!r}")
        if not self.alpha >= 0.0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha!r}")

    def require_superlinear(self) -> None:
        if not self.p > 1.0:
            raise ParameterError(f"p must be > 1 for the groundstate rescaling, got {self.p!r}")

    def with_alpha(self, alpha: float) -> "ProblemParams":
        return replace(self, alpha=alpha)

    def with_R(self, R: float) -> "ProblemParams":
        return replace(self, R=R)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ProblemConstants:
    N: int
    p: float
    beta_exp: float
    sphere_area: float
    K: float | None
    K_star: float | None
    K_lower: float | None
    R0: float | None = None

    def require(self, name: str) -> float:
        value = getattr(self, name)
        if value is None:
            needed = "N >= 2" if name == "K_star" else "N >= 3"
            if name == "R0":
                needed = "N >= 3 and a Sobolev constant S"
            raise DimensionError(f"{name} is undefined for N={self.N}; it requires {needed}")
        return float(value)


def critical_exponent(N: int) -> float:
    return math.inf if N <= 2 else (N + 2) / (N - 2)


def _check_exponent(N: int, p: float) -> None:
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise DimensionError(f"N must be an integer dimension >= 1, got {N!r}")
    if not p > 1.0:
        raise DomainError(f"p must be > 1, got {p!r}")
    if N >= 3 and not p < critical_exponent(N):
        raise DomainError(f"p={p:g} is not Sobolev-subcritical for N={N} (requires p < {critical_exponent(N):g})")


def _require_dimension(N: int, minimum: int, what: str) -> None:
    if N < minimum:
        raise DimensionError(f"{what} requires N >= {minimum} (its formula carries an (N-2) factor), got N={N}")


def sphere_area(N: int) -> float:
    """|S^{N-1}| = 2 pi^{N/2} / Gamma(N/2); equals 2 for N = 1."""
    return 2.0 * math.exp(0.5 * N * math.log(math.pi) - float(gammaln(0.5 * N)))


def _power(base: np.ndarray, exponent: float) -> np.ndarray:
    """base^exponent for base in [0, 1], evaluated in log space for large exponents."""
    if exponent == 0.0:
        return np.ones_like(base)
    if exponent <= LOG_SPACE_ALPHA:
        with np.errstate(divide="ignore"):
            return np.power(base, exponent)
    out = np.zeros_like(base)
    positive = base > 0.0
    logs = exponent * np.log(base[positive])
    out[positive] = np.where(logs < LOG_UNDERFLOW, 0.0, np.exp(np.maximum(logs, LOG_UNDERFLOW)))
    return out


def _shell_base(params: ProblemParams, r: np.ndarray) -> np.ndarray:
    R = params.R
    if R == 0.0:
        base = r.copy()
    elif R == 1.0:
        base = 1.0 - r
    else:
        base = np.where(r < R, 1.0 - r / R, (r - R) / (1.0 - R))
    return np.clip(base, 0.0, 1.0)


def _as_output(values: np.ndarray, like: Any) -> Any:
    if np.ndim(like) == 0:
        return float(values)
    return values


def eval_V(params: ProblemParams, r: Any) -> Any:
    """V_{R,alpha}(r): (1 - r/R)^alpha below the shell, (1 - (1-r)/(1-R))^alpha above it."""
    r_arr = np.asarray(r, dtype=float)
    if np.any((r_arr < 0.0) | (r_arr > 1.0)):
        raise DomainError("eval_V is defined for r in [0, 1]")
    return _as_output(_power(_shell_base(params, r_arr), params.alpha), r)


def shell_jump(params: ProblemParams) -> tuple[float | None, float | None]:
    """One-sided limits of V' at r = R when alpha = 1 (None where the side does not exist)."""
    left = -1.0 / params.R if params.R > 0.0 else None
    right = 1.0 / (1.0 - params.R) if params.R < 1.0 else None
    return left, right


def eval_V_prime(params: ProblemParams, r: Any) -> Any:
    r_arr = np.asarray(r, dtype=float)
    if np.any((r_arr < 0.0) | (r_arr > 1.0)):
        raise DomainError("eval_V_prime is defined for r in [0, 1]")
    alpha, R = params.alpha, params.R
    at_shell = r_arr == R
    if np.any(at_shell) and 0.0 < alpha <= 1.0:
        if alpha < 1.0:
            raise SingularPointError(f"V' is unbounded at the shell r = R = {R:g} for alpha = {alpha:g} < 1")
        left, right = shell_jump(params)
        raise SingularPointError(
            f"V' jumps at the shell r = R = {R:g} for alpha = 1 (left {left}, right {right})",
            left=left,
            right=right,
        )
    if alpha == 0.0:
        return _as_output(np.zeros_like(r_arr), r)

    base = _shell_base(params, r_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        magnitude = _power(base, alpha - 1.0)
    below = r_arr < R
    scale = np.where(below, -alpha / R if R > 0.0 else 0.0, alpha / (1.0 - R) if R < 1.0 else 0.0)
    values = np.where(at_shell, 0.0, scale * magnitude)
    return _as_output(values, r)


def integral_V(params: ProblemParams) -> float:
    """Exact value of int_B V(|x|) dx through Beta integrals of the two shell pieces."""
    N, R, alpha = params.N, params.R, params.alpha
    inner = R**N * math.exp(float(betaln(alpha + 1.0, N))) if R > 0.0 else 0.0
    outer = 0.0
    if R < 1.0:
        for k in range(N):
            outer += float(comb(N - 1, k, exact=True)) * R ** (N - 1 - k) * (1.0 - R) ** (k + 1) / (alpha + k + 1.0)
    return sphere_area(N) * (inner + outer)


def I_R(params: ProblemParams, beta_exp: float) -> float:
    """int_0^R (1 - r/R)^(alpha-1) r^beta dr = R^(beta+1) Gamma(alpha)Gamma(beta+1)/Gamma(alpha+beta+1)."""
    if not params.alpha > 0.0:
        raise DomainError(f"I_R requires alpha > 0, got {params.alpha!r}")
    if not beta_exp > -1.0:
        raise DomainError(f"I_R requires beta > -1, got {beta_exp!r}")
    if params.R == 0.0:
        return 0.0
    log_value = (
        (beta_exp + 1.0) * math.log(params.R)
        + float(gammaln(params.alpha) + gammaln(beta_exp + 1.0) - gammaln(params.alpha + beta_exp + 1.0))
    )
    return math.exp(log_value)


def beta_exponent(N: int, p: float) -> float:
    return N - 1 - (p + 1) * (N - 2) / 2


def compute_constants(N: int, p: float, S: float | None = None) -> ProblemConstants:
    _check_exponent(N, p)
    beta_exp = beta_exponent(N, p)
    area = sphere_area(N)

    K_star = None
    if N >= 2:
        K_star = area ** ((1 - p) / (p + 1)) * (2 * (p + 1) / (p - 1)) ** (2 * p / (p + 1))

    K = K_lower = None
    if N >= 3:
        log_common = 0.5 * (1 - p) * math.log(area) + float(gammaln(beta_exp + 1.0))
        K = math.exp(-0.5 * (p + 1) * math.log(N - 2) + log_common)
        K_lower = math.exp(
            0.5 * (p + 3) * math.log(2.0)
            + 0.5 * (p - 1) * math.log(p + 1)
            - 0.5 * (p + 1) * math.log((p - 1) * (N - 2))
            + log_common
        )

    radius = R0(N, p, S) if (S is not None and N >= 3) else None
    return ProblemConstants(
        N=N, p=p, beta_exp=beta_exp, sphere_area=area, K=K, K_star=K_star, K_lower=K_lower, R0=radius
    )


def R0(N: int, p: float, S: float) -> float:
    """Radius below which the strict shell condition holds for every R (uses min{...} <= e^{8/(p+1)})."""
    _require_dimension(N, 3, "R0")
    denominator = 2 * N - (p + 1) * (N - 2)
    if denominator <= 0:
        raise DomainError(f"R0 is undefined at or above the critical exponent (2N - (p+1)(N-2) = {denominator:g})")
    if not S > 0:
        raise DomainError(f"R0 requires S > 0, got {S!r}")
    K = compute_constants(N, p).require("K")
    log_base = -8.0 / (p + 1) - 2.0 / (p + 1) * math.log(K) - math.log(S)
    return math.exp(log_base * (p + 1) / denominator)


def log_min_exponential(R: float, p: float) -> float:
    """ln min{e^{4/(R(p+1))}, e^{4/((1-R)(p+1))}}, finite on all of [0, 1]."""
    near_origin = math.inf if R == 0.0 else 4.0 / (R * (p + 1))
    near_boundary = math.inf if R == 1.0 else 4.0 / ((1.0 - R) * (p + 1))
    return min(near_origin, near_boundary)


def condition_check(params: ProblemParams, S: float) -> bool:
    _require_dimension(params.N, 3, "condition_check")
    params.require_superlinear()
    if params.R == 0.0:
        return True
    N, p = params.N, params.p
    K = compute_constants(N, p).require("K")
    exponent = 2 * N / (p + 1) - (N - 2)
    lhs = exponent * math.log(params.R) + log_min_exponential(params.R, p)
    rhs = -2.0 / (p + 1) * math.log(K) - math.log(S)
    return lhs < rhs


def upper_envelope(params: ProblemParams, S: float) -> float:
    """min{e^{4/(R(p+1))}, e^{4/((1-R)(p+1))}} S, the limsup bound of S_alpha alpha^{N-2-2N/(p+1)}."""
    return math.exp(log_min_exponential(params.R, params.p)) * S


def sobolev_lower_bound(N: int, p: float) -> float:
    _require_dimension(N, 3, "sobolev_lower_bound")
    _check_exponent(N, p)
    log_value = (
        math.log(N - 2)
        + (p - 1) / (p + 1) * math.log(sphere_area(N))
        - 2.0 / (p + 1) * float(gammaln(beta_exponent(N, p) + 1.0))
        - 4.0 / (p + 1)
    )
    return math.exp(log_value)


def radial_asymptotic_lower_bound(N: int, p: float, R: float) -> float:
    """K^{-2/(p+1)} R^{N-2-2N/(p+1)}: liminf of S_{alpha,rad} alpha^{N-2-2N/(p+1)} when the shell term dominates."""
    if not 0.0 < R <= 1.0:
        raise DomainError(f"radial_asymptotic_lower_bound requires R in (0, 1], got {R!r}")
    K = compute_constants(N, p).require("K")
    return K ** (-2.0 / (p + 1)) * R ** (N - 2 - 2 * N / (p + 1))


def blowup_lower_bound(params: ProblemParams, S_alpha: float) -> float:
    """Smallest sup-norm compatible with Nehari's identity: S^{(p+1)/(p-1)} <= beta^{p+1} int_B V."""
    params.require_superlinear()
    p = params.p
    log_value = ((p + 1) / (p - 1) * math.log(S_alpha) - math.log(integral_V(params))) / (p + 1)
    return math.exp(log_value)


def lower_constant_2d(p: float, eps: float) -> tuple[float, float]:
    """(K_*(2,p), beta) for the logarithmic radial estimate in the plane, beta = 1 - (p+1) eps."""
    if not p > 1.0:
        raise DomainError(f"p must be > 1, got {p!r}")
    if not 0.0 < eps < 2.0 / (p + 1):
        raise DomainError(f"eps must lie in (0, 2/(p+1)) = (0, {2.0 / (p + 1):g}), got {eps!r}")
    beta_exp = 1.0 - (p + 1) * eps
    log_value = (
        math.log(4.0)
        + 0.5 * (1 - p) * math.log(math.pi)
        + 0.5 * (p - 1) * math.log(p + 1)
        - 0.5 * (p + 1) * math.log(p - 1)
        + float(gammaln(beta_exp + 1.0))
        + (p + 1) * math.log(c_epsilon(eps))
    )
    return math.exp(log_value), beta_exp


def lower_estimate_constants(params: ProblemParams, eps: float | None = None) -> tuple[float, float]:
    """(K_lower, beta) entering the shell term A_alpha for the dimension at hand."""
    _require_dimension(params.N, 2, "the radial lower estimate")
    if params.N == 2:
        return lower_constant_2d(params.p, 1.0 / (params.p + 1) if eps is None else eps)
    constants = compute_constants(params.N, params.p)
    return constants.require("K_lower"), constants.beta_exp


def shell_term(params: ProblemParams, C_rad: float, K_lower: float, beta_exp: float) -> float:
    """A_alpha(R) = K_* R^{beta+1} alpha Gamma(alpha)/Gamma(alpha+beta+1) C^{(p+1)/2}."""
    if params.R == 0.0:
        return 0.0
    alpha, p = params.alpha, params.p
    log_ratio = float(gammaln(alpha + 1.0) - gammaln(alpha + beta_exp + 1.0))
    return K_lower * math.exp((beta_exp + 1.0) * math.log(params.R) + log_ratio) * C_rad ** ((p + 1) / 2)


def boundary_term(params: ProblemParams, C_rad: float, K_star: float) -> float:
    """B_alpha = K^* C^{2p/(p+1)} / (alpha+1)^{2/(p+1)}."""
    p = params.p
    return K_star * C_rad ** (2 * p / (p + 1)) / (params.alpha + 1.0) ** (2.0 / (p + 1))


def moving_shell_epsilon(delta: float, p: float) -> float:
    if not delta > 0:
        raise DomainError(f"delta must be > 0, got {delta!r}")
    return 4.0 * delta / ((p + 1) * (2.0 * delta + 3.0))


def scaling_exponent(N: int, p: float) -> float:
    """2N/(p+1) - (N-2): growth exponent of S_alpha in alpha."""
    return 2 * N / (p + 1) - (N - 2)
