from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import gammaln

from .errors import DomainError


@dataclass(frozen=True)
class GammaRatio:
    """Gamma(alpha) / Gamma(alpha + beta_exp + 1) next to its large-alpha form alpha^(-beta_exp-1)."""

    alpha: float
    beta_exp: float
    exact: float
    asymptotic: float

    @property
    def ratio(self) -> float:
        return self.exact / self.asymptotic


def log_gamma(x: float) -> float:
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return float(gammaln(x))


def beta_fn(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn requires a, b > 0, got ({a!r}, {b!r})")
    return math.exp(log_gamma(a) + log_gamma(b) - log_gamma(a + b))


def log_gamma_ratio(alpha: float, beta_exp: float) -> float:
    """ln Gamma(alpha) - ln Gamma(alpha + beta_exp + 1); no overflow for alpha ~ 1e3 and beyond."""
    if not alpha > 0:
        raise DomainError(f"gamma ratio requires alpha > 0, got {alpha!r}")
    if not alpha + beta_exp + 1 > 0:
        raise DomainError(f"gamma ratio requires alpha + beta + 1 > 0, got {alpha + beta_exp + 1!r}")
    return log_gamma(alpha) - log_gamma(alpha + beta_exp + 1)


def gamma_ratio(alpha: float, beta_exp: float) -> GammaRatio:
    exact = math.exp(log_gamma_ratio(alpha, beta_exp))
    asymptotic = math.exp(-(beta_exp + 1) * math.log(alpha))
    return GammaRatio(alpha=float(alpha), beta_exp=float(beta_exp), exact=exact, asymptotic=asymptotic)


def c_epsilon(eps: float) -> float:
    """sup over r in (0,1) of r^eps |ln r|^(1/2); attained at r = exp(-1/(2 eps))."""
    if not eps > 0:
        raise DomainError(f"c_epsilon requires eps > 0, got {eps!r}")
    return (2.0 * math.e * eps) ** -0.5


def c_epsilon_argmax(eps: float) -> float:
    if not eps > 0:
        raise DomainError(f"c_epsilon requires eps > 0, got {eps!r}")
    return math.exp(-1.0 / (2.0 * eps))
