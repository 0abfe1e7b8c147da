from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

import numpy as np
from scipy.integrate import quad

from .ball import build_axisym_grid, minimize_full_quotient, symmetry_gap, trial_upper_bound
from .cache import ResultCache, config_hash
from .configuration import DEFAULT_EXPONENTS, GridSpec, SolveOptions
from .errors import InsufficientDataError, LaboratoryError, ParameterError
from .radial import (
    RadialGrid,
    build_radial_grid,
    eigen_lower_bound_p1,
    minimize_radial_quotient,
    refine_radial_grid,
)
from .special import beta_fn, c_epsilon
from .weight import (
    I_R,
    ProblemParams,
    blowup_lower_bound,
    compute_constants,
    eval_V,
    integral_V,
    moving_shell_epsilon,
    sphere_area,
)

logger = logging.getLogger(__name__)

IDENTITY_DIMENSIONS = (1, 2, 3)
IDENTITY_RADII = (0.0, 0.3, 0.7, 1.0)
IDENTITY_ALPHAS = (5.0, 40.0)
# Pohozaev residuals below this are round-off and carry no convergence order.
POHOZAEV_FLOOR = 1e-9

# Columns of SweepRecord that hold measured numbers (everything except params, broken and status).
NUMERIC_FIELDS: tuple[str, ...] = (
    "S_rad",
    "S_full",
    "C_rad",
    "gap",
    "s_peak",
    "beta_peak",
    "scaled_S_full",
    "scaled_S_rad",
    "scaled_beta",
    "A_over_B",
    "asym_index",
    "nehari_residual",
    "pohozaev_residual",
    "beta_lower_bound",
)


@dataclass(frozen=True)
class SweepRecord:
    params: ProblemParams
    S_rad: float | None = None
    S_full: float | None = None
    C_rad: float | None = None
    gap: float | None = None
    broken: bool | None = None
    s_peak: float | None = None
    beta_peak: float | None = None
    scaled_S_full: float | None = None
    scaled_S_rad: float | None = None
    scaled_beta: float | None = None
    A_over_B: float | None = None
    asym_index: float | None = None
    nehari_residual: float | None = None
    pohozaev_residual: float | None = None
    beta_lower_bound: float | None = None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_row(self) -> dict[str, Any]:
        row = asdict(self)
        row["params"] = self.params.to_dict()
        return row

    @classmethod
    def from_row(cls, row: dict[str, Any]) -> "SweepRecord":
        known = {f.name for f in fields(cls)}
        values = {key: value for key, value in row.items() if key in known}
        values["params"] = ProblemParams(**row["params"])
        return cls(**values)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    points: int


@dataclass(frozen=True)
class MovingShellReport:
    delta: float
    epsilon: float
    records: tuple[SweepRecord, ...]
    first_broken_alpha: float | None
    broken_from_alpha: float | None


@dataclass(frozen=True)
class ConcentrationSummary:
    R: float
    alphas: tuple[float, ...]
    edge_distance: tuple[float, ...]
    tail_min_distance: float
    distance_decreasing: bool
    scaled_beta: tuple[float, ...]
    scaled_beta_range: tuple[float, float]
    beta_increasing: bool


@dataclass(frozen=True)
class ContinuityRow:
    R: float
    S: float | None
    deviation: float | None
    status: str = "ok"


@dataclass(frozen=True)
class ContinuityTable:
    alpha: float
    endpoint: float
    endpoint_S: float
    rows: tuple[ContinuityRow, ...]
    deviation_shrinking: bool


@dataclass(frozen=True)
class VerificationCheck:
    name: str
    passed: bool
    detail: str


def _scaled(value: float | None, alpha: float, exponent: float) -> float | None:
    if value is None or alpha <= 0.0:
        return None
    return value * alpha**exponent


def solve_row(params: ProblemParams, grid: GridSpec, opts: SolveOptions, *, solve_ball: bool = True) -> SweepRecord:
    """Both solvers at one (N, p, R, alpha); library errors become the row status."""
    try:
        if solve_ball:
            ball_grid = build_axisym_grid(params, grid.n_r, grid.n_theta, grid.grading_strength)
            radial_grid = ball_grid.radial
        else:
            radial_grid = build_radial_grid(params, grid.n, grid.grading_strength)
        radial = minimize_radial_quotient(params, radial_grid, opts)
        full = minimize_full_quotient(params, ball_grid, opts) if solve_ball else None
    except LaboratoryError as exc:
        logger.warning("row N=%d p=%g R=%g alpha=%g failed: %s", params.N, params.p, params.R, params.alpha, exc)
        return SweepRecord(params=params, status=f"error: {exc}")

    N, p, alpha = params.N, params.p, params.alpha
    exponent = N - 2 - 2 * N / (p + 1)
    gap = broken = None
    if full is not None:
        gap, broken = symmetry_gap(radial, full)
    best_S = full.S_full if full is not None else radial.S_rad
    beta_peak = full.beta_peak if full is not None else radial.beta_peak
    s_peak = full.s_peak if full is not None else radial.s_peak
    report = radial.residuals
    return SweepRecord(
        params=params,
        S_rad=radial.S_rad,
        S_full=full.S_full if full is not None else None,
        C_rad=radial.C_rad,
        gap=gap,
        broken=broken,
        s_peak=s_peak,
        beta_peak=beta_peak,
        scaled_S_full=_scaled(full.S_full if full is not None else None, alpha, exponent),
        scaled_S_rad=_scaled(radial.S_rad, alpha, exponent),
        scaled_beta=_scaled(beta_peak, alpha, -2.0 / (p - 1)),
        A_over_B=report.A_over_B if report is not None else None,
        asym_index=full.asym_index if full is not None else None,
        nehari_residual=report.nehari_residual if report is not None else None,
        pohozaev_residual=report.pohozaev_residual if report is not None else None,
        beta_lower_bound=blowup_lower_bound(params, best_S),
    )


def row_key(params: ProblemParams, grid: GridSpec, opts: SolveOptions, solve_ball: bool) -> str:
    return config_hash(
        {"params": params.to_dict(), "grid": grid.to_dict(), "solver": opts.to_dict(), "solve_ball": solve_ball}
    )


def sweep_params(
    rows: Sequence[ProblemParams],
    grid: GridSpec,
    opts: SolveOptions,
    *,
    solve_ball: bool = True,
    cache: ResultCache | None = None,
) -> list[SweepRecord]:
    """Solve every row (cache hits skipped); output is ordered by (alpha, R) whatever the completion order."""
    keys = [row_key(params, grid, opts, solve_ball) for params in rows]
    records: dict[int, SweepRecord] = {}
    if cache is not None:
        for index, key in enumerate(keys):
            cached = cache.get_row(key)
            if cached is not None:
                records[index] = SweepRecord.from_row(cached)
    dirty = [index for index in range(len(rows)) if index not in records]
    logger.info("sweep: %d rows, %d from cache, %d to compute", len(rows), len(records), len(dirty))

    if opts.threads > 1 and len(dirty) > 1:
        row_opts = replace(opts, threads=1)
        with ThreadPoolExecutor(max_workers=min(opts.threads, len(dirty))) as pool:
            computed = list(pool.map(lambda i: solve_row(rows[i], grid, row_opts, solve_ball=solve_ball), dirty))
    else:
        computed = [solve_row(rows[i], grid, opts, solve_ball=solve_ball) for i in dirty]

    for index, record in zip(dirty, computed):
        records[index] = record
        if cache is not None and record.ok:
            cache.save_row(keys[index], record.to_row())

    return sorted(records.values(), key=lambda record: (record.params.alpha, record.params.R))


def sweep_alpha(
    template: ProblemParams,
    alphas: Sequence[float],
    grid: GridSpec,
    opts: SolveOptions,
    *,
    solve_ball: bool = True,
    cache: ResultCache | None = None,
) -> list[SweepRecord]:
    rows = [template.with_alpha(float(alpha)) for alpha in alphas]
    return sweep_params(rows, grid, opts, solve_ball=solve_ball, cache=cache)


def fit_power_law(alphas: Sequence[float], values: Sequence[float], window: tuple[float, float] | None = None) -> ExponentFit:
    """Least-squares slope of ln(value) against ln(alpha); missing values are skipped, non-positive ones rejected."""
    lo, hi = window if window is not None else (-math.inf, math.inf)
    pairs = []
    for a, v in zip(alphas, values):
        if not lo <= a <= hi or v is None or not math.isfinite(v):
            continue
        if a <= 0.0 or v <= 0.0:
            raise LaboratoryError(f"a log-log fit needs positive data, got alpha={a!r}, value={v!r}")
        pairs.append((float(a), float(v)))
    if len(pairs) < 5:
        raise InsufficientDataError(f"an exponent fit needs at least 5 positive points in the window, got {len(pairs)}")
    x = np.log([a for a, _ in pairs])
    y = np.log([v for _, v in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0.0 else 1.0 - float(np.sum(residual**2)) / total
    used = (float(np.exp(x.min())), float(np.exp(x.max()))) if window is None else (float(lo), float(hi))
    return ExponentFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=min(max(r_squared, 0.0), 1.0),
        window=used,
        points=len(pairs),
    )


def fit_exponent(
    records: Sequence[SweepRecord],
    quantity: str | Callable[[SweepRecord], float | None],
    window: tuple[float, float] | None = None,
) -> ExponentFit:
    select = quantity if callable(quantity) else (lambda record: getattr(record, quantity))
    usable = [record for record in records if record.ok]
    return fit_power_law([r.params.alpha for r in usable], [select(r) for r in usable], window)


def sobolev_constant(N: int, p: float, grid: RadialGrid | None = None, *, n: int = 1024, opts: SolveOptions | None = None) -> float:
    """S(N, p): the quotient with V = 1, attained by a radial function (the R = 1, alpha = 0 case)."""
    params = ProblemParams(N=N, p=p, R=1.0, alpha=0.0)
    grid = grid if grid is not None else build_radial_grid(params, n)
    return minimize_radial_quotient(params, grid, opts or SolveOptions()).S_rad


def moving_shell_radius(alpha: float, delta: float) -> float:
    if alpha <= 0.0:
        return 1.0 - 1e-9
    return min(alpha ** (-delta), 1.0 - 1e-9)


def moving_shell(
    delta: float,
    alphas: Sequence[float],
    N: int,
    p: float,
    grid: GridSpec,
    opts: SolveOptions,
    *,
    cache: ResultCache | None = None,
) -> MovingShellReport:
    epsilon = moving_shell_epsilon(delta, p)
    rows = [ProblemParams(N=N, p=p, R=moving_shell_radius(float(a), delta), alpha=float(a)) for a in alphas]
    records = sweep_params(rows, grid, opts, solve_ball=True, cache=cache)

    first_broken = next((r.params.alpha for r in records if r.ok and r.broken), None)
    broken_from = None
    for record in reversed(records):
        if not (record.ok and record.broken):
            break
        broken_from = record.params.alpha
    logger.info("moving shell delta=%g: first broken alpha %s, broken from %s", delta, first_broken, broken_from)
    return MovingShellReport(
        delta=float(delta),
        epsilon=epsilon,
        records=tuple(records),
        first_broken_alpha=first_broken,
        broken_from_alpha=broken_from,
    )


def concentration_track(records: Sequence[SweepRecord]) -> ConcentrationSummary:
    usable = sorted((r for r in records if r.ok and r.s_peak is not None), key=lambda r: r.params.alpha)
    if len(usable) < 2:
        raise InsufficientDataError(f"concentration tracking needs at least 2 solved rows, got {len(usable)}")
    radii = {r.params.R for r in usable}
    if len(radii) != 1:
        raise ParameterError(f"concentration tracking needs a fixed R, got {sorted(radii)}")

    distance = [min(r.s_peak, 1.0 - r.s_peak) for r in usable]
    tail = distance[len(distance) // 2 :]
    scaled_beta = [r.scaled_beta for r in usable if r.scaled_beta is not None]
    return ConcentrationSummary(
        R=radii.pop(),
        alphas=tuple(r.params.alpha for r in usable),
        edge_distance=tuple(distance),
        tail_min_distance=min(tail),
        distance_decreasing=all(b <= a for a, b in zip(distance, distance[1:])),
        scaled_beta=tuple(scaled_beta),
        scaled_beta_range=(min(scaled_beta), max(scaled_beta)) if scaled_beta else (math.nan, math.nan),
        beta_increasing=usable[-1].beta_peak > usable[0].beta_peak,
    )


def continuity_in_R(
    template: ProblemParams,
    R_values: Sequence[float],
    grid: GridSpec,
    opts: SolveOptions,
    *,
    endpoint: float | None = None,
    use_ball: bool = True,
    cache: ResultCache | None = None,
) -> ContinuityTable:
    """S(R) along R_values against the value at the endpoint R = 0 or R = 1; the decay is reported, not asserted."""
    if endpoint is None:
        endpoint = 0.0 if max(R_values) < 0.5 else 1.0
    if endpoint not in (0.0, 1.0):
        raise ParameterError(f"endpoint must be 0 or 1, got {endpoint!r}")
    rows = [template.with_R(endpoint)] + [template.with_R(float(R)) for R in R_values]
    solved = {r.params.R: r for r in sweep_params(rows, grid, opts, solve_ball=use_ball, cache=cache)}

    def value(record: SweepRecord) -> float | None:
        return record.S_full if use_ball else record.S_rad

    end = solved[endpoint]
    end_S = value(end)
    if not end.ok or end_S is None:
        raise ParameterError(f"the endpoint row R={endpoint:g} could not be solved: {end.status}")

    table = []
    for R in R_values:
        record = solved[float(R)]
        S = value(record)
        deviation = abs(S - end_S) / end_S if S is not None else None
        table.append(ContinuityRow(R=float(R), S=S, deviation=deviation, status=record.status))

    ordered = sorted((row for row in table if row.deviation is not None), key=lambda row: -abs(row.R - endpoint))
    shrinking = all(b.deviation <= a.deviation for a, b in zip(ordered, ordered[1:]))
    return ContinuityTable(
        alpha=template.alpha, endpoint=endpoint, endpoint_S=end_S, rows=tuple(table), deviation_shrinking=shrinking
    )


def _check(name: str, passed: bool, detail: str) -> VerificationCheck:
    if not passed:
        logger.warning("verification %s failed: %s", name, detail)
    return VerificationCheck(name=name, passed=bool(passed), detail=detail)


def _integral_V_quadrature(params: ProblemParams) -> float:
    area = sphere_area(params.N)
    points = [params.R] if 0.0 < params.R < 1.0 else None
    value, _ = quad(
        lambda r: eval_V(params, r) * r ** (params.N - 1), 0.0, 1.0, points=points, epsabs=0.0, epsrel=1e-13, limit=400
    )
    return area * value


def closed_form_checks() -> list[VerificationCheck]:
    checks = []

    worst = 0.0
    for N, p in ((3, 2.0), (3, 4.5), (4, 1.5), (5, 1.2), (6, 1.9)):
        c = compute_constants(N, p)
        K = c.require("K")
        factor = (p + 1) / 2 * ((p - 1) / (2 * (p + 1))) ** ((p + 1) / 2)
        worst = max(worst, abs(K - factor * c.require("K_lower")) / K)
    checks.append(_check("constants.K_consistency", worst <= 1e-12, f"max relative deviation {worst:.3e}"))

    worst = max(abs(beta_fn(a, b) - beta_fn(b, a)) / beta_fn(a, b) for a, b in ((0.3, 7.0), (2.5, 40.0), (11.0, 0.7)))
    checks.append(_check("special.beta_symmetry", worst <= 1e-13, f"max relative deviation {worst:.3e}"))

    worst = 0.0
    for params in (
        ProblemParams(N=3, p=2.0, R=0.3, alpha=5.0),
        ProblemParams(N=2, p=3.0, R=0.7, alpha=40.0),
        ProblemParams(N=4, p=1.5, R=0.0, alpha=12.0),
        ProblemParams(N=5, p=1.2, R=1.0, alpha=3.5),
    ):
        exact = integral_V(params)
        worst = max(worst, abs(exact - _integral_V_quadrature(params)) / exact)
    checks.append(_check("weight.integral_V_quadrature", worst <= 1e-10, f"max relative deviation {worst:.3e}"))

    worst = max(
        abs(integral_V(ProblemParams(N=1, p=3.0, R=R, alpha=a)) - 2.0 / (a + 1.0)) / (2.0 / (a + 1.0))
        for R in (0.0, 0.4, 1.0)
        for a in (0.0, 3.0, 250.0)
    )
    checks.append(_check("weight.integral_V_interval", worst <= 1e-14, f"max relative deviation {worst:.3e}"))

    grid = np.linspace(1e-9, 1.0 - 1e-9, 1_000_000)
    worst = 0.0
    for eps in (0.05, 0.1, 0.25, 0.5, 1.0):
        brute = float(np.max(grid**eps * np.sqrt(-np.log(grid))))
        worst = max(worst, abs(brute - c_epsilon(eps)))
    checks.append(_check("special.c_epsilon_grid", worst <= 1e-6, f"max deviation {worst:.3e}"))

    worst = 0.0
    for alpha, beta_exp, R in ((3.0, 0.5, 0.4), (1.5, 1.0, 0.8), (20.0, -0.5, 0.25)):
        params = ProblemParams(N=3, p=2.0, R=R, alpha=alpha)
        # algebraic endpoint weights r^beta (R - r)^(alpha - 1)
        value, _ = quad(lambda r: 1.0, 0.0, R, weight="alg", wvar=(beta_exp, alpha - 1.0))
        value *= R ** (1.0 - alpha)
        worst = max(worst, abs(I_R(params, beta_exp) - value) / value)
    checks.append(_check("weight.I_R_quadrature", worst <= 1e-9, f"max relative deviation {worst:.3e}"))
    return checks


def _pohozaev_order(coarse: float, fine: float) -> float | None:
    if fine <= POHOZAEV_FLOOR:
        return None
    return math.log2(coarse / fine)


def identity_checks(opts: SolveOptions | None = None, *, n: int = 257) -> list[VerificationCheck]:
    """Nehari, Pohozaev, Ni, the energy relation, the estimate slacks and S_full <= S_rad over the identity grid."""
    opts = opts or SolveOptions()
    nehari = relation = ni = 0.0
    slacks = {"lemma1_slack": math.inf, "lemma2_slack": math.inf, "lemma3_slack": math.inf}
    orders: list[str] = []
    bad_orders: list[str] = []
    ordering: list[str] = []

    for N in IDENTITY_DIMENSIONS:
        p = DEFAULT_EXPONENTS[N]
        for R in IDENTITY_RADII:
            for alpha in IDENTITY_ALPHAS:
                params = ProblemParams(N=N, p=p, R=R, alpha=alpha)
                tag = f"N={N} R={R:g} alpha={alpha:g}"
                grid = build_radial_grid(params, n)
                radial = minimize_radial_quotient(params, grid, opts)
                report = radial.residuals
                assert report is not None
                nehari = max(nehari, report.nehari_residual)
                expected = (2 * (p + 1) / (p - 1)) ** ((p - 1) / (p + 1)) * radial.C_rad ** ((p - 1) / (p + 1))
                relation = max(relation, abs(expected - radial.S_rad) / radial.S_rad)
                if report.ni_violation is not None:
                    ni = max(ni, report.ni_violation)
                if report.A_alpha is not None and report.B_alpha is not None:
                    scale = max(1.0, report.A_alpha + report.B_alpha)
                    for name in slacks:
                        slacks[name] = min(slacks[name], getattr(report, name) / scale)

                fine = minimize_radial_quotient(params, refine_radial_grid(grid), opts).residuals
                assert fine is not None
                order = _pohozaev_order(report.pohozaev_residual, fine.pohozaev_residual)
                if order is not None:
                    orders.append(f"{tag}: {order:.2f}")
                    if abs(order - 2.0) > 0.3:
                        bad_orders.append(orders[-1])

                ball_grid = build_axisym_grid(params, 32, 16)
                full = minimize_full_quotient(params, ball_grid, opts)
                on_ball = minimize_radial_quotient(params, ball_grid.radial, opts)
                if full.S_full > on_ball.S_rad * (1.0 + 1e-6):
                    ordering.append(f"{tag}: S_full={full.S_full!r} > S_rad={on_ball.S_rad!r}")

    checks = [
        _check("radial.nehari", nehari <= 1e-8, f"max residual {nehari:.3e}"),
        _check("radial.relation", relation <= 1e-10, f"max relative deviation {relation:.3e}"),
        _check("radial.ni_bound", ni == 0.0, f"max violation {ni!r}"),
        _check("radial.pohozaev_order", not bad_orders, "; ".join(bad_orders or orders) or "all residuals at round-off"),
        _check("ball.restricted_ordering", not ordering, "; ".join(ordering) or "S_full <= S_rad on every row"),
    ]
    for name, worst in slacks.items():
        checks.append(_check(f"radial.{name}", worst >= -1e-6, f"min scaled slack {worst:.3e}"))
    return checks


def symmetry_checks(opts: SolveOptions | None = None, *, henon_grid: tuple[int, int] = (128, 64)) -> list[VerificationCheck]:
    """Radial groundstates for the boundary weight, broken ones for the Henon weight, and the trial bound above S_full."""
    opts = opts or SolveOptions()
    failures = []
    for N in (2, 3):
        for alpha in (10.0, 40.0):
            params = ProblemParams(N=N, p=DEFAULT_EXPONENTS[N], R=1.0, alpha=alpha)
            grid = build_axisym_grid(params, 48, 24)
            radial = minimize_radial_quotient(params, grid.radial, opts)
            full = minimize_full_quotient(params, grid, opts)
            gap, _ = symmetry_gap(radial, full)
            if gap > 1e-4 * radial.S_rad or full.asym_index > 1e-5:
                failures.append(f"N={N} alpha={alpha:g}: gap={gap:.3e} asym={full.asym_index:.3e}")
    checks = [_check("ball.boundary_weight_radial", not failures, "; ".join(failures) or "radial for N in (2, 3)")]

    params = ProblemParams(N=2, p=3.0, R=0.0, alpha=100.0)
    grid = build_axisym_grid(params, *henon_grid)
    radial = minimize_radial_quotient(params, grid.radial, opts)
    full = minimize_full_quotient(params, grid, opts)
    gap, broken = symmetry_gap(radial, full)
    checks.append(_check("ball.henon_broken", broken, f"gap={gap:.6g} asym={full.asym_index:.3e}"))

    params = ProblemParams(N=2, p=3.0, R=0.0, alpha=20.0)
    full = minimize_full_quotient(params, build_axisym_grid(params, 64, 32), opts)
    bound = trial_upper_bound(params)
    checks.append(_check("ball.trial_bound", bound >= full.S_full * (1.0 - 1e-6), f"trial={bound!r}, S_full={full.S_full!r}"))
    return checks


def eigenvalue_checks(*, n: int = 512) -> list[VerificationCheck]:
    params = ProblemParams(N=3, p=1.0, R=1.0, alpha=0.0)
    values = [eigen_lower_bound_p1(params.with_alpha(a), build_radial_grid(params.with_alpha(a), n)) for a in (0.0, 8.0, 32.0)]
    deviation = abs(values[0] - math.pi**2) / math.pi**2
    return [
        _check("radial.eigenvalue_unit_ball", deviation <= 1e-3, f"lambda={values[0]!r}, relative deviation {deviation:.3e}"),
        _check("radial.eigenvalue_increasing", values[0] < values[1] < values[2], f"lambda at alpha 0, 8, 32: {values}"),
    ]


def solver_checks(opts: SolveOptions | None = None) -> list[VerificationCheck]:
    return identity_checks(opts) + symmetry_checks(opts) + eigenvalue_checks()


def run_verification_suite(opts: SolveOptions | None = None) -> list[VerificationCheck]:
    checks = closed_form_checks() + solver_checks(opts)
    logger.info("verification: %d of %d checks passed", sum(c.passed for c in checks), len(checks))
    return checks
