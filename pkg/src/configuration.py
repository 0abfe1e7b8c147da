from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .weight import ProblemParams

OUTPUT_FORMATS: tuple[str, ...] = ("json", "csv")

# Desk-scale sweep window; log-space weights keep alpha = 320 safe.
DEFAULT_ALPHAS: tuple[float, ...] = (10.0, 20.0, 40.0, 80.0, 160.0, 320.0)

# Per-dimension default exponents.
DEFAULT_EXPONENTS: dict[int, float] = {1: 3.0, 2: 3.0, 3: 2.0}


@dataclass(frozen=True)
class SolveOptions:
    max_iter: int = 200_000
    quotient_rtol: float = 1e-10
    quotient_window: int = 10
    grad_tol: float = 1e-9
    extra_random_starts: int = 0
    seed: int = 0
    threads: int = 1
    log_estimate_eps: float | None = None
    bb_clip: tuple[float, float] = (0.05, 20.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_iter": self.max_iter,
            "quotient_rtol": self.quotient_rtol,
            "quotient_window": self.quotient_window,
            "grad_tol": self.grad_tol,
            "extra_random_starts": self.extra_random_starts,
            "seed": self.seed,
            "log_estimate_eps": self.log_estimate_eps,
            "bb_clip": list(self.bb_clip),
        }


@dataclass(frozen=True)
class GridSpec:
    n: int = 1024
    n_r: int = 128
    n_theta: int = 64
    grading_strength: float = 12.0

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "n_r": self.n_r, "n_theta": self.n_theta, "grading_strength": self.grading_strength}


@dataclass(frozen=True)
class SweepSpec:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    R_values: tuple[float, ...] = (0.1, 0.03, 0.01, 0.003, 0.001)
    endpoint: float = 0.0
    delta: float = 1.0
    solve_ball: bool = True


@dataclass(frozen=True)
class OutputSpec:
    path: Path | None = None
    format: str = "json"


@dataclass(frozen=True)
class RunConfig:
    command: str
    problem: ProblemParams
    grid: GridSpec
    solver: SolveOptions
    sweep: SweepSpec
    output: OutputSpec
    sobolev_S: float | None = None
    cache_path: Path | None = None
    source: dict[str, Any] = field(default_factory=dict)

    def echo(self) -> dict[str, Any]:
        """Normalized view of the configuration written next to every result."""
        return {
            "command": self.command,
            "problem": self.problem.to_dict(),
            "grid": self.grid.to_dict(),
            "solver": self.solver.to_dict(),
            "sweep": {
                "alphas": list(self.sweep.alphas),
                "R_values": list(self.sweep.R_values),
                "endpoint": self.sweep.endpoint,
                "delta": self.sweep.delta,
                "solve_ball": self.sweep.solve_ball,
            },
            "sobolev_S": self.sobolev_S,
        }


def load_config_file(path: Path) -> dict[str, Any]:
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file '{path}' does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file '{path}' is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file '{path}' must contain a JSON object at the top level")
    return data


def _section(config: dict[str, Any], name: str) -> dict[str, Any]:
    value = config.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section '{name}' must be an object, got {type(value).__name__}")
    return value


def _number(section: dict[str, Any], key: str, default: Any, kind: type, where: str) -> Any:
    raw = section.get(key, default)
    if raw is None:
        return None
    if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
        raise ConfigError(f"{where}.{key} must be a number, got {raw!r}")
    try:
        value = kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}.{key} must be a number, got {raw!r}") from exc
    if kind is int and float(raw) != value:
        raise ConfigError(f"{where}.{key} must be an integer, got {raw!r}")
    return value


def _float_list(section: dict[str, Any], key: str, default: tuple[float, ...], where: str) -> tuple[float, ...]:
    raw = section.get(key, list(default))
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError(f"{where}.{key} must be a non-empty list of numbers")
    return tuple(_number({key: item}, key, None, float, where) for item in raw)


def load_run_config(config: dict[str, Any], overrides: dict[str, Any] | None = None, *, command: str = "") -> RunConfig:
    """Normalize a raw JSON config (plus command-line overrides) into frozen option records."""
    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}

    problem_cfg = dict(_section(config, "problem"))
    for key in ("N", "p", "R", "alpha"):
        if key in overrides:
            problem_cfg[key] = overrides[key]
    N = _number(problem_cfg, "N", 3, int, "problem")
    p_default = DEFAULT_EXPONENTS.get(N, 2.0)
    try:
        problem = ProblemParams(
            N=N,
            p=_number(problem_cfg, "p", p_default, float, "problem"),
            R=_number(problem_cfg, "R", 0.0, float, "problem"),
            alpha=_number(problem_cfg, "alpha", 20.0, float, "problem"),
        )
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc

    grid_cfg = _section(config, "grid")
    grid = GridSpec(
        n=_number(grid_cfg, "n", GridSpec.n, int, "grid"),
        n_r=_number(grid_cfg, "n_r", GridSpec.n_r, int, "grid"),
        n_theta=_number(grid_cfg, "n_theta", GridSpec.n_theta, int, "grid"),
        grading_strength=_number(grid_cfg, "grading_strength", GridSpec.grading_strength, float, "grid"),
    )
    if grid.n < 16:
        raise ConfigError(f"grid.n must be >= 16, got {grid.n}")
    if grid.n_r < 32 or grid.n_theta < 16:
        raise ConfigError(f"grid.n_r must be >= 32 and grid.n_theta >= 16, got ({grid.n_r}, {grid.n_theta})")

    solver_cfg = _section(config, "solver")
    bb_clip = solver_cfg.get("bb_clip", list(SolveOptions.bb_clip))
    if not isinstance(bb_clip, (list, tuple)) or len(bb_clip) != 2:
        raise ConfigError("solver.bb_clip must be a [low, high] pair")
    solver = SolveOptions(
        max_iter=_number(solver_cfg, "max_iter", SolveOptions.max_iter, int, "solver"),
        quotient_rtol=_number(solver_cfg, "quotient_rtol", SolveOptions.quotient_rtol, float, "solver"),
        quotient_window=_number(solver_cfg, "quotient_window", SolveOptions.quotient_window, int, "solver"),
        grad_tol=_number(solver_cfg, "grad_tol", SolveOptions.grad_tol, float, "solver"),
        extra_random_starts=_number(solver_cfg, "extra_random_starts", SolveOptions.extra_random_starts, int, "solver"),
        seed=int(overrides.get("seed", _number(solver_cfg, "seed", SolveOptions.seed, int, "solver"))),
        threads=int(overrides.get("threads", _number(solver_cfg, "threads", SolveOptions.threads, int, "solver"))),
        log_estimate_eps=_number(solver_cfg, "log_estimate_eps", None, float, "solver"),
        bb_clip=(float(bb_clip[0]), float(bb_clip[1])),
    )
    if solver.max_iter < 1 or solver.quotient_window < 1 or solver.threads < 1 or solver.extra_random_starts < 0:
        raise ConfigError("solver.max_iter, solver.quotient_window and solver.threads must be >= 1; extra_random_starts >= 0")
    if not 0.0 < solver.bb_clip[0] < solver.bb_clip[1]:
        raise ConfigError(f"solver.bb_clip must satisfy 0 < low < high, got {list(solver.bb_clip)}")
    if solver.seed < 0:
        raise ConfigError(f"solver.seed must be a non-negative integer, got {solver.seed}")

    sweep_cfg = _section(config, "sweep")
    sweep = SweepSpec(
        alphas=_float_list(sweep_cfg, "alphas", SweepSpec.alphas, "sweep"),
        R_values=_float_list(sweep_cfg, "R_values", SweepSpec.R_values, "sweep"),
        endpoint=_number(sweep_cfg, "endpoint", SweepSpec.endpoint, float, "sweep"),
        delta=_number(sweep_cfg, "delta", SweepSpec.delta, float, "sweep"),
        solve_ball=bool(sweep_cfg.get("solve_ball", SweepSpec.solve_ball)),
    )
    if sweep.endpoint not in (0.0, 1.0):
        raise ConfigError(f"sweep.endpoint must be 0 or 1, got {sweep.endpoint}")

    output_cfg = _section(config, "output")
    out_path = overrides.get("out", output_cfg.get("path"))
    out_format = str(overrides.get("format", output_cfg.get("format", "json"))).lower()
    if out_format not in OUTPUT_FORMATS:
        raise ConfigError(f"output.format must be one of {', '.join(OUTPUT_FORMATS)}, got {out_format!r}")

    sobolev_cfg = _section(config, "sobolev")
    cache_path = config.get("cache_path")

    return RunConfig(
        command=command,
        problem=problem,
        grid=grid,
        solver=solver,
        sweep=sweep,
        output=OutputSpec(path=Path(out_path) if out_path else None, format=out_format),
        sobolev_S=float(overrides["S"]) if "S" in overrides else _number(sobolev_cfg, "S", None, float, "sobolev"),
        cache_path=Path(cache_path) if cache_path else None,
        source=config,
    )
