from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .ball import BallResult, build_axisym_grid, minimize_full_quotient, symmetry_gap
from .cache import ResultCache
from .configuration import RunConfig
from .errors import DimensionError, DomainError, LaboratoryError
from .experiments import (
    SweepRecord,
    continuity_in_R,
    moving_shell,
    run_verification_suite,
    sobolev_constant,
    sweep_alpha,
)
from .radial import (
    RadialProfile,
    RadialResult,
    build_radial_grid,
    diagnostics,
    minimize_radial_quotient,
    radial_grid_from_nodes,
    shooting_quotient,
)
from .weight import R0, ProblemParams, compute_constants, sobolev_lower_bound

logger = logging.getLogger(__name__)

COMMANDS: tuple[str, ...] = (
    "constants",
    "solve-radial",
    "solve-ball",
    "sweep",
    "sobolev",
    "moving-shell",
    "continuity",
    "verify",
)

SWEEP_CSV_HEADERS = [
    "N",
    "p",
    "R",
    "alpha",
    "S_rad",
    "S_full",
    "C_rad",
    "gap",
    "broken",
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
    "status",
]


@dataclass
class CommandOutput:
    command: str
    payload: dict[str, Any]
    headers: list[str] = field(default_factory=list)
    rows: list[list[Any]] = field(default_factory=list)
    ok: bool = True


def format_cell(value: Any) -> str:
    """17 significant digits for floats, empty cell for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g") if math.isfinite(value) else ""
    return str(value)


def render_csv(headers: list[str], rows: list[list[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
    return buffer.getvalue()


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def render_json(payload: dict[str, Any]) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"


def write_atomic(files: dict[Path, str]) -> list[Path]:
    """Write every file to a sibling temp file first, then move them all into place."""
    staged: list[tuple[Path, Path]] = []
    try:
        for target, text in files.items():
            target.parent.mkdir(parents=True, exist_ok=True)
            temp = target.with_name(f".{target.name}.tmp")
            with temp.open("w", encoding="utf-8", newline="") as f:
                f.write(text)
            staged.append((temp, target))
    except OSError:
        for temp, _ in staged:
            temp.unlink(missing_ok=True)
        raise
    for temp, target in staged:
        os.replace(temp, target)
    return [target for _, target in staged]


def sweep_row(record: SweepRecord) -> list[Any]:
    failed = not record.ok
    row: list[Any] = [record.params.N, record.params.p, record.params.R, record.params.alpha]
    for name in SWEEP_CSV_HEADERS[4:-1]:
        row.append(None if failed else getattr(record, name))
    row.append(record.status)
    return row


def radial_payload(result: RadialResult) -> dict[str, Any]:
    grid = result.profile.grid
    return {
        "result": {
            "params": result.params.to_dict(),
            "S_rad": result.S_rad,
            "C_rad": result.C_rad,
            "beta_peak": result.beta_peak,
            "s_peak": result.s_peak,
            "iterations": result.iterations,
        },
        "diagnostics": result.residuals.to_dict() if result.residuals is not None else None,
        "grid": {"nodes": grid.nodes, "grading": grid.grading},
        "profile": {"u": result.profile.values},
    }


def reload_radial_result(payload: dict[str, Any], *, eps: float | None = None) -> RadialResult:
    """Rebuild a radial result from its emitted JSON object, diagnostics recomputed from the stored profile."""
    stored = payload["result"]
    params = ProblemParams(**stored["params"])
    grid = radial_grid_from_nodes(params, np.asarray(payload["grid"]["nodes"], dtype=float), payload["grid"].get("grading"))
    values = np.asarray(payload["profile"]["u"], dtype=float)
    result = RadialResult(
        params=params,
        S_rad=float(stored["S_rad"]),
        C_rad=float(stored["C_rad"]),
        profile=RadialProfile(grid=grid, values=values),
        beta_peak=float(stored["beta_peak"]),
        s_peak=float(stored["s_peak"]),
        iterations=int(stored.get("iterations", 0)),
    )
    if eps is None:
        eps = payload.get("config", {}).get("solver", {}).get("log_estimate_eps")
    return replace(result, residuals=diagnostics(params, result, eps=eps))


def ball_payload(result: BallResult) -> dict[str, Any]:
    grid = result.field.grid
    return {
        "S_full": result.S_full,
        "C_full": result.C_full,
        "s_peak": result.s_peak,
        "beta_peak": result.beta_peak,
        "asym_index": result.asym_index,
        "nehari_residual": result.nehari_residual,
        "iterations": result.iterations,
        "starts": [
            {"label": s.label, "S": s.S, "asym_index": s.asym_index, "iterations": s.iterations} for s in result.starts
        ],
        "field": {
            "r": grid.line if grid.line is not None else grid.radial.nodes,
            "theta": grid.theta,
            "u": result.field.values,
        },
    }


def field_table(result: BallResult) -> tuple[list[str], list[list[Any]]]:
    grid = result.field.grid
    if grid.line is not None:
        return ["r", "u"], [[x, u] for x, u in zip(grid.line, result.field.values)]
    assert grid.theta is not None
    rows = [
        [r, theta, result.field.values[i, j]]
        for i, r in enumerate(grid.radial.nodes)
        for j, theta in enumerate(grid.theta)
    ]
    return ["r", "theta", "u"], rows


class LaboratoryEngine:
    """Runs one configured command and turns its results into emitted documents."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.cache = ResultCache(config.cache_path) if config.cache_path is not None else None

    def run(self, command: str | None = None) -> CommandOutput:
        command = command or self.config.command
        handler = {
            "constants": self.run_constants,
            "solve-radial": self.run_solve_radial,
            "solve-ball": self.run_solve_ball,
            "sweep": self.run_sweep,
            "sobolev": self.run_sobolev,
            "moving-shell": self.run_moving_shell,
            "continuity": self.run_continuity,
            "verify": self.run_verify,
        }.get(command)
        if handler is None:
            raise ValueError(f"unknown command '{command}'; expected one of {', '.join(COMMANDS)}")
        output = handler()
        output.payload.setdefault("command", command)
        output.payload.setdefault("config", self.config.echo())
        return output

    def run_constants(self) -> CommandOutput:
        N, p = self.config.problem.N, self.config.problem.p
        constants = compute_constants(N, p, self.config.sobolev_S)
        values: dict[str, float | None] = {
            "beta": constants.beta_exp,
            "sphere_area": constants.sphere_area,
        }
        notes: dict[str, str] = {}
        for name in ("K", "K_star", "K_lower", "R0"):
            try:
                values[name] = constants.require(name)
            except DimensionError as exc:
                values[name] = None
                notes[name] = str(exc)
        try:
            values["sobolev_lower_bound"] = sobolev_lower_bound(N, p)
        except (DimensionError, DomainError) as exc:
            values["sobolev_lower_bound"] = None
            notes["sobolev_lower_bound"] = str(exc)
        rows = [[name, values[name], notes.get(name, "")] for name in sorted(values)]
        return CommandOutput(
            command="constants",
            payload={"N": N, "p": p, "S": self.config.sobolev_S, "constants": values, "notes": notes, "status": "ok"},
            headers=["name", "value", "note"],
            rows=rows,
        )

    def run_solve_radial(self) -> CommandOutput:
        params, grid_spec, opts = self.config.problem, self.config.grid, self.config.solver
        try:
            result = minimize_radial_quotient(params, build_radial_grid(params, grid_spec.n, grid_spec.grading_strength), opts)
        except LaboratoryError as exc:
            logger.warning("radial solve failed: %s", exc)
            return CommandOutput(command="solve-radial", payload={"status": f"error: {exc}"}, headers=["r", "u"], ok=False)
        payload = radial_payload(result)
        payload["status"] = "ok"
        rows = [[r, u] for r, u in zip(result.profile.grid.nodes, result.profile.values)]
        return CommandOutput(command="solve-radial", payload=payload, headers=["r", "u"], rows=rows)

    def run_solve_ball(self) -> CommandOutput:
        params, grid_spec, opts = self.config.problem, self.config.grid, self.config.solver
        try:
            grid = build_axisym_grid(params, grid_spec.n_r, grid_spec.n_theta, grid_spec.grading_strength)
            radial = minimize_radial_quotient(params, grid.radial, opts)
            full = minimize_full_quotient(params, grid, opts)
        except LaboratoryError as exc:
            logger.warning("ball solve failed: %s", exc)
            return CommandOutput(command="solve-ball", payload={"status": f"error: {exc}"}, ok=False)
        gap, broken = symmetry_gap(radial, full)
        payload = radial_payload(radial)
        payload.update({"ball": ball_payload(full), "gap": gap, "broken": broken, "status": "ok"})
        headers, rows = field_table(full)
        return CommandOutput(command="solve-ball", payload=payload, headers=headers, rows=rows)

    def _sweep_output(self, command: str, records: list[SweepRecord], extra: dict[str, Any]) -> CommandOutput:
        payload = {"rows": [record.to_row() for record in records], **extra}
        return CommandOutput(
            command=command,
            payload=payload,
            headers=list(SWEEP_CSV_HEADERS),
            rows=[sweep_row(record) for record in records],
            ok=all(record.ok for record in records),
        )

    def run_sweep(self) -> CommandOutput:
        sweep = self.config.sweep
        records = sweep_alpha(
            self.config.problem,
            sweep.alphas,
            self.config.grid,
            self.config.solver,
            solve_ball=sweep.solve_ball,
            cache=self.cache,
        )
        return self._sweep_output("sweep", records, {})

    def run_sobolev(self) -> CommandOutput:
        N, p = self.config.problem.N, self.config.problem.p
        try:
            S = sobolev_constant(N, p, n=self.config.grid.n, opts=self.config.solver)
            shooting = shooting_quotient(ProblemParams(N=N, p=p, R=1.0, alpha=0.0))
        except LaboratoryError as exc:
            return CommandOutput(command="sobolev", payload={"status": f"error: {exc}"}, ok=False)
        values: dict[str, Any] = {"N": N, "p": p, "S": S, "S_shooting": shooting, "status": "ok"}
        if N >= 3:
            values["sobolev_lower_bound"] = sobolev_lower_bound(N, p)
            values["R0"] = R0(N, p, S)
        rows = [[name, values[name]] for name in sorted(values)]
        return CommandOutput(command="sobolev", payload=values, headers=["name", "value"], rows=rows)

    def run_moving_shell(self) -> CommandOutput:
        problem, sweep = self.config.problem, self.config.sweep
        report = moving_shell(
            sweep.delta, sweep.alphas, problem.N, problem.p, self.config.grid, self.config.solver, cache=self.cache
        )
        extra = {
            "delta": report.delta,
            "epsilon": report.epsilon,
            "first_broken_alpha": report.first_broken_alpha,
            "broken_from_alpha": report.broken_from_alpha,
        }
        return self._sweep_output("moving-shell", list(report.records), extra)

    def run_continuity(self) -> CommandOutput:
        sweep = self.config.sweep
        table = continuity_in_R(
            self.config.problem,
            sweep.R_values,
            self.config.grid,
            self.config.solver,
            endpoint=sweep.endpoint,
            use_ball=sweep.solve_ball,
            cache=self.cache,
        )
        rows = [[row.R, row.S, row.deviation, row.status] for row in table.rows]
        payload = {
            "alpha": table.alpha,
            "endpoint": table.endpoint,
            "endpoint_S": table.endpoint_S,
            "deviation_shrinking": table.deviation_shrinking,
            "rows": [{"R": r.R, "S": r.S, "deviation": r.deviation, "status": r.status} for r in table.rows],
        }
        return CommandOutput(
            command="continuity",
            payload=payload,
            headers=["R", "S", "deviation", "status"],
            rows=rows,
            ok=all(row.status == "ok" for row in table.rows),
        )

    def run_verify(self) -> CommandOutput:
        checks = run_verification_suite(self.config.solver)
        payload = {"checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks]}
        return CommandOutput(
            command="verify",
            payload=payload,
            headers=["name", "passed", "detail"],
            rows=[[c.name, c.passed, c.detail] for c in checks],
            ok=all(c.passed for c in checks),
        )

    def render(self, output: CommandOutput, fmt: str) -> str:
        if fmt == "csv":
            return render_csv(output.headers, output.rows)
        return render_json(output.payload)

    def export(self, output: CommandOutput, target: Path, fmt: str) -> list[Path]:
        """Write the primary document and, for JSON solve results, the profile CSV beside it."""
        files = {target: self.render(output, fmt)}
        if fmt == "json" and output.command.startswith("solve-") and output.rows:
            files[target.with_suffix(".profile.csv")] = render_csv(output.headers, output.rows)
        return write_atomic(files)
