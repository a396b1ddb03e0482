"""Parameter sweeps over protocol runs and their CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import InvalidSpec, OptoConvertError
from .protocol import build_plan, run_protocol
from .states import InitialStateSpec, format_state

VARIABLES = ("bath_temperature", "kappa", "alpha", "r0", "detuning_offset")
CSV_COLUMNS = ("sweep_var", "sweep_value", "state", "F", "F1", "T_eff_K", "model", "status")


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _round9(x: float) -> float:
    return float(fmt(x))


def make_grid(lo: float, hi: float, count: int, scale: str = "linear") -> tuple:
    if count < 1:
        raise InvalidSpec("grid needs at least one point")
    if scale == "log":
        if lo <= 0 or hi <= 0:
            raise InvalidSpec("log grid needs positive bounds")
        pts = np.geomspace(lo, hi, count)
    elif scale == "linear":
        pts = np.linspace(lo, hi, count)
    else:
        raise InvalidSpec(f"grid scale must be linear or log, got {scale!r}")
    return tuple(float(p) for p in pts)


@dataclass(frozen=True)
class SweepSpec:
    """Grid over one variable, crossed with a list of input states.

    ``kappa`` and ``detuning_offset`` are angular rates applied to both
    cavities and both swap pulses; ``alpha`` and ``r0`` replace the
    corresponding field of every listed state.
    """

    variable: str
    grid: tuple
    base_config: RunConfig
    states: tuple
    with_cooling: bool = True
    engine: str | None = None

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise InvalidSpec(f"unknown sweep variable {self.variable!r}")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise InvalidSpec("sweep grid is empty")
        diffs = np.diff(grid)
        if len(grid) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise InvalidSpec("sweep grid must be strictly monotone")
        if not self.states:
            raise InvalidSpec("sweep needs at least one state")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "states", tuple(self.states))

    def points(self):
        """(value, state) pairs in grid-major, state-minor order."""
        return [(v, s) for v in self.grid for s in self.states]


@dataclass(frozen=True)
class ResultRow:
    sweep_var: str
    sweep_value: float
    state: str
    F: float
    F1: float
    T_eff_K: float
    model: str
    status: str = "ok"
    diagnostics: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("sweep_value", "F", "F1", "T_eff_K"):
            object.__setattr__(self, name, _round9(float(getattr(self, name))))

    def csv_fields(self) -> list:
        return [self.sweep_var, fmt(self.sweep_value), self.state, fmt(self.F), fmt(self.F1),
                fmt(self.T_eff_K), self.model, self.status]


def point_inputs(spec: SweepSpec, value: float, state: InitialStateSpec):
    """Resolve the run config and input state for one grid point."""
    cfg = spec.base_config
    if spec.variable == "bath_temperature":
        cfg = cfg.with_temperature(value)
    elif spec.variable == "kappa":
        cfg = cfg.with_kappa(value)
    elif spec.variable == "detuning_offset":
        cfg = replace(cfg, detuning_offset=value)
    elif spec.variable == "alpha":
        state = replace(state, alpha=value)
    elif spec.variable == "r0":
        state = replace(state, r0=value)
    return cfg, state


def run_point(spec: SweepSpec, value: float, state: InitialStateSpec) -> ResultRow:
    label = format_state(state)
    try:
        cfg, state = point_inputs(spec, value, state)
        label = format_state(state)
        plan = build_plan(cfg.system, cfg.eps, state, model=cfg.model, engine=spec.engine,
                          skip_cooling=not spec.with_cooling,
                          detuning_offset=cfg.detuning_offset)
        report = run_protocol(cfg.system, plan)
    except OptoConvertError as exc:
        nan = math.nan
        return ResultRow(spec.variable, value, label, nan, nan, nan, spec.base_config.model,
                         f"error: {type(exc).__name__}", diagnostics=str(exc))
    tails = [d["tail"] for d in report.diagnostics if "tail" in d]
    margins = [d["min_symplectic_margin"] for d in report.diagnostics if "min_symplectic_margin" in d]
    summary = f"engine={report.engine}"
    if tails:
        summary += f" max_tail={max(tails):.2e}"
    if margins:
        summary += f" min_margin={min(margins):.2e}"
    return ResultRow(spec.variable, value, label, report.F, report.F1, report.T_eff,
                     cfg.model, diagnostics=summary)


def _run_packed(args):
    return run_point(*args)


def sweep(spec: SweepSpec, workers: int = 1) -> list:
    """Run every (grid point, state) pair; rows come back in grid-major order."""
    jobs = [(spec, v, s) for v, s in spec.points()]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_packed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_packed, jobs))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def rows_from_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_COLUMNS:
        raise InvalidSpec(f"unexpected CSV header {header}")
    out = []
    for rec in reader:
        var, val, state, F, F1, T, model, status = rec
        out.append(ResultRow(var, float(val), state, float(F), float(F1), float(T), model, status))
    return out


def _json_num(x: float):
    return None if math.isnan(x) else _round9(x)


def rows_to_json(rows, config: RunConfig | None = None) -> str:
    doc = {
        "columns": list(CSV_COLUMNS),
        "rows": [
            {"sweep_var": r.sweep_var, "sweep_value": _json_num(r.sweep_value), "state": r.state,
             "F": _json_num(r.F), "F1": _json_num(r.F1), "T_eff_K": _json_num(r.T_eff_K),
             "model": r.model, "status": r.status, "diagnostics": r.diagnostics}
            for r in rows
        ],
        "config": config.resolved() if config is not None else None,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit(rows, format: str, path, config: RunConfig | None = None) -> None:
    """Write rows as CSV or JSON; ``path`` of '-' or None returns nothing and prints."""
    if format == "csv":
        text = rows_to_csv(rows)
    elif format == "json":
        text = rows_to_json(rows, config)
    else:
        raise InvalidSpec(f"format must be csv or json, got {format!r}")
    if path in (None, "-"):
        print(text, end="")
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
