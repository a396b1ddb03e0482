"""Command-line driver: steady-state, run, sweep and cool."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace

from .config import RunConfig, load_config
from .core import resonant_drive, solve_steady_state, swap_pulse_duration
from .errors import OptoConvertError
from .experiments import SweepSpec, emit, fmt, make_grid, sweep
from .gaussian import (GaussianState, build_drift_diffusion, choose_step, effective_temperature,
                       evolve_gaussian)
from .protocol import build_plan, pulse_config, run_protocol
from .states import parse_state


def _common(p):
    p.add_argument("--config", help="flat key = value config file (defaults if omitted)")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--model", choices=("full", "rwa", "ideal"), help="override the config model")
    p.add_argument("--engine", choices=("gaussian", "fock", "hybrid"),
                   help="default: gaussian for Gaussian inputs, hybrid otherwise")
    p.add_argument("--seed", type=int, default=None,
                   help="reserved; every code path is deterministic")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optoconvert", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady-state", help="operating point of each swap pulse")
    _common(p)

    p = sub.add_parser("run", help="one full three-step conversion")
    _common(p)
    p.add_argument("--state", default="coherent:1", help="e.g. coherent:1, squeezed:2:0.4, cat:1")
    p.add_argument("--skip-cooling", action="store_true")

    p = sub.add_parser("sweep", help="grid over one parameter, CSV or JSON rows")
    _common(p)
    p.add_argument("--var", required=True,
                   choices=("bath_temperature", "kappa", "alpha", "r0", "detuning_offset"))
    p.add_argument("--grid", help="explicit comma-separated values (SI units; rates in Hz/2pi)")
    p.add_argument("--range", nargs=3, metavar=("MIN", "MAX", "COUNT"),
                   help="grid bounds and point count")
    p.add_argument("--scale", choices=("linear", "log"), default="linear")
    p.add_argument("--states", default="coherent:1",
                   help="semicolon-separated state labels")
    p.add_argument("--no-cooling", action="store_true")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("cool", help="cooling step only; reports T_eff")
    _common(p)
    return ap


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.model:
        cfg = replace(cfg, model=args.model)
    return cfg


def _write(text: str, path: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_steady_state(args):
    cfg = _run_config(args)
    out = {}
    for mode in (1, 2):
        drv = resonant_drive(cfg.system, mode, cfg.eps[mode - 1], cfg.detuning_offset)
        ss = solve_steady_state(drv)
        out[f"pulse_mode_{mode}"] = {
            "E": [drv.E[mode - 1].real, drv.E[mode - 1].imag],
            "Delta": drv.Delta[mode - 1],
            "b_s": [ss.b_s[mode - 1].real, ss.b_s[mode - 1].imag],
            "q_s": ss.q_s,
            "eps": ss.eps[mode - 1],
            "effective_detuning": ss.effective_detuning[mode - 1],
            "swap_duration_s": swap_pulse_duration(ss, mode),
            "residual": ss.residual,
            "iterations": ss.iterations,
        }
    _write(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)


def cmd_run(args):
    cfg = _run_config(args)
    state = parse_state(args.state)
    plan = build_plan(cfg.system, cfg.eps, state, model=cfg.model, engine=args.engine,
                      skip_cooling=args.skip_cooling, detuning_offset=cfg.detuning_offset)
    rep = run_protocol(cfg.system, plan)
    out = {
        "state": state.label, "engine": rep.engine, "model": cfg.model,
        "F": rep.F, "F1": rep.F1, "T_eff_K": rep.T_eff,
        "diagnostics": [{k: v for k, v in d.items()} for d in rep.diagnostics],
        "config": cfg.resolved(),
    }
    _write(json.dumps(out, indent=2, sort_keys=True, default=float) + "\n", args.out)


def _grid_values(args):
    if args.grid:
        vals = tuple(float(v) for v in args.grid.split(","))
    elif args.range:
        lo, hi, n = args.range
        vals = make_grid(float(lo), float(hi), int(n), args.scale)
    else:
        raise OptoConvertError("sweep needs --grid or --range")
    if args.var in ("kappa", "detuning_offset"):
        vals = tuple(2 * math.pi * v for v in vals)
    return vals


def cmd_sweep(args):
    cfg = _run_config(args)
    states = tuple(parse_state(s) for s in args.states.split(";") if s.strip())
    spec = SweepSpec(args.var, _grid_values(args), cfg, states,
                     with_cooling=not args.no_cooling, engine=args.engine)
    rows = sweep(spec, workers=args.workers)
    emit(rows, args.format, args.out, config=cfg)


def cmd_cool(args):
    cfg = _run_config(args)
    system = cfg.system
    plan = build_plan(system, cfg.eps, parse_state("vacuum"), model=cfg.model,
                      engine="gaussian", detuning_offset=cfg.detuning_offset)
    pulse = plan.pulses[1]
    state = GaussianState.thermal_mechanics(system.n_thermal)
    steady = solve_steady_state(pulse_config(system, pulse))
    if cfg.model == "ideal":
        rep = run_protocol(system, plan)
        T = rep.T_eff
    else:
        dd = build_drift_diffusion(system, steady, [pulse], cfg.model)
        state = evolve_gaussian(state, dd, pulse.duration, choose_step(dd, pulse.duration))
        T = effective_temperature(state.mode(0)[1], system.omega_m)
    text = "\n".join([
        f"bath_temperature_K,{fmt(system.T)}",
        f"swap_duration_s,{fmt(pulse.duration)}",
        f"T_eff_K,{fmt(T)}",
    ]) + "\n"
    _write(text, args.out)


COMMANDS = {"steady-state": cmd_steady_state, "run": cmd_run, "sweep": cmd_sweep, "cool": cmd_cool}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except OptoConvertError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
