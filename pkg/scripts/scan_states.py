"""F and F1 vs coherent amplitude alpha and squeezing r0, plus a detuning scan."""

import argparse
import math
from pathlib import Path

from optoconvert.config import load_config
from optoconvert.experiments import SweepSpec, emit, make_grid, sweep
from optoconvert.states import coherent, squeezed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="config file (defaults if omitted)")
    ap.add_argument("--points", type=int, default=11)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    w = cfg.system.omega_m
    specs = {
        "alpha": SweepSpec("alpha", make_grid(0.5, 3.0, args.points), cfg, (coherent(0),)),
        "r0": SweepSpec("r0", make_grid(0.0, 0.8, args.points), cfg, (squeezed(2, 0),)),
        "detuning": SweepSpec("detuning_offset", make_grid(-0.3 * w, 0.3 * w, args.points), cfg,
                              (coherent(1),)),
    }
    for label, spec in specs.items():
        name = out / f"{label}.csv"
        emit(sweep(spec, workers=args.workers), "csv", name, config=cfg)
        print(f"wrote {name}")


if __name__ == "__main__":
    main()
