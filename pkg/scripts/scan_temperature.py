"""Fidelity vs bath temperature, with and without the cooling step.

Writes one CSV per cooling setting for coherent alpha=1, coherent alpha=2
and squeezed (alpha=2, r0=0.4) inputs.
"""

import argparse
from pathlib import Path

from optoconvert.config import load_config
from optoconvert.experiments import SweepSpec, emit, make_grid, sweep
from optoconvert.states import coherent, squeezed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="config file (defaults if omitted)")
    ap.add_argument("--points", type=int, default=12)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    cfg = load_config(args.config)
    grid = make_grid(0.01, 2.0, args.points, "log")
    states = (coherent(1), coherent(2), squeezed(2, 0.4))
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for cooling in (True, False):
        spec = SweepSpec("bath_temperature", grid, cfg, states, with_cooling=cooling)
        name = out / f"temperature_{'cooled' if cooling else 'uncooled'}.csv"
        emit(sweep(spec, workers=args.workers), "csv", name, config=cfg)
        print(f"wrote {name}")


if __name__ == "__main__":
    main()
