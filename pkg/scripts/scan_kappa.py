"""Fidelity vs cavity damping kappa/2pi over 0.01-10 MHz at T = 2 K.

Gaussian inputs use moment propagation; the cat and Fock-superposition
inputs use the hybrid master-equation engine (about a minute per point).
"""

import argparse
import math
from pathlib import Path

from optoconvert.config import load_config
from optoconvert.experiments import SweepSpec, emit, make_grid, sweep
from optoconvert.states import cat, coherent, squeezed, superposition


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="config file (defaults if omitted)")
    ap.add_argument("--points", type=int, default=8)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--gaussian-only", action="store_true", help="skip the slow non-Gaussian inputs")
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    cfg = load_config(args.config)
    grid = tuple(2 * math.pi * k for k in make_grid(1e4, 1e7, args.points, "log"))
    states = [coherent(1), coherent(2), squeezed(2, 0.4)]
    if not args.gaussian_only:
        states += [cat(1), superposition(1 / math.sqrt(2), 1 / math.sqrt(2))]
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    name = out / "kappa.csv"
    emit(sweep(SweepSpec("kappa", grid, cfg, tuple(states)), workers=args.workers), "csv", name,
         config=cfg)
    print(f"wrote {name}")


if __name__ == "__main__":
    main()
