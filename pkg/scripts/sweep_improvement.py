"""ODE-simulated improvement ratio over T1/T2 and initial state, both modes.

Thin wrapper around ``stabsense sweep`` that runs the per-shot and
per-root-time maps with one shared grid and reports each row's maximum.
"""

import argparse
from pathlib import Path

import numpy as np

from stabsense.protocols import MODES
from stabsense.sensitivity import sweep_improvement
from stabsense.serialize import provenance, write_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.5, 0.6, 0.764, 1.0, 1.5, 2.0, 5.0, 10.0, 100.0])
    ap.add_argument("--n-vx", type=int, default=49)
    ap.add_argument("--delta", type=float, default=0.01, help="detuning times T2")
    ap.add_argument("--outdir", default=".")
    args = ap.parse_args()

    vx = np.linspace(0.02, 0.98, args.n_vx)
    for mode in MODES:
        res = sweep_improvement(args.ratios, vx, mode, args.delta)
        for r, row in zip(res.t1_over_t2, res.ratio):
            print(f"{mode:13s} T1/T2={r:<7g} max ratio {row.max():.4f} at v_x0={vx[np.argmax(row)]:.3f}")
        meta = provenance("sweep", "dimensionless", {"t1_over_t2": list(args.ratios), "n_vx": args.n_vx})
        meta.update(mode=mode, delta=args.delta)
        print(write_sweep(Path(args.outdir) / f"sweep_{mode}.csv", res, meta))


if __name__ == "__main__":
    main()
