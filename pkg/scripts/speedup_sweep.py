"""Predicted, and optionally observed, two-level speedup S(a0, a1) over a grid of a1."""
import csv

import numpy as np

from _common import base_parser, setup
from iterpdd.orchestrator import run_iter_pdd, run_plain_pdd
from iterpdd.scheduler import Schedule, optimize_next, speedup_curve


def main():
    p = base_parser(__doc__)
    p.add_argument("--a0", type=float, nargs="+", default=[0.04, 0.02, 0.01])
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--observed", action="store_true", help="also run the solvers (slow)")
    args = p.parse_args()
    problem, partition, constants, kappa = setup(args)
    with open(args.out / "speedup_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a0", "a1", "predicted_speedup", "observed_speedup"])
        for a0 in args.a0:
            grid = np.geomspace(a0 * 1.25, 2.0, args.points)
            pred = speedup_curve(a0, grid, constants, kappa)
            obs = [""] * len(grid)
            if args.observed:
                _, plain = run_plain_pdd(a0, problem, partition, constants, 2.0, args.seed,
                                         args.threads, kappa=kappa)
                for i, a1 in enumerate(grid):
                    _, led = run_iter_pdd(Schedule(a0, [float(a1), a0]), problem, partition,
                                          constants, 2.0, kappa=kappa, seed=args.seed,
                                          threads=args.threads)
                    obs[i] = repr(led.speedup_vs(plain))
            for a1, s, o in zip(grid, pred, obs):
                w.writerow([repr(a0), repr(float(a1)), repr(float(s)), o])
            best = optimize_next(a0, constants, kappa)
            print(f"a0={a0}: best a1 {best.a:.4g}, predicted S {pred.max():.2f}")


if __name__ == "__main__":
    main()
