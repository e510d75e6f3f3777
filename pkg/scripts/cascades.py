"""Predicted tolerance cascades and cumulative speedups for a range of target tolerances."""
import csv

from _common import base_parser, setup
from iterpdd.scheduler import build_schedule


def main():
    p = base_parser(__doc__)
    p.add_argument("--a0", type=float, nargs="+", default=[0.04, 0.02, 0.01, 0.005, 0.0025])
    args = p.parse_args()
    _, _, constants, kappa = setup(args)
    with open(args.out / "cascades.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a0", "J", "tolerances", "level_speedups", "level_abs_rho",
                    "cumulative_speedup"])
        for a0 in args.a0:
            s = build_schedule(a0, constants, kappa)
            tol = " ".join(f"{t:.4g}" for t in s.tolerances)
            S = " ".join(f"{lv.speedup:.3g}" for lv in s.levels)
            rho = " ".join(f"{lv.mean_abs_rho:.4f}" for lv in s.levels)
            w.writerow([repr(a0), s.J, tol, S, rho, repr(s.cumulative_speedup)])
            print(f"a0={a0}: J={s.J} [{tol}] S_j=[{S}] |rho|=[{rho}] "
                  f"cumulative {s.cumulative_speedup:.2f} (kappa {kappa:.2f})")


if __name__ == "__main__":
    main()
