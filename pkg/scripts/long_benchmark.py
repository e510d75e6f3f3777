"""End-to-end IterPDD against PlainPDD at a small tolerance.

Opt-in: at the default a0 = 0.0025 the plain baseline alone costs about
1e11 integrator steps, so ``--skip-plain`` compares against the predicted
plain cost instead.
"""
import json
import time

from _common import base_parser, setup
from iterpdd.orchestrator import error_report, run_iter_pdd, run_plain_pdd
from iterpdd.scheduler import build_schedule, plain_cost


def main():
    p = base_parser(__doc__)
    p.add_argument("--a0", type=float, default=0.0025)
    p.add_argument("--skip-plain", action="store_true")
    args = p.parse_args()
    problem, partition, constants, kappa = setup(args)
    sched = build_schedule(args.a0, constants, kappa)
    print(f"cascade {sched.tolerances}, predicted speedup {sched.cumulative_speedup:.2f}", flush=True)
    t0 = time.perf_counter()
    sols, led = run_iter_pdd(sched, problem, partition, constants, 2.0, kappa=kappa,
                             seed=args.seed, threads=args.threads)
    out = {"a0": args.a0, "tolerances": sched.tolerances, "kappa": kappa,
           "predicted_speedup": sched.cumulative_speedup, "iter_weighted": led.total_weighted,
           "iter_seconds": time.perf_counter() - t0,
           "iter_error": error_report(sols[-1], problem, partition)}
    if args.skip_plain:
        out["plain_weighted_predicted"] = plain_cost(args.a0, constants)
        out["speedup_vs_predicted_plain"] = out["plain_weighted_predicted"] / led.total_weighted
    else:
        t0 = time.perf_counter()
        sol, plain = run_plain_pdd(args.a0, problem, partition, constants, 2.0, args.seed,
                                   args.threads, kappa=kappa)
        out.update(plain_weighted=plain.total_weighted, plain_seconds=time.perf_counter() - t0,
                   observed_speedup=led.speedup_vs(plain),
                   plain_error=error_report(sol, problem, partition))
    (args.out / "long_benchmark.json").write_text(json.dumps(out, indent=2, default=float) + "\n")
    print(json.dumps(out, indent=2, default=float))


if __name__ == "__main__":
    main()
