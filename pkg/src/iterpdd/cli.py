"""Command-line front end.

Subcommands: fit, schedule, solve, speedup-sweep, nsr-table, report.
Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .error_analysis import (CONFIDENCE, NSR_RATIOS, NSR_S, GlobalErrorParams, a0_from_epsilon,
                             nsr_table)
from .fitting import (GlobalConstants, estimate_kappa, fit_all_nodes, read_constants_csv,
                      write_constants_csv)
from .geometry import Domain, build_partition
from .orchestrator import (error_report, run_iter_pdd, run_plain_pdd, write_nodal_csv,
                           write_report)
from .problems import get_problem
from .scheduler import Schedule, build_schedule, speedup_curve, write_schedule_csv

log = logging.getLogger("iterpdd")

DOMAIN_NOTE = "default rectangle [0,4]x[0,1] is a library choice, not part of the problem data"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iterpdd", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["fit", "schedule", "solve", "speedup-sweep", "nsr-table",
                                       "report"])
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--a0", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--plain", action="store_true", help="solve without control variates")
    p.add_argument("--out", help="output directory")
    p.add_argument("--gamma-r", type=float, dest="gamma_r")
    p.add_argument("--constants", help="constants CSV written by `fit`")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_config(args) -> RunConfig:
    cfg = cfgmod.load(args.config) if args.config else RunConfig()
    over = {}
    for k in ("seed", "threads", "a0", "eps", "q", "out", "gamma_r", "constants"):
        v = getattr(args, k)
        if v is not None:
            over[k] = v
    if args.plain:
        over["plain"] = True
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v.strip()
    return cfgmod.apply(cfg, over).validate()


def _setup(cfg: RunConfig):
    dom = Domain(*cfg.domain) if cfg.domain is not None else None
    problem = get_problem(cfg.problem, dom)
    partition = build_partition(problem.domain, cfg.m, cfg.nodes_per_interface)
    return problem, partition


def _tolerance(cfg: RunConfig) -> float:
    cfg.require_tolerance()
    if cfg.a0 is not None:
        return cfg.a0
    params = GlobalErrorParams(cfg.gamma_r, cfg.q_max, cfg.s, cfg.q, CONFIDENCE[cfg.q])
    a0 = a0_from_epsilon(cfg.eps, params)
    if not 0 < a0 < cfgmod.A0_SANITY_CAP:
        raise ConfigError(f"eps maps to a0={a0:.3g}, outside the sanity range")
    return a0


def _fit(cfg, problem, partition, out: Path):
    consts, table, timings = fit_all_nodes(partition, problem, M=cfg.fit_M, N=cfg.fit_N,
                                           h_range=(cfg.h_min, cfg.h_max), q=cfg.q,
                                           delta=cfg.delta, seed=cfg.seed, threads=cfg.threads,
                                           cells_per_unit=cfg.cells_per_unit)
    if cfg.kappa is None:
        kappa = estimate_kappa(problem, table, x0=partition.nodes[0].xy, seed=cfg.seed).kappa
    else:
        kappa = cfg.kappa
    gc = GlobalConstants(cfg.delta, kappa)
    write_constants_csv(consts, out / "constants.csv", gc)
    return consts, gc, timings


def _constants(cfg, problem, partition, out: Path):
    path = Path(cfg.constants) if cfg.constants else out / "constants.csv"
    if path.exists():
        consts, gc = read_constants_csv(path)
        if gc is None:
            gc = GlobalConstants(cfg.delta, cfg.kappa or 1.0)
        if cfg.kappa is not None:
            gc = GlobalConstants(gc.delta, cfg.kappa)
        if len(consts) != partition.n:
            raise ConfigError(f"{path} holds {len(consts)} nodes, partition has {partition.n}")
        return consts, gc
    if cfg.constants:
        raise ConfigError(f"constants file {path} not found")
    consts, gc, _ = _fit(cfg, problem, partition, out)
    return consts, gc


def cmd_fit(cfg, out):
    problem, partition = _setup(cfg)
    consts, gc, timings = _fit(cfg, problem, partition, out)
    log.info("fitted %d nodes, kappa=%.3f, %s", len(consts), gc.kappa, timings)
    print(f"wrote {out / 'constants.csv'} (kappa={gc.kappa:.3f})")


def cmd_schedule(cfg, out):
    problem, partition = _setup(cfg)
    a0 = _tolerance(cfg)
    consts, gc = _constants(cfg, problem, partition, out)
    sched = build_schedule(a0, consts, gc.kappa, gc.delta, cfg.stop_threshold)
    write_schedule_csv(sched, out / "schedule.csv")
    print(f"cascade {' -> '.join(f'{a:.4g}' for a in sched.tolerances)}; "
          f"predicted cumulative speedup {sched.cumulative_speedup:.2f}")
    return sched


def cmd_solve(cfg, out):
    problem, partition = _setup(cfg)
    a0 = _tolerance(cfg)
    consts, gc = _constants(cfg, problem, partition, out)
    if cfg.plain:
        sched = Schedule(a0, [a0])
        sol, ledger = run_plain_pdd(a0, problem, partition, consts, cfg.q, cfg.seed, cfg.threads,
                                    gc.delta, cells_per_unit=cfg.cells_per_unit, kappa=gc.kappa)
        sols = [sol]
    else:
        sched = build_schedule(a0, consts, gc.kappa, gc.delta, cfg.stop_threshold)
        sols, ledger = run_iter_pdd(sched, problem, partition, consts, cfg.q, gc.kappa, gc.delta,
                                    cfg.seed, cfg.threads, cfg.cells_per_unit)
    final = sols[-1]
    write_nodal_csv(final, partition, out / "nodal.csv")
    with open(out / "ledger.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "mode", "steps", "pilot_steps", "discarded_steps", "kappa", "weighted",
                    "fallback"])
        for lv in ledger.levels:
            w.writerow([repr(lv.a), lv.mode, lv.steps, lv.pilot_steps, lv.discarded_steps,
                        repr(lv.kappa), repr(lv.weighted), int(lv.fallback)])
    summary = {"problem": problem.name, "note": DOMAIN_NOTE if cfg.domain is None else "",
               "a0": a0, "tolerances": sched.tolerances, "plain": cfg.plain,
               "predicted_cumulative_speedup": sched.cumulative_speedup,
               "kappa": gc.kappa, "delta": gc.delta, "seed": cfg.seed,
               "ledger": ledger.to_dict(),
               "levels": [{"a": s.a, "mode": s.mode, "fallback": s.fallback,
                           "realized_abs_rho": s.realized_abs_rho,
                           "mean_variance": s.mean_variance} for s in sols]}
    if problem.exact_u is not None:
        summary["errors"] = [error_report(s, problem, partition) for s in sols]
    write_report(out / "report.json", summary)
    if cfg.dump_fields:
        from .fd import dump_fields_csv
        dump_fields_csv(final.fields, out / "fields.csv")
    print(f"solved at a0={a0:.4g}: total steps {ledger.total_steps}, "
          f"weighted cost {ledger.total_weighted:.4g}")


def cmd_speedup_sweep(cfg, out):
    problem, partition = _setup(cfg)
    a0 = _tolerance(cfg)
    consts, gc = _constants(cfg, problem, partition, out)
    grid = [a for a in cfg.sweep_a1 if a > a0]
    if not grid:
        raise ConfigError("sweep grid has no a1 above a0")
    pred = speedup_curve(a0, grid, consts, gc.kappa, gc.delta)
    observed = [""] * len(grid)
    if cfg.sweep_observed:
        _, plain = run_plain_pdd(a0, problem, partition, consts, cfg.q, cfg.seed, cfg.threads,
                                 gc.delta, cells_per_unit=cfg.cells_per_unit, kappa=gc.kappa)
        for i, a1 in enumerate(grid):
            _, led = run_iter_pdd(Schedule(a0, [a1, a0]), problem, partition, consts, cfg.q,
                                  gc.kappa, gc.delta, cfg.seed, cfg.threads, cfg.cells_per_unit)
            observed[i] = repr(led.speedup_vs(plain))
    with open(out / "speedup_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a0", "a1", "predicted_speedup", "observed_speedup"])
        for a1, s, o in zip(grid, pred, observed):
            w.writerow([repr(a0), repr(a1), repr(float(s)), o])
    print(f"wrote {out / 'speedup_sweep.csv'}")


def cmd_nsr_table(cfg, out):
    g = cfg.gamma_r if cfg.gamma_r is not None else 1.0
    tab = nsr_table(g, cfg.q, cfg.nsr_samples, cfg.seed)
    path = out / "nsr_table.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ratio"] + [str(s) for s in NSR_S])
        for r, row in zip(NSR_RATIOS, tab):
            w.writerow([repr(r)] + [repr(float(v)) for v in row])
    print(f"wrote {path}")


def cmd_report(cfg, out):
    path = out / "report.json"
    if not path.exists():
        raise ConfigError(f"no report at {path}; run `solve` first")
    rep = json.loads(path.read_text())
    print(f"problem {rep['problem']}  a0={rep['a0']:.4g}  plain={rep['plain']}")
    if rep.get("note"):
        print(f"note: {rep['note']}")
    print("cascade: " + " -> ".join(f"{a:.4g}" for a in rep["tolerances"]))
    print(f"kappa={rep['kappa']:.3f}  predicted cumulative speedup={rep['predicted_cumulative_speedup']:.2f}")
    for lv, info in zip(rep["ledger"]["levels"], rep["levels"]):
        print(f"  a={lv['a']:.4g}  {lv['mode']:5s}  steps={lv['steps']}  weighted={lv['weighted']:.4g}"
              f"  |rho|={info['realized_abs_rho']:.4f}  V={info['mean_variance']:.3f}"
              + ("  [fallback]" if info["fallback"] else ""))
    print(f"total weighted cost {rep['ledger']['total_weighted']:.4g}")
    for e in rep.get("errors", []):
        print(f"  a={e['a']:.4g}: mean nodal error {e['mean_nodal_error']:.4f}, "
              f"sup error {e['sup_domain_error']:.4f}")


COMMANDS = {"fit": cmd_fit, "schedule": cmd_schedule, "solve": cmd_solve,
            "speedup-sweep": cmd_speedup_sweep, "nsr-table": cmd_nsr_table, "report": cmd_report}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
