"""Shared setup for the experiment scripts."""
import argparse
from pathlib import Path

from iterpdd.fitting import (GlobalConstants, estimate_kappa, fit_all_nodes, read_constants_csv,
                             write_constants_csv)
from iterpdd.geometry import build_partition
from iterpdd.problems import manufactured_problem


def base_parser(doc: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--constants", type=Path, help="constants CSV; fitted and cached if missing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fit-seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--kappa", type=float, help="override the measured step-cost ratio")
    p.add_argument("--out", type=Path, default=Path("out"))
    return p


def setup(args):
    """Problem, partition, constants and kappa, fitting once if needed."""
    problem = manufactured_problem()
    partition = build_partition(problem.domain, 4, 6)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.constants or args.out / "constants.csv"
    if path.exists():
        constants, gc = read_constants_csv(path)
        kappa = gc.kappa if gc is not None else 1.0
    else:
        constants, table, _ = fit_all_nodes(partition, problem, seed=args.fit_seed,
                                            threads=args.threads)
        kappa = estimate_kappa(problem, table, x0=partition.nodes[0].xy, seed=args.fit_seed).kappa
        write_constants_csv(constants, path, GlobalConstants(1.0, kappa))
        print(f"fitted constants -> {path}")
    if args.kappa is not None:
        kappa = args.kappa
    return problem, partition, constants, kappa
