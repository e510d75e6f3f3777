"""PlainPDD and IterPDD pipelines, cost ledger and error reports."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .fd import (DEFAULT_CELLS_PER_UNIT, GradientTable, GridField, gradient_table,
                 interface_interpolants, solve_strips)
from .geometry import Partition, locate_strip
from .nodal import CV, PLAIN, NodalEstimate, solve_node
from .problems import evaluate
from .scheduler import Schedule, sensitivity_rho2

FALLBACK_RHO2 = 0.05


@dataclass
class PddSolution:
    a: float
    level: int
    nodal_values: np.ndarray
    fields: List[GridField]
    table: GradientTable
    estimates: List[NodalEstimate] = field(default_factory=list)
    mode: str = PLAIN
    fallback: bool = False

    @property
    def edges(self) -> np.ndarray:
        return self.table.edges

    def __call__(self, x, y, side: Optional[str] = None) -> np.ndarray:
        """Evaluate the direct sum of strip solutions.

        On an interface the lower strip is used unless ``side="right"``.
        """
        x = np.atleast_1d(np.asarray(x, float))
        y = np.broadcast_to(np.asarray(y, float), x.shape)
        out = np.empty(x.shape)
        for idx in np.ndindex(x.shape):
            k = int(locate_strip(self.edges, float(x[idx])))
            if side == "right" and k + 1 < len(self.fields) and x[idx] == self.edges[k + 1]:
                k += 1
            out[idx] = self.fields[k](x[idx], y[idx])
        return out

    @property
    def realized_abs_rho(self) -> float:
        r = [abs(e.rho) for e in self.estimates if e.mode == CV and np.isfinite(e.rho)]
        return float(np.mean(r)) if r else float("nan")

    @property
    def mean_variance(self) -> float:
        return float(np.mean([e.variance for e in self.estimates])) if self.estimates else float("nan")


@dataclass
class LevelCost:
    a: float
    mode: str
    steps: int
    pilot_steps: int
    kappa: float
    Pi_seconds: float
    Pi_tilde_seconds: float
    fallback: bool = False
    discarded_steps: int = 0   # cv attempt thrown away by a fallback

    @property
    def weighted(self) -> float:
        w = self.kappa if self.mode == CV else 1.0
        return w * (self.steps + self.pilot_steps) + self.kappa * self.discarded_steps


@dataclass
class CostLedger:
    levels: List[LevelCost] = field(default_factory=list)
    fitting_steps: int = 0

    @property
    def total_steps(self) -> int:
        return sum(lv.steps + lv.pilot_steps + lv.discarded_steps for lv in self.levels)

    @property
    def total_weighted(self) -> float:
        return float(sum(lv.weighted for lv in self.levels))

    @property
    def Pi_seconds(self) -> float:
        return float(sum(lv.Pi_seconds + lv.Pi_tilde_seconds for lv in self.levels))

    def speedup_vs(self, plain: "CostLedger") -> float:
        return plain.total_weighted / self.total_weighted

    def level_speedups(self, plain_costs: Dict[float, float]) -> List[float]:
        """``S(a_{j-1}, a_j)`` given measured plain costs at the fine tolerances."""
        out = []
        for j in range(len(self.levels) - 1, 0, -1):
            fine, coarse = self.levels[j], self.levels[j - 1]
            if fine.a in plain_costs:
                out.append(plain_costs[fine.a] / (fine.weighted + coarse.weighted))
        return out

    def to_dict(self) -> dict:
        return {"levels": [asdict(lv) | {"weighted": lv.weighted} for lv in self.levels],
                "fitting_steps": self.fitting_steps, "total_steps": self.total_steps,
                "total_weighted": self.total_weighted}


def assemble_solution(a: float, values, problem, partition: Partition,
                      cells_per_unit: int = DEFAULT_CELLS_PER_UNIT, level: int = 0,
                      estimates=None, mode: str = PLAIN, shape=None):
    """Interface interpolation, strip solves and gradient table from nodal values."""
    values = np.asarray(values, float)
    g = problem.coefficients.boundary
    bfun = lambda X, Y: evaluate(g, X, Y)
    bscalar = lambda x, y: float(g(x, y))
    t0 = time.perf_counter()
    interps = interface_interpolants(partition, values, bscalar, shape)
    fields = solve_strips(partition, problem.coefficients, interps, bfun, cells_per_unit)
    t1 = time.perf_counter()
    table = gradient_table(fields, partition)
    t2 = time.perf_counter()
    sol = PddSolution(a, level, values, fields, table, list(estimates or []), mode)
    return sol, t1 - t0, t2 - t1


def _solve_level(a, problem, partition, constants, q, seed, level, threads, delta,
                 cv_table=None, predicted_rho2=None, cv_exact=False):
    ests = []
    for nd, c in zip(partition.nodes, constants):
        if c.node_id != nd.id:
            raise ValueError("constants must be ordered by node id")
        r2 = None if predicted_rho2 is None else float(predicted_rho2[nd.id])
        try:
            ests.append(solve_node(nd, a, q, c, problem, seed=seed, level=level, cv_table=cv_table,
                                   cv_exact=cv_exact, delta=delta, predicted_rho2=r2,
                                   threads=threads))
        except Exception as exc:
            raise RuntimeError(f"level {level} (a={a}), node {nd.id}: {exc}") from exc
    return ests


def run_plain_pdd(a: float, problem, partition: Partition, constants, q: float = 2.0,
                  seed: int = 0, threads: int = 1, delta: float = 1.0, level: int = 0,
                  cells_per_unit: int = DEFAULT_CELLS_PER_UNIT, kappa: float = 1.0,
                  injected_values=None):
    """PlainPDD(a).  ``injected_values`` skips the Monte Carlo stage (test mode)."""
    if injected_values is None:
        ests = _solve_level(a, problem, partition, constants, q, seed, level, threads, delta)
        values = [e.value for e in ests]
    else:
        ests = []
        values = injected_values
    sol, pi, pit = assemble_solution(a, values, problem, partition, cells_per_unit, level, ests)
    steps = sum(e.work for e in ests)
    ledger = CostLedger([LevelCost(a, PLAIN, steps, 0, kappa, pi, pit)])
    return sol, ledger


def run_iter_pdd(schedule: Schedule, problem, partition: Partition, constants, q: float = 2.0,
                 kappa: float = 1.0, delta: float = 1.0, seed: int = 0, threads: int = 1,
                 cells_per_unit: int = DEFAULT_CELLS_PER_UNIT, start_solution: PddSolution = None):
    """Coarsest level plain, every finer level with control variates from the previous one.

    Returns the solutions from coarse to fine and the ledger.  A level whose
    realised mean ``rho^2`` falls below 0.05 is redone in plain mode and
    flagged.  ``start_solution`` replaces the coarsest plain solve.
    """
    tol = schedule.tolerances
    J = len(tol) - 1
    sols: List[PddSolution] = []
    ledger = CostLedger()
    if start_solution is None:
        sol, led = run_plain_pdd(tol[0], problem, partition, constants, q, seed, threads, delta,
                                 level=J, cells_per_unit=cells_per_unit, kappa=kappa)
        ledger.levels.extend(led.levels)
    else:
        sol = start_solution
    sols.append(sol)
    for idx in range(1, J + 1):
        a_fine, a_coarse = tol[idx], tol[idx - 1]
        level = J - idx
        r2 = sensitivity_rho2(a_coarse, a_fine, constants)
        ests = _solve_level(a_fine, problem, partition, constants, q, seed, level, threads, delta,
                            cv_table=sols[-1].table, predicted_rho2=r2)
        r2s = [e.rho**2 for e in ests if np.isfinite(e.rho)]
        realized = float(np.mean(r2s)) if r2s else 0.0   # a zero table gives undefined rho
        fallback = not realized >= FALLBACK_RHO2
        discarded = 0
        if fallback:
            discarded = sum(e.total_work for e in ests)
            ests = _solve_level(a_fine, problem, partition, constants, q, seed, level, threads, delta)
        mode = PLAIN if fallback else CV
        sol, pi, pit = assemble_solution(a_fine, [e.value for e in ests], problem, partition,
                                         cells_per_unit, level, ests, mode)
        sol.fallback = fallback
        sols.append(sol)
        ledger.levels.append(LevelCost(a_fine, mode, sum(e.work for e in ests),
                                       sum(e.pilot_work for e in ests), kappa, pi, pit,
                                       fallback, discarded))
    return sols, ledger


def error_report(solution: PddSolution, problem, partition: Partition, probe_n: int = 101) -> dict:
    """Mean nodal error, sup interface error, sup domain error on the strip grids, sup |grad|."""
    u = problem.exact_u
    if u is None:
        raise ValueError("the problem has no exact solution")
    xy = partition.node_xy
    exact_nodes = evaluate(u, xy[:, 0], xy[:, 1])
    mean_nodal = float(np.mean(np.abs(exact_nodes - solution.nodal_values)))
    sup_iface = 0.0
    for (xa, ya), (xb, yb) in partition.interfaces:
        t = np.linspace(0.0, 1.0, probe_n)
        px, py = xa + t * (xb - xa), ya + t * (yb - ya)
        sup_iface = max(sup_iface, float(np.abs(solution(px, py) - evaluate(u, px, py)).max()))
    sup_dom = 0.0
    for f in solution.fields:
        X, Y = f.mesh()
        sup_dom = max(sup_dom, float(np.abs(f.values - evaluate(u, X, Y)).max()))
    return {"a": solution.a, "mean_nodal_error": mean_nodal, "sup_interface_error": sup_iface,
            "sup_domain_error": sup_dom, "sup_grad_norm": solution.table.sup_norm}


NODAL_COLUMNS = ["node", "x", "y", "value", "variance", "N", "h", "ci_half_width", "work",
                 "mode", "rho"]


def write_nodal_csv(solution: PddSolution, partition: Partition, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NODAL_COLUMNS)
        by_id = {e.node_id: e for e in solution.estimates}
        for nd in partition.nodes:
            e = by_id.get(nd.id)
            row = [nd.id, repr(float(nd.xy[0])), repr(float(nd.xy[1])),
                   repr(float(solution.nodal_values[nd.id]))]
            if e is None:
                row += ["", "", "", "", "", "", ""]
            else:
                row += [repr(e.variance), e.N, repr(e.h), repr(e.ci_half_width), e.work, e.mode,
                        repr(e.rho)]
            w.writerow(row)


def read_nodal_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(path, summary: dict) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
