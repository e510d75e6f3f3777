"""Predicted correlations, costs and the tolerance cascade."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

GRID_POINTS = 200
SEARCH_CAP = 1e3
GOLDEN_TOL = 1e-3
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _arrays(constants: Sequence):
    K = np.array([c.K for c in constants], float)
    V = np.array([c.V_phi for c in constants], float)
    Vpsi = np.array([c.V_psibar for c in constants], float)
    rho = np.array([c.rho_phi_psibar for c in constants], float)
    alpha = np.array([c.alpha for c in constants], float)
    beta = np.array([c.beta for c in constants], float)
    if not (np.all(np.isfinite(Vpsi)) and np.all(np.isfinite(rho))):
        raise ValueError("constants lack the auxiliary-variate fits (V_psibar, rho)")
    return K, V, Vpsi, rho, alpha, beta


def _r2_raw(a, V, Vpsi, rho):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(V > 0, 1.0 - Vpsi * a * a / (4.0 * V) * (1.0 - rho * rho), 1.0)


def _rho2_h(a, a0, V, Vpsi, rho, alpha, beta):
    r2 = np.clip(_r2_raw(a, V, Vpsi, rho), 0.0, 1.0)
    r = np.sqrt(r2)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(beta != 0, np.abs(alpha * r / beta) * a0, np.where(alpha * r != 0, np.inf, 0.0))
    return np.clip(r2 - corr, 0.0, 1.0)


def sensitivity_rho2(a: float, a0: float, constants) -> np.ndarray:
    """Predicted ``rho^2[phi_h0, xi_h0(a)]`` per node, clamped to [0, 1].

    ``r^2 = 1 - V[psi] a^2 / (4 V[phi]) (1 - rho^2[phi, psi])`` followed by
    the discretisation loss ``|alpha r / beta| a0``.
    """
    if not (a > a0 > 0):
        raise ValueError("need a > a0 > 0")
    _, V, Vpsi, rho, alpha, beta = _arrays(constants)
    return _rho2_h(a, a0, V, Vpsi, rho, alpha, beta)


def plain_cost(a: float, constants, delta: float = 1.0) -> float:
    """``sum K V / a^(2 + 1/delta)``: predicted integrator steps of PlainPDD(a)."""
    K = np.array([c.K for c in constants], float)
    V = np.array([c.V_phi for c in constants], float)
    return float((K * V).sum() / a ** (2.0 + 1.0 / delta))


def predicted_cv_cost(a_prev: float, a: float, constants, kappa: float, delta: float = 1.0) -> float:
    """Fine-level part: ``kappa sum K V (1 - rho_h^2(a)) / a_prev^(2 + 1/delta)``."""
    K, V, Vpsi, rho, alpha, beta = _arrays(constants)
    ratio = 1.0 - _rho2_h(a, a_prev, V, Vpsi, rho, alpha, beta)
    return float(kappa * (K * V * ratio).sum() / a_prev ** (2.0 + 1.0 / delta))


def predicted_iter_cost(a_prev: float, a: float, constants, kappa: float, delta: float = 1.0,
                        Pi: float = 0.0, Pi_tilde: float = 0.0) -> float:
    """Cost of IterPDD(a_prev, a): control-variate solve at ``a_prev`` plus PlainPDD(a)."""
    if not (a > a_prev > 0):
        raise ValueError("need a > a_prev > 0")
    return (predicted_cv_cost(a_prev, a, constants, kappa, delta) + plain_cost(a, constants, delta)
            + Pi + Pi_tilde)


def predicted_speedup(a_prev: float, a: float, constants, kappa: float, delta: float = 1.0) -> float:
    return plain_cost(a_prev, constants, delta) / predicted_iter_cost(a_prev, a, constants, kappa, delta)


@dataclass(frozen=True)
class OptimResult:
    a: float
    cost: float
    degenerate: bool


def optimize_next(a_j: float, constants, kappa: float, delta: float = 1.0,
                  cap: float = SEARCH_CAP, grid_points: int = GRID_POINTS,
                  tol: float = GOLDEN_TOL) -> OptimResult:
    """Minimise the predicted cost over ``a`` in ``(a_j, cap a_j]``.

    Logarithmic grid scan, then golden-section search in ``log a`` between
    the neighbours of the best grid point.  ``degenerate`` marks a minimum
    at the search cap.
    """
    if not a_j > 0:
        raise ValueError("a_j must be positive")
    lo, hi = math.log(a_j), math.log(cap * a_j)
    t = np.linspace(lo, hi, grid_points + 1)[1:]
    f = lambda s: predicted_iter_cost(a_j, math.exp(s), constants, kappa, delta)
    vals = np.array([f(s) for s in t])
    i = int(np.argmin(vals))
    if i == len(t) - 1:
        return OptimResult(float(math.exp(t[-1])), float(vals[-1]), True)
    left = t[i - 1] if i > 0 else lo + 1e-12 * max(1.0, abs(lo))
    right = t[i + 1]
    x1 = right - INVPHI * (right - left)
    x2 = left + INVPHI * (right - left)
    f1, f2 = f(x1), f(x2)
    while right - left > tol:
        if f1 <= f2:
            right, x2, f2 = x2, x1, f1
            x1 = right - INVPHI * (right - left)
            f1 = f(x1)
        else:
            left, x1, f1 = x1, x2, f2
            x2 = left + INVPHI * (right - left)
            f2 = f(x2)
    best = min((vals[i], t[i]), (f1, x1), (f2, x2))
    return OptimResult(float(math.exp(best[1])), float(best[0]), False)


@dataclass(frozen=True)
class LevelPrediction:
    a_fine: float
    a_coarse: float
    iter_cost: float          # cv part at a_fine + plain at a_coarse
    cv_cost: float
    mean_abs_rho: float
    speedup: float            # plain(a_fine) / iter_cost


@dataclass(frozen=True)
class Schedule:
    """Tolerances ``a_J > ... > a_0`` with per-level predictions (finest first)."""

    a0: float
    tolerances: List[float]
    levels: List[LevelPrediction] = field(default_factory=list)
    plain_cost_a0: float = 0.0
    coarsest_plain_cost: float = 0.0
    cumulative_speedup: float = 1.0
    degenerate: bool = False
    rejected: LevelPrediction | None = None

    def __post_init__(self):
        t = self.tolerances
        if any(t[i] <= t[i + 1] for i in range(len(t) - 1)):
            raise ValueError("tolerances must be strictly decreasing")
        if t[-1] != self.a0:
            raise ValueError("the last tolerance must be a0")

    @property
    def J(self) -> int:
        return len(self.tolerances) - 1

    @property
    def total_cost(self) -> float:
        return sum(lv.cv_cost for lv in self.levels) + self.coarsest_plain_cost


def build_schedule(a0: float, constants, kappa: float, delta: float = 1.0,
                   stop_threshold: float = 1.5, max_levels: int = 10) -> Schedule:
    """Add coarser levels while the predicted speedup of the new level is at least ``stop_threshold``."""
    if not a0 > 0:
        raise ValueError("a0 must be positive")
    if not stop_threshold > 1:
        raise ValueError("stop_threshold must exceed 1")
    tol = [a0]
    levels: List[LevelPrediction] = []
    degenerate = False
    rejected = None
    while len(levels) < max_levels:
        a_j = tol[-1]
        opt = optimize_next(a_j, constants, kappa, delta)
        cv = predicted_cv_cost(a_j, opt.a, constants, kappa, delta)
        cost = cv + plain_cost(opt.a, constants, delta)
        S = plain_cost(a_j, constants, delta) / cost
        rho = float(np.sqrt(sensitivity_rho2(opt.a, a_j, constants)).mean())
        lp = LevelPrediction(a_j, opt.a, cost, cv, rho, S)
        if not S >= stop_threshold:
            rejected = lp
            break
        degenerate = degenerate or opt.degenerate
        levels.append(lp)
        tol.append(opt.a)
    p0 = plain_cost(a0, constants, delta)
    coarse = plain_cost(tol[-1], constants, delta) if levels else p0
    total = sum(lv.cv_cost for lv in levels) + coarse
    return Schedule(a0, tol[::-1], levels, p0, coarse, p0 / total, degenerate, rejected)


def speedup_curve(a0: float, a_grid, constants, kappa: float, delta: float = 1.0) -> np.ndarray:
    return np.array([predicted_speedup(a0, float(a), constants, kappa, delta) for a in a_grid])


SCHEDULE_COLUMNS = ["level", "a", "predicted_cost", "predicted_abs_rho", "predicted_speedup"]


def write_schedule_csv(schedule: Schedule, path) -> None:
    """Row ``j`` describes IterPDD(a_{j-1}, a_j); the coarsest row is its plain solve."""
    J = schedule.J
    with open(path, "w", newline="") as fh:
        fh.write(f"# a0={schedule.a0!r} cumulative_speedup={schedule.cumulative_speedup!r}\n")
        w = csv.writer(fh)
        w.writerow(SCHEDULE_COLUMNS)
        w.writerow([J, repr(schedule.tolerances[0]), repr(schedule.coarsest_plain_cost), "", ""])
        for j, lv in reversed(list(enumerate(schedule.levels))):
            w.writerow([j, repr(lv.a_fine), repr(lv.iter_cost), repr(lv.mean_abs_rho), repr(lv.speedup)])


def read_schedule_csv(path):
    """Returns ``(a0, tolerances from coarse to fine, rows)``."""
    with open(path, newline="") as fh:
        head = fh.readline()
        rows = list(csv.DictReader(fh))
    kv = dict(tok.split("=") for tok in head[1:].split())
    tol = [float(r["a"]) for r in rows]
    return float(kv["a0"]), tol, rows
