"""Balanced Monte Carlo solves at single interfacial nodes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rng import PHASE_PILOT, PHASE_SOLVE, stream_key
from .sde import PHI, XI, BatchStats, TrajectoryParams, run_batch

N_MIN = 100
PILOT_PATHS = 1000
PLAIN = "plain"
CV = "cv"


@dataclass(frozen=True)
class BalancedParams:
    a: float
    q: float
    N: int
    h: float


def balanced_parameters(a: float, q: float, V_phi: float, beta_abs: float, delta: float = 1.0,
                        n_min: int = N_MIN, h_max: Optional[float] = None) -> BalancedParams:
    """Paths and timestep putting statistical error and bias both at ``a / 2``.

    ``N = ceil(4 q^2 V / a^2)`` (at least ``n_min``) and
    ``h = (a / (2 |beta|))^(1/delta)``, optionally capped by ``h_max``.
    A vanishing ``beta_abs`` requires ``h_max``.
    """
    if not a > 0:
        raise ValueError("tolerance must be positive")
    if not q > 0:
        raise ValueError("q must be positive")
    if V_phi < 0 or not np.isfinite(V_phi):
        raise ValueError("variance must be non-negative")
    if beta_abs < 0 or not np.isfinite(beta_abs):
        raise ValueError("|beta| must be non-negative")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if beta_abs == 0:
        if h_max is None:
            raise ValueError("|beta| = 0 leaves h unbounded; pass h_max")
        h = h_max
    else:
        h = (a / (2.0 * beta_abs)) ** (1.0 / delta)
        if h_max is not None:
            h = min(h, h_max)
    # guard the ceil against round-off just above an integer
    raw = 4.0 * q * q * V_phi / (a * a)
    N = max(int(n_min), int(math.ceil(raw - 1e-9 * max(raw, 1.0))))
    return BalancedParams(float(a), float(q), N, float(h))


@dataclass
class NodalEstimate:
    node_id: int
    value: float
    variance: float
    N: int
    h: float
    ci_half_width: float
    work: int
    mode: str = PLAIN
    rho: float = float("nan")
    topped_up: bool = False
    pilot_work: int = 0
    flagged: int = 0
    gamma: float = -1.0

    @property
    def total_work(self) -> int:
        return self.work + self.pilot_work


def pearson(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ZeroDivisionError("zero variance in correlation")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def _cv_stats(stats: BatchStats, fitted_gamma: bool):
    c = stats.moments.cov
    m = stats.moments.mean
    # the score is phi - g * xi; g = -1 gives phi + xi, the fitted g minimises the variance
    if fitted_gamma and c[XI, XI] > 0:
        g = c[PHI, XI] / c[XI, XI]
    else:
        g = -1.0
    value = float(m[PHI] - g * m[XI])
    var = float(c[PHI, PHI] + g * g * c[XI, XI] - 2 * g * c[PHI, XI])
    rho = stats.rho(PHI, XI) if c[XI, XI] > 0 and c[PHI, PHI] > 0 else float("nan")
    return value, max(var, 0.0), rho, float(g)


def solve_node(node, a: float, q: float, constants, problem, seed: int = 0, level: int = 0,
               cv_table=None, cv_exact: bool = False, delta: float = 1.0,
               predicted_rho2: Optional[float] = None, safety: float = 1.1,
               fitted_gamma: bool = False, threads: int = 1, n_min: int = N_MIN,
               h_max: Optional[float] = None, top_up: bool = True) -> NodalEstimate:
    """Estimate ``u`` at ``node`` to tolerance ``a``.

    Without a control variate the score is ``phi``; with one (``cv_table``
    or ``cv_exact``) it is ``phi + xi`` and ``N`` is sized from the reduced
    variance ``V[phi] (1 - rho^2) * safety``.  ``rho^2`` comes from
    ``predicted_rho2`` or, if absent, from a pilot batch.  If the realised
    confidence half-width exceeds ``a / 2`` one extra batch tops ``N`` up.
    """
    use_cv = cv_table is not None or cv_exact
    beta_abs = abs(float(constants.beta))
    V_phi = max(float(constants.V_phi), 0.0)
    pilot_work = 0
    if h_max is None and beta_abs == 0:
        h_max = 0.01
    h = balanced_parameters(a, q, 1.0, beta_abs, delta, h_max=h_max).h
    tp = TrajectoryParams(h)

    if use_cv:
        if predicted_rho2 is None:
            key = stream_key(seed, PHASE_PILOT, level, node.id)
            pilot = run_batch(node.xy, tp, problem, PILOT_PATHS, key, cv_table=cv_table,
                              cv_exact=cv_exact, threads=threads)
            pilot_work = pilot.steps
            _, pv, _, _ = _cv_stats(pilot, fitted_gamma)
            V_target = pv * safety
        else:
            r2 = min(max(float(predicted_rho2), 0.0), 1.0)
            V_target = V_phi * (1.0 - r2) * safety
    else:
        V_target = V_phi
    bp = balanced_parameters(a, q, V_target, beta_abs, delta, n_min=n_min, h_max=h_max)

    key = stream_key(seed, PHASE_SOLVE, level, node.id)
    stats = run_batch(node.xy, tp, problem, bp.N, key, cv_table=cv_table, cv_exact=cv_exact,
                      threads=threads)
    work = stats.steps
    flagged = stats.flagged
    topped = False

    def summarize(st):
        if use_cv:
            return _cv_stats(st, fitted_gamma)
        return st.mean_phi, st.var_phi, float("nan"), -1.0

    value, var, rho, g = summarize(stats)
    N = bp.N
    if top_up and q * math.sqrt(var / stats.n) > a / 2:
        need = balanced_parameters(a, q, var, beta_abs, delta, n_min=n_min, h_max=h_max).N
        if need > N:
            need = max(need, N + 2)   # a batch holds at least two paths
            extra = run_batch(node.xy, tp, problem, need - N, key, cv_table=cv_table,
                              cv_exact=cv_exact, threads=threads, start=N)
            stats = BatchStats(stats.moments.merge(extra.moments), stats.steps + extra.steps,
                               stats.flagged + extra.flagged, h)
            work += extra.steps
            flagged += extra.flagged
            N = need
            topped = True
            value, var, rho, g = summarize(stats)
    ci = q * math.sqrt(var / stats.n)
    return NodalEstimate(node.id, value, var, N, h, ci, work, CV if use_cv else PLAIN,
                         rho, topped, pilot_work, flagged, g)
