"""Global error bounds, extreme-value statistics of nodal errors, and the NSR table."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfinv, ndtr, ndtri

CONFIDENCE = {1: 0.683, 2: 0.955, 3: 0.997}


@dataclass(frozen=True)
class GlobalErrorParams:
    gamma_R: float
    Q_max: float
    s: int
    q: int = 2
    P_q: float = 0.955

    def __post_init__(self):
        if self.gamma_R < 1:
            raise ValueError("gamma_R must be >= 1")
        if not self.Q_max > 0:
            raise ValueError("Q_max must be positive")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.q not in CONFIDENCE or abs(CONFIDENCE[self.q] - self.P_q) > 1e-12:
            raise ValueError("P_q must match q (0.683, 0.955, 0.997 for q = 1, 2, 3)")


@dataclass(frozen=True)
class NsrParams:
    ratio_kprime_over_kpp: float
    gamma_R: float
    q: float = 2.0
    s: int = 10
    sample_count: int = 100_000

    def __post_init__(self):
        if self.ratio_kprime_over_kpp < 0 or self.gamma_R < 0 or self.q < 0:
            raise ValueError("NSR parameters must be non-negative")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.sample_count < 10_000:
            raise ValueError("sample_count must be >= 1e4")


def gt_constant(sup_b_norm: float, lambda_min: float, slab_width: float) -> float:
    """``exp((sup |b| / lambda) / d) - 1`` for a domain in a slab of width ``d``."""
    if sup_b_norm < 0 or not lambda_min > 0 or not slab_width > 0:
        raise ValueError("need sup|b| >= 0 and positive lambda, width")
    return math.expm1((sup_b_norm / lambda_min) / slab_width)


def extreme_cdf(x, s: int):
    """CDF of the maximum of ``s`` iid standard normals."""
    if s < 1:
        raise ValueError("s must be >= 1")
    return ndtr(np.asarray(x, float)) ** s


def inverse_extreme_cdf(P, s: int):
    """``sqrt(2) erfinv(2 P^(1/s) - 1)``."""
    if s < 1:
        raise ValueError("s must be >= 1")
    P = np.asarray(P, float)
    if np.any((P <= 0) | (P >= 1)):
        raise ValueError("P must lie in (0, 1)")
    # 2 P^(1/s) - 1 = 1 + 2 expm1(log(P) / s) keeps precision for large s
    return math.sqrt(2.0) * erfinv(1.0 + 2.0 * np.expm1(np.log(P) / s))


def error_amplification(params: GlobalErrorParams) -> float:
    """``gamma_R Q_max (1 + (2 sqrt 2 / q) erfinv(2 P_q^(1/s) - 1)) / 2``: eps per unit a0."""
    x = float(inverse_extreme_cdf(params.P_q, params.s))
    return params.gamma_R * params.Q_max * (1.0 + 2.0 * x / params.q) / 2.0


def a0_from_epsilon(eps: float, params: GlobalErrorParams) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return eps / error_amplification(params)


def epsilon_from_a0(a0: float, params: GlobalErrorParams) -> float:
    return a0 * error_amplification(params)


def gumbel_params(s: int):
    """Location ``l_s = -Phi^{-1}(1/s)`` and scale ``b_s = 1 / l_s``."""
    if s < 2:
        raise ValueError("s must be >= 2")
    loc = -float(ndtri(1.0 / s))
    if loc <= 0:
        raise ValueError(f"degenerate Gumbel scale for s={s} (location {loc})")
    return loc, 1.0 / loc


def gumbel_cdf(x, loc: float, scale: float):
    return np.exp(-np.exp(-(np.asarray(x, float) - loc) / scale))


def sample_max_normals(s: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws of ``max`` of ``s`` standard normals by inversion of ``Phi^s``."""
    u = rng.random(size)
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    # Phi(x) = u^(1/s); -ndtri(1 - p) avoids cancellation near 1
    return -ndtri(-np.expm1(np.log(u) / s))


def nsr_simulate(params: NsrParams, rng: np.random.Generator) -> float:
    """Noise-to-signal ratio of ``v_bar + v_tilde(omega)``, common factors removed."""
    S = sample_max_normals(params.s, params.sample_count, rng)
    r = params.ratio_kprime_over_kpp
    g = params.gamma_R
    T = (r + 2.0 * g * S) ** 2
    return float(np.sqrt(T.var(ddof=1)) / (params.q**2 * (r + g) ** 2 + T.mean()))


NSR_RATIOS = (0.0, 1e-2, 1e-1, 1.0, 10.0, 100.0)
NSR_S = (10, 100, 1000, 10_000, 100_000)
NSR_REFERENCE = {
    1.0: [[.54, .31, .20, .15, .12], [.54, .31, .20, .15, .12], [.51, .29, .20, .15, .12],
          [.30, .21, .15, .12, .10], [.048, .037, .031, .027, .024],
          [.0047, .0035, .0029, .0025, .0023]],
    2.0: [[.54, .31, .20, .15, .12], [.54, .31, .21, .15, .12], [.53, .30, .20, .15, .12],
          [.40, .25, .18, .13, .11], [.094, .073, .060, .052, .046],
          [.0094, .0070, .0059, .0051, .0046]],
}


def nsr_table(gamma_R: float, q: float = 2.0, sample_count: int = 100_000, seed: int = 0,
              ratios=NSR_RATIOS, s_values=NSR_S) -> np.ndarray:
    """``len(ratios) x len(s_values)`` table; one independent stream per cell."""
    out = np.empty((len(ratios), len(s_values)))
    for i, r in enumerate(ratios):
        for j, s in enumerate(s_values):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, j)))
            out[i, j] = nsr_simulate(NsrParams(r, gamma_R, q, s, sample_count), rng)
    return out
