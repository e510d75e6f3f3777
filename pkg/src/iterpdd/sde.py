"""Boundary-shrinking Euler-Maruyama integrator with pathwise control variates.

One trajectory accumulates, with a single Wiener increment per step,

* ``Y`` -- the discounting factor ``exp(int c)``,
* ``Z`` -- the source integral ``-int f Y dt``,
* ``xi`` -- the control variate ``-int Y sigma^T grad(u_tilde) dW``,
* ``psi`` -- the auxiliary variate, same integral against a second table,

and stops as soon as the signed distance exceeds
``-shrink * |sigma^T N| * sqrt(h)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .geometry import boundary_query_kernel, locate_strip
from .rng import next_normal_pair, trajectory_state

GM_SHRINK = 0.5826
DEFAULT_MAX_STEPS = 10_000_000
CHUNK = 2048

# gradient sources for xi and psi
GRAD_NONE = 0
GRAD_TABLE = 1
GRAD_EXACT = 2

# column order of the moment accumulators
PHI, XI, PSI, TAU = 0, 1, 2, 3


@dataclass(frozen=True)
class TrajectoryParams:
    h: float
    shrink_coefficient: float = GM_SHRINK
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("timestep must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class TrajectoryOutcome:
    phi: float
    xi: float
    psi_bar: float
    tau: float
    steps: int
    flagged: bool = False


@njit(cache=True, nogil=True)
def table_gradient(edges, meta, grid, x, y):
    """Bilinear lookup in a strip-wise gradient table.

    ``meta = (ymin, hx, hy)``; ``grid[k, i, j]`` holds the gradient at
    ``(edges[k] + i hx, ymin + j hy)``.
    """
    k = locate_strip(edges, x)
    hx = meta[1]
    hy = meta[2]
    nx = grid.shape[1] - 1
    ny = grid.shape[2] - 1
    fx = (x - edges[k]) / hx
    fy = (y - meta[0]) / hy
    i = int(math.floor(fx))
    j = int(math.floor(fy))
    if i < 0:
        i = 0
    elif i > nx - 1:
        i = nx - 1
    if j < 0:
        j = 0
    elif j > ny - 1:
        j = ny - 1
    tx = min(max(fx - i, 0.0), 1.0)
    ty = min(max(fy - j, 0.0), 1.0)
    w00 = (1.0 - tx) * (1.0 - ty)
    w10 = tx * (1.0 - ty)
    w01 = (1.0 - tx) * ty
    w11 = tx * ty
    gx = (w00 * grid[k, i, j, 0] + w10 * grid[k, i + 1, j, 0]
          + w01 * grid[k, i, j + 1, 0] + w11 * grid[k, i + 1, j + 1, 0])
    gy = (w00 * grid[k, i, j, 1] + w10 * grid[k, i + 1, j, 1]
          + w01 * grid[k, i, j + 1, 1] + w11 * grid[k, i + 1, j + 1, 1])
    return gx, gy


_KERNELS = {}


def _kernel_for(problem):
    """Compile (once per coefficient set) the chunk integrator for ``problem``."""
    co = problem.coefficients
    grad_exact = problem.exact_grad_u
    key = (co.drift, co.diffusion, co.potential, co.source, co.boundary, grad_exact)
    if key in _KERNELS:
        return _KERNELS[key]

    drift, diffusion, potential, source, boundary = (
        co.drift, co.diffusion, co.potential, co.source, co.boundary)
    if grad_exact is None:
        from .problems import _zero_grad as grad_exact

    @njit(nogil=True)
    def run_chunk(skey, start, x0, y0, h, shrink, max_steps, dom_kind, dom_params,
                  cv_mode, cv_edges, cv_meta, cv_grid,
                  psi_mode, psi_edges, psi_meta, psi_grid,
                  out, steps_out, flags):
        sqh = math.sqrt(h)
        n = out.shape[0]
        for t in range(n):
            state = trajectory_state(skey, start + t)
            x = x0
            y = y0
            Y = 1.0
            Z = 0.0
            xi = 0.0
            psi = 0.0
            k = 0
            flagged = False
            while True:
                d, px, py, nx, ny = boundary_query_kernel(dom_kind, dom_params, x, y)
                a11, a12, a22 = diffusion(x, y)
                s11 = math.sqrt(a11)
                s21 = a12 / s11
                s22 = math.sqrt(a22 - s21 * s21)
                stn1 = s11 * nx + s21 * ny
                stn2 = s22 * ny
                if d > -shrink * math.sqrt(stn1 * stn1 + stn2 * stn2) * sqh:
                    break
                if k >= max_steps:
                    flagged = True
                    break
                state, z1, z2 = next_normal_pair(state)
                dw1 = sqh * z1
                dw2 = sqh * z2
                if cv_mode != 0:
                    if cv_mode == 1:
                        gx, gy = table_gradient(cv_edges, cv_meta, cv_grid, x, y)
                    else:
                        gx, gy = grad_exact(x, y)
                    # (sigma^T grad) . dW
                    xi -= Y * ((s11 * gx + s21 * gy) * dw1 + s22 * gy * dw2)
                if psi_mode != 0:
                    gx, gy = table_gradient(psi_edges, psi_meta, psi_grid, x, y)
                    psi -= Y * ((s11 * gx + s21 * gy) * dw1 + s22 * gy * dw2)
                b1, b2 = drift(x, y)
                c = potential(x, y)
                f = source(x, y)
                Z -= h * Y * f
                Y *= 1.0 + h * c
                x += h * b1 + s11 * dw1
                y += h * b2 + s21 * dw1 + s22 * dw2
                k += 1
            if flagged:
                px, py = x, y
            else:
                d, px, py, nx, ny = boundary_query_kernel(dom_kind, dom_params, x, y)
            out[t, 0] = boundary(px, py) * Y + Z
            out[t, 1] = xi
            out[t, 2] = psi
            out[t, 3] = k * h
            steps_out[t] = k
            flags[t] = flagged

    _KERNELS[key] = run_chunk
    return run_chunk


@dataclass
class Moments:
    """Streaming count/mean/co-moment accumulator over (phi, xi, psi, tau)."""

    n: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    comoment: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))

    @classmethod
    def from_samples(cls, v: np.ndarray) -> "Moments":
        n = v.shape[0]
        if n == 0:
            return cls()
        mu = v.mean(axis=0)
        dv = v - mu
        return cls(n, mu, dv.T @ dv)

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        com = self.comoment + other.comoment + np.outer(delta, delta) * (self.n * other.n / n)
        return Moments(n, mean, com)

    @property
    def cov(self) -> np.ndarray:
        return self.comoment / (self.n - 1)


@dataclass
class BatchStats:
    """Sample statistics of one batch of trajectories."""

    moments: Moments
    steps: int
    flagged: int
    h: float
    samples: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.moments.n

    def mean(self, col: int = PHI) -> float:
        return float(self.moments.mean[col])

    def var(self, col: int = PHI) -> float:
        return float(self.moments.cov[col, col])

    def cov(self, a: int, b: int) -> float:
        return float(self.moments.cov[a, b])

    @property
    def mean_phi(self):
        return self.mean(PHI)

    @property
    def var_phi(self):
        return self.var(PHI)

    @property
    def mean_tau(self):
        return self.mean(TAU)

    @property
    def var_phi_plus_xi(self) -> float:
        c = self.moments.cov
        return float(c[PHI, PHI] + c[XI, XI] + 2 * c[PHI, XI])

    @property
    def mean_phi_plus_xi(self) -> float:
        return float(self.moments.mean[PHI] + self.moments.mean[XI])

    def rho(self, a: int = PHI, b: int = XI) -> float:
        c = self.moments.cov
        den = math.sqrt(c[a, a] * c[b, b])
        if den == 0:
            raise ZeroDivisionError("zero variance in correlation")
        return float(c[a, b] / den)

    def mean_product(self, a: int, b: int) -> float:
        m = self.moments
        return float(m.comoment[a, b] / m.n + m.mean[a] * m.mean[b])


def _table_args(table, mode):
    if table is None:
        return GRAD_NONE if mode != GRAD_EXACT else GRAD_EXACT, _NO_EDGES, _NO_META, _NO_GRID
    return GRAD_TABLE, table.edges, table.meta, table.grid


_NO_EDGES = np.zeros(2)
_NO_META = np.ones(3)
_NO_GRID = np.zeros((1, 2, 2, 2))


def run_batch(x0, params: TrajectoryParams, problem, N: int, skey,
              cv_table=None, psi_table=None, cv_exact: bool = False,
              threads: int = 1, keep_samples: bool = False, start: int = 0) -> BatchStats:
    """Simulate trajectories ``start .. start + N - 1`` of stream ``skey``.

    Chunks of fixed size are integrated (optionally on a thread pool) and
    their moments merged in index order, so results do not depend on
    ``threads``.  Flagged trajectories (``max_steps`` hit) are excluded from
    the moments but their steps are still counted.
    """
    if N < 2:
        raise ValueError("a batch needs at least two trajectories")
    kernel = _kernel_for(problem)
    dom = problem.domain
    if not dom.contains(float(x0[0]), float(x0[1])):
        raise ValueError("starting point outside the domain")
    cv_mode, cv_e, cv_m, cv_g = _table_args(cv_table, GRAD_EXACT if cv_exact else GRAD_NONE)
    psi_mode, ps_e, ps_m, ps_g = _table_args(psi_table, GRAD_NONE)
    skey = np.uint64(skey)
    x0f, y0f = float(x0[0]), float(x0[1])
    dparams = dom.params

    bounds = [(s, min(s + CHUNK, start + N)) for s in range(start, start + N, CHUNK)]

    def work(bnd):
        lo, hi = bnd
        out = np.empty((hi - lo, 4))
        steps = np.empty(hi - lo, dtype=np.int64)
        flags = np.empty(hi - lo, dtype=np.bool_)
        kernel(skey, lo, x0f, y0f, params.h, params.shrink_coefficient, params.max_steps,
               dom.kind, dparams, cv_mode, cv_e, cv_m, cv_g, psi_mode, ps_e, ps_m, ps_g,
               out, steps, flags)
        good = out[~flags]
        return Moments.from_samples(good), int(steps.sum()), int(flags.sum()), (good if keep_samples else None)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]

    mom = Moments()
    steps = flagged = 0
    for m, s, f, _ in parts:
        mom = mom.merge(m)
        steps += s
        flagged += f
    if mom.n < 2:
        raise RuntimeError(f"all but {mom.n} of {N} trajectories hit max_steps")
    samples = np.concatenate([p[3] for p in parts]) if keep_samples else None
    return BatchStats(mom, steps, flagged, params.h, samples)


def simulate_trajectory(x0, params: TrajectoryParams, problem, skey, index: int = 0,
                        cv_table=None, psi_table=None, cv_exact: bool = False) -> TrajectoryOutcome:
    """Integrate a single trajectory (index ``index`` of stream ``skey``)."""
    kernel = _kernel_for(problem)
    dom = problem.domain
    d, *_ = boundary_query_kernel(dom.kind, dom.params, float(x0[0]), float(x0[1]))
    if d >= 0:
        raise ValueError("starting point must be strictly inside the domain")
    cv_mode, cv_e, cv_m, cv_g = _table_args(cv_table, GRAD_EXACT if cv_exact else GRAD_NONE)
    psi_mode, ps_e, ps_m, ps_g = _table_args(psi_table, GRAD_NONE)
    out = np.empty((1, 4))
    steps = np.empty(1, dtype=np.int64)
    flags = np.empty(1, dtype=np.bool_)
    kernel(np.uint64(skey), index, float(x0[0]), float(x0[1]), params.h,
           params.shrink_coefficient, params.max_steps, dom.kind, dom.params,
           cv_mode, cv_e, cv_m, cv_g, psi_mode, ps_e, ps_m, ps_g, out, steps, flags)
    return TrajectoryOutcome(float(out[0, 0]), float(out[0, 1]), float(out[0, 2]),
                             float(out[0, 3]), int(steps[0]), bool(flags[0]))
