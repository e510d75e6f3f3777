"""Multiquadric RBF interpolation along interfaces and its overshoot constant."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

COND_LIMIT = 1e14


def _as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    return p


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))


def default_shape(centers) -> float:
    """Mean spacing between consecutive centers along the interface."""
    c = _as_points(centers)
    span = np.sqrt(((c.max(axis=0) - c.min(axis=0)) ** 2).sum())
    return float(span / (len(c) - 1))


@dataclass(frozen=True)
class Interpolant:
    """``s(x) = sum_j w_j sqrt(|x - c_j|^2 + shape^2)`` interpolating the data."""

    centers: np.ndarray
    weights: np.ndarray
    shape: float

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x)
        k = np.sqrt(_dist(x, self.centers) ** 2 + self.shape**2)
        return k @ self.weights


def _kernel_matrix(centers: np.ndarray, shape: float) -> np.ndarray:
    r = _dist(centers, centers)
    return np.sqrt(r**2 + shape**2)


def fit(centers, values, shape: float | None = None) -> Interpolant:
    c = _as_points(centers)
    values = np.asarray(values, dtype=float)
    if len(c) < 2:
        raise ValueError("need at least two centers")
    if len(np.unique(c, axis=0)) != len(c):
        raise ValueError("centers must be distinct")
    if values.shape[0] != len(c):
        raise ValueError("one value per center required")
    shape = default_shape(c) if shape is None else float(shape)
    if shape <= 0:
        raise ValueError("shape parameter must be positive")
    K = _kernel_matrix(c, shape)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise np.linalg.LinAlgError(f"RBF system ill-conditioned (cond ~ {cond:.2e})")
    w = np.linalg.solve(K, values)
    return Interpolant(c, w, shape)


def cardinal_matrix(centers, x, shape: float | None = None) -> np.ndarray:
    """``L[i, k]``: value at ``x[k]`` of the interpolant of the ``i``-th unit vector."""
    c = _as_points(centers)
    shape = default_shape(c) if shape is None else float(shape)
    K = _kernel_matrix(c, shape)
    kx = np.sqrt(_dist(_as_points(x), c) ** 2 + shape**2)
    return np.linalg.solve(K, kx.T)


@dataclass(frozen=True)
class OvershootEstimate:
    gamma: float
    argmax_pattern: np.ndarray


def _segment_grid(points: np.ndarray, count: int) -> np.ndarray:
    # all centers are collinear along an interface; sample its full extent
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    t = np.linspace(0.0, 1.0, count)[:, None]
    return lo + t * (hi - lo)


def overshoot_constant(centers, shape: float | None = None, eval_grid_size: int | None = None,
                       anchors=None, cardinal=None) -> OvershootEstimate:
    """Largest ``sup_x |R[z](x)|`` over all sign patterns ``z`` in {-1, 1}^p.

    ``anchors`` are extra centers pinned to zero (interface endpoints lying
    on the physical boundary, where error data vanish).  ``cardinal`` may
    replace the multiquadric cardinal functions with another linear
    interpolator: ``cardinal(centers, x) -> (p, len(x))``.
    """
    c = _as_points(centers)
    p = len(c)
    if p < 2:
        raise ValueError("need at least two centers")
    if p > 20:
        raise ValueError("brute force over 2**p sign patterns limited to p <= 20")
    allc = c if anchors is None else np.vstack([c, _as_points(anchors)])
    if shape is None:
        shape = default_shape(allc)
    count = eval_grid_size or 50 * p
    xg = _segment_grid(allc, count)
    if cardinal is None:
        L = cardinal_matrix(allc, xg, shape)[:p]
    else:
        L = np.asarray(cardinal(allc, xg))[:p]

    best = -np.inf
    best_z = None
    # z and -z give the same sup, so fix z[0] = +1
    rest = np.array(list(itertools.product((-1.0, 1.0), repeat=p - 1)))
    for blk in range(0, len(rest), 4096):
        z = np.hstack([np.ones((min(4096, len(rest) - blk), 1)), rest[blk:blk + 4096]])
        vals = np.abs(z @ L).max(axis=1)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best = float(vals[i])
            best_z = z[i].copy()
    return OvershootEstimate(best, best_z)


def lebesgue_constant(centers, shape=None, eval_grid_size=None, anchors=None) -> float:
    """``sup_x sum_i |L_i(x)|``; equals the overshoot constant for linear R."""
    c = _as_points(centers)
    allc = c if anchors is None else np.vstack([c, _as_points(anchors)])
    if shape is None:
        shape = default_shape(allc)
    xg = _segment_grid(allc, eval_grid_size or 50 * len(c))
    L = cardinal_matrix(allc, xg, shape)[: len(c)]
    return float(np.abs(L).sum(axis=0).max())


def piecewise_linear_cardinal(centers, x) -> np.ndarray:
    """Cardinal functions of piecewise-linear interpolation along the line."""
    c = _as_points(centers)
    x = _as_points(x)
    direction = c.max(axis=0) - c.min(axis=0)
    direction = direction / np.linalg.norm(direction)
    tc = c @ direction
    tx = x @ direction
    order = np.argsort(tc)
    L = np.zeros((len(c), len(x)))
    for rank, i in enumerate(order):
        e = np.zeros(len(c))
        e[rank] = 1.0
        L[i] = np.interp(tx, tc[order], e)
    return L
