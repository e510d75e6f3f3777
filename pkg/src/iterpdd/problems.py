"""Elliptic Dirichlet problems ``L u + c u = f`` with ``L = A:D^2/2 + b.grad``.

Coefficient callables are numba-compiled scalar functions of ``(x, y)`` so the
trajectory kernel can inline them; :func:`evaluate` maps them over arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .geometry import Disk, Domain


@dataclass(frozen=True)
class Coefficients:
    drift: Callable        # (x, y) -> (b1, b2)
    diffusion: Callable    # (x, y) -> (a11, a12, a22)
    potential: Callable    # (x, y) -> c <= 0
    source: Callable       # (x, y) -> f
    boundary: Callable     # (x, y) -> g


@dataclass(frozen=True)
class SpectralBounds:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ValueError("need 0 < lambda_min <= lambda_max")


@dataclass(frozen=True)
class TestProblem:
    name: str
    coefficients: Coefficients
    domain: object
    exact_u: Optional[Callable] = None
    exact_grad_u: Optional[Callable] = None
    diagonal_diffusion: bool = True

    __test__ = False  # not a pytest class


def diffusion_factor(A) -> np.ndarray:
    """Lower-triangular ``sigma`` with ``sigma @ sigma.T == A``."""
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2) or not np.allclose(A, A.T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
        raise ValueError("diffusion matrix must be a symmetric 2x2 matrix")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError("diffusion matrix is not positive definite") from exc


@njit(nogil=True)
def _eval_scalar(fn, xs, ys):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = fn(xs[i], ys[i])
    return out


@njit(nogil=True)
def _eval_pair(fn, xs, ys):
    out = np.empty((xs.shape[0], 2))
    for i in range(xs.shape[0]):
        a, b = fn(xs[i], ys[i])
        out[i, 0] = a
        out[i, 1] = b
    return out


@njit(nogil=True)
def _eval_triple(fn, xs, ys):
    out = np.empty((xs.shape[0], 3))
    for i in range(xs.shape[0]):
        a, b, c = fn(xs[i], ys[i])
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
    return out


def evaluate(fn, X, Y, arity: int = 1) -> np.ndarray:
    """Evaluate a compiled coefficient on arrays ``X``, ``Y`` of equal shape."""
    X = np.asarray(X, dtype=float)
    Y = np.broadcast_to(np.asarray(Y, dtype=float), X.shape)
    xs = np.ascontiguousarray(X.ravel())
    ys = np.ascontiguousarray(Y.ravel())
    if arity == 1:
        return _eval_scalar(fn, xs, ys).reshape(X.shape)
    if arity == 2:
        return _eval_pair(fn, xs, ys).reshape(X.shape + (2,))
    return _eval_triple(fn, xs, ys).reshape(X.shape + (3,))


def spectral_bounds(coefficients: Coefficients, domain, sample_count: int = 64) -> SpectralBounds:
    """Extreme eigenvalues of ``A(x)`` over a ``sample_count``-per-axis grid."""
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    if isinstance(domain, Disk):
        xs = np.linspace(domain.cx - domain.r, domain.cx + domain.r, sample_count)
        ys = np.linspace(domain.cy - domain.r, domain.cy + domain.r, sample_count)
    else:
        xs = np.linspace(domain.xmin, domain.xmax, sample_count)
        ys = np.linspace(domain.ymin, domain.ymax, sample_count)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    if isinstance(domain, Disk):
        keep = (X - domain.cx) ** 2 + (Y - domain.cy) ** 2 <= domain.r**2
        X, Y = X[keep], Y[keep]
    a = evaluate(coefficients.diffusion, X.ravel(), Y.ravel(), arity=3)
    mats = np.empty((a.shape[0], 2, 2))
    mats[:, 0, 0] = a[:, 0]
    mats[:, 0, 1] = mats[:, 1, 0] = a[:, 1]
    mats[:, 1, 1] = a[:, 2]
    eig = np.linalg.eigvalsh(mats)
    if eig[:, 0].min() <= 0:
        raise ValueError("diffusion matrix is not positive definite at some sample")
    return SpectralBounds(float(eig[:, 0].min()), float(eig[:, 1].max()))


# --------------------------------------------------------------------------
# Manufactured problem: u = 2 cos(2 (y-2) x) + sin(3 (x-2) y) + 3.1
# on a rectangle, A = 2 I, b = cos(x+y) (1, 1) / (1.1 + sin(x+y)),
# c = -(x^2 + y^2) / (1.1 + sin(x+y)).

@njit(cache=True, nogil=True)
def _mfg_u(x, y):
    return 2.0 * math.cos(2.0 * (y - 2.0) * x) + math.sin(3.0 * (x - 2.0) * y) + 3.1


@njit(cache=True, nogil=True)
def _mfg_grad(x, y):
    p = 2.0 * (y - 2.0) * x
    q = 3.0 * (x - 2.0) * y
    sp = math.sin(p)
    cq = math.cos(q)
    return -4.0 * (y - 2.0) * sp + 3.0 * y * cq, -4.0 * x * sp + 3.0 * (x - 2.0) * cq


@njit(cache=True, nogil=True)
def _mfg_drift(x, y):
    s = math.cos(x + y) / (1.1 + math.sin(x + y))
    return s, s


@njit(cache=True, nogil=True)
def _diffusion_2i(x, y):
    return 2.0, 0.0, 2.0


@njit(cache=True, nogil=True)
def _mfg_potential(x, y):
    return -(x * x + y * y) / (1.1 + math.sin(x + y))


@njit(cache=True, nogil=True)
def _mfg_source(x, y):
    p = 2.0 * (y - 2.0) * x
    q = 3.0 * (x - 2.0) * y
    sp, cp = math.sin(p), math.cos(p)
    sq, cq = math.sin(q), math.cos(q)
    lap = -8.0 * ((y - 2.0) ** 2 + x * x) * cp - 9.0 * (y * y + (x - 2.0) ** 2) * sq
    ux = -4.0 * (y - 2.0) * sp + 3.0 * y * cq
    uy = -4.0 * x * sp + 3.0 * (x - 2.0) * cq
    den = 1.1 + math.sin(x + y)
    u = 2.0 * cp + sq + 3.1
    return lap + math.cos(x + y) / den * (ux + uy) - (x * x + y * y) / den * u


# --------------------------------------------------------------------------
# Disk benchmarks, A = 2 I, b = c = 0.

@njit(cache=True, nogil=True)
def _zero_drift(x, y):
    return 0.0, 0.0


@njit(cache=True, nogil=True)
def _zero(x, y):
    return 0.0


@njit(cache=True, nogil=True)
def _one(x, y):
    return 1.0


@njit(cache=True, nogil=True)
def _minus_one(x, y):
    return -1.0


@njit(cache=True, nogil=True)
def _zero_grad(x, y):
    return 0.0, 0.0


@njit(cache=True, nogil=True)
def _exit_time_u(x, y):
    return 0.25 * (1.0 - x * x - y * y)


@njit(cache=True, nogil=True)
def _exit_time_grad(x, y):
    return -0.5 * x, -0.5 * y


def manufactured_problem(domain: Optional[Domain] = None) -> TestProblem:
    """The manufactured drift-diffusion-reaction problem with known solution.

    The rectangle is not fixed by the problem itself; the default
    ``[0, 4] x [0, 1]`` is a library choice.
    """
    coeffs = Coefficients(_mfg_drift, _diffusion_2i, _mfg_potential, _mfg_source, _mfg_u)
    return TestProblem("manufactured", coeffs, domain or Domain(0.0, 4.0, 0.0, 1.0),
                       _mfg_u, _mfg_grad)


def laplace_disk_problem() -> TestProblem:
    """Unit disk, Laplacian generator, ``g = 1``: the score is identically one."""
    coeffs = Coefficients(_zero_drift, _diffusion_2i, _zero, _zero, _one)
    return TestProblem("laplace-disk-benchmark", coeffs, Disk(), _one, _zero_grad)


def exit_time_disk_problem() -> TestProblem:
    """Unit disk with ``f = -1, g = 0``: ``u(x) = E[tau] = (1 - |x|^2) / 4``."""
    coeffs = Coefficients(_zero_drift, _diffusion_2i, _zero, _minus_one, _zero)
    return TestProblem("disk-exit-time", coeffs, Disk(), _exit_time_u, _exit_time_grad)


REGISTRY = {
    "manufactured": manufactured_problem,
    "laplace-disk-benchmark": laplace_disk_problem,
    "disk-exit-time": exit_time_disk_problem,
}


def get_problem(name: str, domain: Optional[Domain] = None) -> TestProblem:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None
    if domain is not None:
        if name != "manufactured":
            raise ValueError(f"problem {name!r} has a fixed domain")
        return factory(domain)
    return factory()

