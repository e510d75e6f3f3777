"""Finite-difference subdomain solves, gradient tables and error-propagation fields."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Domain, Partition, locate_strip
from .interp import fit as rbf_fit
from .problems import Coefficients, evaluate

DEFAULT_CELLS_PER_UNIT = 160


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridField:
    """Nodal values on a uniform grid covering a rectangle, boundary included."""

    subdomain: int
    rect: Domain
    values: np.ndarray  # (nx + 1, ny + 1), values[i, j] at (xmin + i hx, ymin + j hy)

    @property
    def hx(self) -> float:
        return self.rect.width / (self.values.shape[0] - 1)

    @property
    def hy(self) -> float:
        return self.rect.height / (self.values.shape[1] - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.rect.xmin, self.rect.xmax, self.values.shape[0])

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.rect.ymin, self.rect.ymax, self.values.shape[1])

    def mesh(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    def __call__(self, x, y) -> np.ndarray:
        """Bilinear interpolation inside the rectangle."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        nx, ny = self.values.shape[0] - 1, self.values.shape[1] - 1
        fx = (x - self.rect.xmin) / self.hx
        fy = (y - self.rect.ymin) / self.hy
        i = np.clip(np.floor(fx).astype(int), 0, nx - 1)
        j = np.clip(np.floor(fy).astype(int), 0, ny - 1)
        tx = np.clip(fx - i, 0, 1)
        ty = np.clip(fy - j, 0, 1)
        v = self.values
        return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])

    def __add__(self, other: "GridField") -> "GridField":
        return GridField(self.subdomain, self.rect, self.values + other.values)

    def scaled(self, s: float) -> "GridField":
        return GridField(self.subdomain, self.rect, s * self.values)


def grid_shape(rect: Domain, cells_per_unit: int) -> tuple:
    nx = max(2, int(round(rect.width * cells_per_unit)))
    ny = max(2, int(round(rect.height * cells_per_unit)))
    return nx, ny


def solve_dirichlet(rect: Domain, coefficients: Coefficients, dirichlet: Callable,
                    cells_per_unit: int = DEFAULT_CELLS_PER_UNIT, subdomain: int = 0,
                    homogeneous: bool = False, tol: float = 1e-10) -> GridField:
    """Second-order central-difference solve of ``L v + c v = f`` on ``rect``.

    ``dirichlet(X, Y)`` gives boundary values (vectorised).  With
    ``homogeneous=True`` the source is dropped (``f = 0``).
    """
    nx, ny = grid_shape(rect, cells_per_unit)
    hx = rect.width / nx
    hy = rect.height / ny
    xs = np.linspace(rect.xmin, rect.xmax, nx + 1)
    ys = np.linspace(rect.ymin, rect.ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")

    U = np.zeros((nx + 1, ny + 1))
    bmask = np.zeros_like(U, dtype=bool)
    bmask[0, :] = bmask[-1, :] = bmask[:, 0] = bmask[:, -1] = True
    U[bmask] = np.asarray(dirichlet(X[bmask], Y[bmask]), dtype=float)

    Xi, Yi = X[1:-1, 1:-1].ravel(), Y[1:-1, 1:-1].ravel()
    a = evaluate(coefficients.diffusion, Xi, Yi, arity=3)
    if np.any(np.abs(a[:, 1]) > 0):
        raise SolverError("finite-difference solver needs a diagonal diffusion matrix")
    b = evaluate(coefficients.drift, Xi, Yi, arity=2)
    c = evaluate(coefficients.potential, Xi, Yi)
    f = np.zeros_like(c) if homogeneous else evaluate(coefficients.source, Xi, Yi)

    ax = 0.5 * a[:, 0] / hx**2
    ay = 0.5 * a[:, 2] / hy**2
    bx = b[:, 0] / (2 * hx)
    by = b[:, 1] / (2 * hy)
    stencil = {
        (0, 0): -2 * ax - 2 * ay + c,
        (-1, 0): ax - bx,
        (1, 0): ax + bx,
        (0, -1): ay - by,
        (0, 1): ay + by,
    }
    mi, mj = nx - 1, ny - 1
    I, J = np.meshgrid(np.arange(1, nx), np.arange(1, ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    row = (I - 1) * mj + (J - 1)
    rows, cols, vals = [], [], []
    rhs = f.copy()
    for (di, dj), coef in stencil.items():
        ii, jj = I + di, J + dj
        interior = (ii >= 1) & (ii <= nx - 1) & (jj >= 1) & (jj <= ny - 1)
        rows.append(row[interior])
        cols.append(((ii - 1) * mj + (jj - 1))[interior])
        vals.append(coef[interior])
        rhs[~interior] -= coef[~interior] * U[ii[~interior], jj[~interior]]
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(mi * mj, mi * mj))
    sol = spla.spsolve(A, rhs)
    res = np.abs(A @ sol - rhs).max()
    scale = max(np.abs(rhs).max(), abs(A).max() * np.abs(sol).max(), 1.0)
    if not np.all(np.isfinite(sol)) or res > tol * scale:
        raise SolverError(f"linear solve failed (residual {res:.2e})")
    U[1:-1, 1:-1] = sol.reshape(mi, mj)
    return GridField(subdomain, rect, U)


@dataclass(frozen=True)
class GradientTable:
    """Strip-wise gradient grids in the layout the trajectory kernel reads."""

    edges: np.ndarray
    meta: np.ndarray   # (ymin, hx, hy)
    grid: np.ndarray   # (m, nx + 1, ny + 1, 2)

    def __call__(self, x, y) -> np.ndarray:
        from .sde import table_gradient
        x = np.atleast_1d(np.asarray(x, float))
        y = np.broadcast_to(np.asarray(y, float), x.shape)
        out = np.empty(x.shape + (2,))
        for idx in np.ndindex(x.shape):
            out[idx] = table_gradient(self.edges, self.meta, self.grid, float(x[idx]), float(y[idx]))
        return out

    @property
    def sup_norm(self) -> float:
        return float(np.sqrt((self.grid**2).sum(axis=-1)).max())


def _field_gradient(field: GridField) -> np.ndarray:
    gx, gy = np.gradient(field.values, field.hx, field.hy, edge_order=2)
    return np.stack([gx, gy], axis=-1)


def gradient_table(fields, partition: Optional[Partition] = None) -> GradientTable:
    """Central differences inside, second-order one-sided at the edges.

    ``fields`` is one :class:`GridField` or one per strip of ``partition``
    (all with the same grid shape).
    """
    if isinstance(fields, GridField):
        fields = [fields]
    fields = list(fields)
    shapes = {f.values.shape for f in fields}
    if len(shapes) != 1:
        raise ValueError("all strips must share the grid shape")
    if partition is None:
        if len(fields) != 1:
            raise ValueError("a partition is required for several fields")
        edges = np.array([fields[0].rect.xmin, fields[0].rect.xmax])
    else:
        edges = np.asarray(partition.edges, float)
    r0 = fields[0]
    meta = np.array([r0.rect.ymin, r0.hx, r0.hy])
    grid = np.ascontiguousarray(np.stack([_field_gradient(f) for f in fields]))
    return GradientTable(edges, meta, grid)


def zero_gradient_table(partition: Partition) -> GradientTable:
    m = partition.m
    return GradientTable(np.asarray(partition.edges, float),
                         np.array([partition.domain.ymin, 1.0, 1.0]), np.zeros((m, 2, 2, 2)))


# ---------------------------------------------------------------------------
# interface data and strip-wise assembly

def interface_interpolants(partition: Partition, nodal_values, boundary: Callable,
                           shape: Optional[float] = None):
    """One RBF per interface through its nodes and its two endpoints.

    Endpoints lie on the physical boundary and carry ``boundary(x, y)``.
    """
    nodal_values = np.asarray(nodal_values, float)
    out = []
    for j, ((xa, ya), (xb, yb)) in enumerate(partition.interfaces):
        nodes = partition.interface_nodes(j)
        ids = [nd.id for nd in nodes]
        centers = np.array([[xa, ya]] + [nd.xy for nd in nodes] + [[xb, yb]])
        vals = np.concatenate([[boundary(xa, ya)], nodal_values[ids], [boundary(xb, yb)]])
        out.append(rbf_fit(centers, vals, shape))
    return out


def strip_dirichlet(partition: Partition, k: int, interpolants, boundary: Callable) -> Callable:
    """Boundary data for strip ``k``: interface interpolants on its vertical sides."""
    sides = partition.subdomain_interfaces(k)
    xl, xr = partition.edges[k], partition.edges[k + 1]

    def g(X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        out = np.asarray(boundary(X, Y), float).copy()
        if "left" in sides:
            on = X == xl
            if on.any():
                out[on] = interpolants[sides["left"]](np.column_stack([X[on], Y[on]]))
        if "right" in sides:
            on = X == xr
            if on.any():
                out[on] = interpolants[sides["right"]](np.column_stack([X[on], Y[on]]))
        return out

    return g


def solve_strips(partition: Partition, coefficients: Coefficients, interpolants,
                 boundary: Callable, cells_per_unit: int = DEFAULT_CELLS_PER_UNIT,
                 homogeneous: bool = False):
    return [solve_dirichlet(rect, coefficients, strip_dirichlet(partition, k, interpolants, boundary),
                            cells_per_unit, subdomain=k, homogeneous=homogeneous)
            for k, rect in enumerate(partition.subdomains)]


def _zero_boundary(X, Y):
    return np.zeros_like(np.asarray(X, float) + np.asarray(Y, float))


def solve_error_propagation(partition: Partition, coefficients: Coefficients, beta_signs,
                            omega=None, q: float = 2.0, cells_per_unit: int = DEFAULT_CELLS_PER_UNIT,
                            shape: Optional[float] = None):
    """Homogeneous solves with interface data ``R[sign(beta_i) + omega_i / q]``.

    Zero on the physical boundary.  Without ``omega`` this is the
    bias-sign field alone.
    """
    beta_signs = np.asarray(beta_signs, float)
    if beta_signs.shape != (partition.n,):
        raise ValueError("one sign per node required")
    data = np.sign(beta_signs)
    if omega is not None:
        omega = np.asarray(omega, float)
        if omega.shape != (partition.n,):
            raise ValueError("one draw per node required")
        data = data + omega / q
    interps = interface_interpolants(partition, data, lambda x, y: 0.0, shape)
    return solve_strips(partition, coefficients, interps, _zero_boundary, cells_per_unit, homogeneous=True)


def dump_fields_csv(fields: Sequence[GridField], path) -> None:
    """Write ``subdomain, x, y, value`` rows for external plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subdomain", "x", "y", "value"])
        for f in fields:
            X, Y = f.mesh()
            for x, y, v in zip(X.ravel(), Y.ravel(), f.values.ravel()):
                w.writerow([f.subdomain, repr(float(x)), repr(float(y)), repr(float(v))])
