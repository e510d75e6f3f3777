"""Rectangular domains, their signed-distance map and strip partitions.

Only axis-aligned rectangles split into vertical strips are supported; the
disk is kept as a second domain kind because it carries the closed-form
exit-time benchmarks used to validate the integrator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

RECTANGLE = 0
DISK = 1


@njit(cache=True, nogil=True)
def boundary_query_kernel(kind, params, x, y):
    """Signed distance, closest boundary point and outward normal.

    Returns ``(d, px, py, nx, ny)``; ``d < 0`` inside.
    """
    if kind == DISK:
        cx, cy, r = params[0], params[1], params[2]
        dx = x - cx
        dy = y - cy
        rho = math.sqrt(dx * dx + dy * dy)
        if rho == 0.0:
            return -r, cx + r, cy, 1.0, 0.0
        nx = dx / rho
        ny = dy / rho
        return rho - r, cx + r * nx, cy + r * ny, nx, ny

    xmin, xmax, ymin, ymax = params[0], params[1], params[2], params[3]
    inside = xmin <= x <= xmax and ymin <= y <= ymax
    if inside:
        dl = x - xmin
        dr = xmax - x
        db = y - ymin
        dt = ymax - y
        best = min(dl, dr, db, dt)
        # ties: prefer the edge whose midpoint is closest to the point
        midx = 0.5 * (xmin + xmax)
        midy = 0.5 * (ymin + ymax)
        cand = -1
        cand_mid = np.inf
        for e in range(4):
            de = dl if e == 0 else (dr if e == 1 else (db if e == 2 else dt))
            if de != best:
                continue
            if e == 0:
                mx, my = xmin, midy
            elif e == 1:
                mx, my = xmax, midy
            elif e == 2:
                mx, my = midx, ymin
            else:
                mx, my = midx, ymax
            dm = (x - mx) ** 2 + (y - my) ** 2
            if dm < cand_mid:
                cand_mid = dm
                cand = e
        if cand == 0:
            return -best, xmin, y, -1.0, 0.0
        if cand == 1:
            return -best, xmax, y, 1.0, 0.0
        if cand == 2:
            return -best, x, ymin, 0.0, -1.0
        return -best, x, ymax, 0.0, 1.0

    px = min(max(x, xmin), xmax)
    py = min(max(y, ymin), ymax)
    dx = x - px
    dy = y - py
    d = math.sqrt(dx * dx + dy * dy)
    return d, px, py, dx / d, dy / d


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate rectangle {self.bounds}")

    kind = RECTANGLE

    @property
    def bounds(self):
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    @property
    def params(self) -> np.ndarray:
        return np.array(self.bounds, dtype=np.float64)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x, y) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def sample_interior(self, count: int, rng: np.random.Generator) -> np.ndarray:
        pts = rng.uniform(size=(count, 2))
        pts[:, 0] = self.xmin + pts[:, 0] * self.width
        pts[:, 1] = self.ymin + pts[:, 1] * self.height
        return pts


@dataclass(frozen=True)
class Disk:
    """Disk of radius ``r`` centred at ``(cx, cy)``; used by the benchmarks."""

    cx: float = 0.0
    cy: float = 0.0
    r: float = 1.0

    kind = DISK

    @property
    def params(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.r, 0.0], dtype=np.float64)

    @property
    def diameter(self) -> float:
        return 2.0 * self.r

    def contains(self, x, y) -> bool:
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 <= self.r**2

    def sample_interior(self, count: int, rng: np.random.Generator) -> np.ndarray:
        rad = self.r * np.sqrt(rng.uniform(size=count))
        ang = rng.uniform(0, 2 * np.pi, size=count)
        return np.column_stack([self.cx + rad * np.cos(ang), self.cy + rad * np.sin(ang)])


def boundary_query(domain, x):
    """Return ``(d, proj, normal)`` for a point ``x`` relative to ``domain``."""
    d, px, py, nx, ny = boundary_query_kernel(domain.kind, domain.params, float(x[0]), float(x[1]))
    return d, np.array([px, py]), np.array([nx, ny])


@dataclass(frozen=True)
class Node:
    id: int
    xy: tuple
    interface: int


@dataclass(frozen=True)
class Partition:
    """Vertical-strip partition of a rectangle.

    Interface ``j`` is the segment ``x = edges[j + 1]`` shared by strips
    ``j`` and ``j + 1``.
    """

    domain: Domain
    edges: np.ndarray
    nodes: tuple = field(default=())

    @property
    def m(self) -> int:
        return len(self.edges) - 1

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def interfaces(self):
        """Interface segments as ``((x, ymin), (x, ymax))``."""
        d = self.domain
        return [((float(x), d.ymin), (float(x), d.ymax)) for x in self.edges[1:-1]]

    @property
    def subdomains(self):
        d = self.domain
        return [Domain(float(self.edges[k]), float(self.edges[k + 1]), d.ymin, d.ymax)
                for k in range(self.m)]

    def interface_nodes(self, j: int):
        return [nd for nd in self.nodes if nd.interface == j]

    def subdomain_interfaces(self, k: int):
        """Interfaces bounding strip ``k``: dict side -> interface id."""
        sides = {}
        if k > 0:
            sides["left"] = k - 1
        if k < self.m - 1:
            sides["right"] = k
        return sides

    @property
    def node_xy(self) -> np.ndarray:
        return np.array([nd.xy for nd in self.nodes], dtype=np.float64)


def build_partition(domain: Domain, m: int, nodes_per_interface: int) -> Partition:
    if m < 2:
        raise ValueError("a partition needs at least two subdomains")
    if nodes_per_interface < 2:
        raise ValueError("every interface needs at least two nodes")
    edges = np.linspace(domain.xmin, domain.xmax, m + 1)
    edges[0], edges[-1] = domain.xmin, domain.xmax
    ys = np.linspace(domain.ymin, domain.ymax, nodes_per_interface + 2)[1:-1]
    nodes = []
    for j, x in enumerate(edges[1:-1]):
        for y in ys:
            nodes.append(Node(len(nodes), (float(x), float(y)), j))
    return Partition(domain, edges, tuple(nodes))


@njit(cache=True, nogil=True)
def locate_strip(edges, x):
    """Strip index of abscissa ``x``; interface points go to the lower index."""
    m = edges.shape[0] - 1
    for k in range(m - 1):
        if x <= edges[k + 1]:
            return k
    return m - 1


def locate_subdomain(partition: Partition, x) -> int:
    if not partition.domain.contains(x[0], x[1]):
        raise ValueError(f"point {tuple(x)} lies outside the domain")
    return int(locate_strip(partition.edges, float(x[0])))
