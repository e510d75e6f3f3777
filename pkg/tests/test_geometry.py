import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iterpdd.geometry import (Disk, Domain, boundary_query, build_partition, locate_strip,
                              locate_subdomain)

UNIT = Domain(0.0, 1.0, 0.0, 1.0)


def test_center_of_unit_square():
    d, proj, normal = boundary_query(UNIT, (0.5, 0.5))
    assert d == pytest.approx(-0.5)
    assert np.linalg.norm(normal) == pytest.approx(1.0)
    assert UNIT.contains(*proj)
    assert min(proj[0], 1 - proj[0], proj[1], 1 - proj[1]) == pytest.approx(0.0)


def test_point_on_boundary():
    d, proj, normal = boundary_query(UNIT, (0.5, 0.0))
    assert d == 0.0
    np.testing.assert_allclose(proj, [0.5, 0.0])
    np.testing.assert_allclose(normal, [0.0, -1.0])


def test_exterior_point():
    d, proj, normal = boundary_query(UNIT, (0.5, -0.2))
    assert d == pytest.approx(0.2)
    np.testing.assert_allclose(proj, [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(normal, [0.0, -1.0])


def _edge_oracle(dom, x, y):
    inside = dom.xmin <= x <= dom.xmax and dom.ymin <= y <= dom.ymax
    if inside:
        return -min(x - dom.xmin, dom.xmax - x, y - dom.ymin, dom.ymax - y)
    dx = max(dom.xmin - x, 0.0, x - dom.xmax)
    dy = max(dom.ymin - y, 0.0, y - dom.ymax)
    return float(np.hypot(dx, dy))


def test_signed_distance_matches_edge_oracle(rng):
    dom = Domain(-1.0, 3.0, 0.5, 2.0)
    pts = rng.uniform([-2.0, -0.5], [4.0, 3.0], size=(10_000, 2))
    for x, y in pts:
        d, proj, normal = boundary_query(dom, (x, y))
        assert d == pytest.approx(_edge_oracle(dom, x, y), abs=1e-14)
        assert abs(boundary_query(dom, proj)[0]) <= 1e-12
        assert np.linalg.norm(normal) == pytest.approx(1.0)


def test_disk_distance():
    d, proj, normal = boundary_query(Disk(), (0.3, 0.4))
    assert d == pytest.approx(-0.5)
    np.testing.assert_allclose(proj, [0.6, 0.8])
    np.testing.assert_allclose(normal, [0.6, 0.8])


def test_partition_two_strips():
    p = build_partition(UNIT, 2, 3)
    assert p.m == 2 and p.n == 3
    assert p.interfaces == [((0.5, 0.0), (0.5, 1.0))]
    np.testing.assert_allclose(p.node_xy, [[0.5, 0.25], [0.5, 0.5], [0.5, 0.75]])


def test_partition_default_layout():
    p = build_partition(Domain(0.0, 4.0, 0.0, 1.0), 4, 6)
    assert p.m == 4
    assert len(p.interfaces) == 3
    assert p.n == 18
    for j in range(3):
        assert len(p.interface_nodes(j)) == 6


def test_partition_rejects_single_strip():
    with pytest.raises(ValueError):
        build_partition(UNIT, 1, 3)
    with pytest.raises(ValueError):
        build_partition(UNIT, 2, 1)


def test_locate_subdomain_tie_break():
    p = build_partition(UNIT, 2, 3)
    assert locate_subdomain(p, (0.25, 0.5)) == 0
    assert locate_subdomain(p, (0.5, 0.5)) == 0
    assert locate_subdomain(p, (0.75, 0.5)) == 1
    with pytest.raises(ValueError):
        locate_subdomain(p, (1.5, 0.5))


@settings(max_examples=50, deadline=None)
@given(m=st.integers(2, 9), k=st.integers(2, 8),
       x0=st.floats(-5, 5), w=st.floats(0.1, 10), h=st.floats(0.1, 10))
def test_partition_invariants(m, k, x0, w, h):
    dom = Domain(x0, x0 + w, 0.0, h)
    p = build_partition(dom, m, k)
    widths = [s.width for s in p.subdomains]
    assert sum(widths) == pytest.approx(dom.width, rel=1e-12)
    assert p.edges[0] == dom.xmin and p.edges[-1] == dom.xmax
    assert np.all(np.diff(p.edges) > 0)
    # every node on exactly one interface, strictly inside it
    for nd in p.nodes:
        on = [j for j, ((xa, _), _) in enumerate(p.interfaces) if nd.xy[0] == xa]
        assert on == [nd.interface]
        assert dom.ymin < nd.xy[1] < dom.ymax
    # each interface is shared by exactly two strips
    for j in range(m - 1):
        owners = [kk for kk in range(m) if j in p.subdomain_interfaces(kk).values()]
        assert owners == [j, j + 1]


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0.0, 4.0))
def test_locate_strip_contains_point(x):
    edges = np.linspace(0.0, 4.0, 5)
    k = locate_strip(edges, x)
    assert edges[k] <= x <= edges[k + 1]
