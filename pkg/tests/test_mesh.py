import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msdpg.mesh import (
    LOWER_RIGHT,
    MeshError,
    build_coarse_fine_map,
    build_oversampling_patch,
    build_structured_mesh,
    domain_area,
    dump_mesh,
    load_mesh_dump,
    margin_from_factor,
    patch_fine_coordinates,
    point_in_domain,
    point_in_triangle,
)


@pytest.mark.parametrize(
    "domain,n,counts",
    [("unit-square", 2, (9, 8, 16)), ("unit-square", 4, (25, 32, 56)), ("l-shape", 2, (21, 24, 44))],
)
def test_counts(domain, n, counts):
    m = build_structured_mesh(domain, n)
    assert (m.n_nodes, m.n_triangles, m.n_edges) == counts


@settings(max_examples=10, deadline=None)
@given(domain=st.sampled_from(["unit-square", "l-shape"]), n=st.integers(1, 9))
def test_invariants(domain, n):
    m = build_structured_mesh(domain, n)
    assert m.n_nodes + m.n_triangles - m.n_edges == 1
    assert np.all(m.areas() > 0)
    assert math.isclose(m.areas().sum(), domain_area(domain), rel_tol=1e-12)
    interior = ~m.boundary
    assert np.all(m.edge_elements[interior] >= 0).all()
    assert np.all(m.edge_elements[m.boundary, 1] == -1)
    assert np.all(m.edge_elements[:, 0] >= 0)
    # each triangle lists three distinct edges, each interior edge seen twice
    counts = np.bincount(m.tri_edges.ravel(), minlength=m.n_edges)
    assert np.array_equal(counts, np.where(m.boundary, 1, 2))


def test_normals_point_from_k1_to_k2():
    m = build_structured_mesh("l-shape", 3)
    c = m.centroids()
    p, q = m.nodes[m.edges[:, 0]], m.nodes[m.edges[:, 1]]
    t = q - p
    rot = np.column_stack([t[:, 1], -t[:, 0]]) / np.linalg.norm(t, axis=1)[:, None]
    assert np.allclose(np.abs((rot * m.normals).sum(1)), 1.0)
    mid = 0.5 * (p + q)
    k1, k2 = m.edge_elements[:, 0], m.edge_elements[:, 1]
    assert np.all(((mid - c[k1]) * m.normals).sum(1) > 0)
    inner = k2 >= 0
    assert np.all(((c[k2[inner]] - c[k1[inner]]) * m.normals[inner]).sum(1) > 0)
    assert np.all(k1[inner] < k2[inner])


def test_l_shape_removes_fourth_quadrant():
    m = build_structured_mesh("l-shape", 4)
    c = m.centroids()
    assert not np.any((c[:, 0] > 0) & (c[:, 1] < 0))
    assert c.min() > -1 and c.max() < 1


def test_coarse_fine_map_containment():
    coarse, fine = build_structured_mesh("unit-square", 4), build_structured_mesh("unit-square", 16)
    cf = build_coarse_fine_map(coarse, fine)
    assert cf.elem_tris.shape == (32, 16)
    assert np.array_equal(np.sort(cf.elem_tris.ravel()), np.arange(fine.n_triangles))
    fa = fine.areas()[cf.elem_tris].sum(1)
    assert np.allclose(fa, coarse.areas(), rtol=1e-12)
    for K in range(coarse.n_triangles):
        pts = fine.centroids()[cf.elem_tris[K]]
        assert point_in_triangle(coarse.nodes[coarse.triangles[K]], pts).all()


def test_edge_tiling_sums_to_edge_length():
    coarse, fine = build_structured_mesh("l-shape", 2), build_structured_mesh("l-shape", 6)
    cf = build_coarse_fine_map(coarse, fine)
    for e in range(coarse.n_edges):
        for s in (0, 1):
            if coarse.edge_elements[e, s] < 0:
                continue
            nodes = cf.edge_fine_nodes(e, s)
            pts = fine.nodes[nodes]
            assert np.allclose(pts[0], coarse.nodes[coarse.edges[e, 0]])
            assert np.allclose(pts[-1], coarse.nodes[coarse.edges[e, 1]])
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
            assert math.isclose(seg, coarse.edge_lengths()[e], rel_tol=1e-12)


def test_identity_map_and_non_nested():
    m4 = build_structured_mesh("unit-square", 4)
    cf = build_coarse_fine_map(m4, build_structured_mesh("unit-square", 4))
    assert cf.ratio == 1 and np.array_equal(cf.elem_tris.ravel(), np.arange(32))
    with pytest.raises(MeshError):
        build_coarse_fine_map(m4, build_structured_mesh("unit-square", 6))
    with pytest.raises(MeshError):
        build_coarse_fine_map(m4, build_structured_mesh("l-shape", 8))


def _interior_element(coarse):
    c = coarse.centroids()
    return int(np.argmin(np.linalg.norm(c - 0.5, axis=1)))


def test_interior_patch_factor_four():
    coarse = build_structured_mesh("unit-square", 8)
    K = _interior_element(coarse)
    p = build_oversampling_patch(coarse, K, 80, 4.0)
    h = 1 / 8
    assert p.margin == p.requested_margin == 10
    assert math.isclose(p.d_tilde, h)
    assert np.allclose(p.vertices.mean(0), coarse.nodes[coarse.triangles[K]].mean(0))
    assert math.isclose(p.leg, 4 * h)


def test_factor_one_is_element():
    coarse = build_structured_mesh("unit-square", 4)
    p = build_oversampling_patch(coarse, 5, 40, 1.0)
    assert p.margin == 0 and p.d_tilde == 0
    assert np.allclose(np.sort(p.vertices, axis=0), np.sort(coarse.nodes[coarse.triangles[5]], axis=0))
    with pytest.raises(MeshError):
        build_oversampling_patch(coarse, 5, 40, 0.5)


@pytest.mark.parametrize("domain", ["unit-square", "l-shape"])
def test_patches_contained(domain):
    coarse = build_structured_mesh(domain, 4)
    cf = build_coarse_fine_map(coarse, build_structured_mesh(domain, 40))
    for K in range(coarse.n_triangles):
        p = build_oversampling_patch(coarse, K, 40, 4.0)
        pts = patch_fine_coordinates(p)
        cent = pts[p.grid.triangles].mean(axis=1)
        assert point_in_domain(domain, cent).all()
        assert point_in_triangle(p.vertices, coarse.nodes[coarse.triangles[K]], tol=1e-9).all()
        # restriction hits every template node exactly once, at matching coordinates
        assert len(np.unique(p.restriction)) == len(p.restriction)
        assert np.allclose(pts[p.restriction], cf.fine_node_coords[K], atol=1e-12)
        assert p.margin <= p.requested_margin


def test_corner_patch_translated():
    coarse = build_structured_mesh("unit-square", 8)
    K = int(np.nonzero((coarse.tri_square[:, 0] == 0) & (coarse.tri_square[:, 1] == 0) & (coarse.tri_kind == LOWER_RIGHT))[0][0])
    p = build_oversampling_patch(coarse, K, 80, 4.0)
    assert np.any(p.translation != 0)
    assert p.margin == p.requested_margin
    assert point_in_triangle(p.vertices, coarse.nodes[coarse.triangles[K]], tol=1e-9).all()
    assert np.all(p.vertices >= -1e-12) and np.all(p.vertices <= 1 + 1e-12)


def test_margin_from_factor():
    assert margin_from_factor(4.0, 10) == 10
    assert margin_from_factor(1.0, 10) == 0
    assert margin_from_factor(1.375, 10) == 2  # delta0 = 1/8 rounded up


def test_dump_roundtrip(tmp_path):
    m = build_structured_mesh("l-shape", 2)
    dump_mesh(m, tmp_path / "m.txt")
    first = (tmp_path / "m.txt").read_text().splitlines()[0]
    assert first == f"{m.n_nodes} {m.n_triangles} {m.n_edges}"
    d = load_mesh_dump(tmp_path / "m.txt")
    assert np.array_equal(d["triangles"], m.triangles)
    assert np.array_equal(d["nodes"], m.nodes)
    assert np.array_equal(d["edge_elements"], m.edge_elements)
    assert np.array_equal(d["boundary"], m.boundary)
