"""Structured triangular meshes, coarse/fine containment maps and oversampling patches.

Every mesh in this package lives on a uniform grid of squares of side ``1/n``;
each square is cut by the diagonal joining its lower-left and upper-right
corners into a *lower-right* triangle (kind 0) and an *upper-left* triangle
(kind 1).  Geometry that has to line up across grids (patches, coarse
elements, edge tilings) is handled in integer fine-grid units, so containment
and alignment tests are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

DOMAINS = ("unit-square", "l-shape")

LOWER_RIGHT = 0
UPPER_LEFT = 1

# Vertex offsets (in units of the square side) of the two triangle kinds, CCW.
_KIND_VERTICES = {
    LOWER_RIGHT: np.array([[0, 0], [1, 0], [1, 1]]),
    UPPER_LEFT: np.array([[0, 0], [1, 1], [0, 1]]),
}


class MeshError(ValueError):
    """Raised for invalid mesh requests (non-nested grids, bad domains...)."""


def domain_area(domain: str) -> float:
    return {"unit-square": 1.0, "l-shape": 3.0}[domain]


def domain_origin(domain: str) -> tuple[float, float]:
    return {"unit-square": (0.0, 0.0), "l-shape": (-1.0, -1.0)}[domain]


def domain_cells(domain: str, n: int) -> int:
    """Number of grid squares along one side of the domain's bounding box."""
    return n if domain == "unit-square" else 2 * n


def _active_squares(domain: str, n: int) -> np.ndarray:
    m = domain_cells(domain, n)
    J, I = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    I = I.ravel()
    J = J.ravel()
    if domain == "l-shape":
        # drop the closed fourth quadrant [0,1]x[-1,0]
        keep = ~((I >= n) & (J < n))
        I, J = I[keep], J[keep]
    return np.column_stack([I, J])


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulation with full edge topology.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    edges : (E, 2) int array of node pairs, smaller index first
    edge_elements : (E, 2) int array ``(K1, K2)``; ``K2 == -1`` on the boundary
    normals : (E, 2) unit normals oriented from K1 to K2 (outward on the boundary)
    boundary : (E,) bool
    tri_edges : (T, 3) edge index of local edge ``(v_l, v_{l+1})``
    h : float, side of the grid squares
    """

    domain: str
    n: int
    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    normals: np.ndarray
    boundary: np.ndarray
    tri_edges: np.ndarray
    h: float
    grid_ij: np.ndarray
    tri_square: np.ndarray
    tri_kind: np.ndarray
    node_lookup: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary])

    def node_index(self, i, j) -> np.ndarray:
        """Global node index of grid coordinates ``(i, j)`` (``-1`` if absent)."""
        return self.node_lookup[np.asarray(j), np.asarray(i)]

    def signature(self) -> str:
        """Short hash of the mesh geometry, used to tag dumped solutions."""
        import hashlib

        hsh = hashlib.sha1()
        hsh.update(f"{self.domain}:{self.n}".encode())
        hsh.update(np.ascontiguousarray(self.triangles).tobytes())
        return hsh.hexdigest()[:12]


def _build_edges(nodes, triangles):
    T = len(triangles)
    local = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    owner = np.concatenate([np.arange(T)] * 3)
    slot = np.repeat(np.arange(3), T)
    key = np.sort(local, axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    E = len(edges)
    tri_edges = np.empty((T, 3), dtype=np.int64)
    tri_edges[owner, slot] = inverse

    # K1 is the lower element index (tie-break for the normal orientation)
    order = np.lexsort((owner, inverse))
    inv_sorted = inverse[order]
    own_sorted = owner[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = inv_sorted[1:] != inv_sorted[:-1]
    edge_elements = np.full((E, 2), -1, dtype=np.int64)
    edge_elements[inv_sorted[first], 0] = own_sorted[first]
    second = ~first
    edge_elements[inv_sorted[second], 1] = own_sorted[second]
    counts = np.bincount(inverse, minlength=E)
    if np.any(counts > 2):
        raise MeshError("non-manifold triangulation: an edge has more than two triangles")
    boundary = edge_elements[:, 1] < 0

    d = nodes[edges[:, 1]] - nodes[edges[:, 0]]
    normals = np.column_stack([d[:, 1], -d[:, 0]])
    normals /= np.hypot(normals[:, 0], normals[:, 1])[:, None]
    cent = nodes[triangles].mean(axis=1)
    mid = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    target = np.where(boundary[:, None], mid, cent[np.maximum(edge_elements[:, 1], 0)])
    sign = np.sign(np.einsum("ij,ij->i", normals, target - cent[edge_elements[:, 0]]))
    normals *= sign[:, None]
    return edges, edge_elements, normals, boundary, tri_edges


def build_structured_mesh(domain: str, n: int) -> TriMesh:
    """Structured right-triangle mesh of the unit square or the L-shaped domain.

    ``n`` is the number of cells per unit length.  The L-shape is
    ``(-1, 1)^2`` minus the closed fourth quadrant ``[0, 1] x [-1, 0]``.
    """
    if domain not in DOMAINS:
        raise MeshError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    if n < 1:
        raise MeshError("n must be >= 1")
    squares = _active_squares(domain, n)
    m = domain_cells(domain, n)
    used = np.zeros((m + 1, m + 1), dtype=bool)  # [j, i]
    for di in (0, 1):
        for dj in (0, 1):
            used[squares[:, 1] + dj, squares[:, 0] + di] = True
    jj, ii = np.nonzero(used)  # row-major: j outer, i inner
    lookup = np.full((m + 1, m + 1), -1, dtype=np.int64)
    lookup[jj, ii] = np.arange(len(ii))
    h = 1.0 / n
    x0, y0 = domain_origin(domain)
    nodes = np.column_stack([x0 + ii * h, y0 + jj * h])

    tris = []
    kinds = []
    for kind, offs in _KIND_VERTICES.items():
        ci = squares[:, 0][:, None] + offs[:, 0][None, :]
        cj = squares[:, 1][:, None] + offs[:, 1][None, :]
        tris.append(lookup[cj, ci])
        kinds.append(np.full(len(squares), kind))
    # interleave so each square contributes (lower-right, upper-left)
    triangles = np.stack(tris, axis=1).reshape(-1, 3)
    tri_kind = np.stack(kinds, axis=1).ravel()
    tri_square = np.repeat(squares, 2, axis=0)

    edges, edge_elements, normals, boundary, tri_edges = _build_edges(nodes, triangles)
    return TriMesh(
        domain=domain,
        n=n,
        nodes=nodes,
        triangles=triangles,
        edges=edges,
        edge_elements=edge_elements,
        normals=normals,
        boundary=boundary,
        tri_edges=tri_edges,
        h=h,
        grid_ij=np.column_stack([ii, jj]),
        tri_square=tri_square,
        tri_kind=tri_kind,
        node_lookup=lookup,
    )


def p1_gradients(nodes: np.ndarray, triangles: np.ndarray):
    """Gradients of the three barycentric functions on each triangle.

    Returns ``(grads, areas)`` with ``grads`` of shape ``(T, 3, 2)``.
    """
    p = nodes[triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grads = np.empty(triangles.shape + (2,))
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= det[:, None, None]
    return grads, 0.5 * det


# ---------------------------------------------------------------------------
# right-triangle sub-meshes (element templates and patch meshes)


@dataclass(frozen=True, eq=False)
class RightTriangleGrid:
    """Structured fine triangulation of one right triangle with legs of ``N`` cells.

    Coordinates are integers relative to the triangle's lower-left vertex.
    ``edge_nodes[l]`` lists the nodes along local edge ``(v_l, v_{l+1})`` in
    that direction, ``edge_tris[l]`` the fine triangle adjacent to each
    segment of that edge.
    """

    N: int
    kind: int
    ij: np.ndarray
    triangles: np.ndarray
    tri_kind: np.ndarray
    lookup: np.ndarray
    edge_nodes: tuple
    edge_tris: tuple
    boundary_nodes: np.ndarray
    vertices: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.ij)

    def barycentric(self) -> np.ndarray:
        """Values of the three P1 nodal functions of the big triangle at every node."""
        return barycentric_coordinates(self.vertices.astype(float), self.ij.astype(float))


def barycentric_coordinates(vertices: np.ndarray, points: np.ndarray) -> np.ndarray:
    """``(P, 3)`` barycentric coordinates of ``points`` w.r.t. a triangle."""
    v0, v1, v2 = vertices
    T = np.column_stack([v1 - v0, v2 - v0])
    lam12 = np.linalg.solve(T, (points - v0).T).T
    return np.column_stack([1.0 - lam12.sum(axis=1), lam12])


def right_triangle_grid(N: int, kind: int) -> RightTriangleGrid:
    if N < 1:
        raise MeshError("right-triangle grid needs N >= 1")
    ii, jj = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    keep = jj <= ii if kind == LOWER_RIGHT else jj >= ii
    ii, jj = ii[keep], jj[keep]
    lookup = np.full((N + 1, N + 1), -1, dtype=np.int64)
    lookup[jj, ii] = np.arange(len(ii))

    sq_i, sq_j = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
    sq_i = sq_i.ravel()
    sq_j = sq_j.ravel()
    tris = []
    tkind = []
    for sub in (LOWER_RIGHT, UPPER_LEFT):
        if kind == LOWER_RIGHT:
            ok = (sq_j < sq_i) | ((sq_j == sq_i) & (sub == LOWER_RIGHT))
        else:
            ok = (sq_j > sq_i) | ((sq_j == sq_i) & (sub == UPPER_LEFT))
        offs = _KIND_VERTICES[sub]
        ci = sq_i[ok][:, None] + offs[:, 0][None, :]
        cj = sq_j[ok][:, None] + offs[:, 1][None, :]
        tris.append(lookup[cj, ci])
        tkind.append(np.full(ok.sum(), sub))
    triangles = np.concatenate(tris)
    tri_kind = np.concatenate(tkind)
    # deterministic ordering: by square (row-major) then kind
    lo = np.column_stack([ii, jj])[triangles].min(axis=1)
    order = np.lexsort((tri_kind, lo[:, 0], lo[:, 1]))
    triangles = triangles[order]
    tri_kind = tri_kind[order]

    verts = N * _KIND_VERTICES[kind]
    edge_nodes = []
    for l in range(3):
        a, b = verts[l], verts[(l + 1) % 3]
        t = np.arange(N + 1)
        pts = a[None, :] + (b - a)[None, :] * t[:, None] // N
        edge_nodes.append(lookup[pts[:, 1], pts[:, 0]])
    # segment -> adjacent fine triangle
    edge_key = {}
    for t_idx, tri in enumerate(triangles):
        for l in range(3):
            p, q = tri[l], tri[(l + 1) % 3]
            edge_key[(min(p, q), max(p, q))] = t_idx
    edge_tris = []
    for en in edge_nodes:
        edge_tris.append(np.array([edge_key[(min(p, q), max(p, q))] for p, q in zip(en[:-1], en[1:])]))
    bnodes = np.unique(np.concatenate(edge_nodes))
    return RightTriangleGrid(
        N=N,
        kind=kind,
        ij=np.column_stack([ii, jj]),
        triangles=triangles,
        tri_kind=tri_kind,
        lookup=lookup,
        edge_nodes=tuple(edge_nodes),
        edge_tris=tuple(edge_tris),
        boundary_nodes=bnodes,
        vertices=verts,
    )


# ---------------------------------------------------------------------------
# coarse / fine maps


@dataclass(frozen=True, eq=False)
class CoarseFineMap:
    """Containment of nested structured grids.

    ``elem_nodes[K]`` are the global fine node indices of the template nodes
    of coarse element ``K`` and ``elem_tris[K]`` the global fine triangles in
    template order.  ``edge_sides[e, s]`` gives, for side ``s`` of coarse edge
    ``e``, the local edge slot of the element on that side; its template
    node/segment order is reversed when ``edge_flip[e, s]`` is set so that
    both sides walk the edge from ``edges[e, 0]`` to ``edges[e, 1]``.
    """

    coarse: TriMesh
    fine: TriMesh
    ratio: int
    templates: tuple
    elem_nodes: np.ndarray
    elem_tris: np.ndarray
    edge_slot: np.ndarray
    edge_flip: np.ndarray

    def template(self, K: int) -> RightTriangleGrid:
        return self.templates[self.coarse.tri_kind[K]]

    @property
    def n_local(self) -> int:
        return self.templates[0].n_nodes

    @cached_property
    def template_geometry(self) -> tuple:
        """Per kind: ``(coords, grads, areas)`` of the template fine triangles (physical units)."""
        out = []
        for tpl in self.templates:
            coords = tpl.ij * self.fine.h
            grads, areas = p1_gradients(coords, tpl.triangles)
            out.append((coords, grads, areas))
        return tuple(out)

    @cached_property
    def fine_centroids(self) -> np.ndarray:
        """``(nE, r², 2)`` centroids of the fine triangles of every coarse element."""
        origin = self.coarse.nodes[self.coarse.triangles[:, 0]]
        out = np.empty((self.coarse.n_triangles, self.ratio ** 2, 2))
        for kind, tpl in enumerate(self.templates):
            sel = self.coarse.tri_kind == kind
            cent = self.template_geometry[kind][0][tpl.triangles].mean(axis=1)
            out[sel] = origin[sel][:, None, :] + cent[None, :, :]
        return out

    @cached_property
    def fine_node_coords(self) -> np.ndarray:
        """``(nE, nK, 2)`` coordinates of the template nodes of every coarse element."""
        return self.fine.nodes[self.elem_nodes]

    def edge_fine_nodes(self, e: int, side: int = 0) -> np.ndarray:
        K = self.coarse.edge_elements[e, side]
        tpl = self.template(K)
        loc = tpl.edge_nodes[self.edge_slot[e, side]]
        if self.edge_flip[e, side]:
            loc = loc[::-1]
        return self.elem_nodes[K, loc]

    def edge_fine_tris(self, e: int, side: int = 0) -> np.ndarray:
        K = self.coarse.edge_elements[e, side]
        tpl = self.template(K)
        loc = tpl.edge_tris[self.edge_slot[e, side]]
        if self.edge_flip[e, side]:
            loc = loc[::-1]
        return self.elem_tris[K, loc]


def build_coarse_fine_map(coarse: TriMesh, fine: TriMesh) -> CoarseFineMap:
    if coarse.domain != fine.domain:
        raise MeshError("coarse and fine meshes cover different domains")
    if fine.n % coarse.n != 0:
        raise MeshError(f"fine n={fine.n} is not a multiple of coarse n={coarse.n} (non-nested)")
    r = fine.n // coarse.n
    templates = (right_triangle_grid(r, LOWER_RIGHT), right_triangle_grid(r, UPPER_LEFT))
    nE = coarse.n_triangles
    nK = templates[0].n_nodes
    elem_nodes = np.empty((nE, nK), dtype=np.int64)
    elem_tris = np.empty((nE, r * r), dtype=np.int64)
    # fine triangle lookup: (J, I, kind) -> index
    m = domain_cells(fine.domain, fine.n)
    tri_lookup = np.full((m, m, 2), -1, dtype=np.int64)
    tri_lookup[fine.tri_square[:, 1], fine.tri_square[:, 0], fine.tri_kind] = np.arange(fine.n_triangles)
    for kind in (LOWER_RIGHT, UPPER_LEFT):
        tpl = templates[kind]
        sel = np.nonzero(coarse.tri_kind == kind)[0]
        anchor = coarse.tri_square[sel] * r
        gi = anchor[:, 0][:, None] + tpl.ij[:, 0][None, :]
        gj = anchor[:, 1][:, None] + tpl.ij[:, 1][None, :]
        elem_nodes[sel] = fine.node_lookup[gj, gi]
        lo = tpl.ij[tpl.triangles].min(axis=1)
        ti = anchor[:, 0][:, None] + lo[:, 0][None, :]
        tj = anchor[:, 1][:, None] + lo[:, 1][None, :]
        elem_tris[sel] = tri_lookup[tj, ti, tpl.tri_kind[None, :]]
    if np.any(elem_nodes < 0) or np.any(elem_tris < 0):
        raise MeshError("fine mesh does not cover the coarse mesh")

    E = coarse.n_edges
    edge_slot = np.full((E, 2), -1, dtype=np.int64)
    edge_flip = np.zeros((E, 2), dtype=bool)
    for s in (0, 1):
        has = coarse.edge_elements[:, s] >= 0
        eidx = np.nonzero(has)[0]
        K = coarse.edge_elements[eidx, s]
        match = coarse.tri_edges[K] == eidx[:, None]
        slot = np.argmax(match, axis=1)
        edge_slot[eidx, s] = slot
        first = coarse.triangles[K, slot]
        edge_flip[eidx, s] = first != coarse.edges[eidx, 0]
    return CoarseFineMap(
        coarse=coarse,
        fine=fine,
        ratio=r,
        templates=templates,
        elem_nodes=elem_nodes,
        elem_tris=elem_tris,
        edge_slot=edge_slot,
        edge_flip=edge_flip,
    )


# ---------------------------------------------------------------------------
# oversampling patches


@dataclass(frozen=True, eq=False)
class PatchSpec:
    """Oversampling macro-triangle S(K) aligned with the global fine grid.

    ``anchor`` is the lower-left vertex of S(K) in global fine grid units and
    ``grid`` its fine triangulation.  ``restriction[k]`` is the patch node
    sitting on template node ``k`` of K.  ``margin`` is the number of fine
    cells between K and S(K) before any boundary adjustment, ``separation``
    the effective ``d_K`` after it.
    """

    element: int
    kind: int
    anchor: tuple
    grid: RightTriangleGrid
    restriction: np.ndarray
    vertices: np.ndarray
    margin: int
    requested_margin: int
    translation: tuple
    separation: float
    fine_h: float

    @property
    def leg(self) -> float:
        return self.grid.N * self.fine_h

    @property
    def d_tilde(self) -> float:
        """``(h_S - h_K) / 3`` for this patch."""
        return self.margin * self.fine_h

    @property
    def effective_factor(self) -> float:
        r = self.grid.N - 3 * self.margin
        return self.grid.N / r


def margin_from_factor(factor: float, ratio: int) -> int:
    """Fine cells between K and S(K) for a barycentric scaling ``factor``.

    Scaling by ``f`` puts S(K) at distance ``(f - 1) h_K / 3`` along the axes;
    the result is rounded up to the fine grid so that ``d_K >= delta0 h_K``.
    """
    if factor < 1:
        raise MeshError("oversampling factor must be >= 1")
    return int(math.ceil((factor - 1.0) * ratio / 3.0 - 1e-9))


def factor_from_delta0(delta0: float) -> float:
    return 1.0 + 3.0 * delta0


def _inside_domain(domain, nf, kind, ax, ay, L):
    """Vectorised test S subset of the closed domain (integer fine units)."""
    x0, x1, y0, y1 = ax, ax + L, ay, ay + L
    if domain == "unit-square":
        return (x0 >= 0) & (y0 >= 0) & (x1 <= nf) & (y1 <= nf)
    ok = (x0 >= -nf) & (y0 >= -nf) & (x1 <= nf) & (y1 <= nf)
    # separating-axis test against the open removed quadrant (0,nf)x(-nf,0)
    # projections of S on x - y
    if kind == LOWER_RIGHT:
        dmin, dmax = ax - ay, ax - ay + L
    else:
        dmin, dmax = ax - ay - L, ax - ay
    overlap = (x1 > 0) & (x0 < nf) & (y1 > -nf) & (y0 < 0) & (dmax > 0) & (dmin < 2 * nf)
    return ok & ~overlap


def _contains_element(kind, ax, ay, L, kx, ky, r):
    """Vectorised test K subset of S (same kind, integer fine units)."""
    verts = r * _KIND_VERTICES[kind] + np.array([kx, ky])
    ok = np.ones(np.broadcast(ax, ay).shape, dtype=bool)
    for vx, vy in verts:
        if kind == LOWER_RIGHT:
            ok &= (vx <= ax + L) & (vy >= ay) & (vy - ay <= vx - ax)
        else:
            ok &= (vx >= ax) & (vy <= ay + L) & (vy - ay >= vx - ax)
    return ok


def _on_domain_boundary(domain, nf, x, y):
    """Integer fine-grid points lying on the boundary of the domain."""
    if domain == "unit-square":
        return (x == 0) | (x == nf) | (y == 0) | (y == nf)
    outer = (x == -nf) | (x == nf) | (y == -nf) | (y == nf)
    reentrant = ((x == 0) & (y <= 0)) | ((y == 0) & (x >= 0))
    return outer | reentrant


def _point_triangle_distance(tri, pts):
    lam = barycentric_coordinates(tri, pts)
    inside = np.all(lam >= 0, axis=1)
    best = np.full(len(pts), np.inf)
    for a, b in zip(tri, np.roll(tri, -1, axis=0)):
        ab = b - a
        t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
        proj = a[None, :] + t[:, None] * ab[None, :]
        best = np.minimum(best, np.hypot(*(pts - proj).T))
    return np.where(inside, 0.0, best)


def _separation(domain, nf, grid, anchor, kind, kx, ky, r):
    """Distance (fine units) from K to the part of ∂S inside the domain."""
    ij = grid.ij[grid.boundary_nodes] + np.array(anchor)[None, :]
    free = ~_on_domain_boundary(domain, nf, ij[:, 0], ij[:, 1])
    if not free.any():
        return math.inf
    tri = (r * _KIND_VERTICES[kind] + np.array([kx, ky])).astype(float)
    return float(_point_triangle_distance(tri, ij[free].astype(float)).min())


def build_oversampling_patch(
    coarse: TriMesh,
    K: int,
    fine_n: int,
    factor: float = 4.0,
    *,
    margin: int | None = None,
) -> PatchSpec:
    """Macro-triangle S(K) for coarse element ``K``.

    S(K) is the similar right triangle scaled about the barycenter of K with
    parallel edges, snapped to the fine grid.  Patches leaving the domain are
    translated by the shortest fine-grid vector that restores ``K ⊂ S ⊂ Ω``;
    when no translation works the margin is reduced until one does (margin 0
    is S = K, the classical construction).
    """
    if factor < 1:
        raise MeshError("oversampling factor must be >= 1")
    if fine_n % coarse.n:
        raise MeshError("fine grid must be nested in the coarse grid")
    r = fine_n // coarse.n
    kind = int(coarse.tri_kind[K])
    m0 = margin_from_factor(factor, r) if margin is None else int(margin)
    if m0 < 0:
        raise MeshError("margin must be non-negative")
    nf = fine_n  # domain box spans [-nf, nf] (l-shape) or [0, nf]
    sq = coarse.tri_square[K]
    shift = 0 if coarse.domain == "unit-square" else -fine_n
    kx, ky = int(sq[0] * r + shift), int(sq[1] * r + shift)

    for m in range(m0, -1, -1):
        L = r + 3 * m
        if kind == LOWER_RIGHT:
            bx, by = kx - 2 * m, ky - m
        else:
            bx, by = kx - m, ky - 2 * m
        R = 3 * m + 1
        ti, tj = np.meshgrid(np.arange(-R, R + 1), np.arange(-R, R + 1), indexing="xy")
        ti = ti.ravel()
        tj = tj.ravel()
        order = np.lexsort((tj, ti, ti * ti + tj * tj))
        ti, tj = ti[order], tj[order]
        ax, ay = bx + ti, by + tj
        ok = _inside_domain(coarse.domain, nf, kind, ax, ay, L) & _contains_element(kind, ax, ay, L, kx, ky, r)
        if ok.any():
            k = int(np.argmax(ok))
            t = (int(ti[k]), int(tj[k]))
            anchor = (int(ax[k]), int(ay[k]))
            break
    else:  # pragma: no cover - m = 0 always succeeds
        raise MeshError(f"no admissible patch for element {K}")

    grid = right_triangle_grid(L, kind)
    tpl = right_triangle_grid(r, kind)
    li = tpl.ij[:, 0] + (kx - anchor[0])
    lj = tpl.ij[:, 1] + (ky - anchor[1])
    restriction = grid.lookup[lj, li]
    hf = 1.0 / fine_n
    verts = hf * (np.array(anchor)[None, :] + grid.vertices)
    sep = _separation(coarse.domain, nf, grid, anchor, kind, kx, ky, r) * hf
    return PatchSpec(
        element=K,
        kind=kind,
        anchor=anchor,
        grid=grid,
        restriction=restriction,
        vertices=verts,
        margin=m,
        requested_margin=m0,
        translation=t,
        separation=sep,
        fine_h=hf,
    )


def patch_fine_coordinates(patch: PatchSpec) -> np.ndarray:
    """Physical coordinates of the patch's fine nodes."""
    return (patch.grid.ij + np.array(patch.anchor)[None, :]) * patch.fine_h


def point_in_triangle(vertices: np.ndarray, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    lam = barycentric_coordinates(np.asarray(vertices, float), np.atleast_2d(points))
    return np.all(lam >= -tol, axis=1)


def point_in_domain(domain: str, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    p = np.atleast_2d(points)
    x, y = p[:, 0], p[:, 1]
    if domain == "unit-square":
        return (x >= -tol) & (x <= 1 + tol) & (y >= -tol) & (y <= 1 + tol)
    box = (x >= -1 - tol) & (x <= 1 + tol) & (y >= -1 - tol) & (y <= 1 + tol)
    return box & ~((x > tol) & (y < -tol))


# ---------------------------------------------------------------------------
# plain-text dump


def dump_mesh(mesh: TriMesh, path) -> None:
    """Write ``nodes T E`` header, node coordinates, triangles, then edge records.

    Edge records are ``p q K1 K2 nx ny boundary`` with ``K2 = -1`` on the boundary.
    """
    lines = [f"{mesh.n_nodes} {mesh.n_triangles} {mesh.n_edges}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    for (p, q), (k1, k2), (nx, ny), bnd in zip(mesh.edges, mesh.edge_elements, mesh.normals, mesh.boundary):
        lines.append(f"{p} {q} {k1} {k2} {nx:.17g} {ny:.17g} {int(bnd)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh_dump(path) -> dict:
    """Parse a file written by :func:`dump_mesh` into plain arrays."""
    rows = Path(path).read_text().split("\n")
    nN, nT, nE = (int(v) for v in rows[0].split())
    body = rows[1:]
    nodes = np.array([[float(v) for v in r.split()] for r in body[:nN]]).reshape(-1, 2)
    tris = np.array([[int(v) for v in r.split()] for r in body[nN:nN + nT]], dtype=np.int64).reshape(-1, 3)
    rec = [r.split() for r in body[nN + nT:nN + nT + nE]]
    edges = np.array([[int(r[0]), int(r[1])] for r in rec], dtype=np.int64).reshape(-1, 2)
    elems = np.array([[int(r[2]), int(r[3])] for r in rec], dtype=np.int64).reshape(-1, 2)
    normals = np.array([[float(r[4]), float(r[5])] for r in rec]).reshape(-1, 2)
    boundary = np.array([r[6] == "1" for r in rec], dtype=bool)
    return dict(nodes=nodes, triangles=tris, edges=edges, edge_elements=elems, normals=normals, boundary=boundary)
