"""Oversampled and classical multiscale basis functions and the projection onto P1.

Each coarse element carries three fine-grid functions ``ψ̄_i`` stored as
values at the nodes of the element's fine template, together with the P1
nodal functions ``φ_i`` (the "linear shadows") at the same nodes.  The
projection ``Π`` maps ``Σ c_i ψ̄_i`` to ``Σ c_i φ_i``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .coefficient import CoefficientField
from .fem import DEFAULT_TOL, coefficient_on, solve_local_dirichlet
from .mesh import (
    CoarseFineMap,
    PatchSpec,
    barycentric_coordinates,
    build_oversampling_patch,
    patch_fine_coordinates,
    right_triangle_grid,
)


class BasisError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ElementBasis:
    """Multiscale shape functions of one coarse element.

    ``values[i]`` is ``ψ̄_i`` at the template nodes of K, ``hats[i]`` is
    ``φ_i`` there and ``coeffs`` the change of basis ``c_ij`` with
    ``ψ̄_i = Σ_j c_ij ψ_j^S`` on K.
    """

    element: int
    values: np.ndarray
    hats: np.ndarray
    coeffs: np.ndarray
    provenance: str
    patch: PatchSpec | None = None


_grid = lru_cache(maxsize=64)(right_triangle_grid)


def element_hats(cf: CoarseFineMap, K: int) -> np.ndarray:
    tpl = cf.template(K)
    return tpl.barycentric().T.copy()


def compute_oversampling_basis(
    cf: CoarseFineMap, K: int, patch: PatchSpec, field: CoefficientField, *, tol: float = DEFAULT_TOL
) -> ElementBasis:
    """Basis on K from three ``a``-harmonic solves on the macro-triangle ``S(K)``."""
    grid = _grid(patch.grid.N, patch.grid.kind)
    coords = patch_fine_coordinates(patch)
    coef = coefficient_on(coords, grid.triangles, field)
    lam_S = grid.barycentric()  # φ_j^S at every patch node
    bnd = grid.boundary_nodes
    psi_S = solve_local_dirichlet(coords, grid.triangles, coef, bnd, lam_S[bnd], tol=tol)
    # φ_j^S at the three vertices of K; c is the inverse of that matrix
    tpl = cf.template(K)
    vert_nodes = tpl.lookup[tpl.vertices[:, 1], tpl.vertices[:, 0]]
    P = lam_S[patch.restriction[vert_nodes]].T  # P[j, k] = φ_j^S(x_k^K)
    if not np.isfinite(np.linalg.cond(P)) or np.linalg.cond(P) > 1e12:
        raise BasisError(f"degenerate oversampling patch for element {K}")
    C = np.linalg.inv(P)
    values = C @ psi_S[patch.restriction].T
    return ElementBasis(
        element=K,
        values=values,
        hats=element_hats(cf, K),
        coeffs=C,
        provenance=f"oversampled(margin={patch.margin})",
        patch=patch,
    )


def compute_classical_basis(cf: CoarseFineMap, K: int, field: CoefficientField, *, tol: float = DEFAULT_TOL) -> ElementBasis:
    """Basis from local solves on K itself with the P1 hats as boundary data."""
    tpl = cf.template(K)
    coords = cf.fine_node_coords[K]
    coef = coefficient_on(coords, tpl.triangles, field)
    hats = element_hats(cf, K)
    bnd = tpl.boundary_nodes
    sol = solve_local_dirichlet(coords, tpl.triangles, coef, bnd, hats[:, bnd].T, tol=tol)
    return ElementBasis(element=K, values=sol.T, hats=hats, coeffs=np.eye(3), provenance="classical")


def project_pi(basis: ElementBasis, coefficients) -> np.ndarray:
    """Nodal values on K of ``Π_K(Σ c_i ψ̄_i) = Σ c_i φ_i``."""
    return np.asarray(coefficients, dtype=float) @ basis.hats


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Multiscale basis of every coarse element, stacked.

    ``values`` has shape ``(nE, 3, nK)``; ``hats`` is ``(nE, 3, nK)``;
    ``coef`` holds the coefficient at the fine-triangle centroids of each
    element, ``(nE, r²)``.
    """

    cf: CoarseFineMap
    values: np.ndarray
    hats: np.ndarray
    coeffs: np.ndarray
    coef: np.ndarray
    kind: str
    margins: np.ndarray
    separations: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.values.shape[0]

    def element(self, K: int) -> ElementBasis:
        return ElementBasis(K, self.values[K], self.hats[K], self.coeffs[K], self.kind)

    def expand(self, dofs) -> np.ndarray:
        """Element-wise fine values of ``Σ_K Σ_i u_{K,i} ψ̄_i^K``; dofs shape ``(nE, 3)``."""
        return np.einsum("ei,eik->ek", np.asarray(dofs).reshape(-1, 3), self.values)

    def project(self, dofs) -> np.ndarray:
        """Element-wise fine values of ``Π_h`` of the same function."""
        return np.einsum("ei,eik->ek", np.asarray(dofs).reshape(-1, 3), self.hats)

    def d_tilde(self) -> float:
        """Smallest ``(h_S - h_K)/3`` over the elements after boundary adjustment."""
        return float(self.margins.min()) * self.cf.fine.h


def fine_coefficient(cf: CoarseFineMap, field: CoefficientField) -> np.ndarray:
    cent = cf.fine_centroids
    vals = field.eval(cent.reshape(-1, 2)).reshape(cent.shape[:2])
    if np.any(vals <= 0):
        from .coefficient import NonEllipticError

        raise NonEllipticError("coefficient is not positive on the mesh")
    return vals


def hat_basis(cf: CoarseFineMap, field: CoefficientField) -> BasisSet:
    """Plain P1 hats in the BasisSet layout (ψ̄ = φ)."""
    nE = cf.coarse.n_triangles
    hats = np.stack([cf.templates[k].barycentric().T for k in cf.coarse.tri_kind])
    return BasisSet(cf, hats, hats, np.broadcast_to(np.eye(3), (nE, 3, 3)).copy(),
                    fine_coefficient(cf, field), "p1", np.zeros(nE, int), np.zeros(nE))


def build_basis(
    cf: CoarseFineMap,
    field: CoefficientField,
    kind: str = "oversampled",
    *,
    factor: float = 4.0,
    margin: int | None = None,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> BasisSet:
    """Basis for all coarse elements; ``kind`` is ``"oversampled"`` or ``"classical"``.

    ``margin`` (fine cells between K and S(K)) overrides ``factor``.  With
    ``workers > 1`` elements are processed on a thread pool; every element
    writes to its own slot so the result does not depend on scheduling.
    """
    nE = cf.coarse.n_triangles
    nK = cf.n_local
    values = np.empty((nE, 3, nK))
    coeffs = np.empty((nE, 3, 3))
    margins = np.zeros(nE, dtype=int)
    seps = np.zeros(nE)

    def work(K):
        if kind == "oversampled":
            patch = build_oversampling_patch(cf.coarse, K, cf.fine.n, factor, margin=margin)
            b = compute_oversampling_basis(cf, K, patch, field, tol=tol)
            margins[K] = patch.margin
            seps[K] = patch.separation
        elif kind == "classical":
            b = compute_classical_basis(cf, K, field, tol=tol)
        else:
            raise ValueError(f"unknown basis kind {kind!r}")
        values[K] = b.values
        coeffs[K] = b.coeffs

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(nE)))
    else:
        for K in range(nE):
            work(K)
    hats = np.stack([cf.templates[k].barycentric().T for k in cf.coarse.tri_kind])
    return BasisSet(cf, values, hats, coeffs, fine_coefficient(cf, field), kind, margins, seps)


def barycentric_at(cf: CoarseFineMap, K: int, points) -> np.ndarray:
    verts = cf.coarse.nodes[cf.coarse.triangles[K]]
    return barycentric_coordinates(verts, np.atleast_2d(points))
