"""Coarse solvers compared in the experiments.

``FEM`` and ``DFEM`` are P1 baselines on the coarse grid; ``MsPGM`` and
``OMsPGM`` are conforming-DOF Petrov-Galerkin multiscale methods (trial:
classical or oversampled multiscale basis glued at the coarse nodes, test:
P1 hats); ``MsDFEM`` and ``MsDPGM`` are the discontinuous multiscale
methods.  Every solver returns its solution as element-wise values at the
fine template nodes so that all methods are measured the same way.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .coefficient import CoefficientField
from .dg import DGSpace, PenaltyConfig, assemble_dfem, assemble_msdfem, assemble_msdpgm, load_integrals
from .fem import DEFAULT_TOL, _values_at, eliminate_dirichlet, solve_sparse, sparse_from_triplets, stiffness_matrix
from .mesh import CoarseFineMap
from .msbasis import BasisSet, hat_basis

METHODS = ("FEM", "DFEM", "MsPGM", "OMsPGM", "MsDFEM", "MsDPGM")


@dataclass
class MethodResult:
    name: str
    dofs: np.ndarray
    fine: np.ndarray
    t_assemble: float
    t_solve: float
    info: dict = field(default_factory=dict)
    space: DGSpace | None = None


def _timed_solve(system, tol):
    info = {}
    t = time.perf_counter()
    x = solve_sparse(system, tol=tol, info=info)
    return x, time.perf_counter() - t, info


def solve_fem(cf: CoarseFineMap, field: CoefficientField, f, g=None, *, tol=DEFAULT_TOL) -> MethodResult:
    """Coarse conforming P1; the coefficient enters through its fine-grid average on each element."""
    t0 = time.perf_counter()
    hb = hat_basis(cf, field)
    coarse = cf.coarse
    areas = np.stack([cf.template_geometry[k][2] for k in coarse.tri_kind])
    coef = (hb.coef * areas).sum(axis=1) / areas.sum(axis=1)
    A = stiffness_matrix(coarse.nodes, coarse.triangles, coef)
    b = _conforming_rhs(cf, hb, f)
    bnd = coarse.boundary_nodes()
    system = eliminate_dirichlet(A, b, bnd, _values_at(g, coarse.nodes[bnd]))
    t1 = time.perf_counter() - t0
    x, t2, info = _timed_solve(system, tol)
    U = system.expand(x)
    return MethodResult("FEM", U, hb.expand(U[coarse.triangles]), t1, t2, info)


def _conforming_rhs(cf, basis: BasisSet, f) -> np.ndarray:
    per_elem = load_integrals(cf, f, basis.hats)
    return np.bincount(cf.coarse.triangles.ravel(), weights=per_elem, minlength=cf.coarse.n_nodes)


def solve_conforming_pg(basis: BasisSet, f, g=None, *, name="OMsPGM", tol=DEFAULT_TOL) -> MethodResult:
    """Multiscale Petrov-Galerkin with nodal DOFs: ``Σ_K ∫_K a ∇ψ̄_j·∇φ_i``, load ``(f, φ_i)``."""
    t0 = time.perf_counter()
    cf = basis.cf
    coarse = cf.coarse
    space = DGSpace(basis)
    G = space.gradients(basis.values)
    wt = space.volume_weights()
    mean_flux = np.einsum("et,ejtd->ejd", wt, G)
    vol = np.einsum("eid,ejd->eij", space._hat_grads, mean_flux)
    tri = coarse.triangles
    rows = np.broadcast_to(tri[:, :, None], vol.shape)
    cols = np.broadcast_to(tri[:, None, :], vol.shape)
    n = coarse.n_nodes
    A = sparse_from_triplets(rows, cols, vol, (n, n))
    b = _conforming_rhs(cf, basis, f)
    bnd = coarse.boundary_nodes()
    system = eliminate_dirichlet(A, b, bnd, _values_at(g, coarse.nodes[bnd]), symmetric=False)
    t1 = time.perf_counter() - t0
    x, t2, info = _timed_solve(system, tol)
    U = system.expand(x)
    return MethodResult(name, U, basis.expand(U[tri]), t1, t2, info)


def solve_dg(basis: BasisSet, f, penalty: PenaltyConfig, g=None, *, petrov=True, eps=None, tol=DEFAULT_TOL) -> MethodResult:
    t0 = time.perf_counter()
    space = DGSpace(basis, eps=eps)
    system = (assemble_msdpgm if petrov else assemble_msdfem)(space, f, penalty, g)
    t1 = time.perf_counter() - t0
    x, t2, info = _timed_solve(system, tol)
    return MethodResult("MsDPGM" if petrov else "MsDFEM", x, basis.expand(x), t1, t2, info, space)


def solve_dfem(cf, field, f, penalty: PenaltyConfig, g=None, *, eps=None, tol=DEFAULT_TOL) -> MethodResult:
    t0 = time.perf_counter()
    system, space = assemble_dfem(cf, field, f, penalty, g, eps=eps)
    t1 = time.perf_counter() - t0
    x, t2, info = _timed_solve(system, tol)
    return MethodResult("DFEM", x, space.basis.expand(x), t1, t2, info, space)
