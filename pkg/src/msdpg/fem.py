"""Conforming P1 finite elements and sparse linear algebra."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficient import CoefficientField, NonEllipticError
from .mesh import TriMesh, build_structured_mesh, p1_gradients

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DIRECT_LIMIT = 10_000
# local patch problems: one factorisation serves three right-hand sides
LOCAL_DIRECT_LIMIT = 60_000


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` holds the achieved relative residual."""

    def __init__(self, message, residual=np.nan):
        super().__init__(message)
        self.residual = residual


def sparse_from_triplets(rows, cols, vals, shape) -> sp.csr_matrix:
    """CSR matrix summing duplicate entries in a fixed order.

    Contributions to one entry are added sorted by value, so the result does
    not depend on the order the triplets were generated in.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows) == 0:
        return sp.csr_matrix(shape)
    start = np.ones(len(rows), dtype=bool)
    start[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    idx = np.nonzero(start)[0]
    summed = np.add.reduceat(vals, idx)
    return sp.csr_matrix((summed, (rows[idx], cols[idx])), shape=shape)


def stiffness_matrix(nodes, triangles, coef) -> sp.csr_matrix:
    """``∫ a ∇u·∇v`` with ``coef`` constant per triangle (scalar per triangle or one 2x2 tensor)."""
    grads, areas = p1_gradients(nodes, triangles)
    coef = np.asarray(coef, dtype=float)
    if coef.shape == (2, 2):
        local = np.einsum("tak,kl,tbl->tab", grads, coef, grads) * areas[:, None, None]
    else:
        local = np.einsum("tak,tbk->tab", grads, grads) * (coef * areas)[:, None, None]
    rows = np.repeat(triangles, 3, axis=1)
    cols = np.tile(triangles, (1, 3))
    n = len(nodes)
    return sparse_from_triplets(rows, cols, local.reshape(len(triangles), 9), (n, n))


def load_vector(nodes, triangles, f) -> np.ndarray:
    """``∫ f v`` by the three-vertex rule on each triangle."""
    _, areas = p1_gradients(nodes, triangles)
    fv = _values_at(f, nodes)
    contrib = (areas / 3.0)[:, None] * fv[triangles]
    out = np.zeros(len(nodes))
    # deterministic: bincount accumulates in index order
    for k in range(3):
        out += np.bincount(triangles[:, k], weights=contrib[:, k], minlength=len(nodes))
    return out


def _values_at(fn, points) -> np.ndarray:
    if fn is None:
        return np.zeros(len(points))
    if callable(fn):
        return np.asarray(fn(points), dtype=float).reshape(len(points))
    return np.full(len(points), float(fn))


def coefficient_on(mesh_or_nodes, triangles=None, field: CoefficientField | None = None) -> np.ndarray:
    """One-point (centroid) samples of ``field``; rejects non-positive values."""
    if triangles is None:
        cent = mesh_or_nodes.centroids()
    else:
        cent = mesh_or_nodes[triangles].mean(axis=1)
    vals = field.eval(cent)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise NonEllipticError("coefficient is not positive on the mesh")
    return vals


@dataclass
class SparseSystem:
    """Linear system with eliminated Dirichlet unknowns.

    ``matrix`` acts on the ``free`` unknowns; :meth:`expand` re-inserts the
    prescribed values at ``fixed``.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric: bool
    free: np.ndarray | None = None
    fixed: np.ndarray | None = None
    fixed_values: np.ndarray | None = None
    size: int | None = None

    def expand(self, x: np.ndarray) -> np.ndarray:
        if self.free is None:
            return x
        out = np.zeros(self.size)
        out[self.free] = x
        out[self.fixed] = self.fixed_values
        return out


def eliminate_dirichlet(A, b, fixed, values, symmetric=True) -> SparseSystem:
    n = A.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    A = A.tocsr()
    rhs = b[free] - A[free][:, fixed] @ values
    return SparseSystem(
        matrix=A[free][:, free].tocsr(), rhs=rhs, symmetric=symmetric,
        free=free, fixed=np.asarray(fixed), fixed_values=np.asarray(values, float), size=n,
    )


def assemble_p1(mesh: TriMesh, field: CoefficientField | None, f=1.0, g=None, *, coef=None) -> SparseSystem:
    """Conforming P1 system for ``-div(a grad u) = f``, ``u = g`` on the boundary.

    ``coef`` overrides the centroid samples of ``field`` (per-triangle values
    or a constant 2x2 tensor).
    """
    if coef is None:
        coef = coefficient_on(mesh, field=field)
    elif np.ndim(coef) == 1 and np.any(np.asarray(coef) <= 0):
        raise NonEllipticError("coefficient is not positive on the mesh")
    A = stiffness_matrix(mesh.nodes, mesh.triangles, coef)
    b = load_vector(mesh.nodes, mesh.triangles, f)
    bnd = mesh.boundary_nodes()
    return eliminate_dirichlet(A, b, bnd, _values_at(g, mesh.nodes[bnd]))


def solve_sparse(
    system,
    rhs=None,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    symmetric: bool | None = None,
    method: str = "auto",
    info: dict | None = None,
) -> np.ndarray:
    """Solve ``A x = b`` to relative residual ``tol``.

    ``method``: ``"auto"`` (direct factorisation up to 10⁴ unknowns, Krylov
    above), ``"direct"``, ``"cg"`` or ``"bicgstab"``.  Krylov solvers use
    Jacobi preconditioning.  ``info`` (optional dict) receives the method,
    iteration count and achieved residual.
    """
    if isinstance(system, SparseSystem):
        A, b = system.matrix, system.rhs
        sym = system.symmetric if symmetric is None else symmetric
    else:
        A, b = sp.csr_matrix(system), np.asarray(rhs, dtype=float)
        sym = bool(symmetric) if symmetric is not None else _is_symmetric(A)
    n = A.shape[0]
    bnorm = np.linalg.norm(b)
    if n == 0 or bnorm == 0:
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag == 0):
        raise SolverError(f"matrix has {int(np.sum(diag == 0))} zero diagonal entries")
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else ("cg" if sym else "bicgstab")
    max_iter = max_iter or max(10 * n, 1000)
    iters = 0
    if method == "direct":
        lu = spla.splu(A.tocsc())
        x = lu.solve(b)
        for _ in range(3):  # iterative refinement
            r = b - A @ x
            if np.linalg.norm(r) <= tol * bnorm:
                break
            x += lu.solve(r)
            iters += 1
    elif method in ("cg", "bicgstab"):
        M = spla.LinearOperator(A.shape, matvec=lambda v: v / diag, dtype=float)
        counter = [0]

        def cb(_):
            counter[0] += 1

        solver = spla.cg if method == "cg" else spla.bicgstab
        x = np.zeros(n)
        for _ in range(4):  # restart on the true residual
            x, _flag = solver(A, b, x0=x, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=cb)
            if np.linalg.norm(b - A @ x) <= tol * bnorm:
                break
        iters = counter[0]
    else:
        raise ValueError(f"unknown solver method {method!r}")
    res = np.linalg.norm(b - A @ x) / bnorm
    if info is not None:
        info.update(method=method, iterations=iters, residual=res)
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"{method} reached relative residual {res:.3e} > {tol:.1e}", residual=res)
    return x


def _is_symmetric(A) -> bool:
    d = abs(A - A.T)
    return d.nnz == 0 or d.max() <= 1e-12 * abs(A).max()


@dataclass
class P1Function:
    """Nodal values of a continuous P1 function on ``mesh``."""

    mesh: TriMesh
    values: np.ndarray

    def gradients(self) -> np.ndarray:
        grads, _ = p1_gradients(self.mesh.nodes, self.mesh.triangles)
        return np.einsum("tak,ta->tk", grads, self.values[self.mesh.triangles])


def solve_local_dirichlet(nodes, triangles, coef, boundary_nodes, boundary_values, *, tol=DEFAULT_TOL):
    """Discrete ``a``-harmonic extension of boundary data.

    ``boundary_values`` may hold several right-hand sides as columns; the
    interior block is factorised once and reused for all of them.
    """
    A = stiffness_matrix(nodes, triangles, coef).tocsr()
    n = len(nodes)
    g = np.asarray(boundary_values, dtype=float)
    squeeze = g.ndim == 1
    g = g.reshape(len(boundary_nodes), -1)
    mask = np.ones(n, dtype=bool)
    mask[boundary_nodes] = False
    free = np.nonzero(mask)[0]
    out = np.zeros((n, g.shape[1]))
    out[boundary_nodes] = g
    if len(free):
        Aff = A[free][:, free]
        rhs = -(A[free][:, boundary_nodes] @ g)
        if len(free) <= LOCAL_DIRECT_LIMIT:
            lu = spla.splu(Aff.tocsc())
            sol = lu.solve(rhs)
            r = rhs - Aff @ sol
            sol += lu.solve(r)
            out[free] = sol
        else:
            sysm = SparseSystem(Aff.tocsr(), None, True)
            for k in range(g.shape[1]):
                sysm.rhs = rhs[:, k]
                out[free, k] = solve_sparse(sysm, tol=tol)
    return out[:, 0] if squeeze else out


def resolution_check(field, n_fine: int, min_cells: int = 8) -> None:
    eps = getattr(field, "eps", None)
    if eps is not None and eps * n_fine < min_cells:
        warnings.warn(
            f"fine grid under-resolves the oscillation: eps*n_fine = {eps * n_fine:.2f} < {min_cells}",
            stacklevel=3,
        )


def reference_solution(domain, field, f=1.0, g=None, n_fine=320, *, tol=DEFAULT_TOL, mesh=None, info=None) -> P1Function:
    """Fine-grid conforming P1 solution used as the exact solution in error reports."""
    resolution_check(field, n_fine)
    mesh = mesh or build_structured_mesh(domain, n_fine)
    system = assemble_p1(mesh, field, f, g)
    x = solve_sparse(system, tol=tol, method="cg", info=info)
    return P1Function(mesh, system.expand(x))
