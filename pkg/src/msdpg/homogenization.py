"""Periodic cell problems, the effective tensor and the first-order corrector."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coefficient import CoefficientField
from .fem import DEFAULT_TOL, P1Function, assemble_p1, coefficient_on, solve_sparse, stiffness_matrix
from .mesh import TriMesh, build_structured_mesh, p1_gradients


@dataclass(frozen=True, eq=False)
class CellSolution:
    """Correctors ``chi[j]`` (nodal, zero mean, periodic) on the unit cell and ``a_star``."""

    mesh: TriMesh
    chi: np.ndarray
    a_star: np.ndarray
    coef: np.ndarray

    @property
    def n(self) -> int:
        return self.mesh.n

    def chi_at(self, y) -> np.ndarray:
        """P1 interpolant of both correctors at ``y mod 1``; returns ``(2, P)``."""
        y = np.mod(np.atleast_2d(np.asarray(y, dtype=float)), 1.0)
        n = self.n
        s = y * n
        i = np.minimum(np.floor(s[:, 0]).astype(np.int64), n - 1)
        j = np.minimum(np.floor(s[:, 1]).astype(np.int64), n - 1)
        sx, sy = s[:, 0] - i, s[:, 1] - j
        lk = self.mesh.node_lookup
        v00, v10 = self.chi[:, lk[j, i]], self.chi[:, lk[j, i + 1]]
        v01, v11 = self.chi[:, lk[j + 1, i]], self.chi[:, lk[j + 1, i + 1]]
        lower = sx >= sy
        return np.where(
            lower,
            v00 + sx * (v10 - v00) + sy * (v11 - v10),
            v00 + sy * (v01 - v00) + sx * (v11 - v01),
        )


def _periodic_map(mesh: TriMesh) -> np.ndarray:
    n = mesh.n
    ij = mesh.grid_ij % n
    return ij[:, 1] * n + ij[:, 0]


def solve_cell_problem(field: CoefficientField, n_cell: int, *, tol: float = DEFAULT_TOL) -> CellSolution:
    """Solve ``-div(a grad chi^j) = div(a e_j)`` on the periodic unit cell.

    Opposite faces share unknowns; one node is pinned and the mean removed
    afterwards.  ``a*_ik = ∫_Y a (δ_ik + ∂_i chi^k)``.
    """
    mesh = build_structured_mesh("unit-square", n_cell)
    coef = coefficient_on(mesh, field=field)
    grads, areas = p1_gradients(mesh.nodes, mesh.triangles)
    A = stiffness_matrix(mesh.nodes, mesh.triangles, coef)
    pm = _periodic_map(mesh)
    m = n_cell * n_cell
    R = sp.csr_matrix((np.ones(mesh.n_nodes), (pm, np.arange(mesh.n_nodes))), shape=(m, mesh.n_nodes))
    Ap = (R @ A @ R.T).tocsr()
    wa = coef * areas
    free = np.arange(1, m)
    Aff = Ap[free][:, free].tocsr()

    def one(k):
        # weak form: ∫ a grad chi·grad v = -∫ a e_k·grad v
        local = -wa[:, None] * grads[:, :, k]
        b = np.zeros(mesh.n_nodes)
        for a in range(3):
            b += np.bincount(mesh.triangles[:, a], weights=local[:, a], minlength=mesh.n_nodes)
        bp = R @ b
        x = np.zeros(m)
        x[free] = solve_sparse(Aff, bp[free], tol=tol, symmetric=True)
        chi = x[pm]
        mass = np.zeros(mesh.n_nodes)
        for a in range(3):
            mass += np.bincount(mesh.triangles[:, a], weights=areas / 3.0, minlength=mesh.n_nodes)
        return chi - (mass @ chi) / mass.sum()

    with ThreadPoolExecutor(max_workers=2) as pool:
        chi = np.stack(list(pool.map(one, (0, 1))))
    g = np.einsum("tak,jta->jtk", grads, chi[:, mesh.triangles])  # ∇chi^j per triangle
    a_star = np.empty((2, 2))
    for i in range(2):
        for k in range(2):
            a_star[i, k] = np.sum(wa * ((i == k) + g[k, :, i]))
    return CellSolution(mesh=mesh, chi=chi, a_star=a_star, coef=coef)


def solve_homogenized(domain: str, a_star, f=1.0, g=None, n: int = 64, *, tol: float = DEFAULT_TOL,
                      mesh: TriMesh | None = None) -> P1Function:
    """Conforming P1 solve with the constant tensor ``a_star``."""
    a_star = np.asarray(a_star, dtype=float)
    if a_star.shape != (2, 2) or np.any(np.linalg.eigvalsh(0.5 * (a_star + a_star.T)) <= 0):
        raise ValueError("a_star must be a positive definite 2x2 matrix")
    mesh = mesh or build_structured_mesh(domain, n)
    system = assemble_p1(mesh, None, f, g, coef=a_star)
    return P1Function(mesh, system.expand(solve_sparse(system, tol=tol)))


def nodal_gradients(u: P1Function) -> np.ndarray:
    """Area-weighted average of the triangle gradients around each node, ``(N, 2)``."""
    mesh = u.mesh
    grads, areas = p1_gradients(mesh.nodes, mesh.triangles)
    tg = np.einsum("tak,ta->tk", grads, u.values[mesh.triangles]) * areas[:, None]
    num = np.zeros((mesh.n_nodes, 2))
    den = np.zeros(mesh.n_nodes)
    for a in range(3):
        idx = mesh.triangles[:, a]
        den += np.bincount(idx, weights=areas, minlength=mesh.n_nodes)
        for k in range(2):
            num[:, k] += np.bincount(idx, weights=tg[:, k], minlength=mesh.n_nodes)
    return num / den[:, None]


def corrector_u1(u0: P1Function, cell: CellSolution, eps: float) -> P1Function:
    """``u1 = u0 + eps chi^j(x/eps) ∂_j u0`` at the nodes of ``u0``'s mesh."""
    du = nodal_gradients(u0)
    chi = cell.chi_at(u0.mesh.nodes / eps)
    return P1Function(u0.mesh, u0.values + eps * np.einsum("jp,pj->p", chi, du))


def h1_difference(u: P1Function, v: P1Function, coef=None) -> float:
    """``(∫ c|∇(u−v)|² + ∫ (u−v)²)^½`` on a shared mesh; ``c = 1`` unless given per triangle."""
    if u.mesh.signature() != v.mesh.signature():
        raise ValueError("functions live on different meshes")
    mesh = u.mesh
    grads, areas = p1_gradients(mesh.nodes, mesh.triangles)
    w = (u.values - v.values)[mesh.triangles]
    g = np.einsum("tak,ta->tk", grads, w)
    c = 1.0 if coef is None else np.asarray(coef, dtype=float)
    semi = np.sum(c * areas * (g ** 2).sum(-1))
    l2 = np.sum(areas * ((w ** 2).sum(-1) + w.sum(-1) ** 2)) / 12.0
    return float(np.sqrt(semi + l2))
