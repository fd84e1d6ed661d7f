"""Interior-penalty DG assembly over element-local bases.

Three bilinear forms share one edge machinery:

* the DG form over any element basis (MsDFEM with the multiscale basis,
  DFEM with plain hats),
* the Petrov-Galerkin form of MsDPGM, where the test function's volume and
  jump terms and the trial function's jump terms go through ``Π_h``.

All edge integrals run over the fine segments tiling each coarse edge.  On
one segment a trace is linear and a flux ``a ∇u·n`` is constant (fine P1
gradient times the coefficient of the adjacent fine triangle), so every
product is integrated exactly with the segment mass matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import SparseSystem, sparse_from_triplets
from .msbasis import BasisSet


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty parameters: ``beta`` in {-1, 0, 1}, ``gamma0 > 0`` and the length ``rho``.

    ``rho_mode`` is ``"h"`` (coarse cell size) or ``"eps"`` (oscillation
    period); ``rho`` overrides both.
    """

    beta: float = -1.0
    gamma0: float = 20.0
    rho_mode: str = "h"
    rho: float | None = None

    def __post_init__(self):
        if self.beta not in (-1, 0, 1):
            raise ValueError("beta must be -1, 0 or 1")
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if self.rho_mode not in ("h", "eps"):
            raise ValueError("rho_mode must be 'h' or 'eps'")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")

    def rho_value(self, h: float, eps: float | None = None) -> float:
        if self.rho is not None:
            return float(self.rho)
        if self.rho_mode == "eps":
            if eps is None:
                raise ValueError("rho_mode='eps' needs an oscillation period")
            return float(eps)
        return float(h)


class DGSpace:
    """Fully discontinuous space with three DOFs per coarse element.

    DOF ``3*K + i`` multiplies basis function ``i`` of element ``K``.
    """

    def __init__(self, basis: BasisSet, eps: float | None = None):
        self.basis = basis
        self.cf = cf = basis.cf
        self.coarse = coarse = cf.coarse
        self.eps = eps
        r = cf.ratio
        E = coarse.n_edges
        self.n_dofs = 3 * coarse.n_triangles
        self.edge_K = np.where(coarse.edge_elements >= 0, coarse.edge_elements, 0)
        self.has_side = coarse.edge_elements >= 0
        self.edge_nodes = np.zeros((E, 2, r + 1), dtype=np.int64)
        self.edge_tris = np.zeros((E, 2, r), dtype=np.int64)
        for s in (0, 1):
            for e in np.nonzero(self.has_side[:, s])[0]:
                tpl = cf.templates[coarse.tri_kind[self.edge_K[e, s]]]
                slot = cf.edge_slot[e, s]
                en, et = tpl.edge_nodes[slot], tpl.edge_tris[slot]
                if cf.edge_flip[e, s]:
                    en, et = en[::-1], et[::-1]
                self.edge_nodes[e, s] = en
                self.edge_tris[e, s] = et
        self.seg_len = coarse.edge_lengths() / r
        interior = ~coarse.boundary
        # {w} and [v] weights per side; on the boundary both reduce to the trace
        self.avg_w = np.where(interior[:, None], 0.5, np.array([1.0, 0.0]))
        self.jump_w = np.where(interior[:, None], np.array([1.0, -1.0]), np.array([1.0, 0.0]))
        self.edge_dofs = 3 * self.edge_K[:, :, None] + np.arange(3)[None, None, :]
        self._hat_grads = self._coarse_hat_gradients()

    # -- fine-grid calculus on element-wise fields ---------------------------------

    def gradients(self, W: np.ndarray) -> np.ndarray:
        """Fine-triangle gradients of element-wise fields ``W`` ``(nE, k, nK)`` -> ``(nE, k, r², 2)``."""
        cf = self.cf
        out = np.empty(W.shape[:2] + (cf.ratio ** 2, 2))
        for kind, tpl in enumerate(cf.templates):
            sel = self.coarse.tri_kind == kind
            grads = cf.template_geometry[kind][1]
            out[sel] = np.einsum("tak,eita->eitk", grads, W[sel][:, :, tpl.triangles])
        return out

    def traces(self, W: np.ndarray) -> np.ndarray:
        """Values of ``W`` at the fine nodes along every edge, ``(E, 2, k, r+1)``."""
        out = np.empty((len(self.edge_K), 2, W.shape[1], self.cf.ratio + 1))
        for s in (0, 1):
            Wk = W[self.edge_K[:, s]]
            out[:, s] = np.take_along_axis(Wk, self.edge_nodes[:, s][:, None, :], axis=2)
        out *= self.has_side[:, :, None, None]
        return out

    def fluxes(self, W: np.ndarray, grads: np.ndarray | None = None) -> np.ndarray:
        """``a ∇W·n`` on each fine segment of every edge, ``(E, 2, k, r)``."""
        if grads is None:
            grads = self.gradients(W)
        n = self.coarse.normals
        coef = self.basis.coef
        out = np.empty((len(self.edge_K), 2, W.shape[1], self.cf.ratio))
        for s in (0, 1):
            K = self.edge_K[:, s]
            g = grads[K[:, None], :, self.edge_tris[:, s]]  # (E, r, k, 2)
            a = np.take_along_axis(coef[K], self.edge_tris[:, s], axis=1)  # (E, r)
            out[:, s] = np.einsum("erkd,ed,er->ekr", g, n, a)
        out *= self.has_side[:, :, None, None]
        return out

    def volume_weights(self) -> np.ndarray:
        """``a_t |t|`` for each fine triangle of each element, ``(nE, r²)``."""
        areas = np.empty(self.basis.coef.shape)
        for kind in (0, 1):
            sel = self.coarse.tri_kind == kind
            areas[sel] = self.cf.template_geometry[kind][2]
        return self.basis.coef * areas

    def _coarse_hat_gradients(self) -> np.ndarray:
        from .mesh import p1_gradients

        grads, _ = p1_gradients(self.coarse.nodes, self.coarse.triangles)
        return grads  # (nE, 3, 2)

    # -- cached basis data -----------------------------------------------------------

    def basis_data(self):
        if not hasattr(self, "_bd"):
            b = self.basis
            G = self.gradients(b.values)
            self._bd = dict(
                grads=G,
                psi_tr=self.traces(b.values),
                phi_tr=self.traces(b.hats),
                flux=self.fluxes(b.values, G),
            )
        return self._bd


# ---------------------------------------------------------------------------
# segment integration


def _pairs(x: np.ndarray) -> np.ndarray:
    """Per-segment endpoint values: traces ``(..., r+1)`` or constants ``(..., r)`` -> ``(..., r, 2)``."""
    return np.stack([x[..., :-1], x[..., 1:]], axis=-1)


def _const_pairs(x: np.ndarray) -> np.ndarray:
    return np.stack([x, x], axis=-1)


def edge_products(seg_len, V, U, wv, wu) -> np.ndarray:
    """``B[e, s', i, s, j] = ∫_e (wv_s' V_s'i)(wu_s U_sj)`` for per-segment linear data.

    ``V``, ``U`` have shape ``(E, 2, k, r, 2)`` (endpoint pairs per segment).
    """
    V = V * wv[:, :, None, None, None]
    U = U * wu[:, :, None, None, None]
    Ms = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return np.einsum("e,eaipx,xy,ebjpy->eaibj", seg_len, V, Ms, U)


def _scatter_edges(space: DGSpace, B: np.ndarray):
    rows = np.broadcast_to(space.edge_dofs[:, :, :, None, None], B.shape)
    cols = np.broadcast_to(space.edge_dofs[:, None, None, :, :], B.shape)
    ok = space.has_side[:, :, None, None, None] & space.has_side[:, None, None, :, None]
    ok = np.broadcast_to(ok, B.shape)
    return rows[ok], cols[ok], B[ok]


def _scatter_volume(space: DGSpace, Bv: np.ndarray):
    nE = Bv.shape[0]
    d = 3 * np.arange(nE)[:, None] + np.arange(3)[None, :]
    rows = np.broadcast_to(d[:, :, None], Bv.shape)
    cols = np.broadcast_to(d[:, None, :], Bv.shape)
    return rows.ravel(), cols.ravel(), Bv.ravel()


def load_integrals(cf, f, test: np.ndarray) -> np.ndarray:
    """``(f, w_i)`` for element-wise test functions ``test`` ``(nE, 3, nK)``, vertex rule per fine triangle."""
    pts = cf.fine_node_coords
    if callable(f):
        fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    else:
        fv = np.full(pts.shape[:2], float(f))
    out = np.empty((cf.coarse.n_triangles, 3))
    for kind, tpl in enumerate(cf.templates):
        sel = cf.coarse.tri_kind == kind
        areas = cf.template_geometry[kind][2]
        prod = test[sel] * fv[sel][:, None, :]  # (e, 3, nK)
        out[sel] = np.einsum("t,eita->ei", areas / 3.0, prod[:, :, tpl.triangles])
    return out.ravel()


def weak_dirichlet_rhs(g, penalty: PenaltyConfig, space: DGSpace, *, projected: bool = False) -> np.ndarray:
    """Boundary data terms ``β ∫ g a∇v·n + (γ0/ρ) ∫ g v`` on every boundary edge.

    ``projected`` selects the test trace ``Π_h v`` (MsDPGM) instead of ``v``.
    ``g`` is interpolated linearly between the fine nodes of the edge.
    """
    out = np.zeros(space.n_dofs)
    if g is None:
        return out
    bd = space.basis_data()
    bnd = np.nonzero(space.coarse.boundary)[0]
    if len(bnd) == 0:
        return out
    K = space.edge_K[bnd, 0]
    nodes = space.cf.fine_node_coords[K[:, None], space.edge_nodes[bnd, 0]]  # (b, r+1, 2)
    if callable(g):
        gv = np.asarray(g(nodes.reshape(-1, 2)), dtype=float).reshape(nodes.shape[:2])
    else:
        gv = np.full(nodes.shape[:2], float(g))
    if not np.any(gv):
        return out
    rho = penalty.rho_value(space.coarse.h, space.eps)
    Ms = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    gp = _pairs(gv)  # (b, r, 2)
    trace = bd["phi_tr"] if projected else bd["psi_tr"]
    tv = _pairs(trace[bnd, 0])  # (b, 3, r, 2)
    fl = _const_pairs(bd["flux"][bnd, 0])
    L = space.seg_len[bnd]
    pen = np.einsum("b,bipx,xy,bpy->bi", L, tv, Ms, gp)
    flx = np.einsum("b,bipx,xy,bpy->bi", L, fl, Ms, gp)
    contrib = penalty.beta * flx + (penalty.gamma0 / rho) * pen
    np.add.at(out, space.edge_dofs[bnd, 0].ravel(), contrib.ravel())
    return out


def _dg_blocks(space: DGSpace, penalty: PenaltyConfig, petrov: bool):
    bd = space.basis_data()
    rho = penalty.rho_value(space.coarse.h, space.eps)
    G = bd["grads"]
    wt = space.volume_weights()
    psi = _pairs(bd["psi_tr"])
    phi = _pairs(bd["phi_tr"])
    flux = _const_pairs(bd["flux"])
    if petrov:
        # ∫ a ∇ψ̄_j · ∇φ_i with constant ∇φ_i
        mean_flux = np.einsum("et,ejtd->ejd", wt, G)
        vol = np.einsum("eid,ejd->eij", space._hat_grads, mean_flux)
        test_tr, trial_tr = phi, phi
    else:
        vol = np.einsum("et,eitd,ejtd->eij", wt, G, G)
        test_tr, trial_tr = psi, psi
    L = space.seg_len
    B = -edge_products(L, test_tr, flux, space.jump_w, space.avg_w)
    if penalty.beta:
        B += penalty.beta * edge_products(L, flux, trial_tr, space.avg_w, space.jump_w)
    B += (penalty.gamma0 / rho) * edge_products(L, test_tr, trial_tr, space.jump_w, space.jump_w)
    return vol, B


def _assemble(space, f, penalty, g, petrov) -> SparseSystem:
    vol, B = _dg_blocks(space, penalty, petrov)
    rv, cv, vv = _scatter_volume(space, vol)
    re, ce, ve = _scatter_edges(space, B)
    n = space.n_dofs
    A = sparse_from_triplets(np.concatenate([rv, re]), np.concatenate([cv, ce]), np.concatenate([vv, ve]), (n, n))
    test = space.basis.hats if petrov else space.basis.values
    rhs = load_integrals(space.cf, f, test) + weak_dirichlet_rhs(g, penalty, space, projected=petrov)
    symmetric = (not petrov) and penalty.beta == -1
    return SparseSystem(matrix=A, rhs=rhs, symmetric=symmetric)


def assemble_msdfem(space: DGSpace, f, penalty: PenaltyConfig, g=None) -> SparseSystem:
    """DG system ``a(ψ̄_j, ψ̄_i)`` over the multiscale space."""
    return _assemble(space, f, penalty, g, petrov=False)


def assemble_msdpgm(space: DGSpace, f, penalty: PenaltyConfig, g=None) -> SparseSystem:
    """Petrov-Galerkin system ``a_h(ψ̄_j, ψ̄_i)`` with right-hand side ``(f, Π_h ψ̄_i)``."""
    return _assemble(space, f, penalty, g, petrov=True)


def assemble_dfem(cf, field, f, penalty: PenaltyConfig, g=None, eps=None) -> tuple[SparseSystem, DGSpace]:
    """Plain discontinuous P1 system on the coarse grid (same edge machinery)."""
    from .msbasis import hat_basis

    space = DGSpace(hat_basis(cf, field), eps=eps)
    return _assemble(space, f, penalty, g, petrov=False), space


def bilinear_matrix(space: DGSpace, penalty: PenaltyConfig, petrov: bool = True) -> sp.csr_matrix:
    """Matrix of the form alone (no right-hand side)."""
    vol, B = _dg_blocks(space, penalty, petrov)
    rv, cv, vv = _scatter_volume(space, vol)
    re, ce, ve = _scatter_edges(space, B)
    n = space.n_dofs
    return sparse_from_triplets(np.concatenate([rv, re]), np.concatenate([cv, ce]), np.concatenate([vv, ve]), (n, n))
