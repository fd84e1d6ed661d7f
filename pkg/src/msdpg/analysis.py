"""Error measures and discrete norms.

Every function compares element-wise fine-grid representations: an array
``(nE, nK)`` holding, for each coarse element, values at the nodes of its
fine template.  A global fine P1 function is gathered into that layout with
:func:`gather`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dg import DGSpace, PenaltyConfig, _const_pairs, _pairs, _scatter_edges, _scatter_volume, bilinear_matrix, edge_products
from .fem import P1Function, sparse_from_triplets
from .mesh import CoarseFineMap

CSV_COLUMNS = (
    "method", "h", "eps_or_seed", "beta", "gamma0", "rho_mode", "factor",
    "err_L2", "err_Linf", "err_energy", "T1", "T2",
)
NORM_KINDS = ("h-omega", "E")


class MeshMismatchError(ValueError):
    pass


def gather(cf: CoarseFineMap, u: P1Function) -> np.ndarray:
    """Element-wise view ``(nE, nK)`` of a P1 function on the global fine mesh."""
    if u.mesh.signature() != cf.fine.signature():
        raise MeshMismatchError("reference lives on a different fine mesh")
    return np.asarray(u.values)[cf.elem_nodes]


def _fine_weights(cf: CoarseFineMap, coef: np.ndarray):
    areas = np.empty(coef.shape)
    for kind in (0, 1):
        areas[cf.coarse.tri_kind == kind] = cf.template_geometry[kind][2]
    return areas


def broken_sq_norms(cf: CoarseFineMap, coef: np.ndarray, W: np.ndarray) -> tuple[float, float, float]:
    """``(∫w², max|w|, Σ_K ∫_K a|∇w|²)`` for an element-wise fine field ``W``.

    The L² integral is exact for piecewise linears:
    ``|t|/12 (Σ w_a² + (Σ w_a)²)`` on each fine triangle.
    """
    l2 = 0.0
    en = 0.0
    for kind, tpl in enumerate(cf.templates):
        sel = cf.coarse.tri_kind == kind
        if not np.any(sel):
            continue
        _, grads, areas = cf.template_geometry[kind]
        wt = W[sel][:, tpl.triangles]  # (e, t, 3)
        l2 += float(np.sum(areas * ((wt ** 2).sum(-1) + wt.sum(-1) ** 2)) / 12.0)
        g = np.einsum("tak,eta->etk", grads, wt)
        en += float(np.sum(coef[sel] * areas * (g ** 2).sum(-1)))
    return l2, float(np.max(np.abs(W))) if W.size else 0.0, en


@dataclass
class ErrorReport:
    """Relative errors of one method plus run metadata and timings (seconds)."""

    method: str
    err_L2: float = math.nan
    err_Linf: float = math.nan
    err_energy: float = math.nan
    T1: float | None = None
    T2: float | None = None
    meta: dict = field(default_factory=dict)
    failed: str | None = None

    def values(self, *, timings: bool = True) -> list[str]:
        m = self.meta

        def num(x):
            return "nan" if x is None or not np.isfinite(x) else f"{x:.6e}"

        def tm(x):
            return num(x) if timings and x is not None else "--"

        method = self.method if self.failed is None else f"{self.method}(failed)"
        return [
            method, f"{m.get('h', math.nan):.6g}", str(m.get("eps_or_seed", "")), f"{m.get('beta', '')}",
            f"{m.get('gamma0', '')}", str(m.get("rho_mode", "")), f"{m.get('factor', '')}",
            num(self.err_L2), num(self.err_Linf), num(self.err_energy), tm(self.T1), tm(self.T2),
        ]

    def csv_row(self, *, timings: bool = True) -> str:
        return ",".join(self.values(timings=timings))


def relative_errors(cf: CoarseFineMap, coef: np.ndarray, u_h: np.ndarray, u_e, *, method: str = "", meta=None) -> ErrorReport:
    """Relative L², L^∞ and ``‖·‖_{1,h}`` errors of ``u_h`` against ``u_e``.

    ``u_h`` and ``u_e`` are element-wise fine arrays; ``u_e`` may also be a
    :class:`P1Function` on ``cf.fine``.  ``‖v‖²_{1,h} = Σ_K ∫_K a|∇v|² + ‖v‖²``.
    """
    ue = gather(cf, u_e) if isinstance(u_e, P1Function) else np.asarray(u_e, dtype=float)
    uh = np.asarray(u_h, dtype=float)
    if uh.shape != ue.shape:
        raise MeshMismatchError(f"shape {uh.shape} does not match reference {ue.shape}")
    el2, einf, een = broken_sq_norms(cf, coef, uh - ue)
    rl2, rinf, ren = broken_sq_norms(cf, coef, ue)

    def rel(num, den):
        if den == 0:
            return 0.0 if num == 0 else math.inf
        return num / den

    return ErrorReport(
        method=method,
        err_L2=rel(math.sqrt(el2), math.sqrt(rl2)),
        err_Linf=rel(einf, rinf),
        err_energy=rel(math.sqrt(een + el2), math.sqrt(ren + rl2)),
        meta=dict(meta or {}),
    )


def energy_difference(cf, coef, u, v) -> float:
    """Relative ``‖u − v‖_{1,h} / ‖v‖_{1,h}`` of two element-wise fields."""
    return relative_errors(cf, coef, u, v).err_energy


# ---------------------------------------------------------------------------
# discrete DG norms


def _norm_weights(space: DGSpace, penalty: PenaltyConfig):
    rho = penalty.rho_value(space.coarse.h, space.eps)
    return rho / penalty.gamma0, penalty.gamma0 / rho


def dg_norm_matrix(space: DGSpace, penalty: PenaltyConfig, kind: str = "h-omega") -> sp.csr_matrix:
    """Gram matrix ``N`` with ``‖v‖² = vᵀ N v`` for DG coefficient vectors.

    ``h-omega`` penalises jumps of ``Π_h v``; ``E`` penalises jumps of ``v``.
    """
    if kind not in NORM_KINDS:
        raise ValueError(f"kind must be one of {NORM_KINDS}")
    bd = space.basis_data()
    wt = space.volume_weights()
    vol = np.einsum("et,eitd,ejtd->eij", wt, bd["grads"], bd["grads"])
    w_flux, w_jump = _norm_weights(space, penalty)
    flux = _const_pairs(bd["flux"])
    tr = _pairs(bd["phi_tr"] if kind == "h-omega" else bd["psi_tr"])
    L = space.seg_len
    B = w_flux * edge_products(L, flux, flux, space.avg_w, space.avg_w)
    B += w_jump * edge_products(L, tr, tr, space.jump_w, space.jump_w)
    rv, cv, vv = _scatter_volume(space, vol)
    re, ce, ve = _scatter_edges(space, B)
    n = space.n_dofs
    return sparse_from_triplets(np.concatenate([rv, re]), np.concatenate([cv, ce]), np.concatenate([vv, ve]), (n, n))


def dg_norm(v, space: DGSpace, penalty: PenaltyConfig, kind: str = "h-omega") -> float:
    v = np.asarray(v, dtype=float).ravel()
    q = float(v @ (dg_norm_matrix(space, penalty, kind) @ v))
    return math.sqrt(max(q, 0.0))


def _edge_terms(space: DGSpace, grad_field: np.ndarray, jump_field: np.ndarray, penalty: PenaltyConfig):
    """Flux-average and jump contributions for element-wise fine fields."""
    L = space.seg_len
    w_flux, w_jump = _norm_weights(space, penalty)
    fl = space.fluxes(grad_field[:, None, :])[:, :, 0]  # (E, 2, r)
    avg = (fl * space.avg_w[:, :, None]).sum(axis=1)
    flux_term = float(np.sum(L[:, None] * avg ** 2))
    tr = space.traces(jump_field[:, None, :])[:, :, 0]  # (E, 2, r+1)
    jmp = (tr * space.jump_w[:, :, None]).sum(axis=1)
    a, b = jmp[:, :-1], jmp[:, 1:]
    jump_term = float(np.sum(L[:, None] * (a * a + a * b + b * b)) / 3.0)
    return w_flux * flux_term, w_jump * jump_term


def error_functional(u_ref, u_h, space: DGSpace, penalty: PenaltyConfig) -> float:
    """Discrete ``E(u_ref, u_h)``: broken energy, flux averages and ``[u_ref − Π_h u_h]`` jumps.

    ``u_ref`` is a fine P1 function (or element-wise array); ``u_h`` a DG
    coefficient vector.  Reference fluxes are the one-sided fine gradients of
    each neighbour, averaged across the coarse edge.
    """
    cf = space.cf
    ue = gather(cf, u_ref) if isinstance(u_ref, P1Function) else np.asarray(u_ref, dtype=float)
    dofs = np.asarray(u_h, dtype=float).reshape(-1, 3)
    diff = ue - space.basis.expand(dofs)
    _, _, vol = broken_sq_norms(cf, space.basis.coef, diff)
    f_term, j_term = _edge_terms(space, diff, ue - space.basis.project(dofs), penalty)
    return math.sqrt(vol + f_term + j_term)


@dataclass
class CoercivityResult:
    min_quotient: float
    quotients: np.ndarray
    trials: int

    @property
    def coercive(self) -> bool:
        return bool(self.min_quotient > 0)


def coercivity_probe(space: DGSpace, field, penalty: PenaltyConfig, trials: int = 100, *, seed: int = 0,
                     petrov: bool = True) -> CoercivityResult:
    """Minimum of ``a_h(v, v) / ‖v‖²_{h,Ω}`` over random coefficient vectors.

    ``field`` (optional) is checked against the coefficient the space was
    built with.  Non-positive quotients are reported, not raised.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if field is not None:
        from .msbasis import fine_coefficient

        if not np.allclose(fine_coefficient(space.cf, field), space.basis.coef, rtol=1e-12, atol=0):
            raise ValueError("field does not match the coefficient of the space")
    A = bilinear_matrix(space, penalty, petrov=petrov)
    N = dg_norm_matrix(space, penalty, "h-omega")
    rng = np.random.Generator(np.random.PCG64(seed))
    V = rng.standard_normal((space.n_dofs, trials))
    num = np.einsum("it,it->t", V, A @ V)
    den = np.einsum("it,it->t", V, N @ V)
    q = num / den
    return CoercivityResult(float(q.min()), q, trials)
