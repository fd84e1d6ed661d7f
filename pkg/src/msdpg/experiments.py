"""Config-driven experiment runner: one CSV row per (sweep value, method).

A run builds the fine mesh, the coefficient and the fine reference once,
then, for each coarse configuration, the multiscale bases it needs, and
evaluates every requested method against the reference.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import CSV_COLUMNS, ErrorReport, relative_errors
from .coefficient import RNG_NAME, CoefficientField, NonEllipticError, make_field
from .dg import PenaltyConfig
from .fem import DEFAULT_TOL, P1Function, SolverError, reference_solution
from .mesh import DOMAINS, MeshError, build_coarse_fine_map, build_structured_mesh, factor_from_delta0, margin_from_factor
from .methods import METHODS, solve_conforming_pg, solve_dfem, solve_dg, solve_fem
from .msbasis import BasisError, build_basis

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("gamma0", "h", "delta0")
MULTISCALE = ("MsPGM", "OMsPGM", "MsDFEM", "MsDPGM")
# keys that do not change any number in the output
_UNHASHED = ("out", "workers", "render", "name")


class ConfigError(ValueError):
    """Invalid run configuration; raised before any solve."""


def corner_singular(p) -> np.ndarray:
    """``r^{2/3} sin(2θ/3)`` with ``θ ∈ [0, 2π)``; harmonic on the L-shape."""
    p = np.atleast_2d(p)
    r = np.hypot(p[:, 0], p[:, 1])
    theta = np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)
    return r ** (2.0 / 3.0) * np.sin(2.0 * theta / 3.0)


BOUNDARY_DATA = {"zero": None, "corner-singular": corner_singular}


@dataclass
class RunConfig:
    name: str = "run"
    domain: str = "unit-square"
    coefficient: dict = field(default_factory=lambda: {"kind": "periodic", "eps": 1.0 / 20})
    coarse_n: int = 32
    fine_n: int = 320
    methods: tuple = METHODS
    beta: float = -1.0
    gamma0: float = 20.0
    rho_mode: str = "h"
    factor: float = 4.0
    delta0: float | None = None
    d_tilde: float | None = None
    f: float | None = None
    boundary: str | None = None
    sweep: dict | None = None
    seed: int = 0
    tol: float = DEFAULT_TOL
    record_timings: bool = False
    workers: int = 1
    render: bool = True
    out: str = "out"

    # -- derived -------------------------------------------------------------------

    @property
    def kind(self) -> str:
        return self.coefficient.get("kind", "periodic")

    @property
    def eps(self) -> float | None:
        if self.kind in ("periodic", "analytic-periodic"):
            return float(self.coefficient.get("eps", 1.0 / 20))
        return None

    @property
    def source(self) -> float:
        if self.f is not None:
            return float(self.f)
        return 0.0 if self.domain == "l-shape" else 1.0

    @property
    def boundary_data(self):
        name = self.boundary or ("corner-singular" if self.domain == "l-shape" else "zero")
        return BOUNDARY_DATA[name]

    def penalty(self, gamma0: float | None = None) -> PenaltyConfig:
        return PenaltyConfig(beta=self.beta, gamma0=self.gamma0 if gamma0 is None else gamma0, rho_mode=self.rho_mode)

    def hashed_dict(self) -> dict:
        d = asdict(self)
        for k in _UNHASHED:
            d.pop(k)
        d["methods"] = list(self.methods)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- construction ------------------------------------------------------------------

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        """Accepts flat keys or the nested sections ``mesh``, ``penalty``, ``oversampling``, ``solver``, ``output``."""
        flat = {}
        sections = {
            "mesh": {"coarse_n": "coarse_n", "fine_n": "fine_n", "domain": "domain"},
            "penalty": {"beta": "beta", "gamma0": "gamma0", "rho": "rho_mode", "rho_mode": "rho_mode"},
            "oversampling": {"factor": "factor", "delta0": "delta0", "d_tilde": "d_tilde"},
            "solver": {"tol": "tol", "workers": "workers"},
            "output": {"dir": "out", "out": "out", "timings": "record_timings", "render": "render"},
            "problem": {"f": "f", "boundary": "boundary"},
        }
        names = {f.name for f in fields(cls)}
        for key, value in (data or {}).items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be a mapping")
                for sub, v in value.items():
                    if sub not in sections[key]:
                        raise ConfigError(f"unknown key {key}.{sub}")
                    flat[sections[key][sub]] = v
            elif key in names:
                flat[key] = value
            elif key == "eps":
                flat.setdefault("coefficient", dict(data.get("coefficient", {"kind": "periodic"})))["eps"] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if "methods" in flat:
            flat["methods"] = tuple(flat["methods"])
        cfg = cls(**flat)
        cfg.coefficient = dict(cfg.coefficient)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_mapping(data or {})

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        coef = dict(kw.pop("coefficient", self.coefficient))
        if "eps" in kw:
            coef["eps"] = float(kw.pop("eps"))
        if "seed" in kw and coef.get("kind") == "lognormal":
            coef["seed"] = int(kw["seed"])
        return replace(self, coefficient=coef, **kw)

    # -- validation ------------------------------------------------------------------

    def coarse_levels(self) -> list[int]:
        if self.sweep and self.sweep.get("param") == "h":
            out = []
            for h in self.sweep["values"]:
                n = round(1.0 / float(h))
                if not math.isclose(n * float(h), 1.0, rel_tol=1e-9):
                    raise ConfigError(f"h={h} is not 1/n for an integer n")
                out.append(n)
            return out
        return [self.coarse_n]

    def validate(self) -> "RunConfig":
        if self.domain not in DOMAINS:
            raise ConfigError(f"domain must be one of {DOMAINS}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.boundary is not None and self.boundary not in BOUNDARY_DATA:
            raise ConfigError(f"boundary must be one of {sorted(BOUNDARY_DATA)}")
        try:
            self.penalty()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.rho_mode == "eps" and self.eps is None:
            raise ConfigError("rho mode 'eps' needs a periodic coefficient")
        if self.kind not in ("periodic", "analytic-periodic", "constant", "layered", "lognormal"):
            raise ConfigError(f"unknown coefficient kind {self.kind!r}")
        if self.fine_n < 1 or self.coarse_n < 1:
            raise ConfigError("mesh sizes must be positive")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.factor < 1:
            raise ConfigError("oversampling factor must be >= 1")
        if self.delta0 is not None and self.delta0 < 0:
            raise ConfigError("delta0 must be non-negative")
        if self.sweep is not None:
            p = self.sweep.get("param")
            if p not in SWEEP_PARAMS:
                raise ConfigError(f"sweep param must be one of {SWEEP_PARAMS}")
            vals = self.sweep.get("values")
            if not vals:
                raise ConfigError("sweep needs a non-empty value list")
            if p in ("gamma0", "delta0") and any(float(v) <= 0 if p == "gamma0" else float(v) < 0 for v in vals):
                raise ConfigError(f"invalid {p} values {vals}")
        for n in self.coarse_levels():
            if self.fine_n % n:
                raise ConfigError(f"fine n={self.fine_n} is not divisible by coarse n={n}")
            if self.fine_n == n and any(m in MULTISCALE for m in self.methods):
                raise ConfigError("multiscale methods need fine n > coarse n (resolution guard)")
            if self.d_tilde is not None:
                m = self.d_tilde * self.fine_n
                if not math.isclose(m, round(m), abs_tol=1e-9):
                    raise ConfigError(f"d_tilde={self.d_tilde} is not a whole number of fine cells")
        if self.eps is not None and self.eps * self.fine_n < 8:
            raise ConfigError(f"eps*fine_n = {self.eps * self.fine_n:g} < 8: fine grid under-resolves the oscillation")
        return self

    def build_field(self) -> CoefficientField:
        spec = dict(self.coefficient)
        if spec.get("kind") == "lognormal":
            spec.setdefault("seed", self.seed)
            spec.update(domain=self.domain, n=spec.get("n", self.fine_n))
        try:
            return make_field(spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad coefficient spec: {exc}") from exc

    def eps_or_seed(self) -> str:
        if self.eps is not None:
            return f"{self.eps:.6g}"
        if self.kind == "lognormal":
            return f"seed={int(self.coefficient.get('seed', self.seed))}"
        return "-"


# ---------------------------------------------------------------------------
# caches


class ReferenceCache:
    """Fine reference solutions keyed by domain, field, fine n, tolerance and data."""

    def __init__(self):
        self._store: dict = {}

    def key(self, cfg: RunConfig, fld: CoefficientField) -> tuple:
        return (cfg.domain, fld.fingerprint(), cfg.fine_n, cfg.tol, cfg.source, cfg.boundary or "")

    def get(self, cfg: RunConfig, fld: CoefficientField, mesh) -> P1Function:
        k = self.key(cfg, fld)
        if k not in self._store:
            self._store[k] = reference_solution(cfg.domain, fld, cfg.source, cfg.boundary_data, cfg.fine_n,
                                                tol=cfg.tol, mesh=mesh)
        return self._store[k]

    def __len__(self):
        return len(self._store)


_REFERENCES = ReferenceCache()


@dataclass
class RunResult:
    rows: list
    csv_path: Path | None
    config: RunConfig
    reference: P1Function | None = None
    solutions: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r.failed]


class _Context:
    def __init__(self, cfg: RunConfig, cache: ReferenceCache):
        self.cfg = cfg
        self.fine = build_structured_mesh(cfg.domain, cfg.fine_n)
        self.field = cfg.build_field()
        self.reference = cache.get(cfg, self.field, self.fine)
        self._cf = {}
        self._basis = {}

    def cf(self, coarse_n):
        if coarse_n not in self._cf:
            self._cf[coarse_n] = build_coarse_fine_map(build_structured_mesh(self.cfg.domain, coarse_n), self.fine)
        return self._cf[coarse_n]

    def patch_args(self, coarse_n, delta0=None) -> tuple[dict, float]:
        """Keyword arguments for :func:`build_basis` and the factor reported in the CSV."""
        cfg = self.cfg
        r = cfg.fine_n // coarse_n
        if cfg.d_tilde is not None and delta0 is None:
            m = int(round(cfg.d_tilde * cfg.fine_n))
            return {"margin": m}, 1.0 + 3.0 * m / r
        d0 = cfg.delta0 if delta0 is None else delta0
        factor = factor_from_delta0(d0) if d0 is not None else cfg.factor
        m = margin_from_factor(factor, r)
        return {"factor": factor}, 1.0 + 3.0 * m / r

    def basis(self, coarse_n, kind, patch_kw):
        key = (coarse_n, kind, tuple(sorted(patch_kw.items())) if kind == "oversampled" else ())
        if key not in self._basis:
            kw = patch_kw if kind == "oversampled" else {}
            self._basis[key] = build_basis(self.cf(coarse_n), self.field, kind, tol=self.cfg.tol,
                                           workers=self.cfg.workers, **kw)
        return self._basis[key]


def _run_methods(ctx: _Context, coarse_n: int, gamma0=None, delta0=None, keep=None) -> list[ErrorReport]:
    cfg = ctx.cfg
    cf = ctx.cf(coarse_n)
    pen = cfg.penalty(gamma0)
    patch_kw, eff_factor = ctx.patch_args(coarse_n, delta0)
    meta = dict(h=1.0 / coarse_n, eps_or_seed=cfg.eps_or_seed(), beta=int(pen.beta), gamma0=f"{pen.gamma0:g}",
                rho_mode=pen.rho_mode, factor=f"{eff_factor:.6g}")
    f, g, eps = cfg.source, cfg.boundary_data, cfg.eps
    rows = []
    coef = None
    for name in cfg.methods:
        try:
            if name == "FEM":
                res = solve_fem(cf, ctx.field, f, g, tol=cfg.tol)
            elif name == "DFEM":
                res = solve_dfem(cf, ctx.field, f, pen, g, eps=eps, tol=cfg.tol)
            elif name == "MsPGM":
                res = solve_conforming_pg(ctx.basis(coarse_n, "classical", patch_kw), f, g, name="MsPGM", tol=cfg.tol)
            elif name == "OMsPGM":
                res = solve_conforming_pg(ctx.basis(coarse_n, "oversampled", patch_kw), f, g, tol=cfg.tol)
            else:
                res = solve_dg(ctx.basis(coarse_n, "oversampled", patch_kw), f, pen, g,
                               petrov=name == "MsDPGM", eps=eps, tol=cfg.tol)
            if coef is None:
                from .msbasis import fine_coefficient

                coef = fine_coefficient(cf, ctx.field)
            rep = relative_errors(cf, coef, res.fine, ctx.reference, method=name, meta=meta)
            rep.T1, rep.T2 = res.t_assemble, res.t_solve
            if keep is not None:
                keep[(coarse_n, gamma0, delta0, name)] = res
        except (SolverError, BasisError, np.linalg.LinAlgError, NonEllipticError, MeshError) as exc:
            log.warning("%s failed: %s", name, exc)
            rep = ErrorReport(method=name, meta=meta, failed=str(exc))
        rows.append(rep)
    return rows


# ---------------------------------------------------------------------------
# output


def write_csv(path, rows, cfg: RunConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [
        f"# tool: msdpg {__version__}",
        f"# config_hash: {cfg.config_hash()}",
        f"# seed: {int(cfg.coefficient.get('seed', cfg.seed))}",
        f"# rng: {RNG_NAME}",
        f"# config: {json.dumps(cfg.hashed_dict(), sort_keys=True, default=str)}",
        ",".join(CSV_COLUMNS),
    ]
    body = [r.csv_row(timings=cfg.record_timings) for r in rows]
    path.write_text("\n".join(header + body) + "\n")
    return path


def read_csv(path) -> list[dict]:
    """Data rows of a CSV written by :func:`write_csv` as dicts of strings."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    cols = lines[0].split(",")
    return [dict(zip(cols, ln.split(","))) for ln in lines[1:]]


def _finish(ctx, cfg, rows, solutions, csv_name=None) -> RunResult:
    out = Path(cfg.out)
    path = write_csv(out / (csv_name or f"{cfg.name}.csv"), rows, cfg)
    if cfg.render:
        from .render import render_p1

        render_p1(ctx.reference, out / f"{cfg.name}_reference.svg", title="fine reference")
    return RunResult(rows, path, cfg, ctx.reference, solutions)


# ---------------------------------------------------------------------------
# runners


def run_experiment(cfg: RunConfig, *, cache: ReferenceCache | None = None, keep_solutions=False) -> RunResult:
    """All requested methods at one configuration; one CSV row per method."""
    cfg.validate()
    ctx = _Context(cfg, _REFERENCES if cache is None else cache)
    keep = {} if keep_solutions else None
    rows = _run_methods(ctx, cfg.coarse_n, keep=keep)
    return _finish(ctx, cfg, rows, keep or {})


def run_sweep(cfg: RunConfig, *, cache: ReferenceCache | None = None, keep_solutions=False) -> RunResult:
    """Sweep over ``gamma0``, ``h`` or ``delta0``; rows in sweep order, methods within."""
    cfg.validate()
    if cfg.sweep is None:
        raise ConfigError("run_sweep needs a 'sweep' section")
    ctx = _Context(cfg, _REFERENCES if cache is None else cache)
    keep = {} if keep_solutions else None
    param = cfg.sweep["param"]
    rows = []
    if param == "h":
        for n in cfg.coarse_levels():
            rows += _run_methods(ctx, n, keep=keep)
    else:
        for v in cfg.sweep["values"]:
            kw = {"gamma0": float(v)} if param == "gamma0" else {"delta0": float(v)}
            rows += _run_methods(ctx, cfg.coarse_n, keep=keep, **kw)
    return _finish(ctx, cfg, rows, keep or {})


def run_lshape(cfg: RunConfig, *, cache: ReferenceCache | None = None, keep_solutions=False) -> RunResult:
    """L-shaped domain with the corner-singular boundary data (``f = 0`` unless set)."""
    if cfg.domain != "l-shape":
        raise ConfigError("run_lshape needs domain 'l-shape'")
    if cfg.boundary is None:
        cfg = replace(cfg, boundary="corner-singular")
    res = run_experiment(cfg, cache=cache, keep_solutions=keep_solutions)
    if cfg.render:
        from .render import render_field

        ctx_field = cfg.build_field()
        render_field(ctx_field, cfg.domain, Path(cfg.out) / f"{cfg.name}_coefficient.svg")
    return res
