"""Scalar coefficient fields ``a(x)`` and log-normal random media."""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

RNG_NAME = "numpy.random.PCG64"


class NonEllipticError(ValueError):
    """Raised when a coefficient takes a non-positive value."""


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Base class; subclasses implement :meth:`eval` on ``(P, 2)`` point arrays."""

    bounds: tuple | None = field(default=None, kw_only=True)

    kind = "abstract"

    def eval(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)

    def params(self) -> dict:
        return {}

    def fingerprint(self) -> str:
        h = hashlib.sha1(f"{self.kind}:{sorted(self.params().items())}".encode())
        return h.hexdigest()[:12]

    def with_bounds(self, lam: float, Lam: float) -> "CoefficientField":
        return replace(self, bounds=(float(lam), float(Lam)))


@dataclass(frozen=True, eq=False)
class PeriodicField(CoefficientField):
    """The oscillating two-scale coefficient

    ``(2 + 1.8 sin(2πx₁/ε)) / (2 + 1.8 cos(2πx₂/ε)) + (2 + 1.8 sin(2πx₂/ε)) / (2 + 1.8 sin(2πx₁/ε))``.
    """

    eps: float = 1.0 / 20
    kind = "analytic-periodic"

    def eval(self, x):
        x = np.atleast_2d(x)
        s1 = np.sin(2 * np.pi * x[:, 0] / self.eps)
        s2 = np.sin(2 * np.pi * x[:, 1] / self.eps)
        c2 = np.cos(2 * np.pi * x[:, 1] / self.eps)
        return (2 + 1.8 * s1) / (2 + 1.8 * c2) + (2 + 1.8 * s2) / (2 + 1.8 * s1)

    def params(self):
        return {"eps": self.eps}


@dataclass(frozen=True, eq=False)
class ConstantField(CoefficientField):
    value: float = 1.0
    kind = "constant"

    def eval(self, x):
        return np.full(len(np.atleast_2d(x)), float(self.value))

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True, eq=False)
class LayeredField(CoefficientField):
    """Coefficient depending on one coordinate only, ``profile(x[axis] / period)``.

    The default profile ``2 + 1.8 sin(2πy)`` has closed-form homogenized
    limits (harmonic mean across the layers, arithmetic mean along them).
    """

    period: float = 1.0
    axis: int = 0
    mean: float = 2.0
    amplitude: float = 1.8
    kind = "layered"

    def eval(self, x):
        x = np.atleast_2d(x)
        return self.mean + self.amplitude * np.sin(2 * np.pi * x[:, self.axis] / self.period)

    def params(self):
        return {"period": self.period, "axis": self.axis, "mean": self.mean, "amplitude": self.amplitude}


@dataclass(frozen=True, eq=False)
class GridField(CoefficientField):
    """Piecewise-constant field on an ``n x n`` grid of square cells.

    ``values[j, i]`` belongs to the cell ``[x0 + i·w, x0 + (i+1)·w] x [y0 + j·w, ...]``
    with ``w = size / n``; points on a cell face go to the upper/right cell
    except on the last face.
    """

    values: np.ndarray = None
    origin: tuple = (0.0, 0.0)
    size: float = 1.0
    meta: dict = field(default_factory=dict)
    kind = "grid"

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def cell_index(self, x):
        x = np.atleast_2d(x)
        w = self.size / self.n
        i = np.floor((x[:, 0] - self.origin[0]) / w + 1e-9).astype(np.int64)
        j = np.floor((x[:, 1] - self.origin[1]) / w + 1e-9).astype(np.int64)
        return np.clip(i, 0, self.n - 1), np.clip(j, 0, self.n - 1)

    def eval(self, x):
        i, j = self.cell_index(x)
        return self.values[j, i]

    def params(self):
        digest = hashlib.sha1(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:12]
        return {"n": self.n, "origin": tuple(self.origin), "size": self.size, "values": digest, **self.meta}


def estimate_ellipticity(field: CoefficientField, points) -> CoefficientField:
    """Return ``field`` with ``bounds = (min, max)`` of its samples at ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("need at least one sample point")
    vals = field.eval(pts)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise NonEllipticError(f"{field.kind} field takes non-positive values (min {np.min(vals):.3g})")
    return field.with_bounds(float(vals.min()), float(vals.max()))


def sample_grid(domain: str, n: int) -> np.ndarray:
    """Cell-centre points of an ``n``-per-unit grid covering ``domain``."""
    from .mesh import build_structured_mesh

    return build_structured_mesh(domain, n).centroids()


def ellipse_kernel(l1: float, l2: float, w: float) -> np.ndarray:
    """0/1 mask of cell offsets whose centres lie in the ellipse with semi-axes ``l1, l2``."""
    # guard against l/w landing just below an integer
    ri = int(np.floor(l1 / w + 1e-9))
    rj = int(np.floor(l2 / w + 1e-9))
    di = np.arange(-ri, ri + 1) * w
    dj = np.arange(-rj, rj + 1) * w
    DJ, DI = np.meshgrid(dj, di, indexing="ij")
    return ((DI / l1) ** 2 + (DJ / l2) ** 2 <= 1.0 + 1e-12).astype(float)


def generate_lognormal(
    n: int,
    sigma2: float,
    l1: float,
    l2: float,
    seed: int,
    *,
    origin=(0.0, 0.0),
    size: float = 1.0,
) -> GridField:
    """Log-normal field by the moving ellipse average of white noise.

    Standard normals on the ``n x n`` cells are averaged over the cells whose
    centres fall in the ellipse ``((x'-x)/l1)^2 + ((y'-y)/l2)^2 <= 1`` (cells
    outside the grid are skipped), the average is shifted and scaled to zero
    sample mean and sample variance ``sigma2``, and exponentiated.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if l1 <= 0 or l2 <= 0:
        raise ValueError("correlation lengths must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    Z = rng.standard_normal((n, n))
    w = size / n
    kern = ellipse_kernel(l1, l2, w)
    if kern.sum() == 1:
        warnings.warn("correlation ellipse smaller than one cell; field is white noise", stacklevel=2)
    total = ndimage.correlate(Z, kern, mode="constant", cval=0.0)
    count = ndimage.correlate(np.ones_like(Z), kern, mode="constant", cval=0.0)
    F = total / count
    F = F - F.mean()
    sd = F.std()
    F = F * (np.sqrt(sigma2) / sd) if sd > 0 else np.zeros_like(F)
    meta = {"sigma2": sigma2, "l1": l1, "l2": l2, "seed": seed, "rng": RNG_NAME}
    return GridField(values=np.exp(F), origin=tuple(origin), size=size, meta=meta)


def lognormal_for_domain(domain: str, n_per_unit: int, sigma2, l1, l2, seed) -> GridField:
    """Random field sampled at ``n_per_unit`` cells per unit length over the domain's bounding box."""
    from .mesh import domain_cells, domain_origin

    cells = domain_cells(domain, n_per_unit)
    return generate_lognormal(
        cells, sigma2, l1, l2, seed, origin=domain_origin(domain), size=cells / n_per_unit
    )


# ---------------------------------------------------------------------------
# plain-text grid format: header "n sigma2 l1 l2 seed", then n^2 values row-major


def save_grid_field(fld: GridField, path) -> None:
    m = fld.meta
    lines = [f"{fld.n} {m.get('sigma2', 0)!r} {m.get('l1', 0)!r} {m.get('l2', 0)!r} {m.get('seed', 0)}"]
    lines += [f"{v:.17g}" for v in fld.values.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid_field(path, *, origin=(0.0, 0.0), size: float = 1.0) -> GridField:
    tokens = Path(path).read_text().split()
    n = int(tokens[0])
    sigma2, l1, l2 = (float(t) for t in tokens[1:4])
    seed = int(tokens[4])
    values = np.array([float(t) for t in tokens[5:5 + n * n]]).reshape(n, n)
    meta = {"sigma2": sigma2, "l1": l1, "l2": l2, "seed": seed, "rng": RNG_NAME}
    return GridField(values=values, origin=tuple(origin), size=size, meta=meta)


def write_pgm(values: np.ndarray, path, *, log: bool = True) -> None:
    """Greyscale heat map (binary PGM), row 0 at the bottom of the image."""
    v = np.log(values) if log else np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    img = np.round(255 * scaled[::-1]).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def make_field(spec: dict) -> CoefficientField:
    """Build a field from a config mapping ``{"kind": ..., **params}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind in ("analytic-periodic", "periodic"):
        return PeriodicField(eps=float(spec.get("eps", 1.0 / 20)))
    if kind == "constant":
        return ConstantField(value=float(spec.get("value", 1.0)))
    if kind == "layered":
        return LayeredField(**spec)
    if kind == "lognormal":
        return lognormal_for_domain(
            spec["domain"], int(spec["n"]), float(spec.get("sigma2", 1.0)),
            float(spec.get("l1", 0.01)), float(spec.get("l2", 0.01)), int(spec.get("seed", 0)),
        )
    raise ValueError(f"unknown coefficient kind {kind!r}")
