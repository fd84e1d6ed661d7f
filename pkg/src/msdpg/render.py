"""SVG heat maps (diagnostic only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

CMAP = "viridis"
# fixed metadata keeps the SVG bytes stable across runs
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "msdpg"
    fig.savefig(path, format="svg", metadata=_SVG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def render_triangles(nodes, triangles, values, path, *, title=""):
    """Heat map of nodal values on a triangulation."""
    fig, ax = plt.subplots(figsize=(4.5, 4))
    tri = mtri.Triangulation(nodes[:, 0], nodes[:, 1], triangles)
    tp = ax.tripcolor(tri, values, shading="gouraud", cmap=CMAP, rasterized=True)
    fig.colorbar(tp, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    return _save(fig, path)


def render_p1(u, path, *, title=""):
    return render_triangles(u.mesh.nodes, u.mesh.triangles, u.values, path, title=title)


def render_elementwise(cf, values, path, *, title=""):
    """Heat map of element-wise fine values ``(nE, nK)`` (discontinuous across coarse edges)."""
    nE, nK = values.shape
    nodes = cf.fine_node_coords.reshape(-1, 2)
    tris = [cf.templates[k].triangles + K * nK for K, k in enumerate(cf.coarse.tri_kind)]
    return render_triangles(nodes, np.concatenate(tris), values.ravel(), path, title=title)


def render_grid(values, extent, path, *, title="", log=True):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    img = ax.imshow(np.log(values) if log else values, origin="lower", extent=extent, cmap=CMAP,
                    interpolation="nearest", rasterized=True)
    fig.colorbar(img, ax=ax, label="log a" if log else None)
    ax.set_title(title)
    return _save(fig, path)


def render_field(field, domain, path, *, n=256):
    """Coefficient sampled on the bounding box of ``domain`` (log scale)."""
    from .mesh import domain_cells, domain_origin

    x0, y0 = domain_origin(domain)
    size = domain_cells(domain, 1)
    s = (np.arange(n) + 0.5) / n * size
    X, Y = np.meshgrid(x0 + s, y0 + s)
    vals = field.eval(np.column_stack([X.ravel(), Y.ravel()])).reshape(n, n)
    return render_grid(vals, (x0, x0 + size, y0, y0 + size), path, title="coefficient")
