"""Multiscale discontinuous Galerkin and Petrov-Galerkin solvers for 2D elliptic problems."""

__version__ = "0.1.0"

from .coefficient import ConstantField, GridField, LayeredField, PeriodicField, generate_lognormal  # noqa: E402
from .dg import DGSpace, PenaltyConfig  # noqa: E402
from .fem import reference_solution  # noqa: E402
from .mesh import build_coarse_fine_map, build_structured_mesh  # noqa: E402
from .msbasis import build_basis  # noqa: E402

__all__ = [
    "ConstantField", "GridField", "LayeredField", "PeriodicField", "generate_lognormal",
    "DGSpace", "PenaltyConfig", "reference_solution", "build_coarse_fine_map",
    "build_structured_mesh", "build_basis", "__version__",
]
