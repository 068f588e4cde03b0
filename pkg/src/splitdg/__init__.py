"""High-order discontinuous Galerkin solver for incompressible flow.

The time stepper is a consistent splitting scheme: a pressure Poisson
problem with consistent boundary data followed by a momentum step, on
uniform Cartesian meshes with tensor-product elements.
"""
from .mesh import BoundaryTag, Mesh, build_cartesian_mesh
from .dg import DGField, FunctionSpace, l2_project, relative_l2_error
from .problem import ProblemSpec, named_problem
from .scheme import SchemeConfig, SchemeError, SplittingScheme, SplittingState

__version__ = "0.1.0"

__all__ = [
    "BoundaryTag",
    "DGField",
    "FunctionSpace",
    "Mesh",
    "ProblemSpec",
    "SchemeConfig",
    "SchemeError",
    "SplittingScheme",
    "SplittingState",
    "build_cartesian_mesh",
    "l2_project",
    "named_problem",
    "relative_l2_error",
]
