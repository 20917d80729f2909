"""Recovery of Stokes velocity-pressure fields from sparse linear
measurements when boundary data is unknown or only partially known.

The pipeline meshes the domain, assembles Taylor-Hood operators, builds
Riesz representers of the measurement functionals in a constrained
divergence-free space with a fractional trace norm on the unknown
boundary, and solves a regularized Gram system for the recovered field.
"""

__version__ = "0.1.0"

from .assembly import OperatorBundle, assemble_bundle
from .exact import ExactSolution, get_case, rigid_motion
from .femspace import DofLayout, build_layout, trace_mesh
from .measurements import Functional, MeasurementSet, gaussian_set
from .mesh import (Mesh, MeshError, export_mesh, generate_square_with_hole,
                   generate_unit_square, import_mesh, validate)
from .recovery import (DiscreteField, RecoveryResult, RepresenterFactory,
                       interpolate, recover, recovery_errors,
                       solve_background, solve_stokes_bvp)
from .riesz import RieszContext, RieszRepresenter, monolithic_representer

__all__ = [
    "__version__",
    "OperatorBundle", "assemble_bundle",
    "ExactSolution", "get_case", "rigid_motion",
    "DofLayout", "build_layout", "trace_mesh",
    "Functional", "MeasurementSet", "gaussian_set",
    "Mesh", "MeshError", "export_mesh", "generate_square_with_hole",
    "generate_unit_square", "import_mesh", "validate",
    "DiscreteField", "RecoveryResult", "RepresenterFactory", "interpolate",
    "recover", "recovery_errors", "solve_background", "solve_stokes_bvp",
    "RieszContext", "RieszRepresenter", "monolithic_representer",
]
