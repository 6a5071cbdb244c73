"""Finite-volume solver for turbulent buoyant airflow with conjugate heat
transfer, built around a parameterized fan-cooled transformer enclosure."""

from .boundary import (
    BoundarySpec,
    FaceValues,
    OutletFlow,
    Symmetry,
    VelocityInlet,
    Wall,
)
from .cases import (
    CaseError,
    TransformerGeometry,
    TransformerParams,
    build_transformer_case,
    run_battery,
    transformer_metrics,
)
from .config import ConfigError, emit_config, load_config, parse_config, to_case
from .fields import FieldError, FluidProps, SolidProps, TurbConstants
from .mesh import BLANKED, FLUID, Mesh, build_mesh
from .solver import Case, RunResult, SolverControls, run_steady
from .vtk_io import write_bundle

__version__ = "0.1.0"

__all__ = [
    "BLANKED",
    "BoundarySpec",
    "Case",
    "CaseError",
    "ConfigError",
    "FLUID",
    "FaceValues",
    "FieldError",
    "FluidProps",
    "Mesh",
    "OutletFlow",
    "RunResult",
    "SolidProps",
    "SolverControls",
    "Symmetry",
    "TransformerGeometry",
    "TransformerParams",
    "TurbConstants",
    "VelocityInlet",
    "Wall",
    "build_mesh",
    "build_transformer_case",
    "emit_config",
    "load_config",
    "parse_config",
    "run_battery",
    "run_steady",
    "to_case",
    "transformer_metrics",
    "write_bundle",
    "__version__",
]
