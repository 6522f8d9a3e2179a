"""Plane finite elements driven by the regularized crack-band material routine."""

from .mesh import ELEMENT_TYPES, Mesh, MeshError, build_blocks
from .meshgen import l_panel, notched_beam, rectangle
from .solver import (
    Constraint,
    CurveRecord,
    FieldSnapshot,
    LoadProgram,
    Model,
    SolutionHistory,
    SolverConfig,
    SolverError,
)

__all__ = [
    "ELEMENT_TYPES",
    "Constraint",
    "CurveRecord",
    "FieldSnapshot",
    "LoadProgram",
    "Mesh",
    "MeshError",
    "Model",
    "SolutionHistory",
    "SolverConfig",
    "SolverError",
    "build_blocks",
    "l_panel",
    "notched_beam",
    "rectangle",
]
