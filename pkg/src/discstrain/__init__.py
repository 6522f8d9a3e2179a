"""Plastic-damage material model with a reversible discontinuity strain.

The package provides the tensor kernels, the integration-point routine, a
small plane finite-element solver and a command-line case runner.
"""

from .material import (
    CENTER_NOTCHED,
    L_PANEL,
    OFF_CENTER_NOTCHED,
    PARAMETER_SETS,
    ConfigurationError,
    DerivedParams,
    MaterialParams,
    PointState,
    RoutineOptions,
    derive_alpha,
    derive_kc,
    integrate_point,
    integrate_point_plane_stress,
    numerical_tangent,
)

__version__ = "0.1.0"

__all__ = [
    "CENTER_NOTCHED",
    "L_PANEL",
    "OFF_CENTER_NOTCHED",
    "PARAMETER_SETS",
    "ConfigurationError",
    "DerivedParams",
    "MaterialParams",
    "PointState",
    "RoutineOptions",
    "derive_alpha",
    "derive_kc",
    "integrate_point",
    "integrate_point_plane_stress",
    "numerical_tangent",
]
