"""Nested convex PCA on polyhedral domains."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .geometry import PolyhedralSet, angles_of, omega, orthonormal_complement
from .solver import (
    CpcaProblem,
    FitConfig,
    PrincipalBasis,
    SegmentBounds,
    boundary_coefficients,
    explained_variation,
    fit_component,
    fit_nested,
    init_guess,
    project_onto_component_set,
    project_to_segment,
    value_function,
    value_gradient_analytic,
    value_gradient_fd,
)

__all__ = [
    "BACKEND",
    "CpcaProblem",
    "FitConfig",
    "PolyhedralSet",
    "PrincipalBasis",
    "SegmentBounds",
    "angles_of",
    "boundary_coefficients",
    "explained_variation",
    "fit_component",
    "fit_nested",
    "init_guess",
    "omega",
    "orthonormal_complement",
    "project_onto_component_set",
    "project_to_segment",
    "value_function",
    "value_gradient_analytic",
    "value_gradient_fd",
]
