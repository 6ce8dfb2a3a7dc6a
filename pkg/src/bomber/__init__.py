"""Exact and numerical solutions of the doubly-continuous Bomber Problem."""

from .model import (
    DomainError,
    ModelParams,
    Region,
    State,
    UnsupportedRegionError,
    boundary_f,
    boundary_f_inverse,
    classify_region,
    closed_form_K,
    closed_form_P,
    g1,
    q2,
    q_integrand,
    survival_kernel,
    unimodal_argmax,
)
from .quadrature import QuadratureConfig, QuadratureError
from .solver import GridSpec, SolutionGrid, numeric_K, numeric_P, solve_integral_equation

__version__ = "0.1.0"
