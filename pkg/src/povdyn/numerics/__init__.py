"""Shared numerical kernels."""
from .hypergeom import kummer_1f1
from .lsq import FitReport, forward_difference_jacobian, nlls_fit
from .ode import rk4_integrate, rk4_step
from .quadrature import DEFAULT_QUADRATURE, Quadrature, quad_interval, quad_semi_infinite

__all__ = [
    "DEFAULT_QUADRATURE",
    "FitReport",
    "Quadrature",
    "forward_difference_jacobian",
    "kummer_1f1",
    "nlls_fit",
    "quad_interval",
    "quad_semi_infinite",
    "rk4_integrate",
    "rk4_step",
]
