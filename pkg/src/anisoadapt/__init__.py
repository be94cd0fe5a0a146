"""Optimal anisotropic aspect-ratio metrics for P1/P2 finite element interpolation."""

from .fem_error import (
    T_EQ,
    QuadratureRule,
    Triangle,
    TriPoly,
    interp_error_h1,
    interpolate,
    lagrange_nodes,
    mesh_error,
    quadrature_rule,
    shape_matrix,
    sup_error_over_shape,
    triangle_from_shape,
)
from .optimal_metric import (
    SYNTHETIC,
    MetricField,
    SyntheticFunction,
    TaylorJet,
    metric_field,
    metric_p1,
    metric_p2,
    synthetic_jet,
    taylor_hom,
)
from .poly2d import GradPoly, HomPoly, compose, disc, grad_sup_norm, gradient, sup_norm
from .spd2 import (
    DomainError,
    SymMat2,
    bracket,
    eigen,
    matrix_abs,
    matrix_function,
    matrix_power,
    matrix_sqrt,
    operator_norm,
)

__version__ = "0.1.0"
