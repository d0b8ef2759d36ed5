"""Anisotropic Lagrangians built from degenerate vector fields.

Pointwise pseudo-inverses of the coefficient matrix, the transform from
Euclidean to anisotropic Lagrangians, integral functionals on uniform grids
and discrete Gamma-convergence experiments.
"""
__version__ = "0.1.0"

from .errors import (AlignmentError, AnisolagError, ConsistencyError, DimensionError, DomainError,
                     HypothesisError, InputError, LookupFailure, NonConvergenceError, OptimizationError,
                     ParseError, UnknownIdentifierError)
from .fields import CoefficientField, FieldSequence, get_field, get_sequence
from .functional import FunctionalSpec, compare_functionals, eval_functional
from .gamma import GammaExperimentConfig, config_from_json, minimize, run_gamma_experiment
from .grid import GridDomain, GridFunction, gradient_fd, integrate, sample, x_gradient
from .lagrangian import GrowthCertificate, Lagrangian, catalog_lagrangian, parse_lagrangian, transform
from .linalg import pinv_limit, pinv_svd, point_algebra, verify_penrose
