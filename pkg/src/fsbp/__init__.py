"""Function-space summation-by-parts (FSBP) operators for first and second
derivatives, and multi-block FSBP-SAT solvers built on them."""

from .funcspace import (
    BasisFunction,
    FunctionSpace,
    SpaceError,
    custom,
    exactness_space,
    exponential,
    gaussian_rbf,
    parse_space,
    polynomial,
    quadrature_target,
    trigonometric,
)
from .operators import (
    ConstructionError,
    FsbpOperatorSet,
    build_first_derivative,
    build_second_derivative,
    construct,
    map_to_block,
    nullspace,
    spectrum,
    verify_exactness,
)
from .quadrature import QuadratureError, QuadratureRule, find_positive_rule, rule_for

__version__ = "0.1.0"
