"""Positive quadrature rules exact on a target function space.

The weights of these rules form the diagonal norm matrix ``P`` of an SBP
operator. Weights come from a minimal-norm least-squares solve of the moment
equations ``V^T w = m``; positivity is checked afterwards and, when needed,
the number of nodes is increased until a positive exact rule is found.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
from numpy.polynomial import legendre as npleg

from .funcspace import FunctionSpace, exactness_space, quadrature_target

EXACT_TOL = 1e-10
PINV_CUTOFF = 1e-12


class QuadratureError(RuntimeError):
    pass


class NonPositiveWeights(QuadratureError):
    def __init__(self, weights):
        self.weights = np.asarray(weights)
        super().__init__(f"least-squares weights not positive (min={self.weights.min():.3e})")


class InexactQuadrature(QuadratureError):
    def __init__(self, residual):
        self.residual = float(residual)
        super().__init__(f"moment residual {self.residual:.3e} exceeds tolerance")


class MomentError(QuadratureError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    family: str = "custom"
    residual: float = 0.0

    @property
    def n(self) -> int:
        return len(self.nodes)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


# {{{ node families


def equidistant_nodes(n: int, element=(-1.0, 1.0)) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least two nodes (both endpoints)")
    xl, xr = element
    if (xl, xr) == (-1.0, 1.0):
        # symmetric construction keeps nodes like 1/3 exact up to rounding
        return np.array([-1.0 + 2.0 * k / (n - 1) for k in range(n)])
    return np.linspace(xl, xr, n)


def lobatto_nodes(n: int, element=(-1.0, 1.0)) -> np.ndarray:
    """Gauss-Lobatto points: endpoints plus the roots of P'_{n-1}."""
    if n < 2:
        raise ValueError("need at least two Gauss-Lobatto nodes")
    inner = np.sort(np.real(npleg.legroots(npleg.legder([0] * (n - 1) + [1])))) if n > 2 else []
    x = np.concatenate([[-1.0], inner, [1.0]])
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    xl, xr = element
    return xl + (x + 1.0) * 0.5 * (xr - xl)


def lobatto_weights(n: int, element=(-1.0, 1.0)) -> np.ndarray:
    """Closed-form Gauss-Lobatto weights 2 / (n (n-1) P_{n-1}(x)^2)."""
    x = lobatto_nodes(n)
    P = npleg.legval(x, [0] * (n - 1) + [1])
    w = 2.0 / (n * (n - 1) * P ** 2)
    return w * 0.5 * (element[1] - element[0])


def make_nodes(family: str, n: int, element=(-1.0, 1.0)) -> np.ndarray:
    family = family.lower()
    if family in ("equi", "equidistant"):
        return equidistant_nodes(n, element)
    if family in ("lobatto", "gl", "gauss-lobatto"):
        return lobatto_nodes(n, element)
    raise ValueError(f"unknown node family {family!r}")


# }}}


# {{{ moments


def moments(space: FunctionSpace, epsrel: float = 1e-13, maxdepth: int = 20) -> np.ndarray:
    """Exact integrals of every basis element over the element.

    Closed forms are used where a basis element carries one; otherwise
    adaptive Gauss-Kronrod (QUADPACK) is used.
    """
    xl, xr = space.element
    out = np.empty(space.dim)
    for j, b in enumerate(space.basis):
        if b.integral is not None:
            out[j] = b.integral
            continue
        out[j] = _adaptive_integral(b.eval, xl, xr, epsrel, maxdepth)
    return out


def _adaptive_integral(f, a, b, epsrel, maxdepth):
    def scalar(x):
        return float(f(np.asarray(x, dtype=float)))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        res = scipy.integrate.quad(scalar, a, b, epsabs=0.0, epsrel=epsrel,
                                   limit=2 ** min(maxdepth, 12), full_output=1)
    val, err = res[0], res[1]
    if err <= 1e-11 * max(abs(val), 1.0):
        return val
    # cancelling integrands (e.g. odd functions): judge against the integral of |f|
    absval = scipy.integrate.quad(lambda t: abs(scalar(t)), a, b, epsrel=1e-6,
                                  limit=2 ** min(maxdepth, 12))[0]
    if err > 1e-11 * max(absval, 1.0):
        raise MomentError(f"adaptive integration did not converge "
                          f"(estimate {val:.16g}, error {err:.2e})")
    return val


# }}}


def least_squares_weights(target: FunctionSpace, nodes, tol: float = EXACT_TOL,
                          family: str = "custom") -> QuadratureRule:
    """Minimal-norm solution of ``V^T w = m`` on *nodes*, accepted if exact and positive."""
    x = np.asarray(nodes, dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("nodes must be strictly increasing with at least two points")
    xl, xr = target.element
    if target.dim == 0:
        w = np.full(x.size, (xr - xl) / x.size)
        return QuadratureRule(x, w, family, 0.0)

    V = target.values(x)
    m = moments(target)
    # row scaling does not change the exact solution set
    scale = np.maximum(np.abs(V).max(axis=0), np.abs(m))
    scale[scale == 0] = 1.0
    A = (V / scale).T
    b = m / scale
    w, *_ = scipy.linalg.lstsq(A, b, cond=PINV_CUTOFF)
    residual = float(np.max(np.abs(A @ w - b))) if b.size else 0.0
    if residual > tol:
        raise InexactQuadrature(residual)
    if np.min(w) <= 1e-14 * (xr - xl):
        raise NonPositiveWeights(w)
    return QuadratureRule(x, w, family, residual)


def find_positive_rule(space: FunctionSpace, start_n: int | None = None,
                       family: str = "equi", target: FunctionSpace | None = None,
                       max_factor: int = 16) -> QuadratureRule:
    """Smallest grid of the given family carrying a positive rule for *space*.

    The rule integrates ``quadrature_target(space)`` exactly, which is what an
    F-exact second-derivative operator needs. Grid sizes are tried from
    *start_n* (default: the dimension of F + F') upwards.
    """
    if target is None:
        target = quadrature_target(space)
    g_dim = exactness_space(space).dim
    n = max(start_n or g_dim, 2)
    if n < space.dim:
        raise ValueError(f"start_n={n} smaller than dim(F)={space.dim}")
    cap = max_factor * max(space.dim, 1)
    last = None
    while n <= cap:
        try:
            return least_squares_weights(target, make_nodes(family, n, space.element),
                                         family=family)
        except QuadratureError as exc:
            last = exc
            n += 1
    raise QuadratureError(f"no positive exact rule on {family} grids with N <= {cap} "
                          f"({last}); try another node family")


def rule_for(space: FunctionSpace, family: str = "equi", n: int | None = None) -> QuadratureRule:
    """Rule on a fixed grid when *n* is given, otherwise the smallest positive one."""
    if n is None:
        return find_positive_rule(space, family=family)
    target = quadrature_target(space)
    return least_squares_weights(target, make_nodes(family, n, space.element), family=family)


def exactness_error(rule: QuadratureRule, target: FunctionSpace) -> float:
    """max_j |sum_i w_i h_j(x_i) - int h_j| / (1 + |int h_j|)."""
    if target.dim == 0:
        return 0.0
    m = moments(target)
    approx = rule.weights @ target.values(rule.nodes)
    return float(np.max(np.abs(approx - m) / (1.0 + np.abs(m))))


__all__ = [
    "QuadratureRule", "QuadratureError", "NonPositiveWeights", "InexactQuadrature",
    "MomentError", "moments", "least_squares_weights", "find_positive_rule", "rule_for",
    "equidistant_nodes", "lobatto_nodes", "lobatto_weights", "make_nodes", "exactness_error",
]
