"""Finite-dimensional function spaces on a closed interval.

A :class:`FunctionSpace` is an ordered list of :class:`BasisFunction` objects
with closed-form values and derivatives. The helpers here build the spaces
needed to construct second-derivative SBP operators: the derivative space,
direct sums, and the space of product-rule derivatives that a norm-matrix
quadrature has to integrate exactly.

Built-in families are available through :func:`polynomial`,
:func:`trigonometric`, :func:`exponential`, :func:`gaussian_rbf`, and the
tag parser :func:`parse_space` (``poly:d=2``, ``trig:d=1``,
``exp:d=2,alpha=1``, ``rbf:alpha=1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg

RANK_TOL = 1e-10

Fn = Callable[[np.ndarray], np.ndarray]


class SpaceError(ValueError):
    """Raised for malformed spaces or rank failures."""


@dataclass(frozen=True)
class BasisFunction:
    """One basis element with closed-form value and derivatives.

    ``d1``/``d2`` may be ``None`` for derived functions whose derivatives are
    never needed (e.g. the integrands of a quadrature target space).
    ``integral`` optionally holds the exact integral over the element.
    """

    eval: Fn
    d1: Optional[Fn] = None
    d2: Optional[Fn] = None
    label: str = ""
    integral: Optional[float] = None

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class FunctionSpace:
    basis: tuple
    element: tuple = (-1.0, 1.0)
    closure: bool = False
    tag: str = "custom"
    # kind-specific parameters used for closed-form shortcuts
    kind: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        xl, xr = self.element
        if not xr > xl:
            raise SpaceError(f"invalid element {self.element}")
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "element", (float(xl), float(xr)))

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def labels(self) -> list:
        return [b.label for b in self.basis]

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _stack([b.eval for b in self.basis], x)

    def derivatives(self, x, order: int = 1) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        fns = []
        for b in self.basis:
            fn = b.d1 if order == 1 else b.d2
            if fn is None:
                raise SpaceError(f"order-{order} derivative of {b.label!r} not available")
            fns.append(fn)
        return _stack(fns, x)

    def sample_grid(self, factor: int = 4) -> np.ndarray:
        n = max(factor * self.dim, 8)
        return np.linspace(*self.element, n)

    def __repr__(self):
        return f"FunctionSpace({self.tag}, dim={self.dim}, element={self.element})"


def _stack(fns, x):
    cols = [np.broadcast_to(np.asarray(f(x), dtype=float), x.shape) for f in fns]
    if not cols:
        return np.zeros(x.shape + (0,))
    return np.stack(cols, axis=-1)


# {{{ rank reduction


def independent_columns(A: np.ndarray, tol: float = RANK_TOL) -> list:
    """Return indices of a maximal independent set of columns of *A*.

    Columns are scanned left to right, so the earliest columns win ties.
    A column is kept if the part of it orthogonal to the kept columns has
    relative size above *tol*.
    """
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=0)
    scale = norms.max() if norms.size else 0.0
    keep = []
    Q = np.zeros((A.shape[0], 0))
    for k in range(A.shape[1]):
        # vanishing column; the absolute guard keeps O(1) functions next to huge ones
        if norms[k] <= 1e-14 * max(scale, 1e-300) and norms[k] <= 1e-10:
            continue
        v = A[:, k] / norms[k]
        # two passes of classical Gram-Schmidt
        r = v - Q @ (Q.T @ v)
        r = r - Q @ (Q.T @ r)
        nr = np.linalg.norm(r)
        if nr > tol:
            keep.append(k)
            Q = np.column_stack([Q, r / nr])
    return keep


def numerical_rank(A: np.ndarray, tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def reduce_basis(candidates: Sequence[BasisFunction], element, tol: float = RANK_TOL) -> list:
    cand = list(candidates)
    if not cand:
        return []
    x = np.linspace(*element, max(4 * len(cand), 8))
    A = _stack([c.eval for c in cand], x)
    return [cand[k] for k in independent_columns(A, tol)]


def check_independent(space: FunctionSpace, tol: float = RANK_TOL) -> None:
    if space.dim < 1:
        raise SpaceError("function space must have dim >= 1")
    x = space.sample_grid()
    r = numerical_rank(space.values(x), tol)
    if r != space.dim:
        raise SpaceError(f"basis of {space.tag} is rank deficient ({r} < {space.dim})")


# }}}


# {{{ built-in families


def polynomial(d: int, element=(-1.0, 1.0)) -> FunctionSpace:
    """Polynomials of degree <= d, represented by Legendre polynomials on *element*."""
    if d < 0:
        raise SpaceError("degree must be nonnegative")
    basis = [_legendre_basis(k, element) for k in range(d + 1)]
    return FunctionSpace(basis, element, closure=True, tag=f"poly:d={d}",
                         kind="poly", params={"d": d})


def _legendre_basis(k, element):
    P = npleg.Legendre.basis(k, domain=list(element))
    dP = P.deriv(1)
    ddP = P.deriv(2)
    integral = float(element[1] - element[0]) if k == 0 else 0.0
    return BasisFunction(P, dP, ddP, label=f"P{k}", integral=integral)


def trigonometric(d: int, element=(-1.0, 1.0)) -> FunctionSpace:
    """span{1, sin(k pi s), cos(k pi s) | k=1..d} with s the element mapped to [-1, 1]."""
    if d < 0:
        raise SpaceError("degree must be nonnegative")
    basis = [_constant(element)]
    for k in range(1, d + 1):
        basis.extend(_trig_pair(k, element))
    return FunctionSpace(basis, element, closure=True, tag=f"trig:d={d}",
                         kind="trig", params={"d": d})


def _constant(element, label="1"):
    width = element[1] - element[0]
    return BasisFunction(
        lambda x: np.ones_like(x),
        lambda x: np.zeros_like(x),
        lambda x: np.zeros_like(x),
        label=label,
        integral=float(width),
    )


def _trig_pair(k, element):
    xl, xr = element
    h = 2.0 / (xr - xl)
    w = k * math.pi * h

    if (xl, xr) == (-1.0, 1.0):
        def s(x):
            return x
    else:
        def s(x):
            return h * (x - xl) - 1.0

    # integral of sin/cos(k pi s) over a full number of periods vanishes
    sin_k = BasisFunction(
        lambda x: np.sin(k * math.pi * s(x)),
        lambda x: w * np.cos(k * math.pi * s(x)),
        lambda x: -w * w * np.sin(k * math.pi * s(x)),
        label=f"sin({k}pi x)",
        integral=0.0,
    )
    cos_k = BasisFunction(
        lambda x: np.cos(k * math.pi * s(x)),
        lambda x: -w * np.sin(k * math.pi * s(x)),
        lambda x: -w * w * np.cos(k * math.pi * s(x)),
        label=f"cos({k}pi x)",
        integral=0.0,
    )
    return [sin_k, cos_k]


def exponential(d: int, alpha: float = 1.0, element=(-1.0, 1.0)) -> FunctionSpace:
    """span{1, x, ..., x^(d-1), exp(alpha x)}."""
    if d < 0:
        raise SpaceError("d must be nonnegative")
    if alpha == 0:
        raise SpaceError("alpha must be nonzero")
    basis = [_monomial(k, element) for k in range(d)]
    a = float(alpha)
    xl, xr = element
    basis.append(BasisFunction(
        lambda x: np.exp(a * x),
        lambda x: a * np.exp(a * x),
        lambda x: a * a * np.exp(a * x),
        label=f"exp({a:g}x)",
        integral=float((math.exp(a * xr) - math.exp(a * xl)) / a),
    ))
    return FunctionSpace(basis, element, closure=True, tag=f"exp:d={d},alpha={a:.17g}",
                         kind="exp", params={"d": d, "alpha": a})


def _monomial(k, element):
    xl, xr = element
    integral = (xr ** (k + 1) - xl ** (k + 1)) / (k + 1)
    if k == 0:
        return _constant(element)
    if k == 1:
        return BasisFunction(lambda x: x, lambda x: np.ones_like(x), lambda x: np.zeros_like(x),
                             label="x", integral=integral)
    return BasisFunction(
        lambda x: x ** k,
        lambda x: k * x ** (k - 1),
        lambda x: k * (k - 1) * x ** (k - 2),
        label=f"x^{k}",
        integral=integral,
    )


def gaussian_rbf(alpha: float = 1.0, element=(-1.0, 1.0), sign: float = -1.0) -> FunctionSpace:
    """span{1, x, exp(sign * (x/alpha)^2)}.

    The default ``sign=-1`` is the usual decaying Gaussian; ``sign=+1`` gives
    the growing variant.
    """
    if alpha == 0:
        raise SpaceError("alpha must be nonzero")
    if sign not in (-1.0, 1.0, -1, 1):
        raise SpaceError("sign must be +1 or -1")
    c = float(sign) / float(alpha) ** 2

    def g(x):
        return np.exp(c * x * x)

    rbf = BasisFunction(
        g,
        lambda x: 2 * c * x * g(x),
        lambda x: (2 * c + 4 * c * c * x * x) * g(x),
        label=f"exp({'-' if sign < 0 else ''}(x/{alpha:g})^2)",
    )
    basis = [_constant(element), _monomial(1, element), rbf]
    tag = f"rbf:alpha={float(alpha):.17g}" + ("" if sign < 0 else ",sign=1")
    return FunctionSpace(basis, element, closure=False, tag=tag,
                         kind="rbf", params={"alpha": float(alpha), "sign": float(sign)})


def custom(basis: Sequence[BasisFunction], element=(-1.0, 1.0), closure=False,
           tag="custom", validate=True, rng=None) -> FunctionSpace:
    """Wrap user-supplied basis functions, checking their derivatives numerically."""
    space = FunctionSpace(tuple(basis), element, closure=closure, tag=tag)
    if validate:
        validate_derivatives(space, rng=rng)
        check_independent(space)
    return space


def validate_derivatives(space: FunctionSpace, npts: int = 10, step: float = 1e-5,
                         tol: float = 1e-6, rng=None) -> None:
    """Compare d1/d2 with central differences at random points of the element."""
    rng = np.random.default_rng(rng)
    xl, xr = space.element
    x = rng.uniform(xl + step, xr - step, npts)
    for b in space.basis:
        pairs = [(b.eval, b.d1, "d1"), (b.d1, b.d2, "d2")]
        for f, df, name in pairs:
            if f is None or df is None:
                continue
            fd = (f(x + step) - f(x - step)) / (2 * step)
            exact = df(x)
            err = np.abs(fd - exact) / np.maximum(1.0, np.abs(exact))
            if np.max(err) > tol:
                raise SpaceError(f"{name} of {b.label!r} disagrees with finite differences "
                                 f"(rel. error {np.max(err):.2e})")


def parse_space(tag: str, element=(-1.0, 1.0)) -> FunctionSpace:
    """Build a built-in space from a tag such as ``rbf:alpha=0.2236``."""
    kind, _, rest = tag.strip().partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, _, val = item.partition("=")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise SpaceError(f"bad parameter {item!r} in space tag {tag!r}") from None
    kind = kind.strip().lower()
    try:
        if kind in ("poly", "polynomial"):
            return polynomial(int(params.get("d", 2)), element)
        if kind in ("trig", "trigonometric"):
            return trigonometric(int(params.get("d", 1)), element)
        if kind in ("exp", "exponential"):
            return exponential(int(params.get("d", 2)), params.get("alpha", 1.0), element)
        if kind in ("rbf", "gaussian"):
            return gaussian_rbf(params.get("alpha", 1.0), element, params.get("sign", -1.0))
    except (TypeError, ValueError) as exc:
        raise SpaceError(f"bad space tag {tag!r}: {exc}") from exc
    raise SpaceError(f"unknown space kind {kind!r} in tag {tag!r}")


# }}}


# {{{ space operations


def derivative_space(space: FunctionSpace, tol: float = RANK_TOL) -> FunctionSpace:
    """span{f' : f in basis}, with zero and dependent derivatives pruned."""
    cand = []
    for b in space.basis:
        if b.d1 is None:
            raise SpaceError(f"basis element {b.label!r} has no first derivative")
        cand.append(BasisFunction(b.d1, b.d2, None, label=f"({b.label})'"))
    basis = reduce_basis(cand, space.element, tol)
    if not basis:
        raise SpaceError(f"every derivative of {space.tag} collapsed to zero")
    return FunctionSpace(basis, space.element, closure=False, tag=f"d({space.tag})")


def direct_sum(a: FunctionSpace, b: FunctionSpace, tol: float = RANK_TOL) -> FunctionSpace:
    """Smallest space containing both *a* and *b*; earlier basis elements are kept."""
    if not np.allclose(a.element, b.element, rtol=0, atol=1e-14):
        raise SpaceError(f"element mismatch: {a.element} vs {b.element}")
    basis = reduce_basis(list(a.basis) + list(b.basis), a.element, tol)
    if len(basis) == a.dim and a.kind != "custom":
        # nothing new: keep the named space so closed forms stay available
        return a
    return FunctionSpace(basis, a.element, closure=False, tag=f"{a.tag}+{b.tag}")


def exactness_space(space: FunctionSpace) -> FunctionSpace:
    """The space F + F' on which a first-derivative operator must be exact."""
    if space.closure:
        return space
    return direct_sum(space, derivative_space(space))


def product_rule_space(g: FunctionSpace, tol: float = RANK_TOL) -> FunctionSpace:
    """span{(g_i g_j)' : i <= j}, rank reduced. May have dimension zero."""
    closed = _product_rule_closed_form(g)
    if closed is not None:
        return closed
    cand = []
    for i, gi in enumerate(g.basis):
        for j in range(i, g.dim):
            gj = g.basis[j]
            if gi.d1 is None or gj.d1 is None:
                raise SpaceError("product rule space needs first derivatives")
            cand.append(BasisFunction(_product_derivative(gi, gj),
                                      label=f"({gi.label}*{gj.label})'"))
    basis = reduce_basis(cand, g.element, tol)
    return FunctionSpace(basis, g.element, closure=False, tag=f"prod({g.tag})")


def _product_derivative(gi, gj):
    return lambda x: gi.d1(x) * gj.eval(x) + gi.eval(x) * gj.d1(x)


def _product_rule_closed_form(g):
    if g.kind == "poly":
        d = g.params["d"]
        basis = [_legendre_basis(k, g.element) for k in range(2 * d)]
        return FunctionSpace(basis, g.element, tag=f"prod({g.tag})")
    if g.kind == "trig":
        d = g.params["d"]
        basis = []
        for k in range(1, 2 * d + 1):
            basis.extend(_trig_pair(k, g.element))
        return FunctionSpace(basis, g.element, tag=f"prod({g.tag})")
    return None


def with_constants(space: FunctionSpace, tol: float = RANK_TOL) -> FunctionSpace:
    """Prepend the constant function unless it already lies in *space*."""
    const = _constant(space.element)
    basis = reduce_basis([const] + list(space.basis), space.element, tol)
    return FunctionSpace(basis, space.element, closure=False, tag=f"1+{space.tag}")


def quadrature_target(space: FunctionSpace) -> FunctionSpace:
    """Functions a norm-matrix quadrature must integrate for an F-exact D2 to exist.

    This is the product-rule space of F + F', augmented with constants so that
    the weights also reproduce the element length.
    """
    return with_constants(product_rule_space(exactness_space(space)))


def vandermonde(space: FunctionSpace, nodes) -> tuple:
    """Return ``(V, V')`` with ``V[i, j] = g_j(x_i)`` and ``V'[i, j] = g_j'(x_i)``."""
    x = np.asarray(nodes, dtype=float)
    xl, xr = space.element
    slack = 1e-12 * (xr - xl)
    bad = np.flatnonzero((x < xl - slack) | (x > xr + slack))
    if bad.size:
        raise SpaceError(f"node {bad[0]} (x={x[bad[0]]:g}) outside element {space.element}")
    if x.size > 1 and np.any(np.diff(x) <= 0):
        raise SpaceError("nodes must be strictly increasing")
    return space.values(x), space.derivatives(x, 1)


def span_residual(space: FunctionSpace, vectors: np.ndarray, nodes) -> float:
    """Largest relative distance of the columns of *vectors* from span(V)."""
    V = space.values(np.asarray(nodes, dtype=float))
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float).T).T
    coef, *_ = np.linalg.lstsq(V, vectors, rcond=None)
    res = np.linalg.norm(V @ coef - vectors, axis=0)
    scale = np.maximum(np.linalg.norm(vectors, axis=0), 1e-300)
    return float(np.max(res / scale)) if res.size else 0.0


def map_space(space: FunctionSpace, block) -> FunctionSpace:
    """Pull *space* back to *block* through the affine map from its element."""
    xl, xr = space.element
    bl, br = float(block[0]), float(block[1])
    s = (xr - xl) / (br - bl)

    def ref(x):
        return xl + (x - bl) * s

    basis = []
    for b in space.basis:
        basis.append(BasisFunction(
            (lambda f: lambda x: f(ref(x)))(b.eval),
            None if b.d1 is None else (lambda f: lambda x: s * f(ref(x)))(b.d1),
            None if b.d2 is None else (lambda f: lambda x: s * s * f(ref(x)))(b.d2),
            label=b.label,
            integral=None if b.integral is None else b.integral / s,
        ))
    return FunctionSpace(basis, (bl, br), closure=space.closure, tag=space.tag)


# }}}
