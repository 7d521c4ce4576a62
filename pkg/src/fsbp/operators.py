"""Construction and diagnostics of function-space SBP operators.

Given a quadrature whose weights form ``P``, the antisymmetric part ``Q_A``
of ``Q = Q_A + B/2`` is recovered from the exactness conditions

    Q_A V = P V' - B V / 2

on the nodal values ``V`` of a basis of ``F + F'``. Then ``D1 = P^{-1} Q`` is
exact on ``F + F'`` and ``D2 = P^{-1} (B D1 - D1^T P D1)`` is exact on ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .funcspace import FunctionSpace, exactness_space, map_space
from .quadrature import QuadratureRule

D1_TOL = 1e-10
D2_TOL = 1e-8
SBP_TOL = 1e-12


class ConstructionError(RuntimeError):
    pass


class ConstructionInexact(ConstructionError):
    def __init__(self, residual, worst=""):
        self.residual = float(residual)
        self.worst = worst
        super().__init__(f"exactness residual {residual:.3e} (worst basis element: {worst})")


def boundary_matrix(n: int) -> np.ndarray:
    B = np.zeros((n, n))
    B[0, 0] = -1.0
    B[-1, -1] = 1.0
    return B


@dataclass(frozen=True)
class FsbpOperatorSet:
    """Norm, SBP and derivative matrices on one element.

    ``exactness_space`` is F + F' (the space ``D1`` is exact on) and
    ``target_space`` is F (the space ``D2`` is exact on).
    """

    nodes: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    D1: np.ndarray
    S: np.ndarray
    D2: Optional[np.ndarray] = None
    exactness_space: Optional[FunctionSpace] = field(default=None, repr=False)
    target_space: Optional[FunctionSpace] = field(default=None, repr=False)
    element: tuple = (-1.0, 1.0)
    tag: str = "custom"

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def B(self) -> np.ndarray:
        return boundary_matrix(self.n)

    @property
    def weights(self) -> np.ndarray:
        return np.diag(self.P).copy()

    def sbp_residual(self) -> float:
        return float(np.max(np.abs(self.Q + self.Q.T - self.B)))


def solve_antisymmetric(V: np.ndarray, R: np.ndarray, method: str = "auto") -> np.ndarray:
    """Minimal-Frobenius-norm antisymmetric ``X`` with ``X V = R`` (least squares).

    ``method="lstsq"`` vectorizes the strictly lower triangle of ``X`` and solves
    ``C q = y`` by an SVD-based minimal-norm solve. ``method="projection"``
    uses the equivalent closed form in an orthonormal basis of range(V); it is
    O(N^3) instead of O(N^6) and is what ``"auto"`` picks for large grids.
    """
    n = V.shape[0]
    if method == "auto":
        method = "lstsq" if n <= 40 else "projection"
    if method == "lstsq":
        return _antisym_lstsq(V, R)
    if method == "projection":
        return _antisym_projection(V, R)
    raise ValueError(f"unknown method {method!r}")


def _antisym_lstsq(V, R):
    n, L = V.shape
    rows, cols = np.tril_indices(n, -1)
    C = np.zeros((n, L, rows.size))
    k = np.arange(rows.size)
    # X[i, j] = q, X[j, i] = -q for i > j
    C[rows, :, k] += V[cols, :]
    C[cols, :, k] -= V[rows, :]
    C = C.reshape(n * L, rows.size)
    y = R.reshape(n * L)
    q, *_ = scipy.linalg.lstsq(C, y, cond=1e-12)
    X = np.zeros((n, n))
    X[rows, cols] = q
    X[cols, rows] = -q
    return X


def _antisym_projection(V, R):
    # X = [U, U_perp] [[A11, -A21^T], [A21, 0]] [U, U_perp]^T with V = U diag(s) W^T;
    # A11 solves the antisymmetric least-squares problem min |A11 diag(s) - U^T R W|.
    n = V.shape[0]
    U, s, Wt = np.linalg.svd(V, full_matrices=False)
    r = int(np.sum(s > 1e-12 * s[0]))
    U, s, Wt = U[:, :r], s[:r], Wt[:r]
    RW = R @ Wt.T
    M = U.T @ RW
    A11 = (M * s[None, :] - M.T * s[:, None]) / (s[:, None] ** 2 + s[None, :] ** 2)
    A21 = (RW - U @ M) / s  # component outside range(V), in the full space
    return U @ A11 @ U.T + A21 @ U.T - U @ A21.T


def build_first_derivative(space: FunctionSpace, rule: QuadratureRule,
                           method: str = "auto", tol: float = D1_TOL) -> FsbpOperatorSet:
    """First-derivative operator exact on F + F' with norm matrix ``diag(rule.weights)``."""
    if not np.allclose(space.element, (rule.nodes[0], rule.nodes[-1]), atol=1e-12):
        raise ConstructionError(
            f"rule nodes [{rule.nodes[0]:g}, {rule.nodes[-1]:g}] do not span element {space.element}")
    G = exactness_space(space)
    x = rule.nodes
    n = x.size
    V = G.values(x)
    Vp = G.derivatives(x, 1)
    # balance basis elements of very different magnitude
    scale = np.maximum(np.abs(V).max(axis=0), np.abs(Vp).max(axis=0))
    V, Vp = V / scale, Vp / scale
    P = np.diag(rule.weights)
    B = boundary_matrix(n)
    R = P @ Vp - 0.5 * B @ V
    QA = solve_antisymmetric(V, R, method)
    residual = np.abs(QA @ V - R).max(axis=0) / np.maximum(1.0, np.abs(R).max(axis=0))
    if residual.max() > tol:
        raise ConstructionInexact(residual.max(), G.basis[int(residual.argmax())].label)
    Q = QA + 0.5 * B
    D1 = Q / rule.weights[:, None]
    return FsbpOperatorSet(nodes=x.copy(), P=P, Q=Q, D1=D1, S=D1.copy(),
                           exactness_space=G, target_space=space,
                           element=space.element, tag=space.tag)


def second_derivative_matrix(P, D1, S=None):
    """``P^{-1} (B S - D1^T P D1)`` for diagonal ``P``."""
    S = D1 if S is None else S
    B = boundary_matrix(D1.shape[0])
    p = np.diag(P)
    return (B @ S - D1.T @ P @ D1) / p[:, None]


def build_second_derivative(ops: FsbpOperatorSet, tol: float = D2_TOL,
                            check: bool = True) -> FsbpOperatorSet:
    D2 = second_derivative_matrix(ops.P, ops.D1, ops.S)
    out = replace(ops, D2=D2)
    if check and ops.target_space is not None:
        res = verify_exactness(out, ops.target_space, 2)
        if res > tol:
            raise ConstructionInexact(res, "D2 on F (is D1 exact on F + F'?)")
    return out


def construct(space: FunctionSpace, rule: QuadratureRule, method: str = "auto") -> FsbpOperatorSet:
    return build_second_derivative(build_first_derivative(space, rule, method))


def verify_exactness(ops: FsbpOperatorSet, space: FunctionSpace, order: int,
                     relative: bool = True) -> float:
    """max over the basis of ``|D_k f - f^(k)|_inf``.

    With ``relative=True`` each residual is divided by ``max(1, |f^(k)|_inf)``,
    which matters for rapidly growing bases such as exp(20 x^2).
    """
    D = ops.D1 if order == 1 else ops.D2
    if D is None:
        raise ValueError("operator set has no D2 yet")
    f = space.values(ops.nodes)
    exact = space.derivatives(ops.nodes, order)
    res = np.abs(D @ f - exact).max(axis=0)
    if relative:
        res = res / np.maximum(1.0, np.abs(exact).max(axis=0))
    return float(res.max()) if res.size else 0.0


# {{{ nullspace and spectrum


@dataclass
class NullspaceReport:
    tag: str
    basis: np.ndarray
    expected: np.ndarray
    consistent: bool
    max_angle: float
    extra: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def nullspace_basis(M: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    _, s, Vt = np.linalg.svd(M)
    cutoff = tol * (s[0] if s.size else 0.0)
    k = int(np.sum(s > cutoff))
    return Vt[k:].T.copy()


def continuous_nullspace(space: FunctionSpace, nodes, order: int,
                         tol: float = 1e-10) -> np.ndarray:
    """Nodal values of an orthonormal basis of {f in F : f^(order) = 0}."""
    xs = space.sample_grid(8)
    Dk = space.derivatives(xs, order)
    Vs = space.values(xs)
    scale = np.abs(Vs).max(axis=0)
    Dk = Dk / scale
    coef = nullspace_basis(Dk, tol) if Dk.size else np.eye(space.dim)
    # an all-zero derivative matrix means every element is in the kernel
    if np.abs(Dk).max() == 0:
        coef = np.eye(space.dim)
    vals = (space.values(np.asarray(nodes)) / scale) @ coef
    if vals.size == 0:
        return vals.reshape(len(nodes), 0)
    q, _ = np.linalg.qr(vals)
    return q


def nullspace(M: np.ndarray, expected: Optional[np.ndarray] = None, tol: float = 1e-8,
              tag: str = "", angle_tol: float = 1e-6) -> NullspaceReport:
    """Numerical nullspace of *M* compared with an expected subspace.

    The verdict is "consistent" when both spaces have the same dimension and
    all principal angles are below *angle_tol*.
    """
    N = nullspace_basis(M, tol)
    if expected is None:
        expected = np.ones((M.shape[0], 1)) / np.sqrt(M.shape[0])
    E, _ = np.linalg.qr(expected) if expected.size else (expected, None)
    if N.shape[1] and E.shape[1]:
        angles = scipy.linalg.subspace_angles(N, E)
        max_angle = float(np.max(angles))
    else:
        max_angle = 0.0 if N.shape[1] == E.shape[1] else np.pi / 2
    consistent = N.shape[1] == E.shape[1] and max_angle <= angle_tol
    extra = None
    if N.shape[1] > E.shape[1]:
        # directions of the discrete kernel not explained by the expected one
        resid = N - E @ (E.T @ N)
        u, s, _ = np.linalg.svd(resid, full_matrices=False)
        extra = N @ (N.T @ u[:, : N.shape[1] - E.shape[1]])
    return NullspaceReport(tag, N, E, consistent, max_angle, extra)


def normalized_extra_vector(report: NullspaceReport) -> Optional[np.ndarray]:
    """The extra kernel vector shifted by constants to vanish at the first node,
    then scaled so its last entry is 1."""
    if report.extra is None:
        return None
    N = report.basis
    n = N.shape[0]
    ones = np.ones(n)
    if report.extra.shape[1] != 1:
        return None
    v = report.extra[:, 0]
    # the kernel contains constants; remove the constant so that v[0] = 0
    if np.linalg.norm(N @ (N.T @ ones) - ones) < 1e-6 * np.sqrt(n):
        v = v - v[0]
    if abs(v[-1]) < 1e-14:
        return v
    return v / v[-1]


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    max_real: float
    max_imag: float
    spectral_radius: float

    @property
    def size(self) -> int:
        return self.eigenvalues.size


def spectrum(M: np.ndarray) -> SpectrumReport:
    try:
        lam = scipy.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    return SpectrumReport(lam, float(lam.real.max()), float(np.abs(lam.imag).max()),
                          float(np.abs(lam).max()))


# }}}


def periodic_fd_operator(stencil, n: int, element=(-1.0, 1.0)) -> np.ndarray:
    """Circulant second-derivative matrix on *n* periodic points, spacing |element|/n."""
    stencil = np.asarray(stencil, dtype=float)
    if stencil.size % 2 != 1:
        raise ValueError("stencil length must be odd")
    if n <= stencil.size:
        raise ValueError("need more points than stencil entries")
    dx = (element[1] - element[0]) / n
    half = stencil.size // 2
    first_row = np.zeros(n)
    for k, c in enumerate(stencil):
        first_row[(k - half) % n] += c
    # row i is the first row shifted i places to the right
    return scipy.linalg.circulant(first_row).T / dx ** 2


FD_STENCILS = {
    2: [1.0, -2.0, 1.0],
    4: [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12],
    6: [1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90],
}


def map_to_block(ops: FsbpOperatorSet, block) -> FsbpOperatorSet:
    """Affine map of an operator set from its element to *block*."""
    bl, br = float(block[0]), float(block[1])
    if not br > bl:
        raise ValueError(f"empty block {block}")
    xl, xr = ops.element
    J = (br - bl) / (xr - xl)
    nodes = bl + (ops.nodes - xl) * J
    nodes[0], nodes[-1] = bl, br
    return replace(
        ops,
        nodes=nodes,
        P=ops.P * J,
        D1=ops.D1 / J,
        S=ops.S / J,
        D2=None if ops.D2 is None else ops.D2 / J ** 2,
        exactness_space=None if ops.exactness_space is None else map_space(ops.exactness_space, block),
        target_space=None if ops.target_space is None else map_space(ops.target_space, block),
        element=(bl, br),
    )
