"""Multi-block FSBP-SAT semi-discretizations and SSPRK(3,3) time stepping.

States of 1D multi-block problems are arrays of shape ``(I, N)``: one row
per block, one column per node. 2D states are ``(I*N, I*N)`` grids stored
y-outer/x-inner, i.e. ``U[j, i] = u(x_i, y_j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .funcspace import parse_space
from .operators import FD_STENCILS, FsbpOperatorSet, construct, map_to_block, periodic_fd_operator
from .quadrature import rule_for

EXPERIMENTS = ("advdiff-1d-single", "advdiff-1d-multi", "advdiff-2d",
               "boundary-layer", "burgers", "wave")


class SolverError(RuntimeError):
    pass


class SatError(ValueError):
    pass


class DivergenceError(SolverError):
    """Raised when the state stops being finite."""

    def __init__(self, step: int, t: float, last_finite_t: float):
        self.step = step
        self.t = t
        self.last_finite_t = last_finite_t
        super().__init__(f"non-finite state at step {step} (t={t:.6g}); "
                         f"last finite time {last_finite_t:.6g}")


# {{{ time stepping


def ssprk33_step(rhs: Callable, u, t: float, dt: float):
    """One step of the three-stage, third-order SSP Runge-Kutta method."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    u1 = u + dt * rhs(u, t)
    u2 = 0.75 * u + 0.25 * (u1 + dt * rhs(u1, t + dt))
    return u / 3.0 + 2.0 / 3.0 * (u2 + dt * rhs(u2, t + 0.5 * dt))


DX_NORM_FACTOR = 4.0


def time_step(lam_max: float, eps: float, dx: float, c_cfl: float) -> float:
    """dt from 1/dt = (lam_max/dx + eps/dx^2) / c_cfl."""
    inv = (abs(lam_max) / dx + abs(eps) / dx ** 2) / c_cfl
    if not inv > 0:
        raise ValueError("time step rule needs a nonzero speed or diffusivity")
    return 1.0 / inv


def integrate(rhs: Callable, u0, T: float, dt: float, observe: Optional[Callable] = None,
              samples: int = 100):
    """March ``u' = rhs(u, t)`` to time ``T`` with steps of at most ``dt``.

    The step is shrunk so that ``T`` is hit exactly. ``observe(t, u)`` is
    called at ``samples + 1`` roughly uniform times including 0 and ``T``.
    Returns the final state and the step actually used.
    """
    if not T > 0:
        raise ValueError("end time must be positive")
    nsteps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / nsteps
    marks = set(np.unique(np.round(np.linspace(0, nsteps, max(samples, 1) + 1)).astype(int)))
    u = np.array(u0, dtype=float)
    t = 0.0
    if observe is not None:
        observe(t, u)
    # blow-up is reported through DivergenceError, not floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, nsteps + 1):
            new = ssprk33_step(rhs, u, t, dt)
            t_new = k * dt
            if not np.all(np.isfinite(new)):
                raise DivergenceError(k, t_new, t)
            u, t = new, t_new
            if observe is not None and k in marks:
                observe(t, u)
    return u, dt


# }}}


# {{{ SATs and meshes


@dataclass(frozen=True)
class SatCoefficients:
    """Baumann-Oden interface penalties for advection speed ``a`` and diffusivity ``eps``."""

    sigma1L: float
    sigma2L: float
    sigma3L: float
    sigma1R: float
    sigma2R: float
    sigma3R: float
    a: float
    eps: float

    @classmethod
    def stable(cls, a: float, eps: float, sigma1R: Optional[float] = None,
               sigma2R: Optional[float] = None) -> "SatCoefficients":
        """Coefficients from the two free parameters.

        The defaults are the upwind choice (``sigma1R = 0`` for ``a >= 0``,
        ``sigma1R = a`` otherwise) and ``sigma2R = -eps/2``.
        """
        if sigma1R is None:
            sigma1R = 0.0 if a >= 0 else float(a)
        if sigma2R is None:
            sigma2R = -eps / 2.0
        sats = cls(sigma1L=sigma1R - a, sigma2L=eps + sigma2R, sigma3L=-sigma2R,
                   sigma1R=sigma1R, sigma2R=sigma2R, sigma3R=-eps - sigma2R, a=a, eps=eps)
        sats.validate()
        return sats

    def validate(self, tol: float = 1e-14) -> None:
        a, eps = self.a, self.eps
        checks = [
            (self.sigma1R <= a / 2 + tol, "sigma1R <= a/2"),
            (abs(self.sigma1L - (self.sigma1R - a)) <= tol, "sigma1L = sigma1R - a"),
            (abs(self.sigma2L - (eps + self.sigma2R)) <= tol, "sigma2L = eps + sigma2R"),
            (abs(self.sigma3R - (-eps - self.sigma2R)) <= tol, "sigma3R = -eps - sigma2R"),
            (abs(self.sigma3L + self.sigma2R) <= tol, "sigma3L = -sigma2R"),
        ]
        for ok, what in checks:
            if not ok:
                raise SatError(f"SAT coefficients violate {what}: {self}")


@dataclass(frozen=True)
class DirichletSats:
    """Penalties for weakly imposed Dirichlet data at the two outer boundaries.

    With ``tau1L = -a``, ``tau3L = eps``, ``tau1R = 0``, ``tau3R = -eps`` (for
    ``a >= 0``) the boundary contributions to the energy rate are
    ``-a/2 (u_1^2 + u_N^2)`` for homogeneous data.
    """

    tau1L: float
    tau3L: float
    tau1R: float
    tau3R: float
    gL: float = 0.0
    gR: float = 0.0

    @classmethod
    def stable(cls, a: float, eps: float, gL: float = 0.0, gR: float = 0.0) -> "DirichletSats":
        if a >= 0:
            return cls(-a, eps, 0.0, -eps, gL, gR)
        return cls(0.0, eps, a, -eps, gL, gR)


@dataclass(frozen=True)
class BlockMesh:
    """``I`` uniform blocks partitioning ``domain``, all carrying the same mapped operators."""

    domain: tuple
    nblocks: int
    ops: FsbpOperatorSet
    nodes: np.ndarray = field(repr=False)

    @classmethod
    def uniform(cls, reference: FsbpOperatorSet, domain, nblocks: int) -> "BlockMesh":
        xl, xr = float(domain[0]), float(domain[1])
        if nblocks < 1:
            raise ValueError("need at least one block")
        if not xr > xl:
            raise ValueError(f"empty domain {domain}")
        if reference.D2 is None:
            raise ValueError("reference operators lack D2")
        edges = xl + (xr - xl) * np.arange(nblocks + 1) / nblocks
        edges[-1] = xr
        ops = map_to_block(reference, (edges[0], edges[1]))
        sx = (reference.nodes - reference.element[0]) / (reference.element[1] - reference.element[0])
        nodes = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * sx[None, :]
        nodes[:, 0], nodes[:, -1] = edges[:-1], edges[1:]
        return cls((xl, xr), nblocks, ops, nodes)

    @property
    def n(self) -> int:
        return self.ops.n

    @property
    def shape(self) -> tuple:
        return (self.nblocks, self.n)

    @property
    def weights(self) -> np.ndarray:
        return self.ops.weights

    @property
    def dx(self) -> float:
        """Resolution in the time-step rule.

        The smallest node spacing, capped at ``4/||D1||_2`` so that operators
        with tiny boundary weights (and hence a stiff ``D1``) get a
        correspondingly smaller step.
        """
        h = float(np.min(np.diff(self.ops.nodes)))
        return min(h, DX_NORM_FACTOR / float(np.linalg.norm(self.ops.D1, 2)))

    def mass(self, u) -> float:
        return float(np.sum(np.asarray(u) @ self.weights))

    def energy(self, u) -> float:
        u = np.asarray(u)
        return float(np.sum((u * u) @ self.weights))


# }}}


# {{{ right-hand sides


def _interface_sats(mesh: BlockMesh, sats: SatCoefficients, u, du, periodic: bool):
    """Sum of left and right penalties, one row per block, before scaling by P^-1.

    ``u`` may carry leading batch axes; the last two are (block, node).
    """
    D1 = mesh.ops.D1
    uL, uR = u[..., 0], u[..., -1]
    dL, dR = du[..., 0], du[..., -1]
    # neighbour traces (periodic wrap; non-periodic ends are overwritten by the caller)
    nbL_u, nbL_d = np.roll(uR, 1, axis=-1), np.roll(dR, 1, axis=-1)
    nbR_u, nbR_d = np.roll(uL, -1, axis=-1), np.roll(dL, -1, axis=-1)
    jL, djL = uL - nbL_u, dL - nbL_d
    jR, djR = uR - nbR_u, dR - nbR_d
    if not periodic:
        jL[..., 0] = 0.0
        djL[..., 0] = 0.0
        jR[..., -1] = 0.0
        djR[..., -1] = 0.0
    S = np.zeros_like(u)
    S[..., 0] += sats.sigma1L * jL + sats.sigma2L * djL
    S[..., -1] += sats.sigma1R * jR + sats.sigma2R * djR
    S += (sats.sigma3L * jL)[..., None] * D1[0, :]
    S += (sats.sigma3R * jR)[..., None] * D1[-1, :]
    return S


def _dirichlet_sats(mesh: BlockMesh, bc: DirichletSats, u):
    D1 = mesh.ops.D1
    S = np.zeros_like(u)
    jL = u[..., 0, 0] - bc.gL
    jR = u[..., -1, -1] - bc.gR
    S[..., 0, 0] += bc.tau1L * jL
    S[..., 0, :] += (bc.tau3L * jL)[..., None] * D1[0, :]
    S[..., -1, -1] += bc.tau1R * jR
    S[..., -1, :] += (bc.tau3R * jR)[..., None] * D1[-1, :]
    return S


def advdiff_rhs_1d(mesh: BlockMesh, sats: SatCoefficients, u, periodic: bool = True,
                   bc: Optional[DirichletSats] = None):
    """``-a D1 u + eps D2 u + P^-1 (S_L + S_R)`` on every block.

    Leading axes of ``u`` beyond ``(I, N)`` are treated as independent lines.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-2:] != mesh.shape:
        raise ValueError(f"state shape {u.shape} does not end in {mesh.shape}")
    if not periodic and bc is None:
        raise ValueError("non-periodic problems need boundary data")
    ops = mesh.ops
    du = u @ ops.D1.T
    S = _interface_sats(mesh, sats, u, du, periodic)
    if not periodic:
        S += _dirichlet_sats(mesh, bc, u)
    return -sats.a * du + sats.eps * (u @ ops.D2.T) + S / ops.weights


def advdiff_rhs_2d(mesh_x: BlockMesh, mesh_y: BlockMesh, sats_x: SatCoefficients,
                   sats_y: SatCoefficients, U):
    """Tensor-product rhs: the 1D operator along every x-line plus every y-line."""
    U = np.asarray(U, dtype=float)
    Ix, Nx = mesh_x.shape
    Iy, Ny = mesh_y.shape
    if U.shape != (Iy * Ny, Ix * Nx):
        raise ValueError(f"grid shape {U.shape} != {(Iy * Ny, Ix * Nx)}")
    V = U.reshape(Iy * Ny, Ix, Nx)
    rx = advdiff_rhs_1d(mesh_x, sats_x, V).reshape(U.shape)
    W = U.T.reshape(Ix * Nx, Iy, Ny)
    ry = advdiff_rhs_1d(mesh_y, sats_y, W).reshape(Ix * Nx, Iy * Ny).T
    return rx + ry


def entropy_flux(um, up):
    """Two-point flux ``(u-^2 + u- u+ + u+^2) / 6`` for the split form of Burgers."""
    return (um * um + um * up + up * up) / 6.0


def burgers_rhs(mesh: BlockMesh, u, eps: float, sats: Optional[SatCoefficients] = None):
    """Skew-symmetric split form of viscous Burgers with entropy-conservative coupling.

    Per block ``-1/3 D1 (u^2) - 1/3 u D1 u + eps D2 u + P^-1 S``; the
    convective SAT replaces the boundary flux ``u^2/2`` by the two-point flux
    with the neighbour, the viscous part uses the Baumann-Oden penalties
    with ``a = 0``.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite Burgers state")
    if sats is None:
        sats = SatCoefficients.stable(0.0, eps)
    ops = mesh.ops
    du = u @ ops.D1.T
    conv = -(((u * u) @ ops.D1.T) + u * du) / 3.0
    uL, uR = u[:, 0], u[:, -1]
    fL = entropy_flux(np.roll(uR, 1), uL)
    fR = entropy_flux(uR, np.roll(uL, -1))
    S = _interface_sats(mesh, sats, u, du, True)
    S[:, 0] += -(0.5 * uL * uL - fL)
    S[:, -1] += 0.5 * uR * uR - fR
    return conv + eps * (u @ ops.D2.T) + S / ops.weights


def wave_rhs(D2, state, c: float):
    """First-order form ``(u, v)' = (v, c^2 D2 u)``; ``state`` has shape ``(2, N)``."""
    D2 = np.asarray(D2)
    state = np.asarray(state, dtype=float)
    if D2.ndim != 2 or D2.shape[0] != D2.shape[1]:
        raise ValueError("D2 must be square")
    if state.shape != (2, D2.shape[0]):
        raise ValueError(f"state shape {state.shape} != (2, {D2.shape[0]})")
    return np.stack([state[1], c * c * (D2 @ state[0])])


# }}}


# {{{ schemes and experiment configuration


@dataclass(frozen=True)
class Scheme:
    """A space tag and node family, e.g. ``poly:d=2@lobatto:3`` or ``trig:d=20@equi``.

    For the wave experiment ``fd:order=6`` selects a periodic finite-difference
    operator instead.
    """

    space: str
    family: str = "equi"
    n: Optional[int] = None

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        text = text.strip()
        space, _, grid = text.partition("@")
        family, _, n = grid.partition(":")
        return cls(space.strip(), family.strip() or "equi", int(n) if n.strip() else None)

    @property
    def is_fd(self) -> bool:
        return self.space.startswith("fd")

    @property
    def fd_order(self) -> int:
        _, _, rest = self.space.partition(":")
        params = dict(p.split("=") for p in rest.split(",") if "=" in p)
        return int(params.get("order", 2))

    def __str__(self):
        if self.is_fd:
            return self.space
        return f"{self.space}@{self.family}" + (f":{self.n}" if self.n else "")


def build_operators(scheme: Scheme, element=(-1.0, 1.0)) -> FsbpOperatorSet:
    space = parse_space(scheme.space, element)
    rule = rule_for(space, scheme.family, scheme.n)
    return construct(space, rule)


@dataclass
class ExperimentConfig:
    """Everything a run needs; unset fields fall back to the experiment's defaults."""

    scheme: str = ""
    domain: Optional[tuple] = None
    nblocks: Optional[int] = None
    a: Optional[float] = None
    eps: Optional[float] = None
    a2: Optional[float] = None
    eps2: Optional[float] = None
    c: float = 1.0
    T: Optional[float] = None
    dt: Optional[float] = None
    c_cfl: float = 0.25
    samples: int = 100
    sigma1R: Optional[float] = None
    sigma2R: Optional[float] = None
    initial: str = "f1"
    k: float = 1.0
    n: Optional[int] = None
    reference_scheme: str = "poly:d=2@lobatto:3"
    reference_nblocks: Optional[int] = None
    reference_cache: Optional[str] = None


DEFAULTS = {
    "advdiff-1d-single": dict(scheme="trig:d=30@equi:62", domain=(-1.0, 1.0), nblocks=1,
                              a=1.0, eps=1e-5, T=1.0),
    "advdiff-1d-multi": dict(scheme="rbf:alpha=1@equi", domain=(-1.0, 1.0), nblocks=10,
                             a=1.0, eps=1e-2, T=0.1),
    "advdiff-2d": dict(scheme="rbf:alpha=0.22360679774997896,sign=1@equi", domain=(0.0, 1.0),
                       nblocks=20, a=1.0, eps=1e-4, a2=1.0, eps2=1e-4, T=0.25,
                       reference_nblocks=100),
    "boundary-layer": dict(scheme="exp:d=2,alpha=0.1@equi", domain=(0.0, 0.5), nblocks=20,
                           a=1.0, eps=1e-2, T=0.75),
    "burgers": dict(scheme="exp:d=2,alpha=1@equi", domain=(0.0, 1.0), nblocks=30,
                    eps=1e-2, T=0.1, reference_nblocks=200),
    "wave": dict(scheme="trig:d=20@equi", domain=(-1.0, 1.0), c=1.0, T=1.0, dt=1e-4),
}


def resolve_config(name: str, config: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    config = config or ExperimentConfig()
    updates = {k: v for k, v in DEFAULTS[name].items()
               if getattr(config, k) in (None, "")}
    return replace(config, **updates)


@dataclass
class ExperimentReport:
    name: str
    scheme: str
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    nodes: np.ndarray
    solution: np.ndarray
    errors: dict = field(default_factory=dict)
    error_history: Optional[np.ndarray] = None
    dt: float = 0.0
    steps: int = 0
    y: Optional[np.ndarray] = None

    @property
    def mass_drift(self) -> float:
        """Largest |mass(t) - mass(0)| relative to the P-weighted L1 mass of the data."""
        return float(np.max(np.abs(self.mass - self.mass[0])) / self._mass_scale)

    _mass_scale: float = 1.0


# }}}


# {{{ reference solutions and errors


def relative_errors(u, ref, weights=None) -> dict:
    """Relative 1-, 2-, max- and (optionally) P-norm errors of nodal vectors."""
    e = np.ravel(u) - np.ravel(ref)
    r = np.ravel(ref)
    out = {
        "err_1": float(np.sum(np.abs(e)) / np.sum(np.abs(r))),
        "err_2": float(np.linalg.norm(e) / np.linalg.norm(r)),
        "err_inf": float(np.max(np.abs(e)) / np.max(np.abs(r))),
    }
    if weights is not None:
        w = np.ravel(weights)
        out["err_P"] = float(np.sqrt(np.sum(w * e * e) / np.sum(w * r * r)))
    return out


def interpolation_matrix(mesh: BlockMesh, x) -> np.ndarray:
    """Rows evaluate the blockwise Lagrange interpolant of a mesh function at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    xl, xr = mesh.domain
    h = (xr - xl) / mesh.nblocks
    blk = np.clip(np.floor((x - xl) / h).astype(int), 0, mesh.nblocks - 1)
    M = np.zeros((x.size, mesh.nblocks * mesh.n))
    for row, (xi, b) in enumerate(zip(x, blk)):
        nodes = mesh.nodes[b]
        diff = xi - nodes
        exact = np.flatnonzero(np.abs(diff) <= 1e-14 * max(1.0, abs(xi)))
        if exact.size:
            M[row, b * mesh.n + exact[0]] = 1.0
            continue
        w = np.empty(mesh.n)
        for j in range(mesh.n):
            others = np.delete(nodes, j)
            w[j] = np.prod((xi - others) / (nodes[j] - others))
        M[row, b * mesh.n:(b + 1) * mesh.n] = w
    return M


# }}}


# {{{ experiments


def _sats_for(cfg: ExperimentConfig, a: float, eps: float) -> SatCoefficients:
    s2 = cfg.sigma2R
    if s2 is not None and cfg.eps and eps != cfg.eps:
        s2 = s2 * eps / cfg.eps
    return SatCoefficients.stable(a, eps, cfg.sigma1R, s2)


def _dt(cfg: ExperimentConfig, lam: float, eps: float, dx: float) -> float:
    if cfg.dt is not None:
        if not cfg.dt > 0:
            raise ValueError("time step must be positive")
        return cfg.dt
    return time_step(lam, eps, dx, cfg.c_cfl)


class _Recorder:
    def __init__(self, mass, energy, error=None):
        self.mass_fn, self.energy_fn, self.error_fn = mass, energy, error
        self.t, self.m, self.e, self.err = [], [], [], []

    def __call__(self, t, u):
        self.t.append(t)
        self.m.append(self.mass_fn(u))
        self.e.append(self.energy_fn(u))
        if self.error_fn is not None:
            self.err.append(self.error_fn(t, u))


def _report(name, cfg, rec, nodes, u, errors, dt, scale, y=None):
    rep = ExperimentReport(
        name=name, scheme=str(cfg.scheme), times=np.array(rec.t), mass=np.array(rec.m),
        energy=np.array(rec.e), nodes=nodes, solution=u, errors=errors,
        error_history=np.array([[d[k] for k in ("err_1", "err_2", "err_inf", "err_P")]
                                for d in rec.err]) if rec.err else None,
        dt=dt, steps=int(round(cfg.T / dt)), y=y)
    rep._mass_scale = scale if scale > 0 else 1.0
    return rep


def _advdiff_exact(name):
    if name == "advdiff-1d-single":
        modes = ((4.0, 1.0, np.cos), (40.0, 0.75, np.sin))
    else:
        modes = ((4.0, 1.0, np.cos), (10.0, 2.0, np.sin))

    def exact(x, t, a, eps):
        return sum(amp * np.exp(-eps * (k * np.pi) ** 2 * t) * f(k * np.pi * (x - a * t))
                   for k, amp, f in modes)
    return exact


def _run_advdiff_1d(name, cfg):
    ops = build_operators(Scheme.parse(cfg.scheme))
    mesh = BlockMesh.uniform(ops, cfg.domain, cfg.nblocks)
    sats = _sats_for(cfg, cfg.a, cfg.eps)
    exact = _advdiff_exact(name)
    u0 = exact(mesh.nodes, 0.0, cfg.a, cfg.eps)
    W = np.broadcast_to(mesh.weights, mesh.shape)

    def err(t, u):
        return relative_errors(u, exact(mesh.nodes, t, cfg.a, cfg.eps), W)

    rec = _Recorder(mesh.mass, mesh.energy, err)
    dt = _dt(cfg, cfg.a, cfg.eps, mesh.dx)
    u, dt = integrate(lambda v, t: advdiff_rhs_1d(mesh, sats, v), u0, cfg.T, dt, rec, cfg.samples)
    return _report(name, cfg, rec, mesh.nodes, u, err(cfg.T, u), dt,
                   float(np.sum(np.abs(u0) * W)))


def _gaussian_2d(x, y):
    return np.exp(-200.0 * ((x[None, :] - 0.25) ** 2 + (y[:, None] - 0.25) ** 2))


def _solve_2d(scheme, cfg, nblocks, observe=None):
    ops = build_operators(Scheme.parse(scheme))
    mesh = BlockMesh.uniform(ops, cfg.domain, nblocks)
    x = mesh.nodes.ravel()
    U0 = _gaussian_2d(x, x)
    sx = _sats_for(cfg, cfg.a, cfg.eps)
    sy = _sats_for(cfg, cfg.a2, cfg.eps2)
    w = np.tile(mesh.weights, nblocks)
    W = w[:, None] * w[None, :]
    dt = _dt(cfg, abs(cfg.a) + abs(cfg.a2), cfg.eps + cfg.eps2, mesh.dx)
    rec = _Recorder(lambda U: float(np.sum(W * U)), lambda U: float(np.sum(W * U * U)))
    U, dt = integrate(lambda V, t: advdiff_rhs_2d(mesh, mesh, sx, sy, V), U0, cfg.T, dt,
                      rec, cfg.samples)
    return mesh, U, W, rec, dt, U0


def _run_advdiff_2d(name, cfg):
    mesh, U, W, rec, dt, U0 = _solve_2d(cfg.scheme, cfg, cfg.nblocks)
    x = mesh.nodes.ravel()
    ref_mesh, Uref, *_ = _solve_2d(cfg.reference_scheme, cfg, cfg.reference_nblocks)
    M = interpolation_matrix(ref_mesh, x)
    Uref_c = M @ Uref @ M.T
    errors = relative_errors(U, Uref_c, W)
    return _report(name, cfg, rec, x, U, errors, dt, float(np.sum(np.abs(U0) * W)), y=x)


def boundary_layer_steady(x, eps):
    """(e^{x/eps} - 1) / (e^{1/(2 eps)} - 1), evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    # divide numerator and denominator by e^{1/(2 eps)}
    return (np.exp((x - 0.5) / eps) - np.exp(-0.5 / eps)) / (1.0 - np.exp(-0.5 / eps))


def _run_boundary_layer(name, cfg):
    ops = build_operators(Scheme.parse(cfg.scheme))
    mesh = BlockMesh.uniform(ops, cfg.domain, cfg.nblocks)
    sats = _sats_for(cfg, cfg.a, cfg.eps)
    bc = DirichletSats.stable(cfg.a, cfg.eps, 0.0, 1.0)
    u0 = 2.0 * mesh.nodes
    steady = boundary_layer_steady(mesh.nodes, cfg.eps)
    W = np.broadcast_to(mesh.weights, mesh.shape)

    def err(t, u):
        return relative_errors(u, steady, W)

    rec = _Recorder(mesh.mass, mesh.energy, err)
    dt = _dt(cfg, cfg.a, cfg.eps, mesh.dx)
    u, dt = integrate(lambda v, t: advdiff_rhs_1d(mesh, sats, v, periodic=False, bc=bc),
                      u0, cfg.T, dt, rec, cfg.samples)
    return _report(name, cfg, rec, mesh.nodes, u, err(cfg.T, u), dt,
                   float(np.sum(np.abs(u0) * W)))


def sawtooth(x):
    """Periodic sawtooth on [0, 1) with its jump at x = 1/2."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.5, 2.0 * x, 2.0 * x - 2.0)


def _burgers_mesh(scheme, cfg, nblocks) -> BlockMesh:
    return BlockMesh.uniform(build_operators(Scheme.parse(scheme)), cfg.domain, nblocks)


def _solve_burgers(mesh, cfg, observe=None):
    u0 = sawtooth(mesh.nodes)
    sats = _sats_for(cfg, 0.0, cfg.eps)
    # the solution stays within the range of the data (maximum principle)
    lam = float(np.max(np.abs(u0)))
    dt = _dt(cfg, lam, cfg.eps, mesh.dx)
    u, dt = integrate(lambda v, t: burgers_rhs(mesh, v, cfg.eps, sats), u0, cfg.T, dt,
                      observe, cfg.samples)
    return u, dt, u0


def burgers_reference(cfg: ExperimentConfig):
    """Fine polynomial reference, cached in ``cfg.reference_cache`` when given."""
    cache = cfg.reference_cache
    key = f"{cfg.reference_scheme}|I={cfg.reference_nblocks}|eps={cfg.eps!r}|T={cfg.T!r}"
    if cache:
        try:
            with np.load(cache, allow_pickle=False) as data:
                if str(data["key"]) == key:
                    return data["x"], data["u"], int(data["nblocks"])
        except (OSError, KeyError, ValueError):
            pass
    mesh = _burgers_mesh(cfg.reference_scheme, cfg, cfg.reference_nblocks)
    u, *_ = _solve_burgers(mesh, replace(cfg, dt=None))
    if cache:
        Path(cache).parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache, key=key, x=mesh.nodes, u=u, nblocks=cfg.reference_nblocks)
    return mesh.nodes, u, cfg.reference_nblocks


def _run_burgers(name, cfg):
    mesh = _burgers_mesh(cfg.scheme, cfg, cfg.nblocks)
    rec = _Recorder(mesh.mass, mesh.energy)
    u, dt, u0 = _solve_burgers(mesh, cfg, rec)
    _, ur, nref = burgers_reference(cfg)
    ref_mesh = _burgers_mesh(cfg.reference_scheme, cfg, nref)
    M = interpolation_matrix(ref_mesh, mesh.nodes)
    uref = (M @ ur.ravel()).reshape(mesh.shape)
    W = np.broadcast_to(mesh.weights, mesh.shape)
    return _report(name, cfg, rec, mesh.nodes, u, relative_errors(u, uref, W), dt,
                   float(np.sum(np.abs(u0) * W)))


# wave data: u(x, t) = f(x + c t) + g(x - c t)


def wave_profiles(initial: str, k: float = 1.0):
    """(f, f', g, g') for the named initial data; f3 is periodically extended."""
    def g(s):
        return np.cos(2 * np.pi * s) ** 2

    def dg(s):
        return -2 * np.pi * np.sin(4 * np.pi * s)

    if initial == "f1":
        return (lambda s: np.sin(np.pi * s)), (lambda s: np.pi * np.cos(np.pi * s)), g, dg
    if initial == "f2":
        def f(s):
            return np.exp(100.0 * np.sin(k * np.pi * s))
        return f, (lambda s: 100.0 * k * np.pi * np.cos(k * np.pi * s) * f(s)), g, dg
    if initial == "f3":
        def wrap(s):
            return np.mod(s + 1.0, 2.0) - 1.0
        return (lambda s: wrap(s) ** 2), (lambda s: 2.0 * wrap(s)), g, dg
    raise ValueError(f"unknown wave initial data {initial!r} (f1, f2, f3)")


def wave_operator(scheme: Scheme, n: Optional[int] = None):
    """(nodes, weights, D2, D1 or None) for a wave scheme on [-1, 1].

    Trigonometric FSBP operators live on N equidistant nodes including both
    endpoints; a finite-difference operator "at equal N" uses the N - 1
    distinct periodic points of that grid.
    """
    if scheme.is_fd:
        if n is None:
            raise ValueError("finite-difference wave scheme needs the grid size N")
        order = scheme.fd_order
        if order not in FD_STENCILS:
            raise ValueError(f"no periodic stencil of order {order}")
        m = n - 1
        x = -1.0 + 2.0 * np.arange(m) / m
        return x, np.full(m, 2.0 / m), periodic_fd_operator(FD_STENCILS[order], m), None
    ops = build_operators(scheme if n is None or scheme.n else replace(scheme, n=n))
    return ops.nodes, ops.weights, ops.D2, ops.D1


def _run_wave(name, cfg):
    scheme = Scheme.parse(cfg.scheme)
    x, w, D2, D1 = wave_operator(scheme, cfg.n or scheme.n)
    f, df, g, dg = wave_profiles(cfg.initial, cfg.k)
    c = cfg.c

    def exact(t):
        return f(x + c * t) + g(x - c * t)

    state0 = np.stack([exact(0.0), c * df(x) - c * dg(x)])

    def energy(s):
        u, v = s
        pot = -(u @ (w * (D2 @ u))) if D1 is None else (D1 @ u) @ (w * (D1 @ u))
        return 0.5 * (v @ (w * v) + c * c * pot)

    def err(t, s):
        return relative_errors(s[0], exact(t), w)

    rec = _Recorder(lambda s: float(w @ s[0]), energy, err)
    if cfg.dt is not None:
        dt = cfg.dt
    else:
        dt = time_step(abs(c), 0.0, float(np.min(np.diff(x))), cfg.c_cfl)
    s, dt = integrate(lambda s, t: wave_rhs(D2, s, c), state0, cfg.T, dt, rec, cfg.samples)
    return _report(name, cfg, rec, x, s[0], err(cfg.T, s), dt,
                   float(np.sum(np.abs(state0[0]) * w)))


_RUNNERS = {
    "advdiff-1d-single": _run_advdiff_1d,
    "advdiff-1d-multi": _run_advdiff_1d,
    "advdiff-2d": _run_advdiff_2d,
    "boundary-layer": _run_boundary_layer,
    "burgers": _run_burgers,
    "wave": _run_wave,
}


def run_experiment(name: str, config: Optional[ExperimentConfig] = None) -> ExperimentReport:
    """Run one of :data:`EXPERIMENTS` and collect mass, energy and error diagnostics."""
    cfg = resolve_config(name, config)
    return _RUNNERS[name](name, cfg)


# }}}


# {{{ CSV output


def write_report_csv(report: ExperimentReport, path) -> None:
    """``t,mass,energy[,err_1,err_2,err_inf,err_P]`` at every sample time."""
    hist = report.error_history
    header = "t,mass,energy" + (",err_1,err_2,err_inf,err_P" if hist is not None else "")
    with open(path, "w") as fh:
        if report.y is not None:
            fh.write("# 2D state layout: y-outer/x-inner\n")
        fh.write(header + "\n")
        for i, t in enumerate(report.times):
            row = [t, report.mass[i], report.energy[i]]
            if hist is not None:
                row.extend(hist[i])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_snapshot_csv(report: ExperimentReport, path) -> None:
    """Final solution as ``x,u`` rows (``x,y,u`` for 2D, y-outer/x-inner)."""
    with open(path, "w") as fh:
        if report.y is None:
            fh.write("x,u\n")
            for xi, ui in zip(np.ravel(report.nodes), np.ravel(report.solution)):
                fh.write(f"{xi:.17g},{ui:.17g}\n")
        else:
            fh.write("x,y,u\n")
            U = report.solution
            for j, yj in enumerate(report.y):
                for i, xi in enumerate(report.nodes):
                    fh.write(f"{xi:.17g},{yj:.17g},{U[j, i]:.17g}\n")


# }}}
