import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsbp.solvers import (
    BlockMesh,
    DirichletSats,
    DivergenceError,
    ExperimentConfig,
    SatCoefficients,
    SatError,
    Scheme,
    advdiff_rhs_1d,
    advdiff_rhs_2d,
    boundary_layer_steady,
    build_operators,
    burgers_rhs,
    integrate,
    interpolation_matrix,
    relative_errors,
    resolve_config,
    run_experiment,
    sawtooth,
    ssprk33_step,
    time_step,
    wave_operator,
    wave_profiles,
    wave_rhs,
)

SCHEMES = ["poly:d=2@lobatto:3", "exp:d=2@equi:5", "rbf:alpha=1@equi:5", "trig:d=1@equi:4",
           "exp:d=2,alpha=0.1@equi:5"]
_MESHES = {}


def mesh_for(scheme, nblocks=4, domain=(0.0, 1.0)):
    key = (scheme, nblocks, domain)
    if key not in _MESHES:
        _MESHES[key] = BlockMesh.uniform(build_operators(Scheme.parse(scheme)), domain, nblocks)
    return _MESHES[key]


seeds = st.integers(0, 2 ** 32 - 1)


# {{{ time stepping

def test_ssprk33_is_third_order():
    lam = -1.3 + 0.7j
    errs = []
    for n in (20, 40, 80):
        dt = 1.0 / n
        u = np.array([1.0 + 0j])
        for k in range(n):
            u = ssprk33_step(lambda v, t: lam * v, u, k * dt, dt)
        errs.append(abs(u[0] - np.exp(lam)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(orders, 3.0, atol=0.1)


def test_ssprk33_exact_for_cubic_time_dependence():
    # u' = 3 t^2 is integrated exactly by a third-order method
    u = ssprk33_step(lambda v, t: 3 * t ** 2 * np.ones_like(v), np.zeros(1), 0.5, 0.25)
    assert u[0] == pytest.approx(0.75 ** 3 - 0.5 ** 3, abs=1e-15)


def test_ssprk33_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        ssprk33_step(lambda v, t: v, np.ones(1), 0.0, 0.0)


def test_time_step_formula():
    assert time_step(2.0, 0.0, 0.1, 0.5) == pytest.approx(0.025)
    assert time_step(0.0, 1e-2, 0.1, 1.0) == pytest.approx(1.0)
    assert time_step(1.0, 1e-2, 0.1, 1.0) == pytest.approx(1 / 11)
    with pytest.raises(ValueError):
        time_step(0.0, 0.0, 0.1, 1.0)


def test_integrate_hits_end_time_and_samples():
    seen = []
    u, dt = integrate(lambda v, t: -v, np.ones(2), 1.0, 0.3, lambda t, v: seen.append(t), 5)
    assert dt == pytest.approx(0.25)
    assert seen[0] == 0.0 and seen[-1] == pytest.approx(1.0)
    assert len(seen) == 5
    np.testing.assert_allclose(u, np.exp(-1.0), rtol=1e-3)


def test_integrate_detects_divergence():
    with pytest.raises(DivergenceError) as info:
        integrate(lambda v, t: 1e200 * v * v, np.ones(1), 1.0, 0.1)
    assert info.value.step >= 1
    assert info.value.last_finite_t < info.value.t


# }}}


# {{{ SATs

@given(a=st.floats(-3, 3), eps=st.floats(0, 1), s1=st.floats(-2, 0))
@settings(max_examples=50, deadline=None)
def test_stable_sats_validate(a, eps, s1):
    sats = SatCoefficients.stable(a, eps, sigma1R=min(s1, a / 2))
    assert sats.sigma1L == pytest.approx(sats.sigma1R - a)
    assert sats.sigma2R == pytest.approx(-eps / 2)
    default = SatCoefficients.stable(a, eps)
    assert default.sigma1R <= a / 2
    assert min(default.sigma1R, default.sigma1L) == pytest.approx(-abs(a), abs=1e-12)


def test_unstable_sats_rejected():
    with pytest.raises(SatError):
        SatCoefficients.stable(1.0, 0.1, sigma1R=1.0)
    bad = SatCoefficients(0, 0, 0, 0, 0, 0, a=1.0, eps=0.1)
    with pytest.raises(SatError):
        bad.validate()


def test_dirichlet_sats_for_negative_speed():
    bc = DirichletSats.stable(-1.0, 0.1)
    assert (bc.tau1L, bc.tau1R) == (0.0, -1.0)

# }}}


# {{{ rhs properties

@pytest.mark.parametrize("scheme", SCHEMES)
def test_free_stream_advdiff(scheme):
    mesh = mesh_for(scheme)
    sats = SatCoefficients.stable(1.0, 0.05)
    c = np.full(mesh.shape, 2.5)
    np.testing.assert_allclose(advdiff_rhs_1d(mesh, sats, c), 0, atol=1e-11)
    bc = DirichletSats.stable(1.0, 0.05, 2.5, 2.5)
    np.testing.assert_allclose(advdiff_rhs_1d(mesh, sats, c, periodic=False, bc=bc), 0, atol=1e-11)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_free_stream_burgers_and_2d(scheme):
    mesh = mesh_for(scheme)
    np.testing.assert_allclose(burgers_rhs(mesh, np.full(mesh.shape, -0.7), 0.01), 0, atol=1e-11)
    sats = SatCoefficients.stable(1.0, 0.01)
    m = mesh.nblocks * mesh.n
    np.testing.assert_allclose(advdiff_rhs_2d(mesh, mesh, sats, sats, np.full((m, m), 3.0)), 0,
                               atol=1e-10)


def test_free_stream_wave():
    _, _, D2, _ = wave_operator(Scheme.parse("trig:d=5@equi"))
    state = np.stack([np.full(D2.shape[0], 1.5), np.zeros(D2.shape[0])])
    np.testing.assert_allclose(wave_rhs(D2, state, 2.0), 0, atol=1e-11)


@pytest.mark.parametrize("scheme", SCHEMES)
@given(seed=seeds, alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
@settings(max_examples=15, deadline=None)
def test_advdiff_rhs_is_linear(scheme, seed, alpha, beta):
    mesh = mesh_for(scheme)
    sats = SatCoefficients.stable(1.0, 0.05)
    u, v = np.random.default_rng(seed).standard_normal((2,) + mesh.shape)

    def L(w):
        return advdiff_rhs_1d(mesh, sats, w)

    np.testing.assert_allclose(L(alpha * u + beta * v), alpha * L(u) + beta * L(v),
                               atol=1e-9 * (1 + np.abs(L(u)).max() + np.abs(L(v)).max()))


@given(seed=seeds, alpha=st.floats(-3, 3))
@settings(max_examples=15, deadline=None)
def test_2d_and_wave_rhs_are_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    mesh = mesh_for("poly:d=2@lobatto:3", 3)
    sats = SatCoefficients.stable(1.0, 0.05)
    m = mesh.nblocks * mesh.n
    U, V = rng.standard_normal((2, m, m))
    L = advdiff_rhs_2d(mesh, mesh, sats, sats, U + alpha * V)
    R = advdiff_rhs_2d(mesh, mesh, sats, sats, U) + alpha * advdiff_rhs_2d(mesh, mesh, sats, sats, V)
    np.testing.assert_allclose(L, R, atol=1e-9 * (1 + np.abs(R).max()))
    _, _, D2, _ = wave_operator(Scheme.parse("fd:order=4"), 20)
    s, t = rng.standard_normal((2, 2, 19))
    np.testing.assert_allclose(wave_rhs(D2, s + alpha * t, 1.0),
                               wave_rhs(D2, s, 1.0) + alpha * wave_rhs(D2, t, 1.0), atol=1e-8)


@pytest.mark.parametrize("scheme", SCHEMES)
@given(seed=seeds)
@settings(max_examples=20, deadline=None)
def test_periodic_advdiff_conserves_mass_and_dissipates_energy(scheme, seed):
    mesh = mesh_for(scheme)
    sats = SatCoefficients.stable(1.0, 0.05)
    u = np.random.default_rng(seed).standard_normal(mesh.shape)
    r = advdiff_rhs_1d(mesh, sats, u)
    w = mesh.weights
    scale = np.abs(r).max() * w.sum() * mesh.nblocks
    assert abs(np.sum(r @ w)) <= 1e-12 * scale
    assert np.sum((u * r) @ w) <= 1e-12 * scale * np.abs(u).max()


@pytest.mark.parametrize("scheme", SCHEMES)
@given(seed=seeds)
@settings(max_examples=20, deadline=None)
def test_dirichlet_advdiff_dissipates_energy(scheme, seed):
    mesh = mesh_for(scheme)
    sats = SatCoefficients.stable(1.0, 0.05)
    bc = DirichletSats.stable(1.0, 0.05)
    u = np.random.default_rng(seed).standard_normal(mesh.shape)
    r = advdiff_rhs_1d(mesh, sats, u, periodic=False, bc=bc)
    scale = np.abs(r).max() * np.abs(u).max() * mesh.weights.sum() * mesh.nblocks
    assert np.sum((u * r) @ mesh.weights) <= 1e-12 * scale


@pytest.mark.parametrize("scheme", SCHEMES)
@given(seed=seeds)
@settings(max_examples=20, deadline=None)
def test_burgers_mass_and_entropy(scheme, seed):
    mesh = mesh_for(scheme)
    u = np.random.default_rng(seed).standard_normal(mesh.shape)
    w = mesh.weights
    inviscid = burgers_rhs(mesh, u, 0.0)
    scale = np.abs(inviscid).max() * np.abs(u).max() * w.sum() * mesh.nblocks
    assert abs(np.sum(inviscid @ w)) <= 1e-12 * scale
    # the split form with the two-point flux conserves energy exactly
    assert abs(np.sum((u * inviscid) @ w)) <= 1e-12 * scale
    viscous = burgers_rhs(mesh, u, 0.05)
    assert abs(np.sum(viscous @ w)) <= 1e-12 * scale
    assert np.sum((u * viscous) @ w) <= 1e-12 * scale


@given(seed=seeds)
@settings(max_examples=15, deadline=None)
def test_2d_rhs_separates(seed):
    mx = mesh_for("exp:d=2@equi:5", 3)
    my = mesh_for("poly:d=2@lobatto:3", 4)
    sx = SatCoefficients.stable(1.0, 0.02)
    sy = SatCoefficients.stable(-0.5, 0.03)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(my.shape)
    g = rng.standard_normal(mx.shape)
    U = np.outer(f.ravel(), g.ravel())
    expected = (np.outer(f.ravel(), advdiff_rhs_1d(mx, sx, g).ravel())
                + np.outer(advdiff_rhs_1d(my, sy, f).ravel(), g.ravel()))
    np.testing.assert_allclose(advdiff_rhs_2d(mx, my, sx, sy, U), expected,
                               atol=1e-10 * np.abs(expected).max())


def test_rhs_shape_checks():
    mesh = mesh_for("poly:d=2@lobatto:3")
    sats = SatCoefficients.stable(1.0, 0.05)
    with pytest.raises(ValueError):
        advdiff_rhs_1d(mesh, sats, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        advdiff_rhs_1d(mesh, sats, np.zeros(mesh.shape), periodic=False)
    with pytest.raises(ValueError):
        advdiff_rhs_2d(mesh, mesh, sats, sats, np.zeros((5, 5)))
    with pytest.raises(ValueError):
        wave_rhs(np.eye(3), np.zeros((2, 4)), 1.0)

# }}}


# {{{ meshes, interpolation and errors

def test_mesh_nodes_and_weights():
    mesh = mesh_for("poly:d=2@lobatto:3", 4)
    assert mesh.shape == (4, 3)
    np.testing.assert_allclose(mesh.nodes[:, 0], [0, 0.25, 0.5, 0.75])
    np.testing.assert_allclose(mesh.nodes[:, -1], [0.25, 0.5, 0.75, 1.0])
    assert mesh.weights.sum() * mesh.nblocks == pytest.approx(1.0)
    assert mesh.mass(np.ones(mesh.shape)) == pytest.approx(1.0)


def test_mesh_dx_is_capped_for_stiff_operators():
    soft = mesh_for("rbf:alpha=1@equi:5", 10, (-1.0, 1.0))
    stiff = mesh_for("rbf:alpha=0.5@equi:5", 10, (-1.0, 1.0))
    assert soft.dx == pytest.approx(0.05)
    assert stiff.dx < 0.5 * soft.dx


def test_mesh_validation():
    ops = build_operators(Scheme.parse("poly:d=2@lobatto:3"))
    with pytest.raises(ValueError):
        BlockMesh.uniform(ops, (0, 1), 0)
    with pytest.raises(ValueError):
        BlockMesh.uniform(ops, (1, 0), 2)


def test_interpolation_reproduces_local_polynomials():
    mesh = mesh_for("poly:d=2@lobatto:3", 4)
    x = np.linspace(0, 1, 37)
    M = interpolation_matrix(mesh, x)
    u = 3 * mesh.nodes ** 2 - mesh.nodes + 0.5
    np.testing.assert_allclose(M @ u.ravel(), 3 * x ** 2 - x + 0.5, atol=1e-13)
    np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-13)


def test_relative_errors():
    ref = np.array([1.0, -2.0, 2.0])
    u = ref + np.array([0.1, 0.0, -0.2])
    e = relative_errors(u, ref, np.ones(3))
    assert e["err_1"] == pytest.approx(0.3 / 5)
    assert e["err_2"] == pytest.approx(np.sqrt(0.05) / 3)
    assert e["err_inf"] == pytest.approx(0.1)
    assert e["err_P"] == pytest.approx(e["err_2"])
    assert "err_P" not in relative_errors(u, ref)

# }}}


# {{{ experiments

def test_scheme_parsing():
    s = Scheme.parse(" exp:d=2,alpha=0.1@equi:5 ")
    assert (s.space, s.family, s.n) == ("exp:d=2,alpha=0.1", "equi", 5)
    assert str(s) == "exp:d=2,alpha=0.1@equi:5"
    assert Scheme.parse("trig:d=3").family == "equi"
    fd = Scheme.parse("fd:order=6")
    assert fd.is_fd and fd.fd_order == 6 and str(fd) == "fd:order=6"


def test_resolve_config_defaults_and_unknown():
    cfg = resolve_config("burgers", ExperimentConfig(nblocks=7))
    assert cfg.nblocks == 7 and cfg.reference_nblocks == 200
    with pytest.raises(ValueError):
        resolve_config("heat")


def test_profiles():
    assert boundary_layer_steady(np.array([0.0, 0.5]), 1e-2) == pytest.approx([0.0, 1.0])
    assert np.all(np.isfinite(boundary_layer_steady(np.linspace(0, 0.5, 11), 1e-4)))
    np.testing.assert_allclose(sawtooth([0.0, 0.25, 0.5, 0.75]), [0.0, 0.5, -1.0, -0.5])
    for name in ("f1", "f2", "f3"):
        f, df, g, dg = wave_profiles(name)
        s = np.linspace(-0.9, 0.9, 7)
        h = 1e-6
        np.testing.assert_allclose(df(s), (f(s + h) - f(s - h)) / (2 * h), rtol=1e-5, atol=1e-4)
        np.testing.assert_allclose(dg(s), (g(s + h) - g(s - h)) / (2 * h), rtol=1e-5, atol=1e-5)
    with pytest.raises(ValueError):
        wave_profiles("f4")


def test_multiblock_advdiff_is_stable_and_conservative():
    rep = run_experiment("advdiff-1d-multi",
                         ExperimentConfig(scheme="poly:d=3@lobatto:4", nblocks=20, samples=20))
    assert rep.mass_drift < 1e-12
    assert np.all(np.diff(rep.energy) <= 1e-12 * rep.energy[0])
    assert rep.errors["err_2"] < 0.1


@pytest.mark.parametrize("scheme,order", [("poly:d=3@lobatto:4", 3.5), ("poly:d=2@lobatto:3", 1.55)])
def test_multiblock_advdiff_converges(scheme, order):
    # Baumann-Oden coupling: order p + 1 for odd degree p, only p for even p
    nb = (40, 80) if order > 3 else (160, 320)
    e = [run_experiment("advdiff-1d-multi",
                        ExperimentConfig(scheme=scheme, nblocks=i, samples=2)).errors["err_2"]
         for i in nb]
    assert np.log2(e[0] / e[1]) > order


def test_stiff_rbf_block_runs_at_default_cfl():
    rep = run_experiment("advdiff-1d-multi",
                         ExperimentConfig(scheme="rbf:alpha=0.5@equi", samples=5))
    assert rep.errors["err_2"] < 1.0


def test_wave_trig_exact_for_representable_data():
    rep = run_experiment("wave", ExperimentConfig(scheme="trig:d=5@equi", T=0.1, samples=2))
    assert rep.errors["err_P"] < 1e-10


def test_wave_fd_needs_grid_size():
    with pytest.raises(ValueError):
        wave_operator(Scheme.parse("fd:order=2"))
    with pytest.raises(ValueError):
        wave_operator(Scheme.parse("fd:order=8"), 20)

# }}}
