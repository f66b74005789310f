import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import CURVED3, CURVED4, GENERIC_P2, SPHERE, TORUS, cached_analysis, cached_spec
from nambugeom import nambu as nb
from nambugeom.embedding import frame_at, resolve, spec_from_dict
from nambugeom.jets import Jet, JetError, variables
from nambugeom.verify import analyze, cm_test_functions


def pa_of(ref, u, density=None):
    return cached_analysis(ref, tuple(u), density)


# -- the bracket ---------------------------------------------------------------

def test_plane_bracket_of_coordinates():
    ctx = pa_of("catalog:plane", (0.1, 0.2), "one").ctx
    u1, u2 = variables([0.1, 0.2], 3)
    assert nb.bracket(ctx, [u1, u2]) == 1.0
    assert nb.bracket(ctx, [u1, u1]) == 0.0


def test_sphere_coordinate_bracket_is_cross_product():
    ctx = pa_of(SPHERE, (math.pi / 3, 0.4)).ctx
    x = ctx.frame.x_jets
    assert nb.bracket(ctx, [x[0], x[1]]) == pytest.approx(0.5, abs=1e-14)
    bj = nb.bracket_jet(ctx, [x[0], x[1]])
    np.testing.assert_allclose(bj.c[:3], x[2].c[:3], atol=1e-12)


def test_bracket_jet_on_plane_and_antisymmetry():
    ctx = pa_of("catalog:plane", (0.3, 0.3), "one").ctx
    u1, u2 = variables([0.3, 0.3], 3)
    bj = nb.bracket_jet(ctx, [u1, u2])
    np.testing.assert_allclose(bj.c, Jet.constant(1.0, 2, 2).c, atol=0)
    f = (u1 * u2).sin()
    np.testing.assert_allclose(nb.bracket_jet(ctx, [f, u2]).c, -nb.bracket_jet(ctx, [u2, f]).c)


def test_bracket_jet_needs_order_two():
    ctx = pa_of("catalog:plane", (0.3, 0.3), "one").ctx
    u1, u2 = variables([0.3, 0.3], 1)
    with pytest.raises(JetError):
        nb.bracket_jet(ctx, [u1, u2])


def test_bracket_is_jacobian_over_density():
    ctx = pa_of("catalog:s3?r=1", (1.0, 0.8, 0.3)).ctx
    u = variables([1.0, 0.8, 0.3], 3)
    fs = [u[0] * u[1], (u[2] + u[0]).sin(), u[1].exp() * u[2]]
    jac = np.array([f.grad() for f in fs])
    assert nb.bracket(ctx, fs) == pytest.approx(np.linalg.det(jac) / ctx.rho, rel=1e-13)


@given(st.integers(0, 10_000), st.sampled_from(["catalog:torus?R=2,r=1", "catalog:graph3"]))
def test_bracket_antisymmetry_and_leibniz_random(seed, ref):
    spec = cached_spec(ref)
    rng = np.random.default_rng(seed)
    u = [lo + (hi - lo) * (0.2 + 0.6 * rng.random()) for lo, hi in spec.domain]
    ctx = nb.make_context(frame_at(spec, u, density="one"))
    us = variables(u, 3)
    n = spec.n
    coeff = rng.uniform(-1, 1, (n + 1, n))
    fs = [sum((float(c) * v for c, v in zip(row, us)), Jet.constant(0.0, n, 3)).sin() + us[k % n] * us[0]
          for k, row in enumerate(coeff)]
    v = nb.bracket(ctx, fs[:n])
    for i in range(n):
        for j in range(i + 1, n):
            sw = list(fs[:n])
            sw[i], sw[j] = sw[j], sw[i]
            assert nb.bracket(ctx, sw) == pytest.approx(-v, abs=1e-13 * max(1, abs(v)))
    f, g, rest = fs[0], fs[n], fs[1:n]
    lhs = nb.bracket(ctx, [f * g] + rest)
    rhs = f.value * nb.bracket(ctx, [g] + rest) + g.value * nb.bracket(ctx, [f] + rest)
    assert lhs == pytest.approx(rhs, abs=1e-11 * max(1, abs(rhs)))


def test_gamma_squared_literal_ordering_sign():
    # (1/n!) sum {x^i, x^I}{x^I, x^i} equals (-1)^(n-1) gamma^2: negative for surfaces
    for ref, u in [(TORUS, (0.4, 1.0)), ("catalog:s3?r=1", (1.0, 0.7, 0.2))]:
        for dens in ("sqrt_g", "one"):
            ctx = pa_of(ref, u, dens).ctx
            n, m = ctx.n, ctx.m
            Q = nb.coordinate_brackets(ctx, order=0).value
            Qs = Q.reshape(-1, m)  # {x^I, x^i}
            Q = Q.reshape(m, -1)
            literal = np.einsum("iI,Ii->", Q, Qs) / math.factorial(n)
            assert literal == pytest.approx((-1) ** (n - 1) * ctx.gamma ** 2, rel=1e-12)
            positive = np.einsum("iI,iI->", Q, Q) / math.factorial(n)
            assert positive == pytest.approx(ctx.gamma ** 2, rel=1e-12)


# -- tensors --------------------------------------------------------------------

def test_plane_projector():
    t = pa_of("catalog:plane", (0.0, 0.0)).tensors
    np.testing.assert_allclose(t.P2_map, np.diag([1.0, 1.0, 0.0]), atol=1e-15)


def test_sphere_P2_kills_radial_normal_and_has_trace_two():
    pa = pa_of(SPHERE, (1.1, 0.7))
    np.testing.assert_allclose(pa.tensors.P2_map @ pa.frame.x, 0, atol=1e-12)
    assert np.trace(pa.tensors.P2_map) == pytest.approx(2.0, abs=1e-12)


def test_c_np_constant():
    assert nb.c_np(2, 1) == 2 and nb.c_np(3, 1) == 12 and nb.c_np(2, 2) == 2


def test_pbst_examples():
    pa = pa_of("catalog:plane", (0.2, -0.4))
    res = nb.check_pbst(pa.ctx, pa.tensors, pa.metric, pa.shape, np.array([0.3, -1.0, 2.0]))
    assert max(res.values()) < 1e-14
    pa = pa_of(SPHERE, (1.0, 2.0))
    e1 = pa.frame.tangent_basis[0]
    assert np.linalg.norm(pa.tensors.P2_map @ e1 - e1) < 1e-10
    pa = pa_of(TORUS, (0.9, 2.2), "one")
    X = np.random.default_rng(0).normal(size=3)
    assert max(nb.check_pbst(pa.ctx, pa.tensors, pa.metric, pa.shape, X).values()) < 1e-9


def test_sphere_radius_two_mean_curvature():
    pa = pa_of("catalog:sphere?r=2", (1.0, 1.0))
    _, H = nb.projection_and_H(pa.tensors, 2)
    assert np.linalg.norm(H) == pytest.approx(0.5, abs=1e-12)
    _, H0 = nb.projection_and_H(pa_of("catalog:plane", (0.0, 0.0)).tensors, 2)
    assert not np.any(np.abs(H0) > 1e-15)


def test_normal_connection_examples():
    pa = pa_of(SPHERE, (1.0, 1.0))
    assert np.abs(nb.normal_connection(pa.ctx, pa.tensors)).max() < 1e-12
    pa = pa_of("catalog:clifford", (0.4, 1.3))
    D = nb.normal_connection(pa.ctx, pa.tensors)
    np.testing.assert_allclose(D, -D.transpose(0, 2, 1), atol=1e-10)
    np.testing.assert_allclose(D, pa.shape.Dcoef, atol=1e-9)


def test_normal_connection_generic_codimension_two():
    pa = analyze(spec_from_dict(GENERIC_P2), (0.3, -0.4), "one")
    D = nb.normal_connection(pa.ctx, pa.tensors)
    assert np.abs(pa.shape.Dcoef).max() > 0.1
    np.testing.assert_allclose(D, pa.shape.Dcoef, atol=1e-9)


def test_ricci_examples():
    pa = pa_of(SPHERE, (1.0, 1.0))
    e = pa.frame.tangent_basis
    np.testing.assert_allclose(nb.ricci_bracket(pa.ctx, pa.tensors, e[0]), e[0], atol=1e-9)
    pa = pa_of("catalog:s3?r=1", (1.0, 0.9, 2.0), "one")
    e = pa.frame.tangent_basis
    np.testing.assert_allclose(nb.ricci_bracket(pa.ctx, pa.tensors, e[1]), 2 * e[1], atol=1e-9)
    pa = pa_of("catalog:plane", (0.0, 0.0))
    assert not np.any(nb.ricci_bracket(pa.ctx, pa.tensors, pa.frame.tangent_basis[0]))


# -- the Z family -----------------------------------------------------------------

def test_sphere_Z_is_unit_radial():
    pa = pa_of(SPHERE, (1.2, 0.3))
    z = nb.hypersurface_normal(pa.ctx)
    assert np.linalg.norm(z) == pytest.approx(1.0, abs=1e-12)
    assert abs(abs(z @ pa.frame.x) - 1) < 1e-12
    assert np.abs(pa.frame.tangent_basis @ z).max() < 1e-12


def test_clifford_Z_projector():
    zf = nb.z_normals(pa_of("catalog:clifford", (0.7, 2.0), "one").ctx)
    assert zf.Zmat.shape == (4, 4)
    assert np.trace(zf.Zmat) == pytest.approx(2.0, abs=1e-9)
    assert np.all(np.minimum(np.abs(zf.eigvals), np.abs(zf.eigvals - 1)) < 1e-9)
    assert len(zf.kept) == 2


def test_plane_Z():
    z = nb.hypersurface_normal(pa_of("catalog:plane", (0.5, 0.5)).ctx)
    np.testing.assert_allclose(np.abs(z), [0, 0, 1], atol=1e-15)


def test_Z_family_in_curved_ambient_spans_the_normal_space():
    pa = analyze(spec_from_dict(CURVED4), (0.2, 0.5), "one")
    zf = nb.z_normals(pa.ctx)
    G = pa.ctx.gbar
    kept = zf.Nhat[list(zf.kept)]
    np.testing.assert_allclose(kept @ G @ kept.T, np.eye(2), atol=1e-9)
    N = pa.normals.normals
    np.testing.assert_allclose(kept.T @ kept @ G, N.T @ N @ G, atol=1e-9)


# -- normal-free sums ---------------------------------------------------------------

@pytest.mark.parametrize("ref, u", [(SPHERE, (1.0, 1.0)), ("catalog:clifford", (0.3, 0.8)),
                                    ("catalog:s3?r=1", (1.0, 0.5, 2.0))])
@pytest.mark.parametrize("dens", ["sqrt_g", "one"])
def test_barm_sums_match_normal_side(ref, u, dens):
    pa = pa_of(ref, u, dens)
    for X in pa.frame.tangent_basis:
        bs, ns = nb.barm_sums(pa.ctx, X), nb.barm_normal_side(pa.tensors, X)
        for k in bs:
            assert nb.rel(bs[k] - ns[k], ns[k]) < 1e-8


def test_barm_third_sum_literal_prefactor_is_off_by_n_factorial():
    # literal prefactor (-1)^n / (n gamma^2 c^2) versus the one that matches the normal frame
    for ref, u in [(SPHERE, (1.0, 1.0)), ("catalog:s3?r=1", (1.0, 0.5, 2.0)), ("catalog:clifford", (0.3, 0.8))]:
        pa = pa_of(ref, u, "one")
        n = pa.ctx.n
        corrected = nb.barm_sums(pa.ctx, pa.frame.tangent_basis[0])["TrBN"]
        literal = corrected / (n * math.factorial(n - 1))
        normal_side = nb.barm_normal_side(pa.tensors, pa.frame.tangent_basis[0])["TrBN"]
        np.testing.assert_allclose(normal_side, math.factorial(n) * literal, atol=1e-9)
        assert np.linalg.norm(normal_side - literal) > 0.1


def test_plane_barm_sums_vanish():
    pa = pa_of("catalog:plane", (0.1, 0.1))
    for v in nb.barm_sums(pa.ctx, np.array([1.0, 0, 0])).values():
        assert not np.any(np.abs(v) > 1e-15)


def test_euclidean_only_formulas_raise_on_curved_ambient():
    pa = analyze(spec_from_dict(CURVED3), (0.2, 0.1))
    with pytest.raises(nb.CodimensionError):
        nb.barm_sums(pa.ctx, pa.frame.tangent_basis[0])
    with pytest.raises(nb.CodimensionError):
        nb.detW_bracket(pa.ctx)
    ks, kz = nb.surface_K(pa.ctx, pa.tensors)
    assert kz is None and ks == pytest.approx(pa.shape.K, abs=1e-9)


# -- det W and symmetric functions ---------------------------------------------------

def test_detW_examples():
    pa = pa_of("catalog:s3?r=1", (1.0, 0.5, 2.0), "one")
    d = nb.detW_bracket(pa.ctx)
    assert abs(d) == pytest.approx(1.0, abs=1e-9) and d == pytest.approx(pa.shape.det_W[0], abs=1e-9)
    assert nb.detW_bracket(pa_of(SPHERE, (1.0, 1.0)).ctx) == pytest.approx(1.0, abs=1e-9)
    pa = pa_of("catalog:graph3", (0.0, 0.0, 0.0))
    assert abs(nb.detW_bracket(pa.ctx)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(nb.CodimensionError):
        nb.detW_bracket(pa_of("catalog:clifford", (0.1, 0.1)).ctx)


def test_symmetric_function_examples():
    s = nb.symmetric_functions(*_ctx_t(SPHERE, (1.0, 1.0), "one"))
    assert s[0] ** 2 == pytest.approx(4 * s[1], abs=1e-9) and s[1] == pytest.approx(1.0, abs=1e-9)
    assert np.abs(nb.symmetric_functions(*_ctx_t("catalog:plane", (0.0, 0.0), "one"))).max() < 1e-15
    s = nb.symmetric_functions(*_ctx_t(TORUS, (0.0, 1.0), "one"))
    assert s[1] == pytest.approx(1 / 3, abs=1e-9)
    with pytest.raises(nb.CodimensionError):
        nb.symmetric_functions(*_ctx_t("catalog:clifford", (0.1, 0.1), "sqrt_g"))


def _ctx_t(ref, u, dens):
    pa = pa_of(ref, u, dens)
    return pa.ctx, pa.tensors


def test_symmetric_functions_follow_k_not_n_minus_k():
    # sigma_k = (-1)^k c_k / gamma^(2k); the literal display amounts to (-1)^k e_(n-k) gamma^(4n-2k+2)
    pa = pa_of("catalog:graph3", (0.3, -0.2, 0.5), "one")
    n, g2 = 3, pa.ctx.gamma ** 2
    kappa = np.linalg.eigvals(pa.shape.W[0]).real
    e = [1.0, kappa.sum(), kappa[0] * kappa[1] + kappa[0] * kappa[2] + kappa[1] * kappa[2], kappa.prod()]
    sig = nb.symmetric_functions(pa.ctx, pa.tensors)
    np.testing.assert_allclose(sig, e[1:], atol=1e-9)
    literal = [(-1) ** k * e[n - k] * g2 ** (2 * n - k + 1) for k in range(1, n + 1)]
    assert np.abs(np.array(literal) - sig).max() > 1e-2


# -- Codazzi-Mainardi -------------------------------------------------------------------

@pytest.mark.parametrize("ref, u", [(SPHERE, (1.0, 1.0)), ("catalog:s3?r=1", (1.0, 0.5, 2.0)),
                                    ("catalog:clifford", (0.3, 0.8)), ("catalog:plane", (0.2, 0.3))])
def test_cm_vanishes_in_flat_ambient(ref, u):
    for dens in ("sqrt_g", "one"):
        pa = pa_of(ref, u, dens)
        for fs in cm_test_functions(pa.frame):
            cm = nb.cm_residual(pa.ctx, pa.tensors, pa.shape, fs)
            assert np.abs(cm.C_bracket).max() < 1e-8
            assert np.abs(cm.cmW).max() < 1e-8
            assert np.abs(cm.C_oracle).max() < 1e-8


def test_cm_projection_needed_for_non_commuting_weingarten_maps():
    pa = analyze(spec_from_dict(GENERIC_P2), (0.3, -0.4), "one")
    W = pa.shape.W
    assert np.abs(W[0] @ W[1] - W[1] @ W[0]).max() > 1e-2
    cm = nb.cm_residual(pa.ctx, pa.tensors, pa.shape, [])
    assert cm.normal_leak > 1e-3
    assert nb.rel(cm.C_bracket - cm.C_oracle, cm.C_oracle) < 1e-9


@pytest.mark.parametrize("cfg", [CURVED3, CURVED4])
def test_cm_theorem_in_curved_ambient(cfg):
    spec = spec_from_dict(cfg)
    for u in [(0.3, -0.2), (-0.5, 0.4)]:
        for dens in ("sqrt_g", "one"):
            pa = analyze(spec, u, dens)
            cm = nb.cm_residual(pa.ctx, pa.tensors, pa.shape, [])
            assert np.abs(cm.C_oracle).max() > 1e-4  # the ambient curvature makes C_A non-zero
            assert nb.rel(cm.C_bracket - cm.C_oracle, cm.C_oracle) < 1e-9
            assert nb.rel(pa.ctx.gamma ** 2 * cm.C_bracket - cm.rhs, cm.rhs) < 1e-9
            assert np.abs(cm.cmW).max() < 1e-9
            assert cm.tangency < 1e-9


def test_cm_three_dimensional_curved_ambient_with_test_functions():
    cfg = {"name": "curved-graph3", "n": 3, "m": 4,
           "coords": ["u1", "u2", "u3", "0.2*u1*u2+0.1*u3^2-0.3*u1*u3"],
           "ambient": [["1+0.1*x1^2", "0", "0", "0.05*x2"], ["0", "1", "0", "0"],
                       ["0", "0", "exp(0.1*x4)", "0"], ["0.05*x2", "0", "0", "1"]],
           "domain": [[-1, 1]] * 3}
    pa = analyze(spec_from_dict(cfg), (0.2, -0.3, 0.4), "one")
    for fs in cm_test_functions(pa.frame):
        cm = nb.cm_residual(pa.ctx, pa.tensors, pa.shape, fs)
        assert nb.rel(cm.C_bracket - cm.C_oracle, cm.C_oracle) < 1e-9
        assert nb.rel(pa.ctx.gamma ** 2 * cm.C_bracket - cm.rhs, cm.rhs) < 1e-9


# -- surfaces -------------------------------------------------------------------------------

def test_surface_K_examples():
    for dens in ("sqrt_g", "one"):
        ks, kz = nb.surface_K(*_ctx_t(SPHERE, (1.0, 1.0), dens))
        assert ks == pytest.approx(1.0, abs=1e-9) and kz == pytest.approx(1.0, abs=1e-9)
        ks, kz = nb.surface_K(*_ctx_t(TORUS, (0.0, 2.0), dens))
        assert ks == pytest.approx(1 / 3, abs=1e-9) and kz == pytest.approx(1 / 3, abs=1e-9)
        ks, kz = nb.surface_K(*_ctx_t("catalog:plane", (0.0, 0.0), dens))
        assert ks == 0 and kz == 0
    with pytest.raises(nb.CodimensionError):
        nb.surface_K(*_ctx_t("catalog:s3?r=1", (1.0, 1.0, 1.0), "one"))


def test_complex_structure():
    for dens in ("sqrt_g", "one"):
        pa = pa_of(SPHERE, (1.0, 1.0), dens)
        J = nb.complex_structure(pa.ctx, pa.tensors)
        for Y in pa.frame.tangent_basis:
            assert np.linalg.norm(J @ J @ Y + Y) < 1e-10
            assert abs((J @ Y) @ Y) < 1e-12
        np.testing.assert_allclose(J @ pa.normals.normals[0], 0, atol=1e-12)


def test_gamma_times_P_is_not_a_complex_structure_for_unit_density():
    pa = pa_of(TORUS, (0.7, 1.0), "one")
    g = pa.ctx.gamma
    assert abs(g - 1) > 0.5
    Y = pa.frame.tangent_basis[0]
    lit = g * pa.tensors.P_map
    assert np.linalg.norm(lit @ lit @ Y + Y) > 1.0
    np.testing.assert_allclose(lit @ lit @ Y, -g ** 4 * Y, atol=1e-9)


def test_cm_surface_r3_and_swap():
    for ref in (SPHERE, TORUS):
        for dens in ("sqrt_g", "one"):
            c3, swap = nb.cm_surface_r3(*_ctx_t(ref, (1.0, 2.0), dens))
            assert np.abs(c3).max() < 1e-8 and swap < 1e-9
    with pytest.raises(nb.CodimensionError):
        nb.cm_surface_r3(*_ctx_t("catalog:clifford", (0.1, 0.1), "one"))


def test_poisson_identity_arbitrary_functions():
    u1, u2 = variables([1.0, 1.0], 3)
    one = Jet.constant(1.0, 2, 3)
    assert np.abs(nb.poisson_identity(one, Jet.stack([u1, u2, u1 * u2]))).max() < 1e-8
    u1, u2 = variables([0.3, -0.6], 3)
    flat = nb.poisson_identity(one, Jet.stack([u1, u2, Jet.constant(0.0, 2, 3)]))
    assert np.abs(flat).max() < 1e-15
    pa = pa_of(SPHERE, (1.0, 1.0))
    assert np.abs(nb.poisson_identity(pa.ctx.rho_jet, pa.frame.x_jets)).max() < 1e-8


@given(st.integers(0, 10_000))
def test_poisson_identity_random_functions(seed):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, 2)
    v1, v2 = variables(u, 3)
    a = rng.uniform(-1, 1, 6)
    xs = Jet.stack([v1 + a[0] * (v2 * v1).sin(), v2 + a[1] * v1 * v1, a[2] * (v1 + a[3] * v2).exp()])
    rho = 1.5 + a[4] * v1.cos() * Jet.constant(1.0, 2, 3) + a[5] * 0.2 * v2
    assert np.abs(nb.poisson_identity(rho, xs)).max() < 1e-8


def test_poisson_identity_rejects_vanishing_gamma():
    u1, u2 = variables([0.3, 0.3], 3)
    with pytest.raises(ValueError):
        nb.poisson_identity(Jet.constant(1.0, 2, 3), Jet.stack([u1, u1, u1]))


def test_hypersurface_identities():
    pa = pa_of("catalog:s3?r=1", (1.0, 0.5, 2.0), "one")
    for fs in cm_test_functions(pa.frame):
        res = nb.cm_hypersurface_identities(pa.ctx, pa.tensors, pa.shape, fs)
        assert max(res.values()) < 1e-8
    pa = pa_of(SPHERE, (1.0, 1.0))
    res = nb.cm_hypersurface_identities(pa.ctx, pa.tensors, pa.shape, [])
    c3, swap = nb.cm_surface_r3(pa.ctx, pa.tensors)
    assert max(res.values()) < 1e-9 and swap < 1e-9
    pa = pa_of("catalog:graph3?f=0", (0.1, 0.2, 0.3))
    res = nb.cm_hypersurface_identities(pa.ctx, pa.tensors, pa.shape, cm_test_functions(pa.frame)[0])
    assert max(res.values()) < 1e-15


def test_negative_density_rejected():
    fr = frame_at(resolve("catalog:plane"), (0.1, 0.1), density="-1-u1^2")
    with pytest.raises(nb.NonPositiveDensityError):
        nb.make_context(fr)


def test_gamma_threshold_skips_in_analysis():
    with pytest.raises(nb.DegeneratePointError):
        analyze(resolve("catalog:plane"), (0.1, 0.1), "1e7")


def test_barm_sums_are_tangent_only():
    # for ambient X with a normal component the bracket side and the normal side part ways
    pa = pa_of(SPHERE, (1.0, 1.0), "one")
    N = pa.normals.normals[0]
    bs, ns = nb.barm_sums(pa.ctx, N), nb.barm_normal_side(pa.tensors, N)
    assert nb.rel(bs["TrBB"] - ns["TrBB"], ns["TrBB"]) > 0.1
