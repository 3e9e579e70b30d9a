import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghft import checks as ck
from ghft import dirac as dr
from ghft import greenops as go
from ghft.exact import ExactMatrix
from ghft.scalar import OffShellError
from ghft.sources import bump
from ghft.spacetime import build_spacetime, cauchy_slice

FRW = dict(scale_factor="1+0.1*t**2")
CONFORMAL = dict(scale_factor="1+0.1*t**2", lapse="(1+0.1*t**2)**2", t0=-1.0)


@pytest.fixture(scope="module")
def model():
    lat = build_spacetime("FRW", n_t=96, n_x=128, delta_x=1 / 32, **CONFORMAL)
    return dr.DiracModel(lat, 1.3)


def _spinor_field(lat, rng):
    return rng.standard_normal(lat.shape + (4,)) + 1j * rng.standard_normal(lat.shape + (4,))


# gamma algebra

def test_clifford_report_is_clean():
    rep = dr.clifford_check()
    assert rep.passed and rep.failures == []
    assert rep.count("anticommutator") == 16 and rep.count("positivity") == 10


def test_anticommutator_examples():
    g = dr.GAMMA
    one = ExactMatrix.identity(4)
    assert g[0] @ g[0] + g[0] @ g[0] == one.scale(2)
    assert g[1] @ g[1] + g[1] @ g[1] == one.scale(-2)
    # positivity probe at n = (1, 0, 0, 0)
    assert g[0] @ g[0] == one


def test_broken_representation_is_reported():
    g = dr.GAMMA
    bad = dr.GammaRep((g[0], g[1], g[2], g[1]))
    rep = dr.clifford_check(bad, n_spinors=2, n_timelike=2)
    assert not rep.passed
    assert "anticommutator[1,3]" in rep.failures


def test_numeric_gammas_match_exact():
    G = dr.GAMMA.numeric
    assert G.shape == (4, 4, 4)
    eta = np.diag([1.0, -1, -1, -1])
    for mu in range(4):
        for nu in range(4):
            assert np.array_equal(G[mu] @ G[nu] + G[nu] @ G[mu], 2 * eta[mu, nu] * np.eye(4))


# pointwise maps

def test_adjunction_round_trip_and_antilinearity():
    lat = build_spacetime("Minkowski", n_t=8, n_x=8)
    rng = np.random.default_rng(0)
    s = go.Section(lat, _spinor_field(lat, rng), "complex")
    w = go.Section(lat, _spinor_field(lat, rng), "complex", dual=True)
    assert np.array_equal(dr.adjunction(dr.adjunction_inverse(w)).values, w.values)
    assert np.array_equal(dr.adjunction(s * 1j).values, -1j * dr.adjunction(s).values)
    assert dr.adjunction(s).dual and not dr.adjunction_inverse(w).dual


def test_adjunction_intertwines_charge_conjugations():
    lat = build_spacetime("Minkowski", n_t=8, n_x=8)
    for k in range(20):
        s = go.Section(lat, _spinor_field(lat, np.random.default_rng(k)), "complex")
        lhs = dr.adjunction(dr.charge_conj_s(s)).values
        rhs = dr.charge_conj_c(dr.adjunction(s)).values
        assert np.array_equal(lhs, -rhs)


# coframe and connection

def test_coframe_reconstructs_metric():
    lat = build_spacetime("FRW", n_t=32, n_x=8, **CONFORMAL)
    cf = dr.CoframeData.from_lattice(lat)
    assert cf.metric_residual() <= 1e-10
    assert cf.metricity_residual() <= 1e-10


def test_connection_commutator_is_exact():
    assert dr.nabla_gamma_algebraic()
    assert dr.nabla_gamma_algebraic(dr.GaussianRational(-7, 0) / 3)


def test_constant_spinor_is_parallel_in_minkowski():
    lat = build_spacetime("Minkowski", n_t=16, n_x=16)
    m = dr.DiracModel(lat, 1.0)
    s = m.section(np.ones(lat.shape + (4,)) * np.array([1, 2j, -1, 0.5]))
    for mu in range(4):
        assert np.all(dr.spin_covariant_derivative(m, mu, s).values == 0)


def _orders(errors):
    return np.log2(np.array(errors[:-1]) / np.array(errors[1:]))


def _frw_levels():
    base = build_spacetime("FRW", n_t=32, n_x=32, delta_x=2 / 32, delta_t=1 / 32, t0=-0.5,
                           scale_factor="1+0.1*t**2+0.05*t**3")
    return [base, base.refine(2), base.refine(4)]


def test_gamma_is_parallel_up_to_discretization():
    errors = []
    for lat in _frw_levels():
        m = dr.DiracModel(lat, 1.0)
        t, x = lat.t[:, None], lat.x[None, :]
        L = lat.length_x
        Y = np.stack([np.cos(2 * np.pi * x / L) * (1 + t), np.sin(2 * np.pi * x / L) + 0 * t,
                      t * t + 0 * x, np.cos(t) + 0 * x], axis=-1)
        s = m.section(ck.smooth_spinors(lat, np.random.default_rng(1), 1)[0])
        r = max(np.abs(dr.nabla_gamma_residual(m, mu, Y, s)[3:-3]).max() for mu in range(2))
        errors.append(r)
    assert np.all(_orders(errors) >= 1.8)


def test_leibniz_rule_up_to_discretization():
    errors = []
    for lat in _frw_levels():
        m = dr.DiracModel(lat, 1.0)
        v, z = ck.smooth_spinors(lat, np.random.default_rng(2), 2)
        s, w = m.section(v), m.cospinor.section(z)
        r = dr.leibniz_residual(m, (1.0, 0.5, 0.0, 0.0), w, s)
        errors.append(np.abs(r[3:-3]).max())
    assert np.all(_orders(errors) >= 1.8)


# Dirac operators

def test_rest_frame_plane_wave_is_a_solution():
    m, errors = 1.5, []
    # E = m at rest: (gamma_0 - 1) u = 0
    u = np.array([1.0, 0.5j, 1.0, 0.5j])
    assert np.allclose(dr.GAMMA.numeric[0] @ u, u, atol=0)
    for n in (32, 64, 128):
        lat = build_spacetime("Minkowski", n_t=n, n_x=16, delta_t=1 / n)
        model = dr.DiracModel(lat, m)
        s = model.section(np.exp(-1j * m * lat.t)[:, None, None] * np.ones((1, 16, 1)) * u)
        errors.append(np.abs(dr.dirac_apply(model, s).values[1:-1]).max())
    assert np.all(np.abs(_orders(errors) - 2) < 0.2)


def test_adjunction_intertwines_dirac_operators(model):
    s = model.section(_spinor_field(model.lattice, np.random.default_rng(3)))
    lhs = dr.adjunction(dr.dirac_apply(model, s))
    rhs = dr.codirac_apply(model, dr.adjunction(s))
    assert np.abs(lhs.values - rhs.values).max() <= 1e-10 * np.abs(lhs.values).max()


def test_slash_is_anti_self_adjoint_on_compact_fields(model):
    F = ck.random_sources(model, np.random.default_rng(4), 2)
    s, t = model.section(F[..., 0]), model.section(F[..., 1])
    lhs = model.pair(dr.slash_apply(model, s), t) + model.pair(s, dr.slash_apply(model, t))
    scale = abs(model.pair(dr.slash_apply(model, s), t))
    assert abs(lhs) <= 1e-12 * scale


def test_square_form_on_minkowski_has_no_connection_terms():
    lat = build_spacetime("Minkowski", n_t=8, n_x=8)
    m = 1.5
    form = dr.dirac_square_form(dr.DiracModel(lat, m))
    G = dr.GAMMA.numeric
    assert np.array_equal(form.first_order_t[0, 0], 2j * m * G[0])
    assert np.array_equal(form.first_order_x[0, 0], -2j * m * G[1])
    assert np.array_equal(form.zeroth_order[0, 0], -m * m * np.eye(4))


def test_square_form_contains_quarter_curvature():
    lat = build_spacetime("FRW", n_t=16, n_x=8, t0=-0.5, delta_t=1 / 16, **FRW)
    model = dr.DiracModel(lat, 0.0)
    cf = model.coframe
    c = dr.dirac_square_form(model).zeroth_order[:, 0]
    expected = cf.curvature / 4 - 0.75 * cf.hubble ** 2
    assert np.allclose(c[:, 0, 0], expected, rtol=1e-14)


def test_square_form_symbol_is_inverse_metric():
    lat = build_spacetime("FRW", n_t=64, n_x=64, delta_x=1 / 16, **CONFORMAL)
    form = dr.DiracModel(lat, 1.0).square_form
    est = go.symbol_probe(form, (32, 20), (1.0, 0.5))
    exact = 1 / lat.lapse[32, 20] - 0.25 / lat.spatial_metric[32, 20]
    # first-order terms leave an O(1e-3) remainder after extrapolation
    assert np.abs(est - exact * np.eye(4)).max() <= 2e-3


# Green operators and forms

def test_green_identities_and_support(model):
    F = ck.random_sources(model, np.random.default_rng(5), 3)
    res = ck.green_identity_residuals(model, F)
    assert res["LE"] <= 1e-9 and res["EL"] <= 1e-9 and res["violations"] == 0


def test_cospinor_green_solves_its_equation(model):
    F = ck.random_sources(model, np.random.default_rng(6), 1)
    w = model.cospinor.section(F[..., 0])
    u = dr.dirac_green(model, w)
    assert u.dual
    assert go.interior_residual(model.cospinor.operator, u, w) <= 1e-9 * w.norm_inf()


def test_pairing_is_hermitian_and_green_operators_are_dual(model):
    F = ck.random_sources(model, np.random.default_rng(7), 2)
    s, t = model.section(F[..., 0]), model.section(F[..., 1])
    assert abs(np.conj(model.pair(s, t)) - model.pair(t, s)) <= 1e-12 * abs(model.pair(s, t))
    lhs = model.pair(dr.dirac_green(model, s, "retarded"), t)
    rhs = model.pair(s, dr.dirac_green(model, t, "advanced"))
    assert abs(lhs - rhs) <= 1e-9 * abs(lhs)


def test_hermitian_form_properties(model):
    rng = np.random.default_rng(8)
    a, b = go.observables_batch(model, ck.random_sources(model, rng, 2))
    h = dr.hermitian_form(a, b)
    assert abs(np.conj(h) - dr.hermitian_form(b, a)) <= 1e-10 * abs(h)
    assert abs(dr.hermitian_form(a, a).imag) <= 1e-10 * abs(dr.hermitian_form(a, a))
    cos = model.cospinor
    Aa = cos.observable(dr.adjunction(a.representative))
    Ab = cos.observable(dr.adjunction(b.representative))
    assert abs(dr.cospinor_hermitian_form(Aa, Ab) - dr.hermitian_form(b, a)) <= 1e-10 * abs(h)


def test_hermitian_form_vanishes_for_disjoint_supports(model):
    c, d = go.observables_batch(model, ck.disjoint_pairs(model, np.random.default_rng(9), 1))
    scale = np.linalg.norm(c.representative.values) * np.linalg.norm(d.representative.values)
    assert abs(dr.hermitian_form(c, d)) <= 1e-12 * scale


def test_hermitian_form_rejects_mixed_models(model):
    other = dr.DiracModel(model.lattice, 2.0)
    F = ck.random_sources(model, np.random.default_rng(10), 1)[..., 0]
    with pytest.raises(ValueError):
        dr.hermitian_form(model.observable(F), other.observable(F))


def test_slice_form_matches_hermitian_form():
    # the single-slice quadrature needs a finer grid than the spacetime forms
    lat = build_spacetime("FRW", n_t=192, n_x=256, delta_x=1 / 64, **CONFORMAL)
    model = dr.DiracModel(lat, 1.3)
    u, v = np.array([1.0, 0.5j, -0.25, 0.75]), np.array([0.5, -1j, 1.0, 0.25])
    F = np.stack([bump(lat, -0.2, 1.8, 0.3, 0.4)[..., None] * u,
                  bump(lat, 1.2, 2.2, 0.3, 0.4)[..., None] * v], axis=-1)
    a, b = go.observables_batch(model, F)
    h = dr.hermitian_form(a, b)
    s1 = dr.hermitian_on_slice(a.propagated, b.propagated, cauchy_slice(lat, 24), model)
    s2 = dr.hermitian_on_slice(a.propagated, b.propagated, cauchy_slice(lat, 96), model)
    diag = dr.hermitian_on_slice(a.propagated, a.propagated, cauchy_slice(lat, 96), model)
    assert diag.imag == 0.0
    assert abs(s1 - h) <= 2e-3 * abs(h)
    assert abs(s1 - s2) <= 2e-3 * abs(h)


def test_slice_form_rejects_off_shell(model):
    s = model.section(ck.random_sources(model, np.random.default_rng(12), 1)[..., 0])
    with pytest.raises(OffShellError):
        dr.hermitian_on_slice(s, s, cauchy_slice(model.lattice, 40), model)


@settings(max_examples=20, deadline=None)
@given(re=st.floats(-5, 5), im=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_charge_conjugation_is_antilinear(re, im, seed):
    lat = build_spacetime("Minkowski", n_t=8, n_x=8)
    s = go.Section(lat, _spinor_field(lat, np.random.default_rng(seed)), "complex")
    c = complex(re, im)
    lhs = dr.charge_conj_s(s * c).values
    assert np.allclose(lhs, np.conj(c) * dr.charge_conj_s(s).values, rtol=1e-14, atol=1e-14)
