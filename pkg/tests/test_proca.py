import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ghft import checks as ck
from ghft import greenops as go
from ghft import proca as pr
from ghft.scalar import OffShellError
from ghft.spacetime import build_spacetime, cauchy_slice

CONFORMAL = dict(scale_factor="1+0.1*t**2", lapse="(1+0.1*t**2)**2", t0=-1.0)


@pytest.fixture(scope="module")
def lat():
    return build_spacetime("FRW", n_t=64, n_x=96, delta_x=1 / 16, **CONFORMAL)


@pytest.fixture(scope="module")
def model(lat):
    return pr.ProcaModel(lat, 1.7)


def _random_form(lat, degree, seed):
    comps = 2 if degree == 1 else 1
    return pr.form_field(lat, np.random.default_rng(seed).standard_normal(lat.shape + (comps,)),
                         degree)


def _compact(values, lat, margin=8):
    out = np.zeros_like(values)
    out[margin:-margin] = values[margin:-margin]
    return out


# exterior calculus

def test_form_field_component_counts(lat):
    with pytest.raises(ValueError):
        pr.form_field(lat, np.zeros(lat.shape + (2,)), 0)
    with pytest.raises(ValueError):
        pr.form_field(lat, np.zeros(lat.shape + (1,)), 3)
    assert pr.form_field(lat, np.zeros(lat.shape), 2).fiber_dim == 1


def test_d_of_constant_is_zero(lat):
    c = pr.form_field(lat, np.full(lat.shape, 3.25), 0)
    d = pr.exterior_d(c)
    assert d.degree == 1
    assert np.all(d.values[:-1] == 0)


def test_d_of_space_independent_time_component(lat):
    a_t = np.broadcast_to(np.cos(lat.t)[:, None], lat.shape)
    A = pr.form_field(lat, np.stack([a_t, np.zeros(lat.shape)], axis=-1), 1)
    assert np.all(pr.exterior_d(A).values == 0)


def test_dd_vanishes_exactly(lat):
    dd = pr.dd_exact(_random_form(lat, 0, 0))
    assert all(v == 0 for v in dd.reshape(-1))


def test_codiff_codiff_vanishes_exactly():
    small = build_spacetime("FRW", n_t=12, n_x=10, **CONFORMAL)
    out = pr.codiff_codiff_exact(_random_form(small, 2, 1))
    assert all(v == 0 for v in out.reshape(-1))


def test_degree_errors(lat):
    with pytest.raises(ValueError):
        pr.exterior_d(_random_form(lat, 2, 0))
    with pytest.raises(ValueError):
        pr.codifferential(_random_form(lat, 0, 0))
    with pytest.raises(ValueError):
        pr.dd_exact(_random_form(lat, 1, 0))


def test_star_of_one_is_volume_on_minkowski():
    mink = build_spacetime("Minkowski", n_t=8, n_x=8, delta_x=0.25, delta_t=0.125)
    star = pr.hodge_star(pr.form_field(mink, np.ones(mink.shape), 0))
    assert star.dual and star.degree == 2
    assert np.allclose(star.values, 0.25 * 0.125, rtol=1e-15)


def test_star_star_is_identity_on_one_forms(lat):
    A = _random_form(lat, 1, 2)
    back = pr.hodge_star(pr.hodge_star(A))
    assert not back.dual and back.degree == 1
    assert np.allclose(back.values, A.values, rtol=1e-14, atol=0)
    inv = pr.hodge_star_inverse(pr.hodge_star(A))
    assert np.allclose(inv.values, A.values, rtol=1e-14, atol=0)


def test_wedge_pairing_matches_model_pairing(lat, model):
    a, b = _random_form(lat, 1, 3), _random_form(lat, 1, 4)
    w = pr.wedge_pairing(a, b)
    assert w == pytest.approx(model.pair(a, b), rel=1e-10)
    assert w == pytest.approx(pr.wedge_pairing(b, a), rel=1e-10)


def test_codifferential_is_adjoint_of_d(lat):
    w = pr.form_weights(lat)
    f = pr.form_field(lat, _compact(_random_form(lat, 0, 5).values, lat), 0)
    A = pr.form_field(lat, _compact(_random_form(lat, 1, 6).values, lat), 1)
    lhs = np.sum(f.values * w[0] * pr.codifferential(A).values)
    rhs = np.sum(pr.exterior_d(f).values * w[1] * A.values)
    assert abs(lhs - rhs) <= 1e-12 * abs(rhs)


def test_codifferential_of_constant_on_minkowski():
    mink = build_spacetime("Minkowski", n_t=16, n_x=16)
    A = pr.form_field(mink, np.ones(mink.shape + (2,)) * [0.7, -1.2], 1)
    assert np.all(pr.codifferential(A).values[1:] == 0)


def test_codifferential_exact_matches_floating(lat):
    small = build_spacetime("FRW", n_t=10, n_x=10, **CONFORMAL)
    A = _random_form(small, 1, 7)
    exact = pr.codifferential(A, exact=True).astype(float)
    assert np.allclose(exact, pr.codifferential(A).values, rtol=1e-13, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(values=hnp.arrays(np.float64, (8, 8, 1), elements=st.floats(-1e3, 1e3)))
def test_dd_is_structurally_zero(values):
    small = build_spacetime("Minkowski", n_t=8, n_x=8)
    dd = pr.dd_exact(pr.form_field(small, values, 0))
    assert all(v == 0 for v in dd.reshape(-1))


# Proca operators

def test_zero_mass_is_rejected(lat):
    with pytest.raises(ValueError):
        pr.ProcaModel(lat, 0.0)


def test_closed_input_sees_only_the_mass(lat, model):
    A = pr.exterior_d(_random_form(lat, 0, 8))
    PA = pr.proca_apply(model, A)
    assert np.allclose(PA.values, model.mass_sq * A.values, rtol=0, atol=1e-12)


def test_coclosed_input_is_fixed_by_q(lat, model):
    A = pr.codifferential(_random_form(lat, 2, 9))
    assert np.max(np.abs(pr.codifferential(A).values)) <= 1e-9
    QA = pr.proca_q(model, A)
    assert np.allclose(QA.values, A.values, rtol=0, atol=1e-9 * np.abs(A.values).max())


def test_pq_equals_r(model):
    mats = model.matrices
    diff = mats["P"] @ mats["Q"] - mats["R"]
    assert abs(diff).max() <= 1e-10 * abs(mats["R"]).max()


def test_green_identities_and_support(model):
    F = ck.random_sources(model, np.random.default_rng(10), 3)
    res = ck.green_identity_residuals(model, F)
    assert res["LE"] <= 1e-9 and res["EL"] <= 1e-9 and res["violations"] == 0


def test_green_applies_q_after_f(model):
    F = ck.random_sources(model, np.random.default_rng(11), 1)
    alpha = model.section(F[..., 0])
    u = pr.proca_green(model, alpha)
    assert go.interior_residual(model.operator, u, alpha) <= 1e-9 * alpha.norm_inf()


def test_tau_antisymmetry_and_causality(model):
    rng = np.random.default_rng(12)
    a, b = go.observables_batch(model, ck.random_sources(model, rng, 2))
    scale = np.linalg.norm(a.representative.values) * np.linalg.norm(b.representative.values)
    assert abs(pr.proca_tau(a, a)) <= 1e-12 * scale
    assert abs(pr.proca_tau(a, b) + pr.proca_tau(b, a)) <= 1e-12 * scale
    c, d = go.observables_batch(model, ck.disjoint_pairs(model, rng, 1))
    scale = np.linalg.norm(c.representative.values) * np.linalg.norm(d.representative.values)
    assert abs(pr.proca_tau(c, d)) <= 1e-12 * scale


def test_sigma_matches_tau():
    base = build_spacetime("FRW", n_t=129, n_x=256, delta_x=4 / 256, delta_t=2 / 128,
                           t0=-1.0, scale_factor="1+0.1*t**2")
    fn = ck.IDENTITIES["proca_sigma_tau"][2]
    assert fn(base, ck.ModelParams(), np.random.default_rng(0)) <= 1e-2


def test_sigma_rejections(lat, model):
    A = _random_form(lat, 1, 13)
    with pytest.raises(OffShellError):
        pr.proca_sigma_slice(A, A, cauchy_slice(lat, 30), model)
    (a,) = go.observables_batch(model, ck.random_sources(model, np.random.default_rng(14), 1))
    with pytest.raises(ValueError):
        pr.proca_sigma_slice(a.propagated, a.propagated, cauchy_slice(lat, 0), model)


def test_tau_rejects_mixed_models(lat, model):
    other = pr.ProcaModel(lat, 2.0)
    F = ck.random_sources(model, np.random.default_rng(15), 1)[..., 0]
    with pytest.raises(ValueError):
        pr.proca_tau(model.observable(F), other.observable(F))
