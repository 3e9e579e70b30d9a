import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ghft.spacetime import (
    ConeWrapWarning,
    Family,
    LatticeError,
    SupportClass,
    SupportMask,
    build_spacetime,
    cauchy_slice,
    causal_cone,
    classify_support,
    read_pgm,
    volume_weights,
    write_pgm,
)


def test_minkowski_is_flat():
    lat = build_spacetime("Minkowski", n_t=64, n_x=64)
    assert np.all(lat.lapse == 1) and np.all(lat.spatial_metric == 1)
    assert np.all(lat.scalar_curvature == 0)
    assert lat.is_static and lat.is_homogeneous()


def test_de_sitter_metric():
    lat = build_spacetime("DeSitter", n_t=16, n_x=16, t0=-0.5, delta_x=1 / 8)
    assert np.allclose(lat.spatial_metric, np.cosh(lat.t)[:, None] ** 2, rtol=1e-14)


def test_frw_curvature_matches_symbolic_oracle():
    lat = build_spacetime("FRW", n_t=17, n_x=8, t0=-1.0, delta_t=1 / 8,
                          scale_factor="1+0.1*t**2")
    t = sp.Symbol("t")
    a = 1 + sp.Rational(1, 10) * t ** 2
    oracle = sp.lambdify(t, 2 * sp.diff(a, t, 2) / a)
    assert np.allclose(lat.scalar_curvature[:, 0], oracle(lat.t), rtol=1e-12, atol=1e-14)
    # a'' = 0.2 and a = 1 at t = 0
    assert lat.scalar_curvature[8, 0] == pytest.approx(0.4, rel=1e-12)


def test_callable_profile_uses_finite_differences():
    exact = build_spacetime("FRW", n_t=64, n_x=8, t0=-1, delta_t=1 / 32,
                            scale_factor="1+0.1*t**2")
    fd = build_spacetime("FRW", n_t=64, n_x=8, t0=-1, delta_t=1 / 32,
                         scale_factor=lambda t, x: 1 + 0.1 * t ** 2)
    inner = slice(2, -2)
    assert np.allclose(fd.scalar_curvature[inner], exact.scalar_curvature[inner], atol=1e-4)


@pytest.mark.parametrize("kwargs", [
    dict(family="Minkowski", n_t=4),
    dict(family="FRW"),
    dict(family="Minkowski", delta_x=-1.0),
    dict(family="Ultrastatic", spatial_metric="1+t"),
    dict(family="FRW", scale_factor="1+y"),
])
def test_invalid_specs_raise(kwargs):
    with pytest.raises(LatticeError):
        build_spacetime(**kwargs)


def test_refine_keeps_window():
    lat = build_spacetime("FRW", n_t=17, n_x=16, t0=-1, delta_t=1 / 8, delta_x=1 / 8,
                          scale_factor="1+0.1*t**2")
    fine = lat.refine(2)
    assert fine.shape == (33, 32)
    assert fine.t[0] == lat.t[0] and fine.t[-1] == pytest.approx(lat.t[-1])
    assert np.allclose(fine.spatial_metric[::2, ::2], lat.spatial_metric)


def test_restrict_is_a_time_band():
    lat = build_spacetime("FRW", n_t=32, n_x=16, scale_factor="1+t**2")
    sub = lat.restrict(8, 20)
    assert sub.n_t == 12 and sub.t[0] == lat.t[8]
    assert np.array_equal(sub.spatial_metric, lat.spatial_metric[8:20])
    with pytest.raises(LatticeError):
        lat.restrict(10, 5)


def test_minkowski_cone_is_exact():
    lat = build_spacetime("Minkowski", n_t=20, n_x=64)
    seed = np.zeros(lat.shape, bool)
    seed[0, 32] = True
    cone = causal_cone(lat, seed, "future").mask
    k = np.arange(20)[:, None]
    j = np.arange(64)[None, :] - 32
    assert np.array_equal(cone, np.abs(j) <= k)


def test_frw_cone_slope_is_halved():
    lat = build_spacetime("FRW", n_t=20, n_x=64, scale_factor=2)
    seed = np.zeros(lat.shape, bool)
    seed[0, 32] = True
    cone = causal_cone(lat, seed, "future").mask
    k = np.arange(20)[:, None]
    j = np.arange(64)[None, :] - 32
    assert np.array_equal(cone, np.abs(j) <= np.ceil(k / 2))


def test_chronological_cone_is_inside_causal_cone():
    lat = build_spacetime("Minkowski", n_t=16, n_x=48)
    seed = np.zeros(lat.shape, bool)
    seed[8, 20] = True
    J = causal_cone(lat, seed, "past", "J")
    I_ = causal_cone(lat, seed, "past", "I")
    assert I_.issubset(J)
    assert not I_.mask[8, 20] and J.mask[8, 20]


def test_per_step_rounding_is_wider():
    lat = build_spacetime("FRW", n_t=20, n_x=64, scale_factor=2)
    seed = np.zeros(lat.shape, bool)
    seed[0, 32] = True
    wide = causal_cone(lat, seed, rounding="per_step")
    assert causal_cone(lat, seed).issubset(wide)
    assert wide.mask[10, 42]


def test_wrapping_cone_warns():
    lat = build_spacetime("Minkowski", n_t=40, n_x=16)
    seed = np.zeros(lat.shape, bool)
    seed[0, 0] = True
    with pytest.warns(ConeWrapWarning):
        causal_cone(lat, seed)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 23), j=st.integers(0, 31), direction=st.sampled_from(["future", "past"]),
       a=st.floats(1.0, 3.0))
def test_seed_lies_in_its_cone(n, j, direction, a):
    lat = build_spacetime("FRW", n_t=24, n_x=32, scale_factor=a)
    seed = np.zeros(lat.shape, bool)
    seed[n, j] = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConeWrapWarning)
        cone = causal_cone(lat, seed, direction)
    assert cone.mask[n, j]
    rows = cone.time_extent()
    if direction == "future":
        assert rows[0] == n
    else:
        assert rows[1] == n


def test_volume_weights():
    mink = build_spacetime("Minkowski", n_t=8, n_x=8, delta_x=0.25, delta_t=0.125)
    assert np.allclose(volume_weights(mink), 0.25 * 0.125)
    frw = build_spacetime("FRW", n_t=8, n_x=8, scale_factor=3)
    assert np.allclose(volume_weights(frw), 3 * frw.delta_t * frw.delta_x)
    ds = build_spacetime("DeSitter", n_t=9, n_x=8, t0=0.0, delta_t=1 / 8)
    assert volume_weights(ds)[8, 0] == pytest.approx(math.cosh(1) * ds.delta_t * ds.delta_x)


def test_cauchy_slice_data():
    mink = build_spacetime("Minkowski", n_t=8, n_x=8)
    s = cauchy_slice(mink, 3)
    assert np.all(s.normal_scale == 1) and np.allclose(s.induced_volume, mink.delta_x)
    beta4 = build_spacetime("FRW", n_t=8, n_x=8, scale_factor=1, lapse=4)
    assert np.allclose(cauchy_slice(beta4, 0).normal_scale, 0.5)
    frw = build_spacetime("FRW", n_t=8, n_x=8, scale_factor=2)
    assert np.allclose(cauchy_slice(frw, 5).induced_volume, 2 * frw.delta_x)
    with pytest.raises(LatticeError):
        cauchy_slice(frw, 8)


def test_classify_support():
    m = np.zeros((10, 8), bool)
    assert classify_support(m) == SupportClass.COMPACT
    m[3:5, 2] = True
    assert classify_support(m) == SupportClass.COMPACT
    m[9, 0] = True
    assert classify_support(m) == SupportClass.PAST_COMPACT
    m[0, 0] = True
    assert classify_support(m) == SupportClass.SPACELIKE_COMPACT
    assert classify_support(np.ones((4, 4), bool)) == SupportClass.FULL


def test_support_mask_algebra():
    a = SupportMask(np.eye(4, dtype=bool))
    b = SupportMask(np.ones((4, 4), bool))
    assert a.issubset(b) and not b.issubset(a)
    assert (a | b).mask.all() and np.array_equal((a & b).mask, a.mask)
    assert b.violations(a) == 12
    assert a.isdisjoint(SupportMask(~np.eye(4, dtype=bool)))


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.random((13, 21)) > 0.5
    write_pgm(tmp_path / "m.pgm", m)
    assert np.array_equal(read_pgm(tmp_path / "m.pgm"), m)
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n21 13\n255\n")


def test_family_names():
    assert Family("FRW") is Family.FRW
    with pytest.raises(ValueError):
        Family("Schwarzschild")
