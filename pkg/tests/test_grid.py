import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quatma.grid import (Domain, domain_from_meta, lp_norm, max_filter, mollifier_kernel, mollify,
                         quad_norm2, read_grid, sample, write_grid)
from quatma.psh import (EnvelopeConfig, EnvelopeError, max_glue, psh_check, psh_envelope,
                        submean_defect)
from quatma.backends import SymbolicBackend


@pytest.fixture(scope="module")
def ball():
    return Domain.ball(1, 9)


def r2(D):
    return np.broadcast_to(quad_norm2(D.coords()), D.shape).copy()


# ---- domains ---------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(n=0, resolution=5), dict(n=1, resolution=2), dict(n=1, resolution=5, lower=1.0, upper=0.0),
    dict(n=1, resolution=5, lower=(0, 0, 0, 0), upper=(1, 1, 1, 2))])
def test_box_validation(kwargs):
    with pytest.raises(ValueError):
        Domain.box(**kwargs)


@pytest.mark.parametrize("kwargs", [dict(resolution=8), dict(resolution=9, radius=-1.0),
                                    dict(resolution=9, pad=1)])
def test_ball_validation(kwargs):
    with pytest.raises(ValueError):
        Domain.ball(1, **kwargs)


def test_ball_geometry(ball):
    assert ball.shape == (13,) * 4 and ball.h == pytest.approx(0.25)
    assert not np.any(ball.interior & ball.boundary)
    assert np.all(ball.rho()[ball.interior] < 0)
    assert np.all(ball.distance_to_boundary()[ball.interior] > 0)
    center = (6,) * 4
    assert ball.interior[center] and ball.rho()[center] == -1.0


def test_box_masks():
    D = Domain.box(1, 5)
    assert D.interior.sum() == 3**4 and D.boundary.sum() == 5**4 - 3**4
    np.testing.assert_allclose(D.rho()[D.boundary].max(), 0.0, atol=1e-15)


# ---- sampling and norms --------------------------------------------------------------

def test_sample_examples(ball):
    assert np.all(sample(lambda x: 1.0, ball) == 1.0)
    u = sample(quad_norm2, ball)
    assert u[(6,) * 4] == 0.0
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        sample(lambda x: 1.0 / quad_norm2(x), ball)


def test_lp_norm_unit_indicator():
    D = Domain.box(1, 11, 0.0, 1.0)
    x = D.coords()
    cube = np.broadcast_to(np.all(np.stack(np.broadcast_arrays(*x)) < 1 - 1e-9, axis=0), D.shape)
    assert cube.sum() == 10**4
    assert lp_norm(1.0, D, 4, cube) == pytest.approx(1.0)
    assert lp_norm(1.0, D, np.inf, cube) == 1.0
    with pytest.raises(ValueError):
        lp_norm(1.0, D, 0.5)


@given(st.integers(0, 2**32 - 1), st.floats(1.0, 6.0),
       st.floats(-5, 5).filter(lambda c: c == 0 or abs(c) > 1e-6))
@settings(max_examples=25)
def test_lp_norm_scaling_and_holder(seed, p, c):
    D = Domain.box(1, 5)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2,) + D.shape)
    assert lp_norm(c * f, D, p) == pytest.approx(abs(c) * lp_norm(f, D, p), rel=1e-10, abs=1e-300)
    q = p / (p - 1) if p > 1 else np.inf
    assert lp_norm(f * g, D, 1) <= lp_norm(f, D, p) * lp_norm(g, D, q) * (1 + 1e-12)
    assert lp_norm(f + g, D, p) <= (lp_norm(f, D, p) + lp_norm(g, D, p)) * (1 + 1e-12)


# ---- mollification ---------------------------------------------------------------------

def test_kernel_normalized():
    k = mollifier_kernel(0.5, 0.25, 4)
    assert k.sum() == pytest.approx(1.0) and np.all(k >= 0)
    np.testing.assert_allclose(k, k[::-1, ::-1, ::-1, ::-1])


def test_mollify_constant_and_radius_guard(ball):
    out = mollify(np.ones(ball.shape), ball, 2 * ball.h)
    ok = np.isfinite(out)
    np.testing.assert_allclose(out[ok], 1.0)
    assert ok[ball.closure].all()
    with pytest.raises(ValueError):
        mollify(np.ones(ball.shape), ball, ball.h)


def test_mollify_quadratic_monotone(ball):
    u = r2(ball)
    prev = u
    errs = []
    for eps in (0.5, 0.75, 1.0):
        w = mollify(u, ball, eps)
        m = np.isfinite(w) & ball.closure
        assert np.all(w[m] >= prev[m] - 1e-13)
        # for a quadratic the mollifier only adds a constant
        np.testing.assert_allclose(np.ptp((w - u)[m]), 0.0, atol=1e-12)
        errs.append(float(np.max((w - u)[m])))
        prev = np.where(np.isfinite(w), w, prev)
    assert errs == sorted(errs)


def test_mollify_preserves_psh():
    D = Domain.ball(1, 9, pad=4)
    u = np.maximum(r2(D) - 1.0, -0.25)
    w = mollify(u, D, 2 * D.h)
    assert psh_check(w, D, mode="submean").passed


def test_max_filter():
    u = np.zeros((5, 5))
    u[2, 2] = 1.0
    out = max_filter(u)
    assert out.sum() == 5 and out[1, 1] == 0
    mask = np.zeros_like(u, dtype=bool)
    mask[2, 1:4] = True
    out = max_filter(u, mask)  # only masked nodes feed and receive the max
    assert out[2, 1] == out[2, 3] == 1 and out[1, 2] == 0 and out[3, 3] == 0


def test_grid_roundtrip(tmp_path, ball):
    u = np.random.default_rng(0).standard_normal(ball.shape)
    path = write_grid(tmp_path / "u.bin", u, ball, {"note": "x"})
    assert path.stat().st_size == u.size * 8
    v, meta = read_grid(path)
    np.testing.assert_array_equal(u, v)
    assert meta["note"] == "x" and meta["shape"] == "ball" and meta["h"] == ball.h
    assert domain_from_meta(meta) == ball


# ---- PSH checks, gluing, envelope ---------------------------------------------------------

def test_psh_check_examples(ball):
    u = r2(ball)
    for mode in ("hessian", "submean"):
        assert psh_check(u, ball, mode).passed
        rep = psh_check(-u, ball, mode)
        assert rep.violations == rep.checked > 0
    with pytest.raises(ValueError):
        psh_check(u, ball, "other")


def test_psh_check_polynomial_witness():
    B = SymbolicBackend(1)
    x = B.gens
    assert psh_check(sum(g * g for g in x), backend=B).passed
    assert not psh_check(x[0] ** 2 - 3 * x[1] ** 2, backend=B).passed
    # convex is PSH; the converse fails
    assert psh_check(x[0] ** 2 - x[1] ** 2, backend=B).passed


def test_submean_defect_quadratic(ball):
    d = submean_defect(r2(ball), ball)
    # mean over the 8 block neighbors of |q|^2 exceeds the center by h^2
    np.testing.assert_allclose(d[ball.interior], ball.h**2)


def test_max_glue(ball):
    u = np.zeros(ball.shape)
    v = r2(ball) - 1.0
    omega = ball.ball_mask(0.8)
    np.testing.assert_array_equal(max_glue(u, v, omega, ball), u)
    w = r2(ball) - 0.5
    out = max_glue(u, w, ball.ball_mask(0.6), ball)
    inside = ball.ball_mask(0.6) & ball.closure
    np.testing.assert_array_equal(out[inside], np.maximum(0, w)[inside])
    with pytest.raises(ValueError):
        max_glue(u, w + 1.0, omega, ball)


def test_envelope_maximum_principle(ball):
    zero = np.zeros(ball.shape)
    np.testing.assert_allclose(psh_envelope(zero, zero, ball)[ball.closure], 0.0, atol=1e-12)
    ceil = np.where(ball.interior, 1.0, 0.0)
    env = psh_envelope(ceil, zero, ball, EnvelopeConfig(rel_tol=1e-12))
    np.testing.assert_allclose(env[ball.closure], 0.0, atol=1e-10)


def test_envelope_recovers_subsolution(ball):
    v = r2(ball) - 1.0
    U = ball.ball_mask(0.5)
    ceil = np.where(U, v, np.inf)
    env = psh_envelope(ceil, np.zeros(ball.shape), ball, EnvelopeConfig(rel_tol=1e-12))
    m = ball.interior
    np.testing.assert_allclose(env[U], v[U], atol=1e-10)
    assert np.all(v[m] <= env[m] + 1e-10) and np.all(env[m] <= 1e-12)
    assert psh_check(env, ball, "submean", tol=1e-9).passed


def test_envelope_sweep_cap(ball):
    with pytest.raises(EnvelopeError):
        noise = -np.random.default_rng(0).random(ball.shape)
        psh_envelope(np.where(ball.interior, 1.0, 0.0), np.zeros(ball.shape), ball,
                     EnvelopeConfig(max_sweeps=1), initial=noise)
