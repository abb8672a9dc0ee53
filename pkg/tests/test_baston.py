import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quatma.backends import FiniteDifferenceBackend, SymbolicBackend, second_difference
from quatma.baston import (baston, baston_matrix, bump, chain_identity_residual,
                           check_integration_by_parts, check_stokes_compact, d_alpha, d_scalar,
                           identity_constant, integrate_form, laplacian, ma_coefficient,
                           nabla_apply, poly_bump, quat_hessian, quat_hessian_from_poly)
from quatma.forms import ExteriorForm, check_multi_index, permutation_sign, sort_sign
from quatma.grid import Domain, quad_norm2
from quatma.quaternion import moore_det, quaternion_identity
from quatma.suites import random_polynomial

S1 = SymbolicBackend(1)
S2 = SymbolicBackend(2)


def const(u, backend=S1):
    return backend.constant(u)


# ---- forms ---------------------------------------------------------------------

def test_multi_index_and_signs():
    assert check_multi_index((0, 2, 3), 2) == (0, 2, 3)
    with pytest.raises(ValueError):
        check_multi_index((1, 1), 2)
    with pytest.raises(ValueError):
        check_multi_index((0, 4), 2)
    assert sort_sign((1, 0)) == (-1, (0, 1))
    assert sort_sign((2, 0, 1)) == (1, (0, 1, 2))
    assert sort_sign((1, 1))[0] == 0
    assert permutation_sign((0, 1, 2, 3), 2) == 1
    assert permutation_sign((1, 0, 2, 3), 2) == -1
    assert permutation_sign((0, 0, 2, 3), 2) == 0


def test_wedge_rejects_overflow_and_bad_degree():
    a = ExteriorForm.generator(1, 0)
    b = ExteriorForm.generator(1, 1)
    top = a ^ b
    assert top.top() == 1 and (b ^ a).top() == -1
    with pytest.raises(ValueError):
        top.wedge(a)
    with pytest.raises(ValueError):
        ExteriorForm(1, 3)
    with pytest.raises(ValueError):
        ExteriorForm(2, 1, {(0, 1): 1})


def random_form(rng, n, degree):
    idx = list(itertools.combinations(range(2 * n), degree))
    return ExteriorForm(n, degree, {I: int(rng.integers(-3, 4)) for I in idx})


@given(st.integers(0, 2**32 - 1), st.integers(0, 2), st.integers(0, 2))
def test_wedge_graded_commutative_and_associative(seed, p, q):
    rng = np.random.default_rng(seed)
    n = 3
    F, G, H = random_form(rng, n, p), random_form(rng, n, q), random_form(rng, n, 1)
    lhs = F ^ G
    rhs = (G ^ F).scale((-1) ** (p * q))
    assert (lhs - rhs).is_zero()
    assert (((F ^ G) ^ H) - (F ^ (G ^ H))).is_zero()


# ---- nabla and d operators ----------------------------------------------------------

def test_nabla_examples():
    x0, x2 = S1.gens[0], S1.gens[2]
    assert const(nabla_apply(x0, 0, 0, S1)) == 1
    assert const(nabla_apply(x0, 1, 1, S1)) == 1
    assert const(nabla_apply(x0, 0, 1, S1)) == 0
    assert const(nabla_apply(x0, 1, 0, S1)) == 0
    assert const(nabla_apply(x2, 0, 1, S1)) == -1
    assert const(nabla_apply(x2, 1, 0, S1)) == 1
    with pytest.raises(IndexError):
        nabla_apply(x0, 2, 0, S1)
    with pytest.raises(IndexError):
        nabla_apply(x0, 0, 2, S1)


def test_nabla_fd_second_order():
    errs = []
    for R in (9, 17):
        D = Domain.box(1, R)
        x = D.coords()
        u = np.broadcast_to(x[0] * x[1] ** 3, D.shape)
        fd = FiniteDifferenceBackend(1, D.h)
        got = nabla_apply(u, 0, 0, fd)
        exact = x[1] ** 3 + 1j * 3 * x[0] * x[1] ** 2
        core = np.broadcast_to(np.max(np.abs(np.stack(np.broadcast_arrays(*x))), axis=0) <= 0.5, D.shape)
        errs.append(np.max(np.abs(got - exact)[core]))
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_d_alpha_rejects_top_degree():
    top = ExteriorForm(1, 2, {(0, 1): S1.ring(1)})
    with pytest.raises(ValueError):
        d_alpha(top, 0, S1)


@pytest.mark.parametrize("n", [1, 2])
def test_complex_identities_symbolic(n):
    B = SymbolicBackend(n)
    rng = np.random.default_rng(n)
    for _ in range(3):
        u = random_polynomial(B, rng, degree=4)
        d0, d1 = d_scalar(u, 0, B), d_scalar(u, 1, B)
        assert d_alpha(d0, 0, B).is_zero()
        assert d_alpha(d1, 1, B).is_zero()
        assert (d_alpha(d1, 0, B) + d_alpha(d0, 1, B)).is_zero()


def test_leibniz_rule_symbolic():
    B = SymbolicBackend(2)
    rng = np.random.default_rng(7)
    f, g, k = (random_polynomial(B, rng) for _ in range(3))
    F = d_scalar(f, 1, B).scale(k)  # a 1-form with non-constant coefficients
    G = d_scalar(g, 0, B)
    for alpha in (0, 1):
        lhs = d_alpha(F ^ G, alpha, B)
        rhs = (d_alpha(F, alpha, B) ^ G) - (F ^ d_alpha(G, alpha, B))
        assert (lhs - rhs).is_zero()


def test_fd_operators_commute():
    D = Domain.box(1, 9)
    fd = FiniteDifferenceBackend(1, D.h)
    x = D.coords()
    u = np.broadcast_to(np.sin(x[0] + 2 * x[1]) * np.exp(x[2] - x[3]), D.shape)
    d0, d1 = d_scalar(u, 0, fd), d_scalar(u, 1, fd)
    scale = max(np.abs(c).max() for _, c in d_alpha(d1, 0, fd).items())
    for F in (d_alpha(d0, 0, fd), d_alpha(d1, 1, fd), d_alpha(d1, 0, fd) + d_alpha(d0, 1, fd)):
        assert max((np.abs(c).max() for _, c in F.items()), default=0.0) <= 1e-12 * scale


# ---- Baston operator ----------------------------------------------------------------

def norm2(B):
    return sum(g * g for g in B.gens)


def test_baston_examples():
    u = norm2(S1)
    D = baston_matrix(u, S1)
    assert const(D[0, 1]) == 4
    assert const(D[1, 0]) == -4
    assert baston(S1.gens[0] + 3 * S1.gens[2], S1).is_zero()
    assert const(ma_coefficient([u], S1)) == 8
    assert const(ma_coefficient([norm2(S2), norm2(S2)], S2), S2) == 128
    assert const(ma_coefficient([norm2(S2), S2.gens[3]], S2), S2) == 0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10)
def test_baston_antisymmetric(seed):
    u = random_polynomial(S2, np.random.default_rng(seed))
    D = baston_matrix(u, S2)
    for i in range(4):
        for j in range(4):
            assert (D[i, j] + D[j, i]).is_zero


def test_baston_equals_d0_d1():
    u = random_polynomial(S2, np.random.default_rng(3))
    assert (baston(u, S2) - d_alpha(d_scalar(u, 1, S2), 0, S2)).is_zero()


def test_delta_and_wedge_routes_agree():
    rng = np.random.default_rng(5)
    us = [random_polynomial(S2, rng) for _ in range(2)]
    a = ma_coefficient(us, S2, "wedge")
    b = ma_coefficient(us, S2, "delta")
    assert (a - b).is_zero
    # symmetric in the arguments and n-homogeneous
    assert (ma_coefficient(us[::-1], S2) - a).is_zero
    c = ma_coefficient([3 * us[0], 3 * us[0]], S2)
    assert (c - 9 * ma_coefficient([us[0], us[0]], S2)).is_zero
    with pytest.raises(ValueError):
        ma_coefficient(us, S2, "other")
    with pytest.raises(ValueError):
        ma_coefficient(us[:1], S2)


def test_laplacian_reduction_n1():
    rng = np.random.default_rng(11)
    for _ in range(5):
        u = random_polynomial(S1, rng, degree=5)
        assert (ma_coefficient([u], S1) - laplacian(u, S1)).is_zero


def test_quat_hessian_examples():
    Q = quat_hessian_from_poly(norm2(S1), S1)
    np.testing.assert_allclose(Q, [[[8, 0, 0, 0]]])
    np.testing.assert_allclose(quat_hessian_from_poly(norm2(S2), S2), 8 * quaternion_identity(2))
    np.testing.assert_allclose(quat_hessian_from_poly(S2.gens[5] - 2 * S2.gens[0], S2), 0)


def test_quat_hessian_fd_matches_symbolic_on_quadratics():
    rng = np.random.default_rng(2)
    H = rng.integers(-2, 3, (8, 8))
    H = H @ H.T
    u = S2.quadratic(H)
    exact = quat_hessian_from_poly(u, S2)
    D = Domain.box(2, 4)
    x = np.stack(np.broadcast_arrays(*D.coords()), axis=-1)
    ug = 0.5 * np.einsum("...a,ab,...b->...", x, H, x)
    Q = quat_hessian(ug, FiniteDifferenceBackend(2, D.h))
    np.testing.assert_allclose(Q[(1,) * 8], exact, atol=1e-9)


@pytest.mark.parametrize("n,expected", [(1, 1.0), (2, 2.0), (3, 6.0)])
def test_identity_constant(n, expected):
    rep = identity_constant(n, trials=50 if n < 3 else 50, seed=n)
    assert rep.c_n == pytest.approx(expected, rel=1e-12)
    assert rep.spread < 1e-8
    assert rep.passed and len(rep.ratios) == 50


def test_identity_constant_invariant_under_affine_shift():
    B = SymbolicBackend(2)
    rng = np.random.default_rng(1)
    H1, H2 = (rng.integers(-2, 3, (8, 8)) for _ in range(2))
    u1, u2 = B.quadratic(H1 @ H1.T + np.eye(8, dtype=int)), B.quadratic(H2 @ H2.T)
    a = ma_coefficient([u1, u2], B)
    b = ma_coefficient([u1 + 3 * B.gens[0] - 2, u2 + B.gens[7]], B)
    assert (a - b).is_zero


# ---- integration and Stokes -------------------------------------------------------------

def test_integrate_form():
    D = Domain.box(1, 11, 0.0, 1.0)
    one = ExteriorForm(1, 2, {(0, 1): np.ones(D.shape)})
    assert integrate_form(one, D) == pytest.approx((9 / 10) ** 4)  # interior nodes only
    with pytest.raises(ValueError):
        integrate_form(ExteriorForm.generator(1, 0), D)
    Db = Domain.ball(1, 9)
    u = np.broadcast_to(quad_norm2(Db.coords()), Db.shape)
    fd = FiniteDifferenceBackend(1, Db.h)
    assert integrate_form(baston(u, fd), Db).real > 0


def test_second_difference_exact_on_quadratics():
    x = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(second_difference(3 * x**2 - x, x[1] - x[0], 0), 6.0)


def _stokes_T(D):
    x = D.coords()
    return ExteriorForm(1, 1, {(0,): np.broadcast_to(np.cos(x[0] - x[2]) * x[1], D.shape) + 0j,
                               (1,): np.broadcast_to(x[3] ** 2 * x[0], D.shape) + 0j})


def test_stokes_zero_test_function():
    D = Domain.box(1, 9)
    rep = check_stokes_compact(np.zeros(D.shape), _stokes_T(D), D)
    assert rep.residual == {0: 0.0, 1: 0.0}


def test_stokes_rejects_support_near_boundary():
    D = Domain.box(1, 9)
    with pytest.raises(ValueError):
        check_stokes_compact(np.ones(D.shape), _stokes_T(D), D)
    with pytest.raises(ValueError):
        check_stokes_compact(np.zeros(D.shape), ExteriorForm.scalar(1, 1.0), D)


def test_stokes_second_order():
    psi = poly_bump(1, (0.0,) * 4, 0.55)
    c = []
    for R in (11, 21):
        D = Domain.box(1, R)
        rep = check_stokes_compact(psi, _stokes_T(D), D)
        assert max(rep.residual.values()) < 1e-13
        c.append(rep.consistency)
    for alpha in (0, 1):
        assert math.log2(c[0][alpha] / c[1][alpha]) > 1.9


def test_exponential_bump_is_smooth_compact():
    b = bump(1, (0, 0, 0, 0), 0.5)
    D = Domain.box(1, 11)
    v = b(D.coords())
    assert v.max() == pytest.approx(math.exp(-1))
    assert np.all(v[0] == 0)


def test_integration_by_parts_fd():
    D = Domain.box(1, 17)
    x = D.coords()
    u = np.broadcast_to(quad_norm2(x) + x[0] * x[1], D.shape)
    psi = poly_bump(1, (0.0,) * 4, 0.6)
    r = check_integration_by_parts(psi, [u], D)
    assert r["gap"] <= 1e-10 * r["scale"]


def test_chain_identity():
    B = SymbolicBackend(2)
    rng = np.random.default_rng(9)
    us = [random_polynomial(B, rng) for _ in range(2)]
    assert chain_identity_residual(us, B).is_zero
