"""First-order operators nabla_{j alpha}, d_0 / d_1, the Baston operator and
the quaternionic Monge-Ampere coefficient.

Every routine takes a backend (:class:`SymbolicBackend` for exact work on
polynomials, :class:`FiniteDifferenceBackend` for grid arrays).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .backends import FiniteDifferenceBackend, SymbolicBackend
from .forms import ExteriorForm, permutation_sign
from .quaternion import (_unit_products, mixed_moore_det, quat_hessian_from_real,
                         symmetrize)


def nabla_apply(u, j: int, alpha: int, backend):
    """Apply ``nabla_{j alpha}``.

    For ``l = j // 2``::

        nabla_{(2l)0}   =  d_{4l}   + i d_{4l+1}
        nabla_{(2l)1}   = -d_{4l+2} - i d_{4l+3}
        nabla_{(2l+1)0} =  d_{4l+2} - i d_{4l+3}
        nabla_{(2l+1)1} =  d_{4l}   - i d_{4l+1}
    """
    n = backend.n
    if not 0 <= j < 2 * n:
        raise IndexError(f"row index {j} out of range for n={n}")
    if alpha not in (0, 1):
        raise IndexError(f"column index {alpha} must be 0 or 1")
    l, odd = divmod(j, 2)
    a = 4 * l
    I = backend.I
    d = backend.d
    if not odd and alpha == 0:
        return d(u, a) + I * d(u, a + 1)
    if not odd:
        return -d(u, a + 2) - I * d(u, a + 3)
    if alpha == 0:
        return d(u, a + 2) - I * d(u, a + 3)
    return d(u, a) - I * d(u, a + 1)


def d_alpha(F: ExteriorForm, alpha: int, backend) -> ExteriorForm:
    """``d_alpha F = sum_{k, I} nabla_{k alpha} f_I  w^k ^ w^I``."""
    n = F.n
    if F.degree >= 2 * n:
        raise ValueError("d_alpha of a top-degree form")
    out = {}
    for idx, f in F.items():
        for k in range(2 * n):
            if k in idx:
                continue
            pos = sum(1 for i in idx if i < k)
            g = nabla_apply(f, k, alpha, backend)
            if pos % 2:
                g = -g
            key = tuple(sorted(idx + (k,)))
            out[key] = out[key] + g if key in out else g
    return ExteriorForm(n, F.degree + 1, out).prune()


def d_scalar(u, alpha: int, backend) -> ExteriorForm:
    return d_alpha(ExteriorForm.scalar(backend.n, u), alpha, backend)


def baston_matrix(u, backend) -> dict:
    """``Delta_ij u = (nabla_i0 nabla_j1 - nabla_i1 nabla_j0) u / 2`` for all ``i, j``."""
    m = 2 * backend.n
    first = {(i, a): nabla_apply(u, i, a, backend) for i in range(m) for a in (0, 1)}
    out = {}
    for i in range(m):
        for j in range(m):
            out[i, j] = (nabla_apply(first[j, 1], i, 0, backend)
                         - nabla_apply(first[j, 0], i, 1, backend)) * _half(backend)
    return out


def _half(backend):
    return backend.ring(1) / 2 if isinstance(backend, SymbolicBackend) else 0.5


def baston(u, backend) -> ExteriorForm:
    """The 2-form ``sum_{i,j} Delta_ij u w^i ^ w^j``.

    Stored with increasing indices, so the ``(i, j)`` coefficient is
    ``Delta_ij - Delta_ji``. It coincides with ``d_0 d_1 u``.
    """
    D = baston_matrix(u, backend)
    m = 2 * backend.n
    coeffs = {(i, j): D[i, j] - D[j, i] for i in range(m) for j in range(i + 1, m)}
    return ExteriorForm(backend.n, 2, coeffs).prune()


def ma_coefficient(us, backend, method: str = "wedge"):
    """``Delta_n(u_1, ..., u_n)``: top coefficient of ``Delta u_1 ^ ... ^ Delta u_n``.

    ``method="delta"`` evaluates the permutation-symbol sum directly and
    serves as an independent oracle. The result is real; its real part
    is returned.
    """
    n = backend.n
    us = list(us)
    if len(us) != n:
        raise ValueError(f"need {n} functions, got {len(us)}")
    if isinstance(backend, FiniteDifferenceBackend):
        shapes = {np.shape(u) for u in us}
        if len(shapes) != 1:
            raise ValueError("fields live on different grids")
    if method == "wedge":
        form = baston(us[0], backend)
        for u in us[1:]:
            form = form.wedge(baston(u, backend))
        top = form.top()
    elif method == "delta":
        mats = [baston_matrix(u, backend) for u in us]
        top = 0
        for perm in itertools.permutations(range(2 * n)):
            s = permutation_sign(perm, n)
            term = None
            for k in range(n):
                c = mats[k][perm[2 * k], perm[2 * k + 1]]
                term = c if term is None else term * c
            top = top + s * term
    else:
        raise ValueError(f"unknown method {method!r}")
    if isinstance(top, int) and top == 0:
        return backend.ring(0) if isinstance(backend, SymbolicBackend) else 0.0
    return backend.real(top)


def quat_hessian(u, backend):
    """Quaternionic Hessian, entry ``(j,k) = sum_ab e_a conj(e_b) d_{4j+a} d_{4k+b} u``.

    Symbolic mode returns an object array ``(n, n, 4)`` of polynomials;
    FD mode returns a float array of shape ``grid + (n, n, 4)``, using
    the compact ``[1, -2, 1]`` stencil for pure second derivatives so the
    trace is the standard 4n-D Laplacian.
    """
    n = backend.n
    table = _unit_products()
    if isinstance(backend, SymbolicBackend):
        out = np.empty((n, n, 4), dtype=object)
        dd = {}
        for a in range(4 * n):
            da = backend.d(u, a)
            for b in range(a, 4 * n):
                dd[a, b] = dd[b, a] = backend.d(da, b)
        for j in range(n):
            for k in range(n):
                for q in range(4):
                    acc = backend.ring(0)
                    for a in range(4):
                        for b in range(4):
                            t = int(table[a, b, q])
                            if t:
                                acc += t * dd[4 * j + a, 4 * k + b]
                    out[j, k, q] = acc
        return out
    u = np.asarray(u, dtype=float)
    H = real_hessian_field(u, backend)
    return quat_hessian_from_real(H)


def real_hessian_field(u, backend: FiniteDifferenceBackend) -> np.ndarray:
    """All second differences, shape ``grid + (4n, 4n)``."""
    m = 4 * backend.n
    first = [backend.d(u, a) for a in range(m)]
    H = np.empty(u.shape + (m, m))
    for a in range(m):
        H[..., a, a] = backend.dd(u, a, a)
        for b in range(a + 1, m):
            H[..., a, b] = H[..., b, a] = backend.d(first[a], b)
    return H


def evaluate_hessian(Q, backend: SymbolicBackend, point=None) -> np.ndarray:
    """Numeric ``(n, n, 4)`` array from a symbolic quaternionic Hessian."""
    out = np.empty(Q.shape)
    for idx in np.ndindex(Q.shape):
        val = backend.constant(Q[idx]) if point is None else backend.evaluate(Q[idx], point)
        out[idx] = val.real
    return symmetrize(out)


def laplacian(u, backend):
    m = 4 * backend.n
    total = None
    for a in range(m):
        t = backend.dd(u, a, a)
        total = t if total is None else total + t
    return total


@dataclass
class IdentityReport:
    n: int
    c_n: float
    spread: float
    ratios: np.ndarray
    expected: float
    passed: bool


def random_convex_quadratic(n: int, rng: np.random.Generator, max_entry: int = 2):
    """Integer data ``(H, b)`` with ``H = B B^T`` and ``B`` integer, so exact."""
    m = 4 * n
    B = rng.integers(-max_entry, max_entry + 1, size=(m, m))
    H = B @ B.T + np.eye(m, dtype=int)
    b = rng.integers(-3, 4, size=m)
    return H, b


def identity_constant(n: int, trials: int = 50, seed: int = 0, tol: float = 1e-8,
                      backend: SymbolicBackend | None = None) -> IdentityReport:
    """Measure ``c_n = Delta_n(u_1..u_n) / mixed(quat Hessians)`` over random tuples.

    The ratio must be a single constant; relative spread above ``tol``
    raises. Expected value: ``n!``.
    """
    backend = backend or SymbolicBackend(n)
    rng = np.random.default_rng(seed)
    ratios = []
    while len(ratios) < trials:
        data = [random_convex_quadratic(n, rng) for _ in range(n)]
        us = [backend.quadratic(H, b) for H, b in data]
        top = ma_coefficient(us, backend)
        lhs = backend.constant(top).real
        hess = [evaluate_hessian(quat_hessian(u, backend), backend) for u in us]
        rhs = mixed_moore_det(*hess)
        if abs(rhs) < 1e-8 * max(1.0, abs(lhs)):
            continue
        ratios.append(lhs / rhs)
    ratios = np.array(ratios)
    c = float(np.median(ratios))
    spread = float((ratios.max() - ratios.min()) / abs(c))
    if spread >= tol:
        raise ArithmeticError(f"normalization ratio not constant: spread {spread:.3e}")
    return IdentityReport(n, c, spread, ratios, float(math.factorial(n)),
                          abs(c - math.factorial(n)) <= tol * math.factorial(n))


def quat_hessian_from_poly(u, backend: SymbolicBackend) -> np.ndarray:
    return evaluate_hessian(quat_hessian(u, backend), backend)


def integrate_form(F, domain, mask=None) -> float:
    """Midpoint sum ``sum f h^(4n)`` of a top-degree form over the interior."""
    if isinstance(F, ExteriorForm):
        if F.degree != 2 * F.n:
            raise ValueError("integrate_form needs a top-degree form")
        f = F.top()
    else:
        f = F
    mask = domain.interior if mask is None else mask
    f = np.broadcast_to(np.asarray(f), mask.shape)
    return complex_or_real(np.sum(f[mask]) * domain.h ** domain.dim)


def complex_or_real(z):
    z = complex(z)
    return z.real if z.imag == 0 else z


class SmoothFunction:
    """A sympy expression in ``x0..x(4n-1)`` with lambdified partials."""

    def __init__(self, expr, n: int):
        self.n = n
        self.symbols = sp.symbols(f"x0:{4 * n}")
        self.expr = sp.sympify(expr)
        self._fn = sp.lambdify(self.symbols, self.expr, "numpy")
        self._grad = [sp.lambdify(self.symbols, sp.diff(self.expr, s), "numpy")
                      for s in self.symbols]

    # piecewise expressions evaluate every branch everywhere
    def __call__(self, coords):
        with np.errstate(all="ignore"):
            return np.broadcast_to(self._fn(*coords), np.broadcast(*coords).shape).astype(float)

    def partial(self, a: int, coords):
        with np.errstate(all="ignore"):
            return np.broadcast_to(self._grad[a](*coords), np.broadcast(*coords).shape).astype(float)


def bump(n: int, center, radius: float) -> SmoothFunction:
    """``exp(-1 / (1 - r^2/R^2))`` inside the ball, zero outside."""
    x = sp.symbols(f"x0:{4 * n}")
    r2 = sum((xi - float(c)) ** 2 for xi, c in zip(x, center))
    s = r2 / radius**2
    expr = sp.Piecewise((sp.exp(-1 / (1 - s)), s < 1), (0, True))
    return SmoothFunction(expr, n)


def poly_bump(n: int, center, radius: float, power: int = 6) -> SmoothFunction:
    """``(1 - r^2/R^2)^power`` inside the ball: C^(power-1), with a clean
    second-order FD error already on coarse grids."""
    x = sp.symbols(f"x0:{4 * n}")
    s = sum((xi - float(c)) ** 2 for xi, c in zip(x, center)) / radius**2
    return SmoothFunction(sp.Piecewise(((1 - s) ** power, s < 1), (0, True)), n)


@dataclass
class StokesReport:
    residual: dict = field(default_factory=dict)
    scale: float = 0.0
    consistency: dict = field(default_factory=dict)


class _ExactGradientBackend:
    """Backend whose ``d`` returns exact partials of a :class:`SmoothFunction`."""

    def __init__(self, fn: SmoothFunction, coords):
        self.n = fn.n
        self.fn = fn
        self.coords = coords
        self.I = 1j

    def d(self, u, a):
        if u is not self.fn:
            raise ValueError("exact backend only differentiates its own function")
        return self.fn.partial(a, self.coords)


def check_stokes_compact(test_fn, T: ExteriorForm, domain, margin: int = 3) -> StokesReport:
    """``int h d_alpha T + int d_alpha h ^ T`` for compactly supported ``h``.

    ``residual[alpha]`` uses finite differences on both sides; centered
    differences satisfy summation by parts, so this is roundoff. When
    ``test_fn`` is a :class:`SmoothFunction`, ``consistency[alpha]``
    pairs the FD ``d_alpha T`` with the exact ``d_alpha h`` and measures
    the discretization error, which is second order in the spacing.
    """
    n = domain.n
    if T.degree != 2 * n - 1:
        raise ValueError("T must have degree 2n - 1")
    coords = domain.coords()
    smooth = isinstance(test_fn, SmoothFunction)
    hv = test_fn(coords) if smooth else np.asarray(test_fn, dtype=float)
    if not np.all(hv == 0) and not _vanishes_near_edge(hv, margin):
        raise ValueError("test function must vanish on and near the boundary")
    fd = FiniteDifferenceBackend(n, domain.h)
    dV = domain.h ** domain.dim
    report = StokesReport()
    for alpha in (0, 1):
        dT = d_alpha(T, alpha, fd)
        left = np.sum(hv * _top(dT, hv.shape)) * dV
        dh = d_scalar(hv, alpha, fd)
        right = np.sum(_top(dh.wedge(T), hv.shape)) * dV
        report.residual[alpha] = float(abs(left + right))
        report.scale = max(report.scale, float(np.sum(np.abs(hv * _top(dT, hv.shape))) * dV))
        if smooth:
            ex = _ExactGradientBackend(test_fn, coords)
            dh_exact = d_alpha(ExteriorForm.scalar(n, test_fn), alpha, ex)
            right_ex = np.sum(_top(dh_exact.wedge(T), hv.shape)) * dV
            report.consistency[alpha] = float(abs(left + right_ex))
    return report


def _top(F: ExteriorForm, shape):
    return np.broadcast_to(np.asarray(F.top()), shape)


def _vanishes_near_edge(hv, margin: int) -> bool:
    for ax in range(hv.ndim):
        a = np.moveaxis(hv, ax, 0)
        if np.any(a[:margin] != 0) or np.any(a[-margin:] != 0):
            return False
    return True


def check_integration_by_parts(test_fn, us, domain) -> dict:
    """``int h Delta u_1 ^ ... ^ Delta u_n  vs  int u_1 Delta u_2 ^ ... ^ Delta u_n ^ Delta h``.

    Grid arrays throughout; returns both sides and the absolute gap.
    """
    n = domain.n
    fd = FiniteDifferenceBackend(n, domain.h)
    hv = np.asarray(test_fn(domain.coords()) if callable(test_fn) else test_fn, dtype=float)
    if not _vanishes_near_edge(hv, 3):
        raise ValueError("test function must vanish on and near the boundary")
    dV = domain.h ** domain.dim
    forms = [baston(u, fd) for u in us]
    left_form = forms[0]
    for f in forms[1:]:
        left_form = left_form.wedge(f)
    left = np.sum(hv * _top(left_form, hv.shape)) * dV
    right_form = baston(hv, fd)
    for f in forms[1:]:
        right_form = f.wedge(right_form)
    right = np.sum(np.asarray(us[0]) * _top(right_form, hv.shape)) * dV
    left, right = complex(left), complex(right)
    return {"lhs": left, "rhs": right, "gap": abs(left - right),
            "scale": float(np.sum(np.abs(hv * _top(left_form, hv.shape))) * dV)}


def chain_identity_residual(us, backend):
    """``Delta u_1 ^ ... ^ Delta u_n - d_0(d_1 u_1 ^ Delta u_2 ^ ... ^ Delta u_n)``.

    Returns the top coefficient of the difference (exactly zero on
    polynomials in symbolic mode, second order on grids).
    """
    n = backend.n
    forms = [baston(u, backend) for u in us]
    left = forms[0]
    rest = None
    for f in forms[1:]:
        left = left.wedge(f)
        rest = f if rest is None else rest.wedge(f)
    inner = d_scalar(us[0], 1, backend)
    if rest is not None:
        inner = inner.wedge(rest)
    right = d_alpha(inner, 0, backend)
    diff = left - right
    if not diff.coeffs:
        return backend.ring(0) if isinstance(backend, SymbolicBackend) else np.zeros(())
    return diff.top()
