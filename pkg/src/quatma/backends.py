"""Derivative backends: exact polynomial differentiation and centered FD.

A backend supplies the field algebra used by :mod:`quatma.baston`:

* ``d(u, a)``        first partial along real coordinate ``a``
* ``dd(u, a, b)``    second partial
* ``I``              the imaginary unit in the field's scalar ring
* ``real(u)``        real part as a plain field
* ``is_zero(u)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp
from sympy.polys.domains import QQ_I
from sympy.polys.rings import ring


class SymbolicBackend:
    """Exact calculus on polynomials in ``x0..x(4n-1)`` over Q(i)."""

    mode = "symbolic"

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n
        self.dim = 4 * n
        self.ring, *gens = ring(f"x0:{self.dim}", QQ_I)
        self.gens = tuple(gens)
        self.I = self.ring(QQ_I(0, 1))
        self.symbols = sp.symbols(f"x0:{self.dim}")

    def __repr__(self):
        return f"SymbolicBackend(n={self.n})"

    def poly(self, expr):
        """Convert a sympy expression or string in ``x0, x1, ...`` to a ring element."""
        if isinstance(expr, str):
            expr = sp.sympify(expr, locals={str(s): s for s in self.symbols})
        if isinstance(expr, (int, float)):
            expr = sp.nsimplify(expr, rational=True)
        return self.ring.from_expr(sp.sympify(expr))

    def quadratic(self, H, b=None, c=0):
        """``x.H.x/2 + b.x + c`` from rational (or float, rationalized) data."""
        H = np.asarray(H)
        x = self.gens
        u = self.ring(0)
        for a in range(self.dim):
            for bb in range(self.dim):
                if H[a, bb] != 0:
                    u += _q(H[a, bb]) / 2 * x[a] * x[bb]
        if b is not None:
            for a in range(self.dim):
                if b[a] != 0:
                    u += _q(b[a]) * x[a]
        return u + _q(c)

    def d(self, u, a: int):
        return u.diff(self.gens[a])

    def dd(self, u, a: int, b: int):
        return u.diff(self.gens[a]).diff(self.gens[b])

    def real(self, u):
        return self.ring({m: QQ_I(c.x, 0) for m, c in u.terms() if c.x != 0})

    def imag(self, u):
        return self.ring({m: QQ_I(c.y, 0) for m, c in u.terms() if c.y != 0})

    def is_zero(self, u) -> bool:
        return u.is_zero

    def evaluate(self, u, point) -> complex:
        point = np.asarray(point, dtype=float)
        total = 0j
        for monom, c in u.terms():
            total += complex(float(c.x), float(c.y)) * float(np.prod(point ** np.array(monom)))
        return total

    def constant(self, u) -> complex:
        """Value of a polynomial known to be constant."""
        if u.is_zero:
            return 0j
        if any(any(m) for m in u.monoms()):
            raise ValueError("polynomial is not constant")
        c = u.coeff(1)
        return complex(float(c.x), float(c.y))

    def to_expr(self, u):
        return u.as_expr()


def _q(v):
    if isinstance(v, (int, np.integer)):
        return QQ_I(int(v), 0)
    r = sp.Rational(v) if not isinstance(v, sp.Rational) else v
    return QQ_I.from_sympy(r)


@dataclass
class FiniteDifferenceBackend:
    """Second-order centered differences on a uniform grid of spacing ``h``.

    Fields are arrays whose first ``4n`` axes are the grid axes. First
    derivatives use ``np.gradient`` (centered inside, second-order
    one-sided at the edges); being tensor-product operators on separate
    axes they commute exactly, so ``d0 d0 = 0`` holds to roundoff.
    """

    n: int
    h: float
    mode: str = "fd"
    I: complex = 1j

    def __post_init__(self):
        self.dim = 4 * self.n
        if self.h <= 0:
            raise ValueError("spacing must be positive")

    def _check(self, u):
        if np.ndim(u) < self.dim:
            raise ValueError(f"field needs {self.dim} grid axes, got ndim={np.ndim(u)}")

    def d(self, u, a: int):
        self._check(u)
        return np.gradient(u, self.h, axis=a, edge_order=2)

    def dd(self, u, a: int, b: int):
        """Compact second difference for ``a == b``; composed centered for mixed."""
        self._check(u)
        if a != b:
            return self.d(self.d(u, a), b)
        return second_difference(u, self.h, a)

    def real(self, u):
        return np.real(u)

    def imag(self, u):
        return np.imag(u)

    def is_zero(self, u, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(u) <= tol))

    def constant(self, u):
        return u


def second_difference(u, h: float, axis: int) -> np.ndarray:
    """``[1, -2, 1] / h^2`` inside; second-order one-sided at both edges."""
    u = np.asarray(u)
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    if u.shape[0] >= 4:
        out[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / h**2
        out[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h**2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)
