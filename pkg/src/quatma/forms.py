"""Exterior forms over the 2n generators w^0..w^(2n-1).

Coefficients are stored sparsely, keyed by strictly increasing index
tuples. Coefficient values may be numbers, numpy arrays or polynomial
ring elements: anything closed under ``+``, ``-`` and ``*``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field


def check_multi_index(idx, n: int) -> tuple:
    idx = tuple(int(i) for i in idx)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError(f"multi-index {idx} is not strictly increasing")
    if idx and (idx[0] < 0 or idx[-1] >= 2 * n):
        raise ValueError(f"multi-index {idx} out of range for n={n}")
    return idx


def sort_sign(seq) -> tuple[int, tuple]:
    """Sign of the sorting permutation and the sorted tuple (0 on repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0, tuple(sorted(seq))
    inv = sum(1 for a, b in itertools.combinations(seq, 2) if a > b)
    return (-1) ** inv, tuple(sorted(seq))


def permutation_sign(indices, n: int) -> int:
    """delta symbol: sign of ``indices`` as a permutation of 0..2n-1, else 0."""
    indices = tuple(indices)
    if sorted(indices) != list(range(2 * n)):
        return 0
    return sort_sign(indices)[0]


def _is_zero(c) -> bool:
    z = getattr(c, "is_zero", None)
    if isinstance(z, bool):
        return z
    try:
        return not bool((c != 0).any()) if hasattr(c, "any") else c == 0
    except (TypeError, ValueError):
        return False


@dataclass
class ExteriorForm:
    """A p-form ``sum_I f_I w^I`` with increasing multi-indices ``I``."""

    n: int
    degree: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.degree <= 2 * self.n:
            raise ValueError(f"degree {self.degree} out of range for n={self.n}")
        clean = {}
        for idx, c in self.coeffs.items():
            idx = check_multi_index(idx, self.n)
            if len(idx) != self.degree:
                raise ValueError(f"index {idx} has wrong degree")
            clean[idx] = c
        self.coeffs = clean

    @classmethod
    def scalar(cls, n: int, f) -> ExteriorForm:
        return cls(n, 0, {(): f})

    @classmethod
    def generator(cls, n: int, i: int, one=1) -> ExteriorForm:
        return cls(n, 1, {(i,): one})

    def __getitem__(self, idx):
        return self.coeffs.get(tuple(idx), 0)

    def items(self):
        return self.coeffs.items()

    def top(self):
        """Coefficient with respect to the volume form ``w^0 ^ ... ^ w^(2n-1)``."""
        if self.degree != 2 * self.n:
            raise ValueError("top() needs a top-degree form")
        return self.coeffs.get(tuple(range(2 * self.n)), 0)

    def _check_compatible(self, other: ExteriorForm):
        if self.n != other.n:
            raise ValueError("forms live over different n")

    def __add__(self, other: ExteriorForm) -> ExteriorForm:
        self._check_compatible(other)
        if self.degree != other.degree:
            raise ValueError("cannot add forms of different degree")
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = out[idx] + c if idx in out else c
        return ExteriorForm(self.n, self.degree, out).prune()

    def __neg__(self) -> ExteriorForm:
        return ExteriorForm(self.n, self.degree, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other: ExteriorForm) -> ExteriorForm:
        return self + (-other)

    def scale(self, c) -> ExteriorForm:
        return ExteriorForm(self.n, self.degree, {k: c * v for k, v in self.coeffs.items()}).prune()

    def map(self, fn) -> ExteriorForm:
        return ExteriorForm(self.n, self.degree, {k: fn(v) for k, v in self.coeffs.items()})

    def prune(self) -> ExteriorForm:
        self.coeffs = {k: v for k, v in self.coeffs.items() if not _is_zero(v)}
        return self

    def is_zero(self) -> bool:
        return all(_is_zero(v) for v in self.coeffs.values())

    def wedge(self, other: ExteriorForm) -> ExteriorForm:
        self._check_compatible(other)
        deg = self.degree + other.degree
        if deg > 2 * self.n:
            raise ValueError(f"wedge degree {deg} exceeds top degree {2 * self.n}")
        out = {}
        for I, f in self.coeffs.items():
            for J, g in other.coeffs.items():
                sign, K = sort_sign(I + J)
                if sign == 0:
                    continue
                term = f * g if sign > 0 else -(f * g)
                out[K] = out[K] + term if K in out else term
        return ExteriorForm(self.n, deg, out).prune()

    __xor__ = wedge
