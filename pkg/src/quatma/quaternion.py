"""Quaternions, hyperhermitian matrices and Moore determinants.

Quaternionic matrices are stored as real arrays with a trailing axis of
length 4 holding ``(x0, x1, x2, x3)`` for ``x0 + x1 i + x2 j + x3 k``.
An ``n x n`` matrix is an array of shape ``(..., n, n, 4)``; the leading
axes are batch axes and every routine below broadcasts over them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

UNITS = np.eye(4)
CONJ_SIGN = np.array([1.0, -1.0, -1.0, -1.0])

TOL_INEQ = 1e-9
TOL_PSD = 1e-10
TOL_ROUTE = 1e-10


class MooreRouteError(ArithmeticError):
    """The two Moore determinant routes disagree."""


def qmul(a, b):
    """Hamilton product of quaternion arrays with trailing axis 4."""
    a0, a1, a2, a3 = np.moveaxis(np.asarray(a), -1, 0)
    b0, b1, b2, b3 = np.moveaxis(np.asarray(b), -1, 0)
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ], axis=-1)


def qconj(a):
    return np.asarray(a) * CONJ_SIGN


@dataclass(frozen=True)
class Quaternion:
    x0: float = 0.0
    x1: float = 0.0
    x2: float = 0.0
    x3: float = 0.0

    @classmethod
    def from_array(cls, a) -> Quaternion:
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.x1, self.x2, self.x3])

    def conj(self) -> Quaternion:
        return Quaternion(self.x0, -self.x1, -self.x2, -self.x3)

    def norm(self) -> float:
        return math.sqrt(self.x0**2 + self.x1**2 + self.x2**2 + self.x3**2)

    def __add__(self, other):
        other = _as_quaternion(other)
        return Quaternion.from_array(self.as_array() + other.as_array())

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_quaternion(other)
        return Quaternion.from_array(self.as_array() - other.as_array())

    def __rsub__(self, other):
        return _as_quaternion(other) - self

    def __neg__(self):
        return Quaternion(-self.x0, -self.x1, -self.x2, -self.x3)

    def __mul__(self, other):
        other = _as_quaternion(other)
        return Quaternion.from_array(qmul(self.as_array(), other.as_array()))

    def __rmul__(self, other):
        return _as_quaternion(other) * self


def _as_quaternion(q) -> Quaternion:
    if isinstance(q, Quaternion):
        return q
    if np.isscalar(q):
        return Quaternion(float(q))
    return Quaternion.from_array(q)


ONE = Quaternion(1.0)
I = Quaternion(0.0, 1.0)
J = Quaternion(0.0, 0.0, 1.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


class HyperhermitianMatrix:
    """Quaternionic ``n x n`` matrix with ``A[k, j] = conj(A[j, k])``."""

    def __init__(self, entries, tol: float = 1e-12):
        arr = np.array(entries, dtype=float)
        if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
            # real symmetric input
            arr = arr[..., None] * np.array([1.0, 0.0, 0.0, 0.0])
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1] or arr.shape[2] != 4:
            raise ValueError(f"expected an (n, n, 4) array, got shape {arr.shape}")
        scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
        if not is_hyperhermitian(arr, tol * scale):
            raise ValueError("matrix is not hyperhermitian")
        self.entries = symmetrize(arr)
        self.entries.setflags(write=False)

    @classmethod
    def from_quaternions(cls, rows) -> HyperhermitianMatrix:
        return cls([[_as_quaternion(q).as_array() for q in row] for row in rows])

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, jk) -> Quaternion:
        return Quaternion.from_array(self.entries[jk])

    def __add__(self, other):
        return HyperhermitianMatrix(self.entries + _entries(other))

    def __mul__(self, c):
        return HyperhermitianMatrix(float(c) * self.entries)

    __rmul__ = __mul__

    def __repr__(self):
        return f"HyperhermitianMatrix(n={self.n})"


def _entries(A) -> np.ndarray:
    if isinstance(A, HyperhermitianMatrix):
        return A.entries
    return np.asarray(A, dtype=float)


def conj_transpose(A) -> np.ndarray:
    A = _entries(A)
    return qconj(np.swapaxes(A, -2, -3))


def is_hyperhermitian(A, tol: float = 1e-12) -> bool:
    A = _entries(A)
    return bool(np.all(np.abs(A - conj_transpose(A)) <= tol))


def symmetrize(A) -> np.ndarray:
    """Hyperhermitian part ``(A + A*) / 2``; exact real diagonal."""
    A = _entries(A)
    return 0.5 * (A + conj_transpose(A))


def quaternion_identity(n: int) -> np.ndarray:
    out = np.zeros((n, n, 4))
    out[np.arange(n), np.arange(n), 0] = 1.0
    return out


def diag(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    out = np.zeros(values.shape[:-1] + (n, n, 4))
    out[..., np.arange(n), np.arange(n), 0] = values
    return out


def embed_quaternion(q) -> np.ndarray:
    """2x2 complex image ``[[x0+i x1, -x2-i x3], [x2-i x3, x0-i x1]]``."""
    x0, x1, x2, x3 = np.moveaxis(np.asarray(_as_array(q), dtype=float), -1, 0)
    row0 = np.stack([x0 + 1j * x1, -x2 - 1j * x3], axis=-1)
    row1 = np.stack([x2 - 1j * x3, x0 - 1j * x1], axis=-1)
    return np.stack([row0, row1], axis=-2)


def _as_array(q):
    return q.as_array() if isinstance(q, Quaternion) else q


def embed_matrix(A, check: bool = True) -> np.ndarray:
    """Blockwise complexification of a (batch of) quaternionic matrices.

    Returns shape ``(..., 2n, 2n)``. With ``check`` the input must be
    hyperhermitian, in which case the image is Hermitian.
    """
    A = _entries(A)
    if check:
        scale = max(1.0, float(np.abs(A).max(initial=0.0)))
        if not is_hyperhermitian(A, 1e-12 * scale):
            raise ValueError("embed_matrix expects a hyperhermitian matrix")
    n = A.shape[-2]
    blocks = embed_quaternion(A)  # (..., n, n, 2, 2)
    blocks = np.swapaxes(blocks, -3, -2)  # (..., n, 2, n, 2)
    return blocks.reshape(A.shape[:-3] + (2 * n, 2 * n))


@lru_cache(maxsize=None)
def moore_terms(n: int):
    """Signed index paths of Moore's cycle-ordered permutation expansion.

    Each permutation is split into disjoint cycles, every cycle is
    rotated to start at its smallest element, and cycles are ordered by
    decreasing leading element. A cycle ``(k1 ... kj)`` contributes the
    ordered product ``a[k1,k2] a[k2,k3] ... a[kj,k1]``.
    """
    terms = []
    for perm in itertools.permutations(range(n)):
        seen = [False] * n
        cycles = []
        for start in range(n):
            if seen[start]:
                continue
            cyc = []
            k = start
            while not seen[k]:
                seen[k] = True
                cyc.append(k)
                k = perm[k]
            cycles.append(cyc)  # starts at its minimum since start ascends
        cycles.sort(key=lambda c: c[0], reverse=True)
        path = []
        for cyc in cycles:
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                path.append((a, b))
        sign = (-1) ** (n - len(cycles))
        terms.append((sign, tuple(path)))
    return tuple(terms)


def moore_det_expansion(A) -> np.ndarray:
    """Moore determinant by the cycle-ordered permutation expansion."""
    A = _entries(A)
    n = A.shape[-2]
    total = np.zeros(A.shape[:-3])
    for sign, path in moore_terms(n):
        prod = A[..., path[0][0], path[0][1], :]
        for a, b in path[1:]:
            prod = qmul(prod, A[..., a, b, :])
        total = total + sign * prod[..., 0]
    return total


def moore_det_eigen(A) -> np.ndarray:
    """Moore determinant from the complexification spectrum.

    Eigenvalues of the Hermitian image come in equal pairs; the product
    of one member per pair is the Moore determinant, with its sign.
    """
    w = np.linalg.eigvalsh(embed_matrix(A, check=False))
    return np.prod(w[..., ::2], axis=-1)


def moore_det(A, check: bool = True):
    """Moore determinant of a (batch of) hyperhermitian matrices.

    With ``check`` both routes are evaluated and must agree to
    ``1e-10 * max(1 + |det|, max|A|**n)``; disagreement raises
    :class:`MooreRouteError`.
    """
    A = _entries(A)
    a = moore_det_expansion(A)
    if check:
        b = moore_det_eigen(A)
        n = A.shape[-2]
        amax = np.abs(A).max(axis=(-3, -2, -1)) if A.size else 0.0
        tol = TOL_ROUTE * np.maximum(1.0 + np.abs(a), amax**n)
        bad = np.abs(a - b) > tol
        if np.any(bad):
            worst = float(np.max(np.abs(a - b)))
            raise MooreRouteError(f"Moore determinant routes disagree by {worst:.3e}")
    return float(a) if np.ndim(a) == 0 else a


def mixed_moore_det(*mats, check: bool = True):
    """Fully polarized Moore determinant, ``mixed(A, ..., A) = moore_det(A)``.

    Exact inclusion-exclusion over the ``2**n - 1`` nonempty subsets.
    """
    arrs = [_entries(m) for m in mats]
    n = arrs[0].shape[-2]
    if len(arrs) != n:
        raise ValueError(f"need exactly n={n} matrices, got {len(arrs)}")
    for m in arrs:
        if m.shape[-3:] != (n, n, 4):
            raise ValueError("dimension mismatch among mixed determinant arguments")
    arrs = np.broadcast_arrays(*arrs)
    sums, weights = [], []
    for k in range(1, n + 1):
        for subset in itertools.combinations(range(n), k):
            sums.append(sum(arrs[i] for i in subset))
            weights.append((-1) ** (n - k))
    dets = moore_det(np.stack(sums), check=check)
    dets = np.asarray(dets)
    total = np.tensordot(np.array(weights, dtype=float), dets, axes=(0, 0))
    total = total / math.factorial(n)
    return float(total) if np.ndim(total) == 0 else total


def route_deviation(A) -> np.ndarray:
    """Relative gap between the two Moore routes, scaled by ``max(|det|, ||A||^n)``.

    ``||A||`` is the spectral norm, so the scale bounds ``|det|`` from above.
    """
    A = _entries(A)
    n = A.shape[-2]
    a = moore_det_expansion(A)
    w = eigenvalues(A)
    b = np.prod(w[..., ::2], axis=-1)
    scale = np.maximum(np.abs(a), np.max(np.abs(w), axis=-1) ** n)
    return np.abs(a - b) / np.maximum(scale, np.finfo(float).tiny)


def eigenvalues(A) -> np.ndarray:
    """Sorted eigenvalues of the complexification (each value twice)."""
    return np.linalg.eigvalsh(embed_matrix(A, check=False))


def is_psd(A, tol: float | None = None):
    """Positive semidefiniteness via the complexification spectrum.

    Default tolerance is ``1e-10 * ||A||`` (spectral norm).
    """
    w = eigenvalues(A)
    norm = np.max(np.abs(w), axis=-1)
    thresh = TOL_PSD * norm if tol is None else tol
    out = w[..., 0] >= -thresh
    return bool(out) if np.ndim(out) == 0 else out


def random_hyperhermitian(n: int, rng: np.random.Generator, size=()) -> np.ndarray:
    size = tuple(np.atleast_1d(size)) if size != () else ()
    B = rng.standard_normal(size + (n, n, 4))
    return symmetrize(B)


def random_psd(n: int, rng: np.random.Generator, size=(), rank: int | None = None) -> np.ndarray:
    """``B B*`` with quaternion-Gaussian ``B`` of shape ``n x rank``."""
    size = tuple(np.atleast_1d(size)) if size != () else ()
    r = n if rank is None else rank
    B = rng.standard_normal(size + (n, r, 4))
    return quat_matmul(B, conj_transpose(B))


def quat_matmul(A, B) -> np.ndarray:
    A = np.asarray(A)
    B = np.asarray(B)
    # (..., n, m, 4) x (..., m, p, 4) -> (..., n, p, 4)
    prod = qmul(A[..., :, :, None, :], B[..., None, :, :, :])
    return prod.sum(axis=-3)


def quat_hessian_from_real(H) -> np.ndarray:
    """Quaternionic Hessian of a quadratic with real Hessian ``H`` (4n x 4n).

    Entry ``(j, k)`` is ``sum_ab e_a conj(e_b) H[4j+a, 4k+b]`` with
    ``e = (1, i, j, k)``; its diagonal is the block Laplacian.
    """
    H = np.asarray(H, dtype=float)
    m = H.shape[-1]
    if m % 4:
        raise ValueError("real Hessian size must be a multiple of 4")
    n = m // 4
    blocks = H.reshape(H.shape[:-2] + (n, 4, n, 4))
    table = _unit_products()  # (4, 4, 4): e_a conj(e_b)
    out = np.einsum("...jakb,abq->...jkq", blocks, table)
    return symmetrize(out)


def _unit_products() -> np.ndarray:
    return qmul(UNITS[:, None, :], (UNITS * CONJ_SIGN)[None, :, :])


def real_hessian_det(H) -> float:
    H = np.asarray(H, dtype=float)
    if not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise ValueError("real Hessian must be symmetric")
    return float(np.linalg.det(H))


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool
    detail: dict | None = None


def _require_psd(*mats):
    for m in mats:
        if not np.all(is_psd(m)):
            raise ValueError("inequality check requires positive semidefinite input")


def _pow(x, e):
    return np.maximum(x, 0.0) ** e


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def aleksandrov_terms(A1, A2, *vs):
    """``(lhs, rhs)`` of ``mixed(A1,A2,V..) >= mixed(A1,A1,V..)^(1/2) mixed(A2,A2,V..)^(1/2)``.

    Broadcasts over leading batch axes.
    """
    lhs = mixed_moore_det(A1, A2, *vs)
    rhs = np.sqrt(_pow(mixed_moore_det(A1, A1, *vs), 1.0)) * np.sqrt(_pow(mixed_moore_det(A2, A2, *vs), 1.0))
    return lhs, rhs


def geometric_mean_terms(*mats):
    """``mixed(A1..An) >= prod det(Ai)^(1/n)`` (batched)."""
    n = len(mats)
    lhs = mixed_moore_det(*mats)
    rhs = 1.0
    for m in mats:
        rhs = rhs * _pow(moore_det(m), 1.0 / n)
    return lhs, rhs


def grouped_terms(A1, A2, p: int, q: int, *vs):
    """Grouped inequality with ``A1`` repeated ``p`` times and ``A2`` ``q`` times:

    ``mixed(A1^p, A2^q, V..) >= mixed(A1^(p+q), V..)^(p/(p+q)) mixed(A2^(p+q), V..)^(q/(p+q))``.
    """
    left = mixed_moore_det(*([A1] * p + [A2] * q + list(vs)))
    r1 = mixed_moore_det(*([A1] * (p + q) + list(vs)))
    r2 = mixed_moore_det(*([A2] * (p + q) + list(vs)))
    return left, _pow(r1, p / (p + q)) * _pow(r2, q / (p + q))


def real_quat_terms(H):
    """``det(quat Hessian)^(1/n)`` and ``4 det_R(H)^(1/(4n))`` for constant real Hessians."""
    H = np.asarray(H, dtype=float)
    n = H.shape[-1] // 4
    Q = quat_hessian_from_real(H)
    lhs = _pow(moore_det(Q), 1.0 / n)
    rhs = 4.0 * _pow(np.linalg.det(H), 1.0 / (4 * n))
    return lhs, rhs


def check_aleksandrov(A1, A2, *vs, tol: float = TOL_INEQ) -> InequalityReport:
    """Aleksandrov-type mixed inequality for PSD hyperhermitian input."""
    _require_psd(A1, A2, *vs)
    lhs, rhs = aleksandrov_terms(A1, A2, *vs)
    slack = lhs - rhs
    worst = float(np.min(slack))
    return InequalityReport("aleksandrov", _scalar(lhs), _scalar(rhs), worst, worst >= -tol)


def check_mixed_ineq(*mats, tol: float = TOL_INEQ) -> InequalityReport:
    """Geometric-mean bound and its grouped refinements for PSD input.

    Checks ``mixed(A1..An) >= prod det(Ai)^(1/n)`` and, for every split
    ``p, q >= 1`` with ``p + q <= n``, the grouped inequality with the
    trailing ``n - p - q`` slots filled by ``A3, A4, ...``.
    """
    _require_psd(*mats)
    n = len(mats)
    lhs, rhs = geometric_mean_terms(*mats)
    slacks = {"geometric_mean": float(np.min(lhs - rhs))}
    for p in range(1, n):
        for q in range(1, n - p + 1):
            vs = list(mats[2:2 + n - p - q])
            left, right = grouped_terms(mats[0], mats[1], p, q, *vs)
            slacks[f"grouped_p{p}_q{q}"] = float(np.min(left - right))
    worst = min(slacks.values())
    return InequalityReport("mixed", _scalar(lhs), _scalar(rhs), worst, worst >= -tol, detail=slacks)


def check_real_quat_ineq(H, tol: float = TOL_INEQ) -> InequalityReport:
    """``det(quat Hessian)^(1/n) >= 4 det_R(H)^(1/(4n))`` for a convex quadratic.

    ``H`` is the constant real Hessian. The quaternionic Hessian must be
    PSD (PSH quadratic), and ``H`` itself PSD: the real Monge-Ampere
    density is only defined for convex functions.
    """
    H = np.asarray(H, dtype=float)
    if not is_psd(quat_hessian_from_real(H)):
        raise ValueError("quadratic is not plurisubharmonic")
    w = np.linalg.eigvalsh(0.5 * (H + H.T))
    if w[0] < -TOL_PSD * max(1.0, np.abs(w).max()):
        raise ValueError("real Monge-Ampere density needs a convex quadratic")
    lhs, rhs = real_quat_terms(H)
    slack = float(lhs - rhs)
    return InequalityReport("real_quat", float(lhs), float(rhs), slack, slack >= -tol,
                            detail={"equality_gap": abs(slack)})
