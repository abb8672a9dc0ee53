"""Weak convergence of Monge-Ampere masses and the Chern-Levine-Nirenberg fit (n = 1).

For n = 1 the measure ``(Delta u)`` is the Laplacian, so masses on a
node set ``K`` are ``sum_K Lap_h u h^4``. The families are:

* ``shift``:      ``u_j = |q|^2 + 1/j``            (decreasing, constant density)
* ``mollified``:  ``u_j = max(|q|^2 - 1, -1/4) * K_eps_j``  (decreasing in eps)
* ``uniform``:    ``u_j = max(|q|^2 - 1, -1/4 - 1/j)``  (uniform convergence)

Masses are taken on a ball ``K`` whose boundary avoids the kink and its
smoothed neighborhood, so no mass sits on the boundary of ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Domain, mollify, quad_norm2
from .solver import laplacian_grid


@dataclass
class FamilyResult:
    name: str
    params: list
    masses: np.ndarray
    target: float
    products: np.ndarray | None = None
    product_target: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def gaps(self) -> np.ndarray:
        return np.abs(self.masses - self.target) / abs(self.target)

    @property
    def product_gaps(self) -> np.ndarray | None:
        if self.products is None:
            return None
        return np.abs(self.products - self.product_target) / abs(self.product_target)


def monotone(gaps, slack: float = 1e-12) -> bool:
    """Non-increasing up to ``slack`` (absolute, on relative gaps)."""
    g = np.asarray(gaps)
    return bool(np.all(np.diff(g) <= slack))


def _mass(u, domain: Domain, K: np.ndarray, weight=None) -> float:
    lap = np.nan_to_num(laplacian_grid(u, domain))
    w = 1.0 if weight is None else weight[K]
    return float(np.sum(lap[K] * w) * domain.cell_volume)


def _product(u, domain: Domain, K: np.ndarray) -> float:
    lap = np.nan_to_num(laplacian_grid(u, domain))
    return float(np.sum(u[K] * lap[K]) * domain.cell_volume)


def convergence_domain(resolution: int, half_width: float = 2.0) -> Domain:
    return Domain.box(1, resolution, -half_width, half_width)


def kink(domain: Domain, level: float = -0.25) -> np.ndarray:
    r2 = np.broadcast_to(quad_norm2(domain.coords()), domain.shape)
    return np.maximum(r2 - 1.0, level)


def shift_family(domain: Domain, K: np.ndarray, js) -> FamilyResult:
    r2 = np.broadcast_to(quad_norm2(domain.coords()), domain.shape)
    js = list(js)
    masses = np.array([_mass(r2 + 1.0 / j, domain, K) for j in js])
    prods = np.array([_product(r2 + 1.0 / j, domain, K) for j in js])
    return FamilyResult("shift", js, masses, _mass(r2, domain, K), prods, _product(r2, domain, K))


def mollified_family(domain: Domain, K: np.ndarray, eps_list, weight=None) -> FamilyResult:
    """Masses of ``u * K_eps`` on ``K``; with ``weight`` also the weighted masses."""
    u = kink(domain)
    eps_list = list(eps_list)
    ws = [mollify(u, domain, e) for e in eps_list]
    for w in ws:
        if not np.all(np.isfinite(w[K])) or not np.all(np.isfinite(laplacian_grid(w, domain)[K])):
            raise ValueError("mollification window leaves the grid on K; enlarge the box")
    res = FamilyResult("mollified", eps_list, np.array([_mass(w, domain, K) for w in ws]),
                       _mass(u, domain, K),
                       np.array([_product(w, domain, K) for w in ws]), _product(u, domain, K))
    if weight is not None:
        res.extra["weighted"] = np.array([_mass(w, domain, K, weight) for w in ws])
        res.extra["weighted_target"] = _mass(u, domain, K, weight)
    return res


def uniform_family(domain: Domain, K: np.ndarray, js) -> FamilyResult:
    u = kink(domain)
    js = list(js)
    us = [kink(domain, -0.25 - 1.0 / j) for j in js]
    return FamilyResult("uniform", js, np.array([_mass(v, domain, K) for v in us]),
                        _mass(u, domain, K),
                        np.array([_product(v, domain, K) for v in us]), _product(u, domain, K),
                        extra={"sup_distance": np.array([float(np.max(np.abs(v - u))) for v in us])})


# ---- Chern-Levine-Nirenberg ----------------------------------------------

def random_lse(rng: np.random.Generator, dim: int = 4):
    """Parameters of ``log sum_k exp(a_k . x + b_k) + c |x|^2`` (convex, hence PSH)."""
    k = int(rng.integers(2, 6))
    scale = rng.uniform(0.5, 3.0)
    return {"A": rng.standard_normal((k, dim)) * scale,
            "b": rng.standard_normal(k),
            "c": float(rng.uniform(0.0, 0.5))}


def eval_lse(p: dict, coords) -> np.ndarray:
    z = [sum(a * x for a, x in zip(row, coords)) + b for row, b in zip(p["A"], p["b"])]
    z = np.stack(np.broadcast_arrays(*z))
    top = z.max(axis=0)
    return top + np.log(np.exp(z - top).sum(axis=0)) + p["c"] * quad_norm2(coords)


@dataclass
class CLNResult:
    ratios: np.ndarray
    calibration: np.ndarray = field(repr=False)
    holdout: np.ndarray = field(repr=False)
    C_fit: float = 0.0
    C_holdout: float = 0.0

    @property
    def stability(self) -> float:
        """``max(C_hold / C_fit, C_fit / C_hold)``; at most 2 for a stable constant."""
        a, b = self.C_holdout, self.C_fit
        return max(a / b, b / a)


def cln_ratios(domain: Domain, K: np.ndarray, L: np.ndarray, params: list) -> np.ndarray:
    """``mass_L(Delta u) / ||u||_{L^inf(K)}`` with ``u = f - sup_K f - 1``."""
    x = domain.coords()
    out = []
    for p in params:
        f = np.broadcast_to(eval_lse(p, x), domain.shape)
        u = f - float(f[K].max()) - 1.0
        out.append(_mass(u, domain, L) / float(np.abs(u[K]).max()) ** domain.n)
    return np.array(out)


def cln_fit(domain: Domain, K: np.ndarray, L: np.ndarray, rng: np.random.Generator,
            count: int = 50) -> CLNResult:
    """Fit ``C_{K,L}`` on the first half of a random family, measure it on the second."""
    params = [random_lse(rng, domain.dim) for _ in range(count)]
    r = cln_ratios(domain, K, L, params)
    half = count // 2
    cal, hold = r[:half], r[half:]
    return CLNResult(r, cal, hold, float(cal.max()), float(hold.max()))
