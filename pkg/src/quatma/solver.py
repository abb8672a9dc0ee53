"""Grid Dirichlet solver for det(quaternionic Hessian u) = g.

Scheme: damped trace-corrected Poisson fixed point

    u_{k+1} = P( Lap u_k + theta n (g^(1/n) - max(det u_k, floor)^(1/n)) ; phi )

where ``P(f; phi)`` solves the compact 4n-D Poisson problem with
Dirichlet data ``phi``. The trace of the quaternionic Hessian is the
Laplacian and AM-GM gives ``trace / n >= det^(1/n)`` on the PSD cone, so
fixed points solve the Monge-Ampere equation. Iterates that lose the
block sub-mean property are projected with the PSH envelope.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import pyamg
import scipy.sparse as sps

from .backends import FiniteDifferenceBackend
from .baston import quat_hessian
from .grid import Domain, lp_norm
from .psh import EnvelopeConfig, _crop, psh_envelope, submean_defect
from .quaternion import moore_det_expansion


@dataclass
class SolveConfig:
    theta: float = 1.0
    tol_fp: float = 1e-8
    max_iter: int = 200
    tol_lin: float = 1e-11
    delta_floor: float = 0.0
    project: bool = True
    envelope: EnvelopeConfig = field(default_factory=EnvelopeConfig)

    def __post_init__(self):
        if not 0 < self.theta <= 2:
            raise ValueError("damping theta must lie in (0, 2]")
        if self.tol_fp <= 0 or self.tol_lin <= 0 or self.max_iter < 1:
            raise ValueError("tolerances and iteration cap must be positive")
        if self.tol_fp < self.tol_lin:
            raise ValueError("tol_fp must be >= tol_lin")
        if self.delta_floor < 0:
            raise ValueError("delta_floor must be >= 0")


@dataclass
class DirichletProblem:
    domain: Domain
    phi: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        D = self.domain
        self.phi = np.array(np.broadcast_to(np.asarray(self.phi, dtype=float), D.shape))
        self.g = np.array(np.broadcast_to(np.asarray(self.g, dtype=float), D.shape))
        if not np.all(np.isfinite(self.phi[D.boundary])):
            raise ValueError("boundary data must be finite")
        gi = self.g[D.interior]
        if not np.all(np.isfinite(gi)):
            raise ValueError("density must be finite on the interior")
        if np.any(gi < 0):
            raise ValueError("density g must be nonnegative")


class PoissonError(RuntimeError):
    pass


class _PoissonOperator:
    """Negative compact Laplacian on interior unknowns with an AMG hierarchy."""

    def __init__(self, domain: Domain):
        self.domain = domain
        interior = domain.interior
        self.index = np.full(domain.shape, -1, dtype=np.int64)
        self.m = int(interior.sum())
        self.index[interior] = np.arange(self.m)
        h2 = domain.h**2
        rows, cols = [np.arange(self.m)], [np.arange(self.m)]
        vals = [np.full(self.m, 2.0 * domain.dim / h2)]
        self.couplings = []  # (interior ids, neighbor flat index) for boundary terms
        flat = np.arange(np.prod(domain.shape)).reshape(domain.shape)
        for a in range(domain.dim):
            for s in (-1, 1):
                nb = np.roll(flat, -s, axis=a)  # neighbor at x + s e_a
                src = flat[interior]
                dst = nb[interior]
                dst_id = self.index.ravel()[dst]
                inside = dst_id >= 0
                rows.append(self.index.ravel()[src[inside]])
                cols.append(dst_id[inside])
                vals.append(np.full(inside.sum(), -1.0 / h2))
                self.couplings.append((self.index.ravel()[src[~inside]], dst[~inside]))
        self.A = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(self.m, self.m))
        self.ml = pyamg.smoothed_aggregation_solver(self.A, max_coarse=500)

    def boundary_term(self, phi: np.ndarray) -> np.ndarray:
        b = np.zeros(self.m)
        flat = phi.ravel()
        h2 = self.domain.h**2
        for ids, nb in self.couplings:
            np.add.at(b, ids, flat[nb] / h2)
        return b


@lru_cache(maxsize=8)
def poisson_operator(domain: Domain) -> _PoissonOperator:
    return _PoissonOperator(domain)


def poisson_solve(rhs, phi, domain: Domain, tol_lin: float = 1e-11, maxiter: int = 60) -> np.ndarray:
    """Solve ``Lap u = rhs`` on the interior with ``u = phi`` on the boundary.

    Stops once ``sup|Lap u - rhs| <= tol_lin * max(|rhs|_inf, |boundary term|_inf)``.
    Returns a full-grid array (NaN off the closure).
    """
    op = poisson_operator(domain)
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), domain.shape)[domain.interior]
    phi = np.broadcast_to(np.asarray(phi, dtype=float), domain.shape)
    phi_b = np.where(domain.boundary, phi, 0.0)
    bterm = op.boundary_term(phi_b)
    b = -rhs + bterm
    scale = max(np.abs(rhs).max(initial=0.0), np.abs(bterm).max(initial=0.0))
    out = np.where(domain.closure, phi_b, np.nan)
    if scale == 0.0:
        out[domain.interior] = 0.0
        return out
    target = tol_lin * scale
    x = np.zeros(op.m)
    tol = 1e-12
    for _ in range(maxiter):
        x = op.ml.solve(b, x0=x, tol=tol, accel="cg", maxiter=200)
        res = np.abs(op.A @ x - b).max()
        if res <= target:
            break
        tol = max(tol * 0.1, 1e-16)
    else:
        raise PoissonError(f"Poisson solve stalled: residual {res:.3e} > {target:.3e}")
    out[domain.interior] = x
    return out


def laplacian_grid(u: np.ndarray, domain: Domain) -> np.ndarray:
    """Compact 4n-D Laplacian on interior nodes (NaN elsewhere)."""
    sl = _crop(domain.interior, 1)
    uc = u[sl]
    core = (slice(1, -1),) * domain.dim
    acc = np.zeros(uc[core].shape)
    for a in range(domain.dim):
        lo = list(core)
        hi = list(core)
        lo[a] = slice(0, -2)
        hi[a] = slice(2, None)
        acc += uc[tuple(lo)] + uc[tuple(hi)]
    acc = (acc - 2 * domain.dim * uc[core]) / domain.h**2
    out = np.full(domain.shape, np.nan)
    sub = out[sl]
    sub[core] = np.where(domain.interior[sl][core], acc, np.nan)
    return out


def hessian_det(u: np.ndarray, domain: Domain, mask: np.ndarray | None = None):
    """Moore determinant of the FD quaternionic Hessian on ``mask`` (default interior).

    Returns ``(det, hess)`` as full-grid arrays (NaN off the mask).
    """
    mask = domain.interior if mask is None else mask
    sl = _crop(mask, 1)
    fd = FiniteDifferenceBackend(domain.n, domain.h)
    Q = quat_hessian(np.asarray(u, dtype=float)[sl], fd)
    det = np.full(domain.shape, np.nan)
    sub = det[sl]
    m = mask[sl]
    sub[m] = moore_det_expansion(Q[m])
    return det, (Q, sl)


@dataclass
class Residual:
    sup: float
    l1: float
    field: np.ndarray = field(repr=False, default=None)


def ma_residual(u: np.ndarray, problem: DirichletProblem, mask: np.ndarray | None = None) -> Residual:
    """``det(quat Hessian u) - g`` on the interior: sup and L1 norms."""
    D = problem.domain
    mask = D.interior if mask is None else mask
    det, _ = hessian_det(u, D, mask)
    r = det - problem.g
    r = np.where(mask, r, np.nan)
    return Residual(lp_norm(np.nan_to_num(r), D, np.inf, mask),
                    lp_norm(np.nan_to_num(r), D, 1, mask), r)


@dataclass
class SolveResult:
    u: np.ndarray = field(repr=False)
    converged: bool
    iterations: int
    history: list = field(default_factory=list, repr=False)
    residual: Residual | None = None
    projections: int = 0


def _root(det, n, floor):
    return np.maximum(det, floor) ** (1.0 / n)


def dirichlet_solve(problem: DirichletProblem, config: SolveConfig | None = None,
                    residual: bool = True) -> SolveResult:
    """Solve ``det(quat Hessian u) = g`` with ``u = phi`` on the boundary."""
    config = config or SolveConfig()
    D = problem.domain
    n = D.n
    interior = D.interior
    groot = np.where(interior, problem.g, 0.0) ** (1.0 / n)
    u = poisson_solve(n * groot, problem.phi, D, config.tol_lin)
    history = []
    converged = False
    projections = 0
    k = 0
    for k in range(1, config.max_iter + 1):
        if n == 1:
            lap = laplacian_grid(u, D)
            det = lap
        else:
            det, _ = hessian_det(u, D)
            lap = laplacian_grid(u, D)
        rhs = lap + config.theta * n * (groot - _root(det, n, config.delta_floor))
        rhs = np.where(interior, rhs, 0.0)
        u_new = poisson_solve(rhs, problem.phi, D, config.tol_lin)
        if config.project and n > 1:
            u_new, did = _project(u_new, problem, config)
            projections += did
        upd = float(np.nanmax(np.abs(u_new - u)[interior]))
        res = np.abs(det - problem.g)[interior]
        history.append({"iteration": k, "sup_update": upd,
                        "residual_sup": float(res.max()),
                        "residual_l1": float(res.sum() * D.cell_volume)})
        u = u_new
        if upd <= config.tol_fp:
            converged = True
            break
    out = SolveResult(u, converged, k, history, projections=projections)
    if residual:
        out.residual = ma_residual(u, problem)
    return out


def _project(u: np.ndarray, problem: DirichletProblem, config: SolveConfig):
    D = problem.domain
    span = float(np.nanmax(u[D.closure]) - np.nanmin(u[D.closure]))
    defect = submean_defect(u, D)[D.interior]
    if not np.any(defect < -1e-9 * max(span, 1e-300)):
        return u, 0
    env = psh_envelope(u, problem.phi, D, config.envelope, initial=u)
    return env, 1


def write_convergence_csv(path, result: SolveResult) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["iteration", "sup_update", "residual_sup", "residual_l1"]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in result.history:
            w.writerow({c: (f"{row[c]:.12e}" if isinstance(row[c], float) else row[c]) for c in cols})
    return path


@dataclass
class ComparisonReport:
    violations: int
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_comparison(u_small_g: np.ndarray, u_large_g: np.ndarray, domain: Domain,
                     tol: float | None = None) -> ComparisonReport:
    """Solutions sharing ``phi`` with ``g1 <= g2`` must satisfy ``u1 >= u2 - tol``.

    Default ``tol = 1e-6 * range`` of the two solutions.
    """
    m = domain.closure
    a, b = u_small_g[m], u_large_g[m]
    if tol is None:
        rng = max(np.nanmax(a), np.nanmax(b)) - min(np.nanmin(a), np.nanmin(b))
        tol = 1e-6 * max(rng, 1e-300)
    gap = a - b
    return ComparisonReport(int(np.sum(gap < -tol)), float(gap.min()), float(tol))


def config_dict(config: SolveConfig) -> dict:
    d = asdict(config)
    d["envelope"] = asdict(config.envelope)
    return d

