"""Grid version of the subsolution construction.

Given a PSH subsolution ``v`` with ``det(v) >= mu`` and boundary data
``phi``, the pipeline

1. normalizes ``v``: envelope ``v~`` (<= 0, = v - c on U, 0 at the
   boundary) glued with a scaled defining function, giving ``v^``;
2. mollifies ``w_j = v^ * K_{eps_j}`` and takes ``g_j = det(w_j)``;
3. writes ``mu = h nu`` with ``nu = det(v^)``, ``0 <= h <= 1``;
4. solves ``det(u_j) = h g_j`` (with the cut-off ``chi_j``) and ``u_j = phi``;
5. returns the regularized limsup of the tail of ``u_j``.

Built-in instances live in dimension n = 1 (ball in R^4).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import Domain, max_filter, mollify, quad_norm2
from .psh import EnvelopeConfig, psh_check, psh_envelope
from .solver import DirichletProblem, SolveConfig, dirichlet_solve, hessian_det, poisson_solve


@dataclass
class SubsolutionInstance:
    name: str
    domain: Domain
    phi: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    exact: np.ndarray | None = field(default=None, repr=False)


@dataclass
class PipelineConfig:
    J: int = 8
    J_tail: int = 5
    eps_factor: float = 2.0
    solve: SolveConfig = field(default_factory=lambda: SolveConfig(tol_fp=1e-9, tol_lin=1e-11))
    envelope: EnvelopeConfig = field(default_factory=EnvelopeConfig)
    bound_tol: float = 1e-7

    def eps(self, h: float, j: int) -> float:
        return self.eps_factor * h * (1.0 + 2.0 ** (1 - j))


def smooth_step(t):
    """C^inf step: 0 for t <= 1/2, 1 for t >= 1."""
    t = np.clip(2.0 * np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff(domain: Domain, j: int) -> np.ndarray:
    if j < 1:
        raise ValueError("cut-off index must be >= 1")
    dist = domain.distance_to_boundary()
    chi = smooth_step(j * dist)
    return np.where(domain.interior, chi, 0.0)


def cutoff_measure(mu: np.ndarray, domain: Domain, j: int) -> np.ndarray:
    """``chi_j mu``: ``chi_j = 1`` where dist >= 1/j, 0 where dist <= 1/(2j)."""
    return np.where(domain.interior, cutoff(domain, j) * np.nan_to_num(mu), 0.0)


def mass(density: np.ndarray, domain: Domain, mask: np.ndarray | None = None) -> float:
    mask = domain.interior if mask is None else mask & domain.interior
    return float(np.nansum(np.where(mask, density, 0.0)) * domain.cell_volume)


@dataclass
class NormalizedSubsolution:
    vhat: np.ndarray = field(repr=False)
    vtilde: np.ndarray = field(repr=False)
    shift: float
    scale: float
    envelope_sweeps: int
    agrees_on_U: float
    psh: object = None


def _check_compact(U: np.ndarray, domain: Domain):
    cross = ndimage.generate_binary_structure(domain.dim, 1)
    grown = ndimage.binary_dilation(U, cross)
    if np.any(U & ~domain.interior) or np.any(grown & domain.boundary):
        raise ValueError("U is not compactly contained in the domain")


def normalize_subsolution(v: np.ndarray, U: np.ndarray, domain: Domain,
                          config: EnvelopeConfig | None = None) -> NormalizedSubsolution:
    """Build ``v^ = max(A rho, v~)`` on the domain and ``A rho`` outside.

    ``v~`` is the discrete PSH envelope with ceiling ``v - c`` on ``U``
    (``c = max(0, sup v)`` over the closed domain, so ``v - c`` is a
    competitor) and 0 elsewhere, boundary value 0. ``A >= 1``
    is the smallest scale with ``A rho <= v~`` on ``U``.
    """
    _check_compact(U, domain)
    c = max(0.0, float(np.max(v[domain.closure])))
    ceiling = np.where(U, v - c, 0.0)
    vt, info = psh_envelope(ceiling, np.zeros(domain.shape), domain, config, return_info=True)
    rho = domain.rho()
    ratio = vt[U] / rho[U]
    A = max(1.0, float(np.max(ratio)))
    vhat = np.where(domain.interior, np.maximum(A * rho, np.nan_to_num(vt, nan=0.0)), A * rho)
    agree = float(np.max(np.abs(vhat[U] - (v[U] - c))))
    rep = psh_check(vhat, domain, mode="submean",
                    tol=10 * (config or EnvelopeConfig()).rel_tol * max(1.0, float(np.ptp(vhat[domain.closure]))))
    return NormalizedSubsolution(vhat, vt, c, A, info["sweeps"], agree, rep)


def regularize_sequence(vhat: np.ndarray, domain: Domain, eps_list) -> list:
    """``[(w_j, g_j)]`` with ``w_j = mollify(v^, eps_j)``, ``g_j = max(det w_j, 0)``."""
    out = []
    for eps in eps_list:
        w = mollify(vhat, domain, eps)
        det, _ = hessian_det(np.nan_to_num(w), domain)
        bad = ~np.isfinite(w)
        g = np.where(domain.interior, np.maximum(np.nan_to_num(det), 0.0), 0.0)
        if np.any(bad & domain.interior):
            raise ValueError("mollified subsolution undefined on the interior; pad the grid")
        out.append((w, g))
    return out


@dataclass
class RadonNikodym:
    h: np.ndarray = field(repr=False)
    clamped: int
    orphan_mass: float


def radon_nikodym(mu: np.ndarray, nu: np.ndarray, domain: Domain, tol: float = 1e-9) -> RadonNikodym:
    """``h = mu / nu`` where ``nu > 0``, clamped to ``[0, 1]``.

    ``clamped`` counts nodes where ``mu > nu`` beyond ``tol * max mu``
    (flagged, not fatal);
    ``mu`` mass on ``{nu <= 0}`` beyond ``tol * mass(mu)`` is rejected.
    """
    mu = np.where(domain.interior, np.nan_to_num(mu), 0.0)
    nu = np.where(domain.interior, np.nan_to_num(nu), 0.0)
    pos = nu > 0
    total = mass(mu, domain)
    orphan = mass(np.where(pos, 0.0, mu), domain)
    if orphan > tol * max(total, 1e-300):
        raise ValueError(f"mu has mass {orphan:.3e} outside supp nu: not a subsolution instance")
    ratio = np.where(pos, mu / np.where(pos, nu, 1.0), 0.0)
    clamped = int(np.sum(mu > nu + tol * max(float(mu.max()), 1e-300)))
    return RadonNikodym(np.clip(ratio, 0.0, 1.0), clamped, orphan)


@dataclass
class PipelineResult:
    u: np.ndarray = field(repr=False)
    rows: list = field(default_factory=list, repr=False)
    converged: bool = True
    bound_constant: float = 0.0
    bound_violations: int = 0
    upper_violations: int = 0
    clamped: int = 0
    mass_ratio: float = float("nan")
    sup_error: float | None = None
    normalized: NormalizedSubsolution | None = None
    u_list: list = field(default_factory=list, repr=False)

    @property
    def bounds_held(self) -> bool:
        return self.bound_violations == 0 and self.upper_violations == 0


def limsup_regularized(tail: list, domain: Domain) -> np.ndarray:
    """``u_J + maxfilter(max(tail) - u_J)``: grid proxy for ``(limsup u_j)^*``.

    The filter acts on the nonnegative tail spread only; for the continuous
    ``u_J`` this equals the upper regularization of the tail maximum.
    """
    last = tail[-1]
    top = np.max(np.stack(tail), axis=0)
    spread = np.where(domain.interior, top - last, 0.0)
    out = last + max_filter(spread, domain.interior)
    return np.where(domain.interior, out, last)


def run_pipeline(inst: SubsolutionInstance, config: PipelineConfig | None = None) -> PipelineResult:
    config = config or PipelineConfig()
    D = inst.domain
    if config.J_tail > config.J:
        raise ValueError("J_tail cannot exceed J")
    norm = normalize_subsolution(inst.v, inst.U, D, config.envelope)
    nu_det, _ = hessian_det(norm.vhat, D)
    nu = np.where(D.interior, np.maximum(np.nan_to_num(nu_det), 0.0), 0.0)
    eps = [config.eps(D.h, j) for j in range(1, config.J + 1)]
    seq = regularize_sequence(norm.vhat, D, eps)

    res = PipelineResult(u=None, normalized=norm)
    phi = inst.phi
    sup_phi = float(np.max(phi[D.boundary]))
    C = max(float(np.max((w - phi)[D.boundary])) for w, _ in seq)
    res.bound_constant = C
    prev = None
    for j, ((w, g), e) in enumerate(zip(seq, eps), start=1):
        mu_j_target = cutoff_measure(inst.mu, D, j)
        rn = radon_nikodym(mu_j_target, nu, D)
        res.clamped += rn.clamped
        mu_j = rn.h * g
        sol = dirichlet_solve(DirichletProblem(D, phi, mu_j), config.solve)
        res.converged &= sol.converged
        u = sol.u
        m = D.closure & np.isfinite(w)
        span = float(np.ptp(u[D.closure]))
        tol = config.bound_tol * max(span, 1.0)
        res.bound_violations += int(np.sum((w - C)[m] > u[m] + tol))
        res.upper_violations += int(np.sum(u[D.closure] > sup_phi + tol))
        step = float(np.max(np.abs(u - prev)[D.closure])) if prev is not None else float("nan")
        res.rows.append({"stage": "solve", "j": j, "eps": e, "mass_mu_j": mass(mu_j, D),
                         "sup_step": step, "residual_sup": sol.residual.sup,
                         "residual_l1": sol.residual.l1, "iterations": sol.iterations})
        res.u_list.append(u)
        prev = u
    tail = res.u_list[-config.J_tail:]
    u = limsup_regularized(tail, D)
    res.u = u
    det_u, _ = hessian_det(u, D)
    mu_K = mass(inst.mu, D, inst.K)
    res.mass_ratio = mass(np.nan_to_num(det_u), D, inst.K) / mu_K if mu_K > 0 else float("nan")
    if inst.exact is not None:
        res.sup_error = float(np.max(np.abs(u - inst.exact)[D.closure]))
    res.rows.append({"stage": "limit", "j": config.J, "eps": eps[-1], "mass_mu_j": mu_K,
                     "sup_step": float(np.max(np.abs(u - tail[-1])[D.closure])),
                     "residual_sup": float("nan"), "residual_l1": float("nan"),
                     "iterations": 0})
    return res


def write_pipeline_csv(path, result: PipelineResult) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["stage", "j", "eps", "mass_mu_j", "sup_step", "residual_sup", "residual_l1", "iterations"]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in result.rows:
            w.writerow({c: (f"{row[c]:.10e}" if isinstance(row[c], float) else row[c]) for c in cols})
    return path


# ---- built-in instances (n = 1) ------------------------------------------

def radial_potential(r, amp: float, a: float, outer: float = 1.0):
    """Radial ``P`` on R^4 with ``Lap P = amp (1 - r^2/a^2)^3`` for ``r < a``,
    harmonic for ``r > a``, C^2 across ``r = a`` and ``P(outer) = 0``."""
    r = np.asarray(r, dtype=float)
    # Lap r^(2m+2) = (2m+2)(2m+4) r^(2m) in four dimensions
    coef = [amp * math.comb(3, m) * (-1) ** m / a ** (2 * m) for m in range(4)]

    def inner(rr):
        return sum(c * rr ** (2 * m + 2) / ((2 * m + 2) * (2 * m + 4)) for m, c in enumerate(coef))

    total = 2 * math.pi**2 * sum(c * a ** (2 * m + 4) / (2 * m + 4) for m, c in enumerate(coef))
    beta = -total / (4 * math.pi**2)  # P = alpha + beta r^-2 outside
    alpha = -beta / outer**2
    shift = alpha + beta / a**2 - inner(a)
    with np.errstate(divide="ignore"):
        out = np.where(r < a, inner(r) + shift, alpha + beta / np.maximum(r, 1e-300) ** 2)
    return out


DEFAULT_AMP = 1.0
DEFAULT_A = 0.6


def _base(domain: Domain, amp: float, a: float):
    x = domain.coords()
    r = np.sqrt(quad_norm2(x))
    P = np.broadcast_to(radial_potential(r, amp, a), domain.shape)
    harm = np.broadcast_to(0.3 * x[0] + 0.25 * (x[1] ** 2 - x[2] ** 2), domain.shape)
    return P, harm, np.broadcast_to(r, domain.shape)


def radial_density(r, amp: float, a: float):
    return np.where(r < a, amp * np.clip(1 - r**2 / a**2, 0, None) ** 3, 0.0)


def builtin_instance(name: str, n: int, resolution: int, pad: int = 6,
                     amp: float = DEFAULT_AMP, a: float = DEFAULT_A) -> SubsolutionInstance:
    """``smooth-selfconsistency``, ``half-mass`` or ``corollary-sum`` on the unit ball.

    The subsolution is the grid solution of ``Lap v = f`` with
    ``f = amp (1 - r^2/a^2)^3`` on ``r < a`` and boundary data from the
    closed-form radial potential plus a harmonic term. Being a grid
    solution it is exactly discrete-subharmonic; it matches the smooth
    closed form to second order in ``h``.
    """
    if n != 1:
        raise ValueError("built-in subsolution instances are defined for n = 1")
    D = Domain.ball(1, resolution, pad=pad)
    P, harm, r = _base(D, amp, a)
    smooth = np.array(P + harm)
    f = np.where(D.interior, radial_density(r, amp, a), 0.0)
    v1 = poisson_solve(f, smooth, D, 1e-13)
    U = r < min(a + 0.25 * (1 - a) + 2 * D.h, 1 - 2 * D.h)
    K = r < a + 0.5 * (1 - a)
    if name in ("smooth-selfconsistency", "half-mass"):
        mu = f if name == "smooth-selfconsistency" else 0.5 * f
        exact = v1 if name == "smooth-selfconsistency" else None
        return SubsolutionInstance(name, D, smooth, mu, v1, U, K, exact)
    if name == "corollary-sum":
        x = D.coords()
        v2 = np.broadcast_to(0.1 * ((x[0] - 0.2) ** 2 + x[1] ** 2 + x[2] ** 2 + x[3] ** 2), D.shape)
        v = np.where(D.closure, v1 + v2, np.nan)
        # n = 1: the mixed measure of the single function v1 is det(v1) = f
        return SubsolutionInstance(name, D, v, f, v, U, K, None)
    raise ValueError(f"unknown instance {name!r}")


BUILTINS = ("smooth-selfconsistency", "half-mass", "corollary-sum")


def homogeneous_solution(inst: SubsolutionInstance, tol_lin: float = 1e-11) -> np.ndarray:
    return poisson_solve(0.0, inst.phi, inst.domain, tol_lin) if inst.domain.n == 1 else \
        dirichlet_solve(DirichletProblem(inst.domain, inst.phi, 0.0)).u

