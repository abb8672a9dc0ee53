"""Plurisubharmonicity on grids: checks, max-gluing and the PSH envelope.

The discrete notion used for sweeping is the sub-mean-value property on
each coordinate quaternionic 4-plane: for every block ``l``,
``u(x) <= mean of the 8 neighbors x +- h e_{4l+a}``. This is a necessary
condition for PSH (axis-aligned right quaternionic lines only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .backends import FiniteDifferenceBackend, SymbolicBackend
from .baston import evaluate_hessian, quat_hessian
from .grid import Domain
from .quaternion import eigenvalues


@dataclass
class PSHReport:
    checked: int
    violations: int
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _crop(mask: np.ndarray, grow: int = 1):
    idx = np.nonzero(mask)
    if not idx[0].size:
        raise ValueError("empty mask")
    return tuple(slice(max(int(i.min()) - grow, 0), int(i.max()) + grow + 1) for i in idx)


def block_means(u: np.ndarray, n: int, sl=None) -> np.ndarray:
    """Array ``(n,) + inner_shape`` of 8-neighbor means per quaternionic block.

    Computed on the core of ``u`` (one node trimmed on every side).
    """
    dim = 4 * n
    core = (slice(1, -1),) * dim
    out = np.zeros((n,) + u[core].shape)
    for l in range(n):
        acc = out[l]
        for a in range(4 * l, 4 * l + 4):
            lo = list(core)
            hi = list(core)
            lo[a] = slice(0, -2)
            hi[a] = slice(2, None)
            acc += u[tuple(lo)] + u[tuple(hi)]
        acc /= 8.0
    return out


def submean_defect(u: np.ndarray, domain: Domain) -> np.ndarray:
    """``min_l mean_l(u) - u`` on interior nodes (NaN elsewhere); >= 0 means sub-mean."""
    sl = _crop(domain.interior, 1)
    uc = u[sl]
    means = block_means(uc, domain.n).min(axis=0)
    core = (slice(1, -1),) * domain.dim
    out = np.full(domain.shape, np.nan)
    sub = out[sl]
    d = means - uc[core]
    inner = domain.interior[sl][core]
    sub[core] = np.where(inner, d, np.nan)
    return out


def psh_check(u, domain: Domain | None = None, mode: str = "hessian", tol: float | None = None,
              mask: np.ndarray | None = None, backend: SymbolicBackend | None = None,
              points=None) -> PSHReport:
    """Count points where ``u`` fails to be PSH.

    * grid array, ``mode="hessian"``: FD quaternionic Hessian must be PSD;
    * grid array, ``mode="submean"``: discrete sub-mean on every block;
    * polynomial with ``backend`` and ``points``: exact Hessian at points.

    The default tolerance is ``1e-10`` times the data scale.
    """
    if backend is not None:
        pts = np.atleast_2d(points if points is not None else np.zeros((1, backend.dim)))
        Q = quat_hessian(u, backend)
        worst = np.inf
        bad = 0
        for p in pts:
            w = eigenvalues(evaluate_hessian(Q, backend, p))
            scale = max(1.0, float(np.abs(w).max()))
            t = 1e-10 * scale if tol is None else tol
            worst = min(worst, float(w[0]))
            bad += int(w[0] < -t)
        return PSHReport(len(pts), bad, worst, 1e-10 if tol is None else tol)
    u = np.asarray(u, dtype=float)
    mask = domain.interior if mask is None else mask
    if mode == "hessian":
        fd = FiniteDifferenceBackend(domain.n, domain.h)
        sl = _crop(mask, 1)
        Q = quat_hessian(u[sl], fd)
        w = eigenvalues(Q)[..., 0]
        w = w[mask[sl]]
        scale = float(np.nanmax(np.abs(Q[mask[sl]]))) if w.size else 0.0
        t = 1e-10 * max(scale, 1e-300) if tol is None else tol
    elif mode == "submean":
        w = submean_defect(u, domain)[mask]
        span = float(np.nanmax(u[domain.closure]) - np.nanmin(u[domain.closure]))
        t = 1e-12 * max(span, 1e-300) if tol is None else tol
    else:
        raise ValueError(f"unknown mode {mode!r}")
    w = w[np.isfinite(w)]
    worst = float(w.min()) if w.size else 0.0
    return PSHReport(int(w.size), int(np.sum(w < -t)), worst, t)


def max_glue(u: np.ndarray, v: np.ndarray, omega: np.ndarray, domain: Domain,
             tol: float = 1e-12) -> np.ndarray:
    """``max(u, v)`` on ``omega`` and ``u`` outside.

    Requires ``v <= u`` on the nodes of ``omega`` within one grid cell of
    its relative boundary (grid proxy for the limsup condition).
    """
    omega = np.asarray(omega, dtype=bool)
    inside = omega & domain.closure
    cross = ndimage.generate_binary_structure(domain.dim, 1)
    outside = domain.closure & ~omega
    rim = inside & ndimage.binary_dilation(outside, cross)
    scale = max(1.0, float(np.nanmax(np.abs(u[domain.closure]))))
    if np.any(v[rim] > u[rim] + tol * scale):
        raise ValueError("max_glue: v exceeds u next to the boundary of omega")
    out = np.array(u, dtype=float)
    out[inside] = np.maximum(u[inside], v[inside])
    return out


@dataclass
class EnvelopeConfig:
    omega: float = 1.5
    rel_tol: float = 1e-8
    max_sweeps: int = 10_000


class EnvelopeError(RuntimeError):
    pass


def psh_envelope(ceiling: np.ndarray, boundary_values: np.ndarray, domain: Domain,
                 config: EnvelopeConfig | None = None, initial: np.ndarray | None = None,
                 return_info: bool = False):
    """Largest grid function with the block sub-mean property, ``<= ceiling``
    on the interior and equal to ``boundary_values`` on the boundary.

    Red-black projected over-relaxed Gauss-Seidel:
    ``u <- min(ceiling, u + omega (min_l mean_l u - u))``, started from
    above, until the sup-change of a sweep is below
    ``rel_tol * (sup - inf of the finite data)``.
    """
    config = config or EnvelopeConfig()
    interior = domain.interior
    bvals = np.asarray(boundary_values, dtype=float)
    ceil = np.asarray(ceiling, dtype=float)
    data = np.concatenate([bvals[domain.boundary], ceil[interior][np.isfinite(ceil[interior])]])
    span = float(data.max() - data.min()) if data.size else 0.0
    tol = config.rel_tol * max(span, 1e-300)
    start = np.minimum(ceil, bvals[domain.boundary].max())
    u = np.where(interior, start if initial is None else np.minimum(initial, ceil), bvals)
    u = np.where(domain.closure, u, 0.0)

    sl = _crop(interior, 1)
    uc = u[sl]  # view into u
    cc = np.broadcast_to(ceil, domain.shape)[sl]
    core = (slice(1, -1),) * domain.dim
    inner = interior[sl][core]
    parity = np.indices(inner.shape).sum(axis=0) % 2
    colors = [inner & (parity == 0), inner & (parity == 1)]
    ccore = cc[core]
    sweeps = 0
    change = np.inf
    while sweeps < config.max_sweeps:
        change = 0.0
        for color in colors:
            target = block_means(uc, domain.n).min(axis=0)
            cur = uc[core]
            new = np.minimum(ccore, cur + config.omega * (target - cur))
            delta = np.abs(new - cur)[color]
            if delta.size:
                change = max(change, float(delta.max()))
            cur[color] = new[color]
        sweeps += 1
        if change < tol:
            break
    else:
        raise EnvelopeError(f"envelope sweep did not converge in {config.max_sweeps} sweeps "
                            f"(last change {change:.3e}, tol {tol:.3e})")
    out = np.where(domain.closure, u, np.nan)
    if return_info:
        return out, {"sweeps": sweeps, "change": change, "tol": tol}
    return out
