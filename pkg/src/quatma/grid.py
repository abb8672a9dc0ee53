"""Uniform grids on boxes and balls in R^(4n), sampling, norms and mollification.

Fields are plain float arrays of shape ``domain.shape``. Values are
meaningful on ``domain.interior | domain.boundary``; the boundary mask
stores Dirichlet data. Ball grids carry ``pad`` extra node layers
around the ball so boundary stencils and mollification have room.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage, signal


def _tuple(v, dim, default):
    if v is None:
        v = default
    if np.isscalar(v):
        return (float(v),) * dim
    v = tuple(float(x) for x in v)
    if len(v) != dim:
        raise ValueError(f"expected {dim} components, got {len(v)}")
    return v


@dataclass(frozen=True)
class Domain:
    """A box or ball in R^(4n) discretized with a uniform spacing ``h``.

    ``resolution`` counts nodes per axis across the box, or across the
    ball's diameter (odd, so the center is a node).
    """

    n: int
    kind: str
    resolution: int
    lower: tuple | None = None
    upper: tuple | None = None
    center: tuple | None = None
    radius: float = 1.0
    pad: int = 0

    @classmethod
    def box(cls, n: int, resolution: int, lower=-1.0, upper=1.0) -> Domain:
        d = 4 * n
        return cls(n, "box", int(resolution), _tuple(lower, d, -1.0), _tuple(upper, d, 1.0))

    @classmethod
    def ball(cls, n: int, resolution: int, radius: float = 1.0, center=0.0, pad: int = 2) -> Domain:
        return cls(n, "ball", int(resolution), center=_tuple(center, 4 * n, 0.0),
                   radius=float(radius), pad=int(pad))

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.resolution < 3:
            raise ValueError("need at least 3 nodes per axis")
        if self.kind == "box":
            widths = np.subtract(self.upper, self.lower)
            if np.any(widths <= 0):
                raise ValueError("box bounds must satisfy lower < upper")
            hs = widths / (self.resolution - 1)
            if not np.allclose(hs, hs[0], rtol=1e-12):
                raise ValueError("box axes must share one spacing")
        elif self.kind == "ball":
            if self.resolution % 2 == 0:
                raise ValueError("ball resolution must be odd")
            if self.radius <= 0:
                raise ValueError("radius must be positive")
            if self.pad < 2:
                raise ValueError("ball grids need pad >= 2 for the boundary band")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return 4 * self.n

    @property
    def h(self) -> float:
        if self.kind == "box":
            return (self.upper[0] - self.lower[0]) / (self.resolution - 1)
        return 2.0 * self.radius / (self.resolution - 1)

    @property
    def nodes_per_axis(self) -> int:
        return self.resolution + (2 * self.pad if self.kind == "ball" else 0)

    @property
    def shape(self) -> tuple:
        return (self.nodes_per_axis,) * self.dim

    @cached_property
    def axes(self) -> list:
        if self.kind == "box":
            return [np.linspace(lo, hi, self.resolution) for lo, hi in zip(self.lower, self.upper)]
        half = (self.resolution - 1) // 2 + self.pad
        k = np.arange(-half, half + 1)
        return [c + self.h * k for c in self.center]

    def coords(self) -> list:
        """Sparse meshgrid: list of ``4n`` broadcastable coordinate arrays."""
        return np.meshgrid(*self.axes, indexing="ij", sparse=True)

    @property
    def bbox(self) -> tuple:
        return tuple(float(a[0]) for a in self.axes), tuple(float(a[-1]) for a in self.axes)

    @cached_property
    def interior(self) -> np.ndarray:
        if self.kind == "box":
            m = np.zeros(self.shape, dtype=bool)
            m[(slice(1, -1),) * self.dim] = True
            return m
        return self._r2() < self.radius**2 * (1 - 1e-12)

    @cached_property
    def boundary(self) -> np.ndarray:
        if self.kind == "box":
            return ~self.interior
        # nodes reached by the +-e_a +- e_b stencils of interior nodes
        cross = ndimage.generate_binary_structure(self.dim, 1)
        band = ndimage.binary_dilation(self.interior, cross, iterations=2)
        return band & ~self.interior

    @property
    def closure(self) -> np.ndarray:
        return self.interior | self.boundary

    def _r2(self):
        return sum((x - c) ** 2 for x, c in zip(self.coords(), self.center))

    def rho(self) -> np.ndarray:
        """Defining function: ``|q - c|^2 - r^2`` (ball); normalized max of axis slabs (box)."""
        x = self.coords()
        if self.kind == "ball":
            return np.broadcast_to(self._r2() - self.radius**2, self.shape).copy()
        out = None
        for xa, lo, hi in zip(x, self.lower, self.upper):
            m, s = 0.5 * (lo + hi), 0.5 * (hi - lo)
            t = ((xa - m) ** 2 - s**2) / s**2
            out = t if out is None else np.maximum(out, t)
        return np.broadcast_to(out, self.shape).copy()

    def distance_to_boundary(self) -> np.ndarray:
        """Euclidean distance to the boundary surface, positive inside."""
        x = self.coords()
        if self.kind == "ball":
            return np.broadcast_to(self.radius - np.sqrt(self._r2()), self.shape).copy()
        out = None
        for xa, lo, hi in zip(x, self.lower, self.upper):
            t = np.minimum(xa - lo, hi - xa)
            out = t if out is None else np.minimum(out, t)
        return np.broadcast_to(out, self.shape).copy()

    def ball_mask(self, radius: float, center=None) -> np.ndarray:
        c = _tuple(center, self.dim, 0.0) if center is not None else (
            self.center if self.kind == "ball" else
            tuple(0.5 * (lo + hi) for lo, hi in zip(self.lower, self.upper)))
        r2 = sum((x - ci) ** 2 for x, ci in zip(self.coords(), c))
        return np.broadcast_to(r2 < radius**2, self.shape).copy()

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def describe(self) -> dict:
        d = asdict(self)
        d.update(h=self.h, shape=list(self.shape), dim=self.dim)
        return d


def sample(fn, domain: Domain, mask: np.ndarray | None = None) -> np.ndarray:
    """Evaluate ``fn(x)`` at every node; ``x`` is the list of coordinate arrays.

    Values must be finite on ``mask`` (default: interior and boundary).
    """
    vals = fn(domain.coords())
    out = np.array(np.broadcast_to(np.asarray(vals, dtype=float), domain.shape))
    mask = domain.closure if mask is None else mask
    if not np.all(np.isfinite(out[mask])):
        raise ValueError("sampled function is not finite on the domain")
    return out


def quad_norm2(x) -> np.ndarray:
    return sum(xi**2 for xi in x)


def lp_norm(g, domain: Domain, p: float = 2.0, mask: np.ndarray | None = None) -> float:
    """``(sum |g|^p h^(4n))^(1/p)`` over ``mask`` (default interior); sup for ``p = inf``."""
    mask = domain.interior if mask is None else mask
    vals = np.abs(np.broadcast_to(g, domain.shape)[mask])
    if vals.size == 0:
        return 0.0
    if math.isinf(p):
        return float(vals.max())
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((np.sum(vals**p) * domain.cell_volume) ** (1.0 / p))


def mollifier_kernel(eps: float, h: float, dim: int) -> np.ndarray:
    """Lattice samples of ``(1 - (r/eps)^2)^3`` normalized to unit sum."""
    k = int(math.floor(eps / h))
    if eps / h - k < 1e-12:
        k -= 1  # nodes exactly at r = eps carry zero weight anyway
    k = max(k, 1)
    offs = np.arange(-k, k + 1) * h
    r2 = sum(o**2 for o in np.meshgrid(*([offs] * dim), indexing="ij", sparse=True))
    w = np.clip(1.0 - r2 / eps**2, 0.0, None) ** 3
    return w / w.sum()


def mollify(u: np.ndarray, domain: Domain, eps: float, defined: np.ndarray | None = None) -> np.ndarray:
    """Convolve with the normalized bump of radius ``eps`` (``eps >= 2h``).

    Nodes whose kernel footprint leaves the ``defined`` region (default:
    where ``u`` is finite) are returned as NaN.
    """
    h = domain.h
    if eps < 2 * h * (1 - 1e-12):
        raise ValueError(f"mollification radius {eps:.4g} below two grid spacings ({2 * h:.4g})")
    u = np.asarray(u, dtype=float)
    if defined is None:
        defined = np.isfinite(u)
    kern = mollifier_kernel(eps, h, domain.dim)
    filled = np.where(defined, u, 0.0)
    out = signal.fftconvolve(filled, kern, mode="same")
    valid = ndimage.binary_erosion(defined, structure=kern > 0, border_value=0)
    out[~valid] = np.nan
    return out


def max_filter(u: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Max over each node and its ``+-e_a`` neighbors (radius-h cross)."""
    fp = ndimage.generate_binary_structure(u.ndim, 1)
    src = np.where(mask, u, -np.inf) if mask is not None else u
    out = ndimage.maximum_filter(src, footprint=fp, mode="nearest")
    if mask is not None:
        out = np.where(mask, out, u)
    return out


def write_grid(path, u: np.ndarray, domain: Domain, extra: dict | None = None) -> Path:
    """Flat little-endian float64 dump (row-major) plus ``<path>.meta.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(u, dtype="<f8").tofile(path)
    lo, hi = domain.bbox
    meta = {"dims": list(domain.shape), "h": domain.h, "bbox": [list(lo), list(hi)],
            "shape": domain.kind, "n": domain.n, "domain": domain.describe()}
    if extra:
        meta.update(extra)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def read_grid(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text())
    data = np.fromfile(path, dtype="<f8").reshape(meta["dims"])
    return data, meta


def domain_from_meta(meta: dict) -> Domain:
    d = dict(meta["domain"])
    for k in ("h", "shape", "dim"):
        d.pop(k, None)
    for k in ("lower", "upper", "center"):
        if d.get(k) is not None:
            d[k] = tuple(d[k])
    return Domain(**d)
