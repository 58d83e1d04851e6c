"""Uniform grids, scalar fields, finite differences and interpolation.

Values live at cell centres: sample ``i`` along an axis sits at
``lower + (i + 1/2) h``.  Differential queries need one layer of neighbours,
so every index-based query rejects the outermost layer and every point query
is restricted to the box shrunk by ``3h/2`` (one cell beyond the outermost
sample centre).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
from scipy import ndimage

from .shapes import Shape, ShapeError


class DomainError(ValueError):
    """A query too close to the grid boundary (or outside it)."""


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "cells", cells)
        if not (len(lo) == len(hi) == len(cells)):
            raise ValueError("lower, upper and cells must have the same length")
        if len(cells) not in (2, 3):
            raise ValueError(f"grids are 2-D or 3-D, got dim {len(cells)}")
        if min(cells) < 8:
            raise ValueError(f"every axis needs at least 8 cells, got {cells}")
        widths = np.subtract(hi, lo)
        if np.any(widths <= 0):
            raise ValueError("upper corner must exceed lower corner on every axis")
        hs = widths / np.array(cells)
        if np.ptp(hs) > 1e-9 * hs.max():
            raise ValueError(f"spacing differs between axes: {hs}")

    @classmethod
    def cube(cls, half_width: float, cells: int, dim: int) -> "GridSpec":
        return cls((-half_width,) * dim, (half_width,) * dim, (cells,) * dim)

    @classmethod
    def from_spacing(cls, lower: Sequence[float], upper: Sequence[float], h: float) -> "GridSpec":
        """Grid with spacing ``h`` covering ``[lower, upper]``, grown symmetrically to fit."""
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        cells = np.ceil((hi - lo) / h - 1e-9).astype(int)
        pad = 0.5 * (cells * h - (hi - lo))
        return cls(tuple(lo - pad), tuple(hi + pad), tuple(cells))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> float:
        return (self.upper[0] - self.lower[0]) / self.cells[0]

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(np.subtract(self.upper, self.lower)))

    @property
    def origin(self) -> np.ndarray:
        """Position of sample ``(0, ..., 0)``."""
        return np.asarray(self.lower) + 0.5 * self.h

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.lower[axis] + (np.arange(self.cells[axis]) + 0.5) * self.h

    def coords(self) -> np.ndarray:
        """Sample positions, shape ``cells + (dim,)``."""
        return np.stack(np.meshgrid(*[self.axis_coords(a) for a in range(self.dim)], indexing="ij"), axis=-1)

    def point(self, idx) -> np.ndarray:
        return self.origin + self.h * np.asarray(idx, dtype=float)

    def to_index(self, p) -> np.ndarray:
        """Continuous index coordinates of ``p``."""
        return (np.asarray(p, dtype=float) - self.origin) / self.h

    def nearest_index(self, p) -> tuple:
        c = np.rint(self.to_index(p)).astype(int)
        c = np.clip(c, 0, np.array(self.cells) - 1)
        return tuple(int(v) for v in c)

    def interior(self, idx, margin: int = 1) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= margin) and np.all(idx <= np.array(self.cells) - 1 - margin))

    def contains(self, p, margin: float = 1.0) -> bool:
        """Whether ``p`` lies at least ``margin`` cells inside the sample hull."""
        c = self.to_index(p)
        return bool(np.all(c >= margin) and np.all(c <= np.array(self.cells) - 1 - margin))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

KINDS = ("arrival-time", "level-function", "signed-distance")


class ScalarField:
    """Immutable samples of a scalar function on a :class:`GridSpec`."""

    def __init__(self, grid: GridSpec, values, kind: str = "arrival-time"):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        v = np.array(values, dtype=np.float64)
        if v.size != grid.size:
            raise ValueError(f"expected {grid.size} values, got {v.size}")
        v = v.reshape(grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        self.grid = grid
        self.values = v
        self.kind = kind

    @classmethod
    def sample(cls, grid: GridSpec, fn, kind="arrival-time") -> "ScalarField":
        """Evaluate ``fn(points[..., dim])`` on the grid."""
        return cls(grid, fn(grid.coords()), kind)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def h(self) -> float:
        return self.grid.h

    # point-query protocol shared with AnalyticField
    def valid(self, p) -> bool:
        return self.grid.contains(p)

    def value(self, p) -> float:
        return interpolate(self, p)

    def gradient(self, p) -> np.ndarray:
        return interpolate_gradient(self, p)

    def hessian(self, p) -> np.ndarray:
        return interpolate_hessian(self, p)

    def taylor_value(self, p) -> float:
        return interpolate_taylor(self, p)

    def mean_curvature(self, p) -> float:
        return interpolate_level_curvature(self, p)

    def __repr__(self):
        return f"ScalarField(kind={self.kind!r}, cells={self.grid.cells}, h={self.h:.4g})"


class AnalyticField:
    """Closed-form field with the same point-query protocol as a grid field.

    ``h`` is the nominal resolution used by consumers that pick stencil
    steps or floors relative to the grid spacing.
    """

    def __init__(self, dim, value, gradient, hessian, h=1.0 / 128, domain=None):
        self.dim = dim
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.h = h
        self._domain = domain

    def valid(self, p) -> bool:
        return True if self._domain is None else bool(self._domain(np.asarray(p, dtype=float)))

    def value(self, p) -> float:
        return float(self._value(np.asarray(p, dtype=float)))

    def gradient(self, p) -> np.ndarray:
        return np.asarray(self._gradient(np.asarray(p, dtype=float)), dtype=float)

    def hessian(self, p) -> np.ndarray:
        return np.asarray(self._hessian(np.asarray(p, dtype=float)), dtype=float)

    def taylor_value(self, p) -> float:
        return self.value(p)

    def mean_curvature(self, p) -> float:
        return level_set_curvature(self.gradient(p), self.hessian(p))

    def sample(self, grid: GridSpec) -> ScalarField:
        pts = grid.coords().reshape(-1, grid.dim)
        return ScalarField(grid, [self._value(q) for q in pts])

    def sample_vectorized(self, grid: GridSpec) -> ScalarField:
        return ScalarField(grid, self._value(grid.coords()))

    def with_resolution(self, h: float) -> "AnalyticField":
        return AnalyticField(self.dim, self._value, self._gradient, self._hessian, h, self._domain)


def sphere_arrival(dim: int, radius: float = 0.0, center=None, h: float = 1.0 / 128) -> AnalyticField:
    """``u = (R^2 - |x - c|^2) / (2 (n - 1))``, the shrinking sphere."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    s = 1.0 / (2.0 * (dim - 1))

    def value(x):
        return s * (radius * radius - np.sum((x - c) ** 2, axis=-1))

    def gradient(x):
        return -2.0 * s * (x - c)

    def hessian(x):
        return -2.0 * s * np.eye(dim)

    return AnalyticField(dim, value, gradient, hessian, h)


def cylinder_arrival(dim: int, k: int, radius: float = 0.0, h: float = 1.0 / 128) -> AnalyticField:
    """Shrinking ``S^{n-k-1} x R^k``; the last ``k`` coordinates are the axis."""
    if not 0 <= k <= dim - 2:
        raise ValueError("need 0 <= k <= n - 2")
    m = dim - k
    s = 1.0 / (2.0 * (m - 1))
    mask = np.r_[np.ones(m), np.zeros(k)]

    def value(x):
        return s * (radius * radius - np.sum((x * mask) ** 2, axis=-1))

    def gradient(x):
        return -2.0 * s * x * mask

    def hessian(x):
        return -2.0 * s * np.diag(mask)

    return AnalyticField(dim, value, gradient, hessian, h)


def grim_reaper_arrival(h: float = 1.0 / 128) -> AnalyticField:
    """``u = y + log cos x`` on ``|x| < pi/2``: the translating grim reaper.

    Its level sets move with unit speed, so it is an exact non-quadratic
    arrival time with ``|grad u| = sec x`` and ``H = cos x``.
    """

    def value(p):
        return p[..., 1] + np.log(np.cos(p[..., 0]))

    def gradient(p):
        return np.array([-np.tan(p[0]), 1.0])

    def hessian(p):
        return np.array([[-1.0 / np.cos(p[0]) ** 2, 0.0], [0.0, 0.0]])

    return AnalyticField(2, value, gradient, hessian, h, domain=lambda p: abs(p[0]) < 1.5)


# ---------------------------------------------------------------------------
# finite differences at grid points
# ---------------------------------------------------------------------------


def _check_index(grid: GridSpec, idx):
    idx = tuple(int(i) for i in idx)
    if len(idx) != grid.dim:
        raise DomainError(f"index {idx} has wrong length for a {grid.dim}-D grid")
    if not grid.interior(idx):
        raise DomainError(f"index {idx} is within one cell of the boundary")
    return idx


def _fd_gradient(v, idx, h):
    g = np.empty(v.ndim)
    for a in range(v.ndim):
        ip = list(idx)
        im = list(idx)
        ip[a] += 1
        im[a] -= 1
        g[a] = (v[tuple(ip)] - v[tuple(im)]) / (2.0 * h)
    return g


def _fd_hessian(v, idx, h):
    n = v.ndim
    H = np.empty((n, n))
    c = v[idx]
    for a in range(n):
        ip = list(idx)
        im = list(idx)
        ip[a] += 1
        im[a] -= 1
        H[a, a] = (v[tuple(ip)] - 2.0 * c + v[tuple(im)]) / (h * h)
        for b in range(a + 1, n):
            acc = 0.0
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                q = list(idx)
                q[a] += sa
                q[b] += sb
                acc += sa * sb * v[tuple(q)]
            H[a, b] = H[b, a] = acc / (4.0 * h * h)
    return H


def gradient_fd(f: ScalarField, idx) -> np.ndarray:
    """Central-difference gradient at a grid sample."""
    idx = _check_index(f.grid, idx)
    return _fd_gradient(f.values, idx, f.h)


def hessian_fd(f: ScalarField, idx) -> np.ndarray:
    """Second-order Hessian stencil at a grid sample (symmetric by construction)."""
    idx = _check_index(f.grid, idx)
    return _fd_hessian(f.values, idx, f.h)


def gradient_array(v: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of a whole array, shape ``(dim,) + v.shape``.

    The outermost layer uses one-sided differences and should not be trusted.
    """
    return np.stack(np.gradient(v, h), axis=0)


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------


def _cell(f: ScalarField, p):
    p = np.asarray(p, dtype=float)
    if p.shape != (f.dim,):
        raise DomainError(f"point must have shape ({f.dim},), got {p.shape}")
    c = f.grid.to_index(p)
    hi = np.array(f.grid.cells) - 2
    if np.any(c < 1.0) or np.any(c > hi):
        raise DomainError(f"point {p} is outside the interpolation region")
    base = np.minimum(np.floor(c).astype(int), hi - 1)
    return base, c - base


def _corner_weights(frac):
    n = len(frac)
    for bits in product((0, 1), repeat=n):
        w = 1.0
        for a, b in enumerate(bits):
            w *= frac[a] if b else 1.0 - frac[a]
        yield bits, w


def interpolate(f: ScalarField, p) -> float:
    """Multilinear interpolation; exact on multilinear fields."""
    base, frac = _cell(f, p)
    v = f.values
    acc = 0.0
    for bits, w in _corner_weights(frac):
        acc += w * v[tuple(base + bits)]
    return float(acc)


def interpolate_many(f, pts) -> np.ndarray:
    """Point values at many points: vectorised multilinear on grid fields.

    Points outside the interpolation region come back as nan.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if not isinstance(f, ScalarField):
        out = np.empty(len(pts))
        for i, q in enumerate(pts):
            out[i] = f.value(q) if f.valid(q) else np.nan
        return out
    c = f.grid.to_index(pts)
    ok = np.all((c >= 1.0) & (c <= np.array(f.grid.cells) - 2), axis=1)
    out = ndimage.map_coordinates(f.values, c.T, order=1, mode="nearest")
    return np.where(ok, out, np.nan)


def interpolate_gradient(f: ScalarField, p) -> np.ndarray:
    """Multilinear interpolation of the nodal central-difference gradient."""
    base, frac = _cell(f, p)
    acc = np.zeros(f.dim)
    for bits, w in _corner_weights(frac):
        if w != 0.0:
            acc += w * _fd_gradient(f.values, tuple(base + bits), f.h)
    return acc


def interpolate_hessian(f: ScalarField, p) -> np.ndarray:
    """Multilinear interpolation of the nodal Hessian stencil."""
    base, frac = _cell(f, p)
    acc = np.zeros((f.dim, f.dim))
    for bits, w in _corner_weights(frac):
        if w != 0.0:
            acc += w * _fd_hessian(f.values, tuple(base + bits), f.h)
    return acc


def interpolate_taylor(f: ScalarField, p) -> float:
    """Multilinear blend of second-order Taylor expansions about the cell corners.

    Continuous, exact on quadratic fields and third-order accurate, so level
    sets located with it are consistent with the interpolated derivatives.
    """
    base, frac = _cell(f, p)
    g = f.grid
    p = np.asarray(p, dtype=float)
    acc = 0.0
    for bits, w in _corner_weights(frac):
        if w == 0.0:
            continue
        idx = tuple(base + bits)
        d = p - g.point(idx)
        acc += w * (f.values[idx] + _fd_gradient(f.values, idx, f.h) @ d
                    + 0.5 * d @ _fd_hessian(f.values, idx, f.h) @ d)
    return float(acc)


def level_set_curvature(grad, hess) -> float:
    """Mean curvature ``-tr(P hess P) / |grad|`` of the level set through a point."""
    grad = np.asarray(grad, dtype=float)
    gn = float(np.linalg.norm(grad))
    N = grad / gn
    P = np.eye(len(grad)) - np.outer(N, N)
    return float(-np.trace(P @ np.asarray(hess) @ P) / gn)


def _keys(x):
    x = np.abs(x)
    return np.where(x <= 1.0, (1.5 * x - 2.5) * x * x + 1.0,
                    np.where(x < 2.0, ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0, 0.0))


def interpolate_level_curvature(f: ScalarField, p) -> float:
    """Level-set mean curvature from nodal finite differences, cubic-convolution interpolated.

    The nodal values carry a smooth O(h^2) error and the Keys kernel is
    third order and C^1, so differences of these samples over a few cells
    stay consistent (unlike differences of multilinear interpolants).
    """
    g = f.grid
    c = g.to_index(p)
    base = np.floor(c).astype(int)
    lo = base - 3
    hi = base + 5
    if np.any(lo < 0) or np.any(hi > np.array(g.cells)):
        raise DomainError(f"point {p} is too close to the boundary for curvature interpolation")
    v = f.values[tuple(slice(a, b) for a, b in zip(lo, hi))]
    h = g.h
    n = g.dim
    core = (slice(1, -1),) * n
    grads = []
    hess = {}
    for a in range(n):
        grads.append((np.roll(v, -1, a) - np.roll(v, 1, a))[core] / (2 * h))
        hess[a, a] = (np.roll(v, -1, a) - 2 * v + np.roll(v, 1, a))[core] / (h * h)
        for b in range(a + 1, n):
            r = lambda sa, sb: np.roll(np.roll(v, -sa, a), -sb, b)
            hess[a, b] = (r(1, 1) - r(1, -1) - r(-1, 1) + r(-1, -1))[core] / (4 * h * h)
    g2 = sum(x * x for x in grads)
    gHg = sum(grads[a] * grads[a] * hess[a, a] for a in range(n))
    for a in range(n):
        for b in range(a + 1, n):
            gHg = gHg + 2 * grads[a] * grads[b] * hess[a, b]
    lap = sum(hess[a, a] for a in range(n))
    # -tr(P H P)/|g| = -(lap - g.H.g/|g|^2)/|g|
    Hn = -(lap - gHg / g2) / np.sqrt(g2)
    frac = c - base
    w = [_keys(np.arange(-2, 4) - frac[a]) for a in range(n)]
    out = Hn
    for a in range(n):
        out = np.tensordot(w[a], out, axes=([0], [0]))
    return float(out)


def _quadratic_basis(d):
    """Monomials ``1, x_a, x_a x_b (a <= b)`` evaluated at offsets ``d``."""
    n = d.shape[1]
    cols = [np.ones(len(d))]
    cols += [d[:, a] for a in range(n)]
    cols += [d[:, a] * d[:, b] for a in range(n) for b in range(a, n)]
    return np.stack(cols, axis=1)


def quadratic_fit(f: ScalarField, p, radius: int = 1):
    """Least-squares quadratic through the ``(2 radius + 1)^n`` samples nearest ``p``.

    Returns ``(value, gradient, hessian)`` of the fit evaluated at ``p``.  Exact
    on quadratic fields.
    """
    p = np.asarray(p, dtype=float)
    g = f.grid
    c = np.rint(g.to_index(p)).astype(int)
    lo = c - radius
    hi = c + radius
    if np.any(lo < 0) or np.any(hi > np.array(g.cells) - 1):
        raise DomainError(f"point {p} is too close to the boundary for a quadratic fit")
    offs = np.array(list(product(range(-radius, radius + 1), repeat=g.dim)))
    idx = c + offs
    vals = f.values[tuple(idx.T)]
    d = (g.point(idx) - p) / g.h
    coef, *_ = np.linalg.lstsq(_quadratic_basis(d), vals, rcond=None)
    n = g.dim
    grad = coef[1:1 + n] / g.h
    H = np.zeros((n, n))
    k = 1 + n
    for a in range(n):
        for b in range(a, n):
            if a == b:
                H[a, a] = 2.0 * coef[k]
            else:
                H[a, b] = H[b, a] = coef[k]
            k += 1
    return float(coef[0]), grad, H / (g.h * g.h)


def interpolate_quadratic(f: ScalarField, p) -> float:
    return quadratic_fit(f, p)[0]


def hessian_at(field, p, step: float) -> np.ndarray:
    """Central-difference Hessian of the point values of ``field`` with spacing ``step``.

    Works on anything with ``value(p)``; on grid fields it differentiates the
    interpolant, which smooths sub-cell noise when ``step`` spans several cells.
    """
    p = np.asarray(p, dtype=float)
    n = len(p)
    e = np.eye(n) * step
    c = field.value(p)
    H = np.empty((n, n))
    for a in range(n):
        H[a, a] = (field.value(p + e[a]) - 2.0 * c + field.value(p - e[a])) / step**2
        for b in range(a + 1, n):
            H[a, b] = H[b, a] = (
                field.value(p + e[a] + e[b]) - field.value(p + e[a] - e[b])
                - field.value(p - e[a] + e[b]) + field.value(p - e[a] - e[b])
            ) / (4.0 * step**2)
    return H


# ---------------------------------------------------------------------------
# small symmetric eigenproblems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymEig:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns, orthonormal

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def sym_eig(A, tol: float = 1e-12, max_sweeps: int = 100) -> SymEig:
    """Cyclic Jacobi rotations until the off-diagonal norm drops below ``tol``."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = 0.5 * (A[q, q] - A[p, p]) / A[p, q]
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                A = R.T @ A @ R
                V = V @ R
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return SymEig(w[order], V[:, order])


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def level_curvature(phi: np.ndarray, h: float) -> np.ndarray:
    """``div(grad phi / |grad phi|)`` by central differences (edge rows one-sided)."""
    g = np.gradient(phi, h)
    norm = np.sqrt(sum(c * c for c in g)) + 1e-12
    return sum(np.gradient(c / norm, h, axis=a) for a, c in enumerate(g))


def signed_distance_init(shape: Shape, grid: GridSpec, check_mean_convex: bool = True) -> ScalarField:
    """Signed distance to the boundary of ``shape`` (negative inside) on ``grid``.

    Rejects shapes whose inside misses every sample and, unless disabled,
    shapes whose sampled boundary has clearly negative mean curvature
    (relative to the median, which tolerates stencil noise at corners).
    """
    if shape.dim != grid.dim:
        raise ShapeError(f"shape is {shape.dim}-D but the grid is {grid.dim}-D")
    phi = shape.sdf(grid.coords())
    if not np.any(phi < 0.0):
        raise ShapeError("shape contains no grid sample: empty region")
    if not np.any(phi > 0.0):
        raise ShapeError("shape covers the whole grid: no boundary inside the box")
    if check_mean_convex:
        check_boundary_mean_convex(phi, grid.h)
    return ScalarField(grid, phi, "signed-distance")


def check_boundary_mean_convex(phi: np.ndarray, h: float, rel_tol: float = 0.1) -> float:
    """Minimum sampled mean curvature near the zero set; raises if clearly negative."""
    core = (slice(2, -2),) * phi.ndim
    band = np.abs(phi[core]) < 0.75 * h
    if not band.any():
        raise ShapeError("boundary is not resolved by the grid")
    # curvature of the level set {phi = c} measured with the outward normal;
    # the flow needs H > 0 for the inward normal, i.e. div(n_out) > 0
    kappa = level_curvature(phi, h)[core][band]
    med = np.median(np.abs(kappa))
    lo = float(kappa.min())
    if lo < -rel_tol * med:
        raise ShapeError(f"boundary is not mean-convex: sampled mean curvature {lo:.3g} < 0")
    return lo


# ---------------------------------------------------------------------------
# VTK legacy structured points
# ---------------------------------------------------------------------------


def write_vtk(f: ScalarField, path, title: str = "mcflab scalar field") -> None:
    """Legacy ASCII STRUCTURED_POINTS with one scalar named ``u`` (x fastest)."""
    g = f.grid
    dims = list(g.cells) + [1] * (3 - g.dim)
    origin = list(g.origin) + [0.0] * (3 - g.dim)
    h = g.h
    title = title.replace("\n", " ")[:255]
    # values are stored [i, j, k]; VTK wants x varying fastest
    data = f.values.reshape(g.cells).transpose().reshape(-1)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write("DIMENSIONS {} {} {}\n".format(*dims))
        fh.write("ORIGIN {} {} {}\n".format(*(repr(float(o)) for o in origin)))
        fh.write("SPACING {0} {0} {0}\n".format(repr(float(h))))
        fh.write(f"POINT_DATA {data.size}\n")
        fh.write("SCALARS u double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for start in range(0, data.size, 6):
            fh.write(" ".join("%.17g" % v for v in data[start:start + 6]) + "\n")


def read_vtk(path, kind: str = "arrival-time") -> ScalarField:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().split("\n")
    if not lines[0].startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    if lines[2].strip() != "ASCII" or lines[3].strip() != "DATASET STRUCTURED_POINTS":
        raise ValueError("only ASCII STRUCTURED_POINTS is supported")
    header = {}
    pos = 4
    while pos < len(lines) and not lines[pos].startswith("LOOKUP_TABLE"):
        parts = lines[pos].split()
        if parts:
            header[parts[0]] = parts[1:]
        pos += 1
    dims = [int(v) for v in header["DIMENSIONS"]]
    origin = np.array([float(v) for v in header["ORIGIN"]])
    h = float(header["SPACING"][0])
    if header["SCALARS"][0] != "u":
        raise ValueError("expected a scalar attribute named 'u'")
    data = np.array(" ".join(lines[pos + 1:]).split(), dtype=float)
    dim = 2 if dims[2] == 1 else 3
    cells = tuple(dims[:dim])
    lower = origin[:dim] - 0.5 * h
    upper = lower + h * np.array(cells)
    grid = GridSpec(tuple(lower), tuple(upper), cells)
    values = data.reshape(tuple(reversed(cells))).transpose()
    return ScalarField(grid, values, kind)
