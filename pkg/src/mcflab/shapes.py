"""Initial hypersurfaces given by signed distance functions (negative inside).

Axisymmetric shapes (rotation about the last coordinate axis) also expose
``meridian_sdf(rho, z)`` so the flow can be computed on a 2-D half plane.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree


class ShapeError(ValueError):
    """Shape parameters that do not describe a nonempty mean-convex region."""


class Shape:
    dim: int
    axisymmetric = False

    def sdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def meridian_sdf(self, rho, z):
        raise ShapeError(f"{type(self).__name__} is not axisymmetric")

    def bounds(self):
        """Axis-aligned bounding box ``(lower, upper)`` of the inside region."""
        raise NotImplementedError


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}, got {x.shape}")
    return x


@dataclass(frozen=True)
class Sphere(Shape):
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ShapeError("sphere radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self):
        return len(self.center)

    @property
    def axisymmetric(self):
        return all(c == 0.0 for c in self.center[:-1])

    def sdf(self, x):
        x = _as_points(x, self.dim)
        return np.linalg.norm(x - np.array(self.center), axis=-1) - self.radius

    def meridian_sdf(self, rho, z):
        if not self.axisymmetric:
            raise ShapeError("sphere center is off the symmetry axis")
        return np.hypot(rho, np.asarray(z) - self.center[-1]) - self.radius

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class CylinderSlab(Shape):
    """Round cylinder of radius ``radius`` around a coordinate axis.

    The region is unbounded along ``axis``; on a grid with Neumann edges the
    flow treats it as an infinite cylinder.  In the plane it is a slab.
    """

    radius: float
    axis: int = 2
    dim: int = 3
    center: tuple = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ShapeError("cylinder radius must be positive")
        if not 0 <= self.axis < self.dim:
            raise ShapeError(f"axis {self.axis} out of range for dim {self.dim}")
        c = (0.0,) * self.dim if self.center is None else tuple(float(v) for v in self.center)
        object.__setattr__(self, "center", c)

    @property
    def axisymmetric(self):
        return self.axis == self.dim - 1 and all(c == 0.0 for c in self.center[:-1])

    def sdf(self, x):
        x = _as_points(x, self.dim) - np.array(self.center)
        y = np.delete(x, self.axis, axis=-1)
        return np.linalg.norm(y, axis=-1) - self.radius

    def meridian_sdf(self, rho, z):
        if not self.axisymmetric:
            raise ShapeError("cylinder axis is not the symmetry axis")
        return np.asarray(rho, dtype=float) - self.radius + 0.0 * np.asarray(z)

    def bounds(self):
        c = np.array(self.center)
        lo, hi = c - self.radius, c + self.radius
        lo[self.axis], hi[self.axis] = -np.inf, np.inf
        return lo, hi


@dataclass(frozen=True)
class Torus(Shape):
    """Solid torus around the z axis; mean-convex for ``minor < major / 2``."""

    major: float
    minor: float
    center: tuple = (0.0, 0.0, 0.0)
    dim: int = 3
    axisymmetric: bool = dc_field(default=True, init=False)

    def __post_init__(self):
        if not 0 < self.minor < self.major:
            raise ShapeError("torus needs 0 < minor < major")
        # inner equator: H = 1/r - 1/(R - r)
        if self.minor >= 0.5 * self.major:
            raise ShapeError(
                f"torus with minor/major = {self.minor / self.major:.3f} >= 0.5 is not mean-convex"
            )

    def sdf(self, x):
        x = _as_points(x, 3) - np.array(self.center)
        rho = np.hypot(x[..., 0], x[..., 1])
        return np.hypot(rho - self.major, x[..., 2]) - self.minor

    def meridian_sdf(self, rho, z):
        return np.hypot(np.asarray(rho) - self.major, np.asarray(z) - self.center[2]) - self.minor

    def bounds(self):
        c = np.array(self.center)
        e = np.array([self.major + self.minor] * 2 + [self.minor])
        return c - e, c + e


@dataclass(frozen=True)
class Dumbbell(Shape):
    """Two balls of radius ``radius`` centred at ``z = +-separation`` joined by a neck.

    The neck is the hyperboloid ``rho^2 = neck^2 + alpha z^2`` glued with a
    common tangent to both spheres.  With ``q = radius^2 - neck^2`` the
    tangency forces ``alpha = q / (separation^2 - q)``, and the surface is
    mean-convex exactly when ``alpha < 1``.  Only ``dim`` 3 exists: a planar
    waist has negative curvature.
    """

    separation: float
    radius: float
    neck: float
    dim: int = 3
    samples: int = 20000

    def __post_init__(self):
        R, a, c = self.radius, self.neck, self.separation
        if self.dim != 3:
            raise ShapeError("dumbbell is only mean-convex as a surface of revolution in 3-D")
        if not 0 < a < R:
            raise ShapeError("dumbbell needs 0 < neck < radius")
        q = R * R - a * a
        if c * c <= 2.0 * q:
            raise ShapeError(
                "dumbbell neck is not mean-convex: need separation^2 > 2 (radius^2 - neck^2)"
            )
        alpha = q / (c * c - q)
        zj = c / (1.0 + alpha)
        object.__setattr__(self, "_alpha", alpha)
        object.__setattr__(self, "_zj", zj)
        # dense profile in the (rho, z) half plane, z >= 0 half only
        zs_neck = np.linspace(0.0, zj, self.samples // 2)
        neck_rho = np.sqrt(a * a + alpha * zs_neck**2)
        th0 = np.arctan2(np.sqrt(max(R * R - (zj - c) ** 2, 0.0)), zj - c)
        th = np.linspace(th0, 0.0, self.samples // 2)
        arc = np.stack([R * np.sin(th), c + R * np.cos(th)], axis=1)
        half = np.concatenate([np.stack([neck_rho, zs_neck], axis=1), arc[1:]])
        object.__setattr__(self, "_profile", half)
        object.__setattr__(self, "_tree", cKDTree(half))

    @property
    def alpha(self):
        return self._alpha

    axisymmetric = True

    def profile_rho(self, z):
        """Radius of the surface of revolution at height ``z`` (nan beyond the tips)."""
        z = np.abs(np.asarray(z, dtype=float))
        R, c = self.radius, self.separation
        neck = np.sqrt(self.neck**2 + self._alpha * z**2)
        cap = np.sqrt(np.clip(R * R - (z - c) ** 2, 0.0, None))
        out = np.where(z <= self._zj, neck, cap)
        return np.where(z <= c + R, out, np.nan)

    def mean_curvature_neck(self):
        """Mean curvature (sum of principal curvatures) at the waist, n = 3."""
        return (1.0 - self._alpha) / self.neck

    def meridian_sdf(self, rho, z):
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        rho, z = np.broadcast_arrays(rho, z)
        q = np.stack([np.abs(rho), np.abs(z)], axis=-1).reshape(-1, 2)
        prof = self._profile
        _, idx = self._tree.query(q)
        best = np.full(len(q), np.inf)
        # refine against the two segments adjacent to the nearest sample
        for off in (-1, 0):
            i0 = np.clip(idx + off, 0, len(prof) - 2)
            a = prof[i0]
            b = prof[i0 + 1]
            ab = b - a
            s = np.clip(np.einsum("ij,ij->i", q - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
            d = np.linalg.norm(q - a - s[:, None] * ab, axis=1)
            best = np.minimum(best, d)
        pr = self.profile_rho(q[:, 1])
        inside = np.isfinite(pr) & (q[:, 0] < pr)
        return np.where(inside, -best, best).reshape(rho.shape)

    def sdf(self, x):
        x = _as_points(x, 3)
        return self.meridian_sdf(np.hypot(x[..., 0], x[..., 1]), x[..., 2])

    def bounds(self):
        rmax = self.radius
        zmax = self.separation + self.radius
        lo = np.array([-rmax, -rmax, -zmax])
        return lo, -lo


@dataclass(frozen=True)
class Union(Shape):
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ShapeError("union of nothing")
        dims = {p.dim for p in self.parts}
        if len(dims) != 1:
            raise ShapeError("union parts have different dimensions")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self):
        return self.parts[0].dim

    @property
    def axisymmetric(self):
        return all(p.axisymmetric for p in self.parts)

    def sdf(self, x):
        return np.min([p.sdf(x) for p in self.parts], axis=0)

    def meridian_sdf(self, rho, z):
        return np.min([p.meridian_sdf(rho, z) for p in self.parts], axis=0)

    def bounds(self):
        los, his = zip(*(p.bounds() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)


@dataclass(frozen=True)
class Offset(Shape):
    """Parallel shape ``{sdf < distance}``; positive distance grows the region."""

    base: Shape
    distance: float

    @property
    def dim(self):
        return self.base.dim

    @property
    def axisymmetric(self):
        return self.base.axisymmetric

    def sdf(self, x):
        return self.base.sdf(x) - self.distance

    def meridian_sdf(self, rho, z):
        return self.base.meridian_sdf(rho, z) - self.distance

    def bounds(self):
        lo, hi = self.base.bounds()
        return lo - self.distance, hi + self.distance


SHAPES = {
    "sphere": Sphere,
    "cylinder": CylinderSlab,
    "torus": Torus,
    "dumbbell": Dumbbell,
    "union": Union,
    "offset": Offset,
}
