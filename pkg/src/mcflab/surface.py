"""Level sets of a field and their geometry.

Conventions: ``N = grad u / |grad u|`` points towards larger arrival time,
i.e. into the region the front has yet to sweep.  The second fundamental
form is ``A = -P hess(u) P / |grad u|`` in a tangent frame, which is
positive definite on spheres, and ``H = tr A``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import optimize, special
from skimage import measure

from . import kernels
from .field import ScalarField, level_set_curvature, sym_eig


class NearSingularError(ValueError):
    """|grad u| is below the floor: the point belongs to the singular analysis."""


class MeanConvexityError(ValueError):
    """A level set with non-positive mean curvature where H > 0 is required."""


def _field_of(obj):
    return obj.u if hasattr(obj, "mask") and hasattr(obj, "u") else obj


def grad_floor(f) -> float:
    """Below ``10 h`` in |grad u| curvature stencils are not trusted."""
    return 10.0 * f.h


# ---------------------------------------------------------------------------
# level surfaces
# ---------------------------------------------------------------------------


@dataclass
class LevelSurface:
    level: float
    vertices: np.ndarray   # (V, n)
    elements: np.ndarray   # (E, n) vertex ids: segments in 2-D, triangles in 3-D
    inward: bool = True    # element orientation puts grad u on the positive side
    clipped: bool = False  # the level set reaches the box boundary

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2:
            raise ValueError("vertices must be an (V, n) array")
        k = 2 if self.vertices.shape[1] == 2 else 3
        self.elements = np.asarray(self.elements, dtype=np.int64).reshape(-1, k)
        pts = self.vertices[self.elements]
        self.centroids = pts.mean(axis=1) if len(pts) else np.zeros((0, self.vertices.shape[1]))
        self.areas = _element_measure(pts)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def empty(self) -> bool:
        return len(self.elements) == 0

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    def boundary_count(self) -> int:
        """Number of open ends (2-D vertices with one segment, 3-D edges with one triangle)."""
        if self.empty:
            return 0
        if self.dim == 2:
            counts = np.bincount(self.elements.ravel(), minlength=len(self.vertices))
            return int(np.sum(counts == 1))
        e = np.concatenate([self.elements[:, [0, 1]], self.elements[:, [1, 2]], self.elements[:, [2, 0]]])
        e = np.sort(e, axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return int(np.sum(counts == 1))

    def is_closed(self) -> bool:
        return self.boundary_count() == 0

    def transformed(self, scale: float = 1.0, shift=None, rotation=None) -> "LevelSurface":
        """Image under ``x -> scale * R x + shift`` (level rescaled by ``scale^2``)."""
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        v = scale * v
        if shift is not None:
            v = v + np.asarray(shift)
        return LevelSurface(self.level * scale * scale, v, self.elements, self.inward, self.clipped)

    def write_vtk(self, path, title: str = "mcflab level surface") -> None:
        """Legacy ASCII POLYDATA (LINES in 2-D, POLYGONS in 3-D)."""
        v = self.vertices
        if self.dim == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        key = "LINES" if self.dim == 2 else "POLYGONS"
        k = self.elements.shape[1]
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(title.replace("\n", " ")[:255] + "\n")
            fh.write("ASCII\nDATASET POLYDATA\n")
            fh.write(f"POINTS {len(v)} double\n")
            for p in v:
                fh.write("%.17g %.17g %.17g\n" % tuple(p))
            fh.write(f"{key} {len(self.elements)} {len(self.elements) * (k + 1)}\n")
            for e in self.elements:
                fh.write(f"{k} " + " ".join(str(int(i)) for i in e) + "\n")


def _element_measure(pts):
    if len(pts) == 0:
        return np.zeros(0)
    if pts.shape[1] == 2:
        return np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    a = pts[:, 1] - pts[:, 0]
    b = pts[:, 2] - pts[:, 0]
    if pts.shape[2] == 3:
        return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)
    # triangles in higher dimension: Gram determinant
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    return 0.5 * np.sqrt(np.maximum(aa * bb - ab * ab, 0.0))


# marching squares: corner bits b0=(i,j) b1=(i+1,j) b2=(i+1,j+1) b3=(i,j+1) set
# when the value is at or above the level; edges 0=bottom 1=right 2=top 3=left.
# Segments run so that the region above the level lies to the left.
_MS_TABLE = {
    0: [], 15: [],
    1: [(0, 3)], 2: [(1, 0)], 3: [(1, 3)], 4: [(2, 1)], 6: [(2, 0)], 7: [(2, 3)],
    8: [(3, 2)], 9: [(0, 2)], 11: [(1, 2)], 12: [(3, 1)], 13: [(0, 1)], 14: [(3, 0)],
}
# saddle cells: 5 = b0,b2 above; 10 = b1,b3 above.  The bilinear saddle value
# decides whether the two high corners are connected through the centre.
_MS_SADDLE = {
    (5, True): [(0, 1), (2, 3)],
    (5, False): [(0, 3), (2, 1)],
    (10, True): [(3, 0), (1, 2)],
    (10, False): [(1, 0), (3, 2)],
}


def _marching_squares(v, level, origin, h):
    nx, ny = v.shape
    above = v >= level
    # vertex ids on x-edges ((i,j)-(i+1,j)) and y-edges ((i,j)-(i,j+1))
    cx = above[:-1, :] != above[1:, :]
    cy = above[:, :-1] != above[:, 1:]
    idx_x = np.full(cx.shape, -1, dtype=np.int64)
    idx_y = np.full(cy.shape, -1, dtype=np.int64)
    nxv = int(cx.sum())
    idx_x[cx] = np.arange(nxv)
    idx_y[cy] = np.arange(nxv, nxv + int(cy.sum()))
    ix, jx = np.nonzero(cx)
    fx = (level - v[ix, jx]) / (v[ix + 1, jx] - v[ix, jx])
    iy, jy = np.nonzero(cy)
    fy = (level - v[iy, jy]) / (v[iy, jy + 1] - v[iy, jy])
    verts = np.concatenate([
        np.column_stack([ix + fx, jx.astype(float)]),
        np.column_stack([iy.astype(float), jy + fy]),
    ])
    verts = origin + h * verts
    case = (above[:-1, :-1].astype(int) | (above[1:, :-1] << 1) | (above[1:, 1:] << 2) | (above[:-1, 1:] << 3))
    segs = []
    ci, cj = np.nonzero((case != 0) & (case != 15))
    for i, j in zip(ci.tolist(), cj.tolist()):
        c = int(case[i, j])
        edge_ids = (idx_x[i, j], idx_y[i + 1, j], idx_x[i, j + 1], idx_y[i, j])
        if c in (5, 10):
            a, b, cc, d = v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1]
            den = a + cc - b - d
            centre = (a * cc - b * d) / den if den != 0.0 else 0.25 * (a + b + cc + d)
            pairs = _MS_SADDLE[(c, centre >= level)]
        else:
            pairs = _MS_TABLE[c]
        for e0, e1 in pairs:
            segs.append((edge_ids[e0], edge_ids[e1]))
    return verts, np.array(segs, dtype=np.int64).reshape(-1, 2)


def _value_range(obj):
    f = _field_of(obj)
    vals = f.values
    mask = getattr(obj, "mask", None)
    if mask is not None and mask.any():
        vals = vals[mask]
    return float(vals.min()), float(vals.max())


def extract_level_set(u, t: float) -> LevelSurface:
    """``{u = t}`` by marching squares (2-D, asymptotic decider) or cubes (3-D).

    Vertices are linear edge interpolants.  Segments are oriented with the
    ``u > t`` side on the left; triangles have normals along ``grad u``.
    """
    f = _field_of(u)
    lo, hi = _value_range(u)
    if not lo < t < hi:
        raise ValueError(f"level {t} is outside the open range ({lo}, {hi}) of the field")
    g = f.grid
    v = f.values
    above = v >= t
    clipped = bool(
        any(np.any(np.take(above, 0, axis=a) != np.take(above, 0, axis=a).flat[0]) or
            np.any(np.take(above, -1, axis=a) != np.take(above, -1, axis=a).flat[0])
            for a in range(g.dim))
    )
    if g.dim == 2:
        verts, segs = _marching_squares(v, t, g.origin, g.h)
        surf = LevelSurface(t, verts, segs, True, clipped)
    else:
        if not (above.any() and (~above).any()):
            return LevelSurface(t, np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), True, False)
        # subtract the level in double precision; the library works in float32
        vol = (v - t) / g.h
        verts, faces, _, _ = measure.marching_cubes(vol, 0.0, spacing=(g.h,) * 3,
                                                    gradient_direction="descent",
                                                    allow_degenerate=False)
        surf = LevelSurface(t, verts + g.origin, faces, True, clipped)
    keep = surf.areas > 0.0
    if not keep.all():
        surf = LevelSurface(t, surf.vertices, surf.elements[keep], surf.inward, surf.clipped)
    return surf


def polyline_surface(points: np.ndarray, closed: bool = True, level: float = 0.0) -> LevelSurface:
    """Polyline through ``points`` as a LevelSurface (used for synthetic curves)."""
    n = len(points)
    ids = np.arange(n)
    segs = np.column_stack([ids, np.roll(ids, -1)]) if closed else np.column_stack([ids[:-1], ids[1:]])
    return LevelSurface(level, points, segs, True, not closed)


def parametric_surface(fn, u_range, v_range, nu: int, nv: int, periodic=(False, False), level=0.0):
    """Triangulated image of ``fn(u, v) -> (n,)`` over a rectangle."""
    us = np.linspace(*u_range, nu, endpoint=not periodic[0])
    vs = np.linspace(*v_range, nv, endpoint=not periodic[1])
    U, V = np.meshgrid(us, vs, indexing="ij")
    pts = np.array(fn(U, V))
    pts = np.moveaxis(pts, 0, -1).reshape(-1, pts.shape[0])
    ids = np.arange(nu * nv).reshape(nu, nv)
    iu = np.arange(nu if periodic[0] else nu - 1)
    iv = np.arange(nv if periodic[1] else nv - 1)
    I, J = np.meshgrid(iu, iv, indexing="ij")
    a = ids[I, J]
    b = ids[(I + 1) % nu, J]
    c = ids[(I + 1) % nu, (J + 1) % nv]
    d = ids[I, (J + 1) % nv]
    tris = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return LevelSurface(level, pts, tris, True, not all(periodic))


# ---------------------------------------------------------------------------
# pointwise geometry
# ---------------------------------------------------------------------------


def tangent_frame(N) -> np.ndarray:
    """Orthonormal basis of ``N^perp`` as columns (Householder complement)."""
    N = np.asarray(N, dtype=float)
    n = len(N)
    k = int(np.argmax(np.abs(N)))
    v = N.copy()
    v[k] += np.sign(N[k]) if N[k] != 0 else 1.0
    Q = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return np.delete(Q, k, axis=1)


@dataclass
class SurfaceGeometry:
    point: np.ndarray
    N: np.ndarray
    frame: np.ndarray            # (n, n-1) tangent basis e_1..e_{n-1} as columns
    A: np.ndarray                # (n-1, n-1) second fundamental form in the frame
    H: float
    kappa: np.ndarray            # principal curvatures, ascending
    grad_H: np.ndarray           # (n-1,) tangential gradient in the frame
    lap_H: float
    grad_norm: float             # |grad u|

    @property
    def speed_curvature(self) -> float:
        """``1 / |grad u|``, the normal speed of the front."""
        return 1.0 / self.grad_norm


def _curvature_at(f, p):
    if hasattr(f, "mean_curvature"):
        return f.mean_curvature(p)
    return level_set_curvature(f.gradient(p), f.hessian(p))


def _project_along(f, p, N, level, h, max_iter=30):
    # solve u(p + s N) = level for s by Newton steps with a fixed direction
    value = getattr(f, "taylor_value", f.value)
    s = 0.0
    for _ in range(max_iter):
        q = p + s * N
        r = value(q) - level
        d = float(f.gradient(q) @ N)
        if d == 0.0:
            break
        ds = -r / d
        s += ds
        if abs(ds) < 1e-13 * max(h, 1.0):
            break
    return p + s * N


def surface_geometry(u, p, floor: Optional[float] = None, step: Optional[float] = None,
                     speed: Optional[bool] = None) -> SurfaceGeometry:
    """Normal, frame, second fundamental form and derivatives of ``H`` at ``p``.

    ``grad H`` and ``Delta H`` come from ``H`` sampled at ``p +- step e_i``
    pushed back onto the level set along ``N`` (a graph chart whose metric
    is Euclidean to second order at ``p``).  With ``speed`` those samples
    use ``H = 1 / |grad u|``, which needs only first derivatives and is far
    less noisy on grid data than the curvature.  Defaults: grid fields use
    ``speed`` and step ``4h``; analytic fields use their exact curvature and
    step ``2h``.
    """
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    floor = grad_floor(f) if floor is None else floor
    grid_data = isinstance(f, ScalarField)
    speed = grid_data if speed is None else speed
    step = (4.0 if grid_data else 2.0) * f.h if step is None else step
    g = f.gradient(p)
    gn = float(np.linalg.norm(g))
    if gn < floor:
        raise NearSingularError(f"|grad u| = {gn:.3g} below floor {floor:.3g} at {p}")
    N = g / gn
    E = tangent_frame(N)
    A = -(E.T @ f.hessian(p) @ E) / gn
    A = 0.5 * (A + A.T)
    H = float(np.trace(A))
    level = getattr(f, "taylor_value", f.value)(p)
    m = E.shape[1]
    Hp = np.empty(m)
    Hm = np.empty(m)
    sample = (lambda q: 1.0 / np.linalg.norm(f.gradient(q))) if speed else (lambda q: _curvature_at(f, q))
    for i in range(m):
        Hp[i] = sample(_project_along(f, p + step * E[:, i], N, level, f.h))
        Hm[i] = sample(_project_along(f, p - step * E[:, i], N, level, f.h))
    grad_H = (Hp - Hm) / (2.0 * step)
    Hc = sample(p)
    lap_H = float(np.sum(Hp - 2.0 * Hc + Hm) / step**2)
    kappa = sym_eig(A).values if m > 1 else np.array([A[0, 0]])
    return SurfaceGeometry(p, N, E, A, H, kappa, grad_H, lap_H, gn)


def hessian_reconstruct(geo: SurfaceGeometry) -> np.ndarray:
    """Hessian of ``u`` from level-set geometry (block form in the frame ``(N, e)``)."""
    H = geo.H
    if not H > 0:
        raise MeanConvexityError(f"mean curvature {H:.3g} is not positive")
    AH = geo.A / H
    m = len(geo.grad_H)
    B = np.empty((m + 1, m + 1))
    B[0, 0] = np.sum(AH * AH) + geo.lap_H / H**3
    B[0, 1:] = B[1:, 0] = geo.grad_H / H**2
    B[1:, 1:] = AH
    Q = np.column_stack([geo.N, geo.frame])
    M = -Q @ B @ Q.T
    return 0.5 * (M + M.T)


def two_convexity_ratio(u, samples) -> float:
    """``min (kappa_1 + kappa_2) / H`` over sample points on level sets."""
    worst = np.inf
    for p in np.atleast_2d(samples):
        geo = surface_geometry(u, p)
        if not geo.H > 0:
            raise MeanConvexityError(f"mean curvature {geo.H:.3g} is not positive at {p}")
        k = np.sort(geo.kappa)
        s = k[0] + (k[1] if len(k) > 1 else 0.0)
        worst = min(worst, s / geo.H)
    return float(worst)


# ---------------------------------------------------------------------------
# Gaussian areas and entropy
# ---------------------------------------------------------------------------

TRUNCATION = 8.0  # Gaussian tail cut at |x - p| > 8 sqrt(Lambda)


def gaussian_area(surf: LevelSurface, p, lam: float) -> float:
    """Centroid-rule ``F_{p,Lambda}``: Gaussian-weighted area, ``(4 pi Lambda)^{(n-1)/2}`` normalised."""
    if not lam > 0:
        raise ValueError("Lambda must be positive")
    if surf.empty:
        raise ValueError("surface is empty")
    return float(gaussian_areas(surf, np.atleast_2d(p), np.array([lam]))[0])


def gaussian_areas(surf: LevelSurface, centers, lams) -> np.ndarray:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    lams = np.broadcast_to(np.asarray(lams, dtype=float), (len(centers),))
    return kernels.gaussian_batch(surf.centroids, surf.areas, centers, lams, surf.dim - 1)


def cylinder_gaussian_closed_form(n: int, k: int, p, lam: float, method: str = "bessel") -> float:
    """``F_{p,Lambda}`` of ``C_k = S^{n-k-1}_{sqrt(2(n-k-1))} x R^k`` in ``R^n``.

    The flat factor integrates to one, leaving a Gaussian integral over the
    round sphere in the first ``n-k`` coordinates; with ``a`` the distance of
    (the sphere part of) ``p`` from the origin it is a 1-D integral in the
    polar angle, done either by the modified Bessel function or by adaptive
    quadrature.
    """
    if not (isinstance(n, (int, np.integer)) and isinstance(k, (int, np.integer))) or not 0 <= k <= n - 2:
        raise ValueError(f"need integers 0 <= k <= n - 2, got n={n}, k={k}")
    if not lam > 0:
        raise ValueError("Lambda must be positive")
    m = n - k                                  # ambient dimension of the sphere factor
    rho = np.sqrt(2.0 * (m - 1))
    p = np.asarray(p, dtype=float)
    a = float(np.linalg.norm(p[:m]))
    nu = 0.5 * (m - 2)
    shell = 2.0 * np.pi ** ((m - 1) / 2.0) / special.gamma((m - 1) / 2.0)   # |S^{m-2}|
    pref = rho ** (m - 1) * shell / (4.0 * np.pi * lam) ** ((m - 1) / 2.0)
    kap = rho * a / (2.0 * lam)
    if method == "bessel":
        if kap == 0.0:
            ang = np.sqrt(np.pi) * special.gamma(nu + 0.5) / special.gamma(nu + 1.0)
            return float(pref * np.exp(-(rho * rho + a * a) / (4.0 * lam)) * ang)
        ang = np.sqrt(np.pi) * special.gamma(nu + 0.5) * (2.0 / kap) ** nu * special.ive(nu, kap)
        return float(pref * np.exp(-(rho - a) ** 2 / (4.0 * lam)) * ang)
    if method == "quadrature":
        from scipy import integrate

        def integrand(th):
            return np.exp(-(rho * rho + a * a - 2.0 * rho * a * np.cos(th)) / (4.0 * lam)) * np.sin(th) ** (m - 2)

        val, _ = integrate.quad(integrand, 0.0, np.pi, epsabs=1e-14, epsrel=1e-12, limit=200)
        return float(pref * val)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class EntropySearchCfg:
    centers_per_axis: int = 7
    lam_count: int = 40
    lam_min: Optional[float] = None    # default h^2 (or the mean element size squared)
    lam_max: Optional[float] = None    # default squared box diagonal
    dilation: float = 1.5
    refine_starts: int = 3
    h: Optional[float] = None


@dataclass
class EntropyResult:
    value: float
    center: np.ndarray
    lam: float
    probes: np.ndarray = dc_field(repr=False)   # rows (p..., Lambda, F)

    def write_csv(self, path) -> None:
        n = self.probes.shape[1] - 2
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"p{i}" for i in range(n)] + ["Lambda", "F"])
            for row in self.probes:
                w.writerow(["%.12g" % v for v in row])


def entropy(surf: LevelSurface, cfg: EntropySearchCfg = EntropySearchCfg()) -> EntropyResult:
    """``sup F_{p,Lambda}`` by a coarse ``(p, log Lambda)`` grid plus Nelder-Mead."""
    if surf.empty:
        raise ValueError("surface is empty")
    n = surf.dim
    lo = surf.vertices.min(axis=0)
    hi = surf.vertices.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = 0.5 * cfg.dilation * (hi - lo)
    axes = [np.linspace(mid[a] - half[a], mid[a] + half[a], cfg.centers_per_axis) for a in range(n)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    diag = float(np.linalg.norm(hi - lo)) * cfg.dilation
    h = cfg.h if cfg.h is not None else float(np.mean(surf.areas) ** (1.0 / max(n - 1, 1)))
    lam_min = cfg.lam_min if cfg.lam_min is not None else h * h
    lam_max = cfg.lam_max if cfg.lam_max is not None else diag * diag
    lams = np.geomspace(lam_min, lam_max, cfg.lam_count)
    C = np.repeat(centers, len(lams), axis=0)
    L = np.tile(lams, len(centers))
    F = gaussian_areas(surf, C, L)
    probes = [np.column_stack([C, L, F])]
    order = np.argsort(-F, kind="stable")
    starts = []
    for i in order:
        cand = (C[i], L[i])
        if all(np.linalg.norm(cand[0] - s[0]) > 1e-12 or cand[1] != s[1] for s in starts):
            starts.append(cand)
        if len(starts) >= cfg.refine_starts:
            break
    best = (float(F[order[0]]), C[order[0]], float(L[order[0]]))
    extra = []

    def neg(z):
        lam = float(np.exp(z[-1]))
        val = float(gaussian_areas(surf, z[None, :-1], np.array([lam]))[0])
        extra.append(np.r_[z[:-1], lam, val])
        return -val

    for c0, l0 in starts:
        z0 = np.r_[c0, np.log(l0)]
        step = np.r_[np.maximum(half, 1e-3) / max(cfg.centers_per_axis - 1, 1), 0.5]
        simplex = np.vstack([z0] + [z0 + np.eye(n + 1)[i] * step[i] for i in range(n + 1)])
        res = optimize.minimize(neg, z0, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-10,
                                         "maxiter": 4000, "maxfev": 8000})
        if -res.fun > best[0]:
            best = (float(-res.fun), res.x[:-1].copy(), float(np.exp(res.x[-1])))
    if extra:
        probes.append(np.array(extra))
    return EntropyResult(best[0], np.asarray(best[1]), best[2], np.concatenate(probes))


def write_gaussian_csv(path, centers, lams, values) -> None:
    centers = np.atleast_2d(centers)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"p{i}" for i in range(centers.shape[1])] + ["Lambda", "F"])
        for c, l, v in zip(centers, np.broadcast_to(lams, (len(centers),)), values):
            w.writerow(["%.12g" % x for x in (*c, l, v)])
