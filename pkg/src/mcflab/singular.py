"""Critical points of the arrival time and their classification.

Singular points of the flow are the critical points of ``u``.  This module
finds them on a grid, classifies each by the eigenvalues of its Hessian
(round ``-I/(n-1)``, k-cylindrical ``diag(-I/(n-k-1), 0)``), measures the
Lojasiewicz ratio ``|u - u(p)|^{1/2} / |grad u|``, checks clearing-out above
saddles and fits the singular set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage, optimize
from scipy.spatial import cKDTree

from .field import (
    AnalyticField, DomainError, GridSpec, ScalarField, _fd_hessian, _quadratic_basis,
    gradient_array, hessian_at, interpolate_many, quadratic_fit, sym_eig,
)
from .surface import (
    MeanConvexityError, NearSingularError, _field_of, extract_level_set, grad_floor,
    hessian_reconstruct, surface_geometry, tangent_frame,
)

# arrival-time noise of the level-set solver in units of h^2, measured on the
# 2-D sphere run (RMS of u minus the closed form on |x| <= 0.56, h = 1/128)
NOISE_COEFF = 0.42

# Hessian stencil step in cells.  The computed u has an O(h^2) cusp at an
# extinction point, so a short stencil overestimates the curvature there
# (2h: -1.28, 8h: -1.04 for the exact -1 on the 2-D sphere run).
HESSIAN_STEP = 8.0

ROUND = "Round"
CYLINDRICAL = "Cylindrical"
SADDLE = "Saddle"
UNCLASSIFIED = "Unclassified"
LOCAL_MAX = "LocalMax"

TYPE_I = "TypeI"
TYPE_II = "TypeII"
INDETERMINATE = "Indeterminate"


def evolution_spacing(u) -> float:
    """Grid spacing the arrival time was computed on (meridian spacing for lifted fields)."""
    meta = getattr(u, "meta", None) or {}
    return float(meta.get("meridian_h", meta.get("h", _field_of(u).h)))


def default_u_floor(u) -> float:
    """Plateau tolerance ``3 x noise`` with the noise scaled to the evolution grid."""
    f = _field_of(u)
    if isinstance(f, AnalyticField):
        return 1e-12
    return 3.0 * NOISE_COEFF * evolution_spacing(u) ** 2


# ---------------------------------------------------------------------------
# local sample blocks
# ---------------------------------------------------------------------------


def local_block(u, p, cells: int, strict: bool = True):
    """Grid samples in a cube of ``2 cells + 1`` nodes around ``p``.

    Grid fields are cropped (clipped at the box when ``strict`` is false);
    analytic fields are sampled on a lattice through ``p`` with spacing ``h``.
    Returns ``(block, clipped)``.
    """
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    if isinstance(f, AnalyticField):
        h = f.h
        m = int(cells)
        lower = p - (m + 0.5) * h
        g = GridSpec(tuple(lower), tuple(lower + (2 * m + 1) * h), (2 * m + 1,) * f.dim)
        return f.sample_vectorized(g), False
    g = f.grid
    c = np.array(g.nearest_index(p))
    lo = c - cells
    hi = c + cells + 1
    n = np.array(g.cells)
    clipped = bool(np.any(lo < 0) or np.any(hi > n))
    if clipped and strict:
        raise DomainError(f"point {p} is within {cells} cells of the box boundary")
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, n)
    if np.any(hi - lo < 8):
        raise DomainError(f"point {p} is too close to the box boundary")
    sub = GridSpec(tuple(np.asarray(g.lower) + lo * g.h), tuple(np.asarray(g.lower) + hi * g.h), tuple(hi - lo))
    return ScalarField(sub, f.values[tuple(slice(a, b) for a, b in zip(lo, hi))]), clipped


def _block_samples(block: ScalarField):
    """Positions, values and central-difference gradients of the block interior."""
    n = block.dim
    core = (slice(1, -1),) * n
    grad = gradient_array(block.values, block.h)
    X = block.grid.coords()[core].reshape(-1, n)
    V = block.values[core].reshape(-1)
    G = np.moveaxis(grad, 0, -1)[core].reshape(-1, n)
    return X, V, G


def center_value(u, p) -> float:
    """``u(p)`` from the local quadratic fit (exact on quadratics)."""
    f = _field_of(u)
    if isinstance(f, AnalyticField):
        return f.value(p)
    return quadratic_fit(f, p)[0]


def _sphere_directions(n: int, count: int) -> np.ndarray:
    if n == 2:
        th = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci sphere: deterministic, nearly uniform
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(1.0 - z * z)
    th = np.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------


def _stencil_offsets(n: int) -> np.ndarray:
    return np.array(np.meshgrid(*[[-1, 0, 1]] * n, indexing="ij")).reshape(n, -1).T


FLAT_RATIO = 0.03  # |g2| curvature below this fraction of the stiffest counts as flat


def _newton_steps(g2: np.ndarray, idx: np.ndarray):
    """Newton steps (in cells) of quadratics fitted to ``g2`` on 3^n stencils.

    Directions whose curvature is within ``FLAT_RATIO`` of zero relative to
    the stiffest are treated as flat, so along a curve of critical points
    the step is transverse only.  Returns ``(steps, stiffest, ridge)`` where
    ``ridge`` marks stencils with a clearly negative curvature.
    """
    n = g2.ndim
    offs = _stencil_offsets(n)
    pinv = np.linalg.pinv(_quadratic_basis(offs.astype(float)))
    vals = g2[tuple((idx[:, None, :] + offs[None]).transpose(2, 0, 1))]   # (m, 3^n)
    coef = vals @ pinv.T
    grad = coef[:, 1:1 + n]
    Hm = np.zeros((len(idx), n, n))
    k = 1 + n
    for a in range(n):
        for b in range(a, n):
            if a == b:
                Hm[:, a, a] = 2.0 * coef[:, k]
            else:
                Hm[:, a, b] = Hm[:, b, a] = coef[:, k]
            k += 1
    w, V = np.linalg.eigh(Hm)
    wmax = np.maximum(w[:, -1], 1e-300)
    stiff = w > FLAT_RATIO * wmax[:, None]
    ridge = np.any(w < -FLAT_RATIO * wmax[:, None], axis=1)
    inv = np.where(stiff, 1.0 / np.where(stiff, w, 1.0), 0.0)
    proj = np.einsum("mji,mj->mi", V, grad) * inv
    return -np.einsum("mij,mj->mi", V, proj), wmax, ridge


def _thin(P: np.ndarray, score: np.ndarray, h: float) -> List[np.ndarray]:
    """Keep points at least ``2h`` apart.

    Compact groups keep their best-scoring point; elongated groups (curves
    of critical points) are walked in chain order so consecutive kept points
    stay about ``2h`` apart with no larger gaps.
    """
    out: List[np.ndarray] = []
    for grp in cluster_points(P, 4.0 * h):
        Q = P[grp]
        if len(Q) == 1 or np.max(np.linalg.norm(Q - Q.mean(axis=0), axis=1)) <= 2.0 * h:
            out.append(Q[int(np.argmin(score[grp]))])
            continue
        order, _ = _order_chain(Q, 2.0 * h)
        kept = [Q[order[0]]]
        for i in order[1:]:
            if np.min(np.linalg.norm(np.array(kept) - Q[i], axis=1)) > 2.0 * h:
                kept.append(Q[i])
        out.extend(kept)
    return out


def detect_critical_points(u, floor: Optional[float] = None, margin: int = 6) -> List[np.ndarray]:
    """Cells where ``|grad u| < floor`` and the local ``|grad u|^2`` model has its valley.

    A cell qualifies when it is a 3^n-local minimum of ``|grad u|^2`` or
    when the Newton step of the quadratic fitted to the 3^n stencil stays
    inside it, no direction curves down, and ``|grad u|`` is below half a
    cell's worth of the stiffest Hessian eigenvalue.  The second rule samples
    curves of critical points every cell instead of only at noise-driven
    minima.  Points are refined by that step,
    thinned to ``2h`` spacing and returned
    sorted by location.  Only reached cells whose neighbourhood was reached
    count, at least ``margin`` cells from the box boundary.
    """
    f = _field_of(u)
    g = f.grid
    h = g.h
    floor = grad_floor(f) if floor is None else floor
    G = gradient_array(f.values, h)
    g2 = np.sum(G * G, axis=0)
    mask = getattr(u, "mask", None)
    ok = np.ones(g.shape, dtype=bool) if mask is None else ndimage.binary_erosion(mask, np.ones((3,) * g.dim))
    inner = np.zeros(g.shape, dtype=bool)
    inner[(slice(margin, -margin),) * g.dim] = True
    low = (g2 < floor * floor) & ok & inner
    idx = np.argwhere(low)
    if len(idx) == 0:
        return []
    local_min = (g2 <= ndimage.minimum_filter(g2, size=3, mode="nearest"))[tuple(idx.T)]
    steps, wmax, ridge = _newton_steps(g2, idx)
    # g2 ~ (lambda h)^2 d^2 at d cells off the critical set, wmax = 2 (lambda h)^2;
    # the nearest cell centre is at most sqrt(n - 1) / 2 cells off a curve
    valley = np.all(np.abs(steps) <= 0.75, axis=1) & ~ridge & (g2[tuple(idx.T)] <= wmax / 4.0)
    keep = local_min | valley
    idx, steps = idx[keep], np.clip(steps[keep], -1.0, 1.0)
    P = g.point(idx) + steps * h
    pts = _thin(P, g2[tuple(idx.T)], h)
    pts.sort(key=lambda q: tuple(np.round(q / h, 6)))
    return pts


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class ClassifyCfg:
    null_tol_factor: float = 0.15   # null_tol = factor / (n - 1)
    shape_tol: float = 0.15         # relative match against -1/(n-k-1)
    hess_step: float = HESSIAN_STEP # Hessian stencil step, cells
    shape_radius: float = 5.0       # sign-pattern sphere, cells
    shape_samples: int = 192
    u_floor: Optional[float] = None


@dataclass
class SingularPointRecord:
    location: np.ndarray
    value: float
    grad_norm: float
    hessian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    nullity: int
    classification: str
    axis: Optional[np.ndarray]      # (n, k) orthonormal columns, or None
    local_shape: str
    sign_counts: tuple = (0, 0)     # samples above / below u(p) beyond the floor

    @property
    def dim(self) -> int:
        return len(self.location)

    @property
    def label(self) -> str:
        if self.classification == CYLINDRICAL:
            return f"Cylindrical({self.nullity})"
        return self.classification

    def to_text(self) -> str:
        f = lambda a: " ".join("%.9g" % v for v in np.ravel(a))
        lines = [
            "[singular_point]",
            f"location = {f(self.location)}",
            f"arrival_value = {self.value:.12g}",
            f"grad_norm = {self.grad_norm:.6g}",
            f"hessian = {f(self.hessian)}",
            f"eigenvalues = {f(self.eigenvalues)}",
            f"nullity = {self.nullity}",
            f"classification = {self.label}",
            f"axis = {f(self.axis) if self.axis is not None else 'none'}",
            f"local_shape = {self.local_shape}",
            f"sign_counts = {self.sign_counts[0]} {self.sign_counts[1]}",
        ]
        return "\n".join(lines) + "\n"


def templates_separated(n: int, shape_tol: float = 0.15) -> bool:
    """Whether the bands ``|lambda - t| <= shape_tol |t|`` around the templates ``t = 1/(n-k-1)`` are disjoint."""
    vals = [1.0 / (n - k - 1) for k in range(n - 1)]
    return all(abs(a - b) > shape_tol * (a + b) for i, a in enumerate(vals) for b in vals[i + 1:])


def classify_hessian(Hm, cfg: ClassifyCfg = ClassifyCfg()):
    """``(classification, nullity, axis, eig)`` from the Hessian alone."""
    n = Hm.shape[0]
    eig = sym_eig(Hm)
    lam = eig.values
    null_tol = cfg.null_tol_factor / (n - 1)
    null = np.abs(lam) < null_tol
    k = int(null.sum())
    rest = lam[~null]
    axis = eig.vectors[:, null] if k else None
    if k > n - 2:
        return UNCLASSIFIED, k, axis, eig
    target = -1.0 / (n - k - 1)
    if np.all(np.abs(rest - target) <= cfg.shape_tol * abs(target)):
        return (ROUND if k == 0 else CYLINDRICAL), k, axis, eig
    return UNCLASSIFIED, k, axis, eig


def local_shape(u, p, radius: float, u_floor: float, count: int = 192, center: Optional[float] = None):
    """Sign pattern of ``u - u(p)`` on the sphere of ``radius`` around ``p``.

    All samples at most ``u_floor`` above ``u(p)`` give ``LocalMax``; any
    sample clearly above gives ``Saddle`` (u has no interior local minima,
    so a rise in some direction means a saddle).
    """
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    up = center_value(f, p) if center is None else center
    pts = p + radius * _sphere_directions(len(p), count)
    vals = interpolate_many(f, pts)
    if np.any(np.isnan(vals)):
        raise DomainError(f"sign sphere around {p} leaves the box")
    d = vals - up
    above = int(np.sum(d > u_floor))
    below = int(np.sum(d < -u_floor))
    return (SADDLE if above else LOCAL_MAX), (above, below)


def classify_singularity(u, p, cfg: ClassifyCfg = ClassifyCfg()) -> SingularPointRecord:
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    h = f.h
    n = len(p)
    reach = max(cfg.shape_radius, 2 * cfg.hess_step) + 2
    if isinstance(f, ScalarField) and not f.grid.contains(p, margin=reach):
        raise DomainError(f"point {p} is too close to the box boundary for classification")
    u_floor = default_u_floor(u) if cfg.u_floor is None else cfg.u_floor
    Hm = hessian_at(f, p, cfg.hess_step * h)
    cls, k, axis, eig = classify_hessian(Hm, cfg)
    up = center_value(f, p)
    shape, counts = local_shape(f, p, cfg.shape_radius * h, u_floor, cfg.shape_samples, up)
    if shape == SADDLE:
        cls = SADDLE
    gn = float(np.linalg.norm(f.gradient(p)))
    return SingularPointRecord(p, up, gn, Hm, eig.values, eig.vectors, k, cls, axis, shape, counts)


def classify_all(u, points: Sequence, cfg: ClassifyCfg = ClassifyCfg()) -> List[SingularPointRecord]:
    out = []
    for p in points:
        try:
            out.append(classify_singularity(u, p, cfg))
        except DomainError:
            continue
    return out


def interior_local_minima(u, mask: Optional[np.ndarray] = None, tol: Optional[float] = None,
                          margin: int = 1) -> np.ndarray:
    """Grid points lying more than ``tol`` below all 3^n neighbours.

    The arrival time of a mean-convex flow has none; ``mask`` restricts the
    search to reached cells.  Returns the positions found.
    """
    f = _field_of(u)
    if not isinstance(f, ScalarField):
        raise TypeError("needs a grid field")
    tol = default_u_floor(u) if tol is None else tol
    v = f.values
    n = v.ndim
    core = tuple(slice(margin, s - margin) for s in v.shape)
    c = v[core]
    lowest = np.full(c.shape, np.inf)
    for off in _stencil_offsets(n):
        if not off.any():
            continue
        sl = tuple(slice(margin + o, s - margin + o) for o, s in zip(off, v.shape))
        lowest = np.minimum(lowest, v[sl])
    hit = c < lowest - tol
    if mask is None:
        mask = getattr(u, "mask", None)
    if mask is not None:
        hit &= np.asarray(mask)[core]
    idx = np.argwhere(hit) + margin
    return f.grid.origin + f.h * idx


# ---------------------------------------------------------------------------
# Lojasiewicz ratio
# ---------------------------------------------------------------------------


@dataclass
class LojasiewiczCfg:
    r0_cells: float = 16.0
    r_min_cells: float = 2.0
    min_samples: int = 10
    stability_factor: float = 1.3
    divergence_factor: float = 1.5
    u_floor: Optional[float] = None


@dataclass
class LojasiewiczReport:
    center: np.ndarray
    radii: np.ndarray
    sup: np.ndarray          # s_j, nan where skipped
    counts: np.ndarray
    skipped: list
    beta: float
    verdict: str
    u_floor: float

    def to_text(self) -> str:
        lines = [
            "[lojasiewicz]",
            "center = " + " ".join("%.9g" % v for v in self.center),
            f"verdict = {self.verdict}",
            f"beta = {self.beta:.6g}",
            f"u_floor = {self.u_floor:.6g}",
        ]
        for r, s, c in zip(self.radii, self.sup, self.counts):
            lines.append(f"s({r:.6g}) = {s:.6g}  # {c} samples")
        if self.skipped:
            lines.append("skipped_radii = " + " ".join("%.6g" % r for r in self.skipped))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "s", "samples"])
            for r, s, c in zip(self.radii, self.sup, self.counts):
                w.writerow(["%.12g" % r, "%.12g" % s, int(c)])


def lojasiewicz_verdict(sup: np.ndarray, stability: float = 1.3, divergence: float = 1.5) -> str:
    """Type I if the ratio settles at the smallest radii, type II if it keeps growing."""
    s = np.asarray(sup, dtype=float)
    s = s[np.isfinite(s)]
    if len(s) < 3:
        return INDETERMINATE
    last = s[-3:]
    if last.max() <= stability * np.median(s):
        return TYPE_I
    if last[1] >= divergence * last[0] and last[2] >= divergence * last[1]:
        return TYPE_II
    return INDETERMINATE


def lojasiewicz_analyze(u, p, cfg: LojasiewiczCfg = LojasiewiczCfg()) -> LojasiewiczReport:
    """Supremum of ``|u - u(p)|^{1/2} / |grad u|`` over dyadic shells around ``p``.

    Shell ``j`` holds the grid points with ``r_{j+1} < |x - p| <= r_j`` (the
    innermost is the full ball), so ``s_j`` tracks the ratio as ``x -> p``
    rather than being dominated by the innermost samples.
    """
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    h = f.h
    u_floor = default_u_floor(u) if cfg.u_floor is None else cfg.u_floor
    J = int(math.floor(math.log2(cfg.r0_cells / cfg.r_min_cells) + 1e-9))
    radii = cfg.r0_cells * h * 2.0 ** -np.arange(J + 1)
    block, _ = local_block(f, p, int(math.ceil(cfg.r0_cells)) + 2, strict=False)
    X, V, G = _block_samples(block)
    d = np.linalg.norm(X - p, axis=1)
    up = center_value(f, p)
    du = np.abs(V - up)
    gn = np.linalg.norm(G, axis=1)
    admissible = (du >= u_floor) & (gn > 0)
    ratio = np.full(len(d), np.nan)
    ratio[admissible] = np.sqrt(du[admissible]) / gn[admissible]
    # radii whose ball leaves the (clipped) block are skipped
    lo = block.grid.origin + block.h
    hi = block.grid.origin + (np.array(block.grid.cells) - 2) * block.h
    sup = np.full(len(radii), np.nan)
    counts = np.zeros(len(radii), dtype=int)
    skipped = []
    for j, r in enumerate(radii):
        inner = radii[j + 1] if j + 1 < len(radii) else -1.0
        sel = (d <= r + 1e-12 * h) & (d > inner + 1e-12 * h) & admissible
        counts[j] = int(sel.sum())
        if np.any(p - r < lo - 1e-12) or np.any(p + r > hi + 1e-12) or counts[j] < cfg.min_samples:
            skipped.append(float(r))
            continue
        sup[j] = float(np.max(ratio[sel]))
    beta = float(np.nanmax(sup)) if np.any(np.isfinite(sup)) else float("nan")
    verdict = lojasiewicz_verdict(sup, cfg.stability_factor, cfg.divergence_factor)
    return LojasiewiczReport(p, radii, sup, counts, skipped, beta, verdict, u_floor)


def contradiction_flag(record: SingularPointRecord, report: LojasiewiczReport) -> bool:
    """A saddle with a type I verdict cannot occur for the level set flow."""
    return record.classification == SADDLE and report.verdict == TYPE_I


# ---------------------------------------------------------------------------
# clearing out
# ---------------------------------------------------------------------------


@dataclass
class ClearingOutResult:
    t: np.ndarray
    cleared: np.ndarray       # bool
    margin: np.ndarray        # distance to the nearest sample at or above the level, minus M sqrt(t)
    evaluable: np.ndarray     # bool
    M: float
    tolerance: float

    def all_cleared(self) -> bool:
        return bool(np.all(self.evaluable) and np.all(self.cleared) and np.all(self.margin > 0))


def clearing_out_check(u, p, M: float, t_list, tolerance: Optional[float] = None) -> ClearingOutResult:
    """Whether ``{u = u(p) + t}`` avoids ``B_{M sqrt t}(p)`` for each offset ``t``."""
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    h = f.h
    tol = default_u_floor(u) if tolerance is None else tolerance
    up = center_value(f, p)
    ts = np.asarray(t_list, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("clearing-out offsets must be positive")
    cleared = np.zeros(len(ts), dtype=bool)
    margin = np.full(len(ts), np.nan)
    evaluable = np.ones(len(ts), dtype=bool)
    for i, t in enumerate(ts):
        R = M * math.sqrt(t)
        reach = R + 4 * h
        cells = int(math.ceil(reach / h)) + 1
        try:
            block, clipped = local_block(f, p, cells, strict=isinstance(f, ScalarField))
        except DomainError:
            evaluable[i] = False
            continue
        X = block.grid.coords().reshape(-1, len(p))
        V = block.values.reshape(-1)
        d = np.linalg.norm(X - p, axis=1)
        level = up + t
        near = V >= level - tol
        inside = d <= R
        cleared[i] = not np.any(near & inside)
        dist = float(d[near].min()) if near.any() else np.inf
        if not near.any() or dist > reach:
            # nothing at or above the level in the block: the level set is farther than the block
            dist = max(dist, reach) if np.isfinite(dist) else reach
        margin[i] = dist - R
    return ClearingOutResult(ts, cleared, margin, evaluable, M, tol)


# ---------------------------------------------------------------------------
# cylindrical scale
# ---------------------------------------------------------------------------


def _axis_coordinates(X, p, axis):
    axis = np.atleast_2d(np.asarray(axis, dtype=float).T).T  # (n, k)
    Q, _ = np.linalg.qr(axis)
    D = X - p
    z = D @ Q
    y = D - z @ Q.T
    return y, z


def cylinder_deviation(u, p, axis, phi: float, r: float, taus, n: int):
    """Worst position and normal deviation of level sets from the model cylinder.

    Returns ``(pos_ratio, normal_angle, samples)``: the largest
    ``||y| - rho_tau| / sqrt(tau)`` and the largest angle between ``grad u``
    and ``-y / |y|`` over level-set vertices in ``B_r(p)`` outside the cone
    ``|y| <= |z| tan phi``.
    """
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    h = f.h
    k = np.atleast_2d(np.asarray(axis).T).T.shape[1]
    up = center_value(f, p)
    block, _ = local_block(f, p, int(math.ceil(r / h)) + 2, strict=isinstance(f, ScalarField))
    worst_pos = 0.0
    worst_ang = 0.0
    samples = 0
    for tau in taus:
        level = up - tau
        try:
            surf = extract_level_set(block, level)
        except ValueError:
            continue
        V = surf.vertices
        if len(V) == 0:
            continue
        y, z = _axis_coordinates(V, p, axis)
        ry = np.linalg.norm(y, axis=1)
        rz = np.linalg.norm(z, axis=1)
        sel = (np.linalg.norm(V - p, axis=1) <= r) & (ry > rz * math.tan(phi)) & (ry > 0)
        if not sel.any():
            continue
        rho = math.sqrt(2.0 * (n - k - 1) * tau)
        pos = np.abs(ry[sel] - rho) / math.sqrt(tau)
        worst_pos = max(worst_pos, float(pos.max()))
        Vs = V[sel]
        ys = y[sel] / ry[sel, None]
        grads = np.array([block.gradient(q) if block.valid(q) else np.full(n, np.nan) for q in Vs])
        gn = np.linalg.norm(grads, axis=1)
        ok = gn > 0
        cosang = np.clip(-np.einsum("ij,ij->i", grads[ok], ys[ok]) / gn[ok], -1.0, 1.0)
        if len(cosang):
            worst_ang = max(worst_ang, float(np.arccos(cosang).max()))
        samples += int(sel.sum())
    return worst_pos, worst_ang, samples


def cylindrical_scale(u, p, axis, phi: float = 0.3, eps: float = 0.05, r_max: Optional[float] = None,
                      levels: int = 4) -> float:
    """Largest dyadic ``r <= r_max`` on which the level sets are ``eps``-cylindrical outside the cone.

    Level offsets ``tau = u(p) - t`` are chosen so the model radius
    ``sqrt(2 (n-k-1) tau)`` runs geometrically from ``3h`` to ``r/2``.
    Returns 0 when no radius passes.
    """
    f = _field_of(u)
    h = f.h
    n = f.dim
    axis = np.atleast_2d(np.asarray(axis, dtype=float).T).T
    k = axis.shape[1]
    if not 0 < phi < 0.5 * math.pi or eps <= 0:
        raise ValueError("need 0 < phi < pi/2 and eps > 0")
    r_max = 32.0 * h if r_max is None else r_max
    r = r_max
    while r >= 8.0 * h:
        rho = np.geomspace(3.0 * h, 0.5 * r, levels)
        taus = rho**2 / (2.0 * (n - k - 1))
        try:
            pos, ang, count = cylinder_deviation(f, p, axis, phi, r, taus, n)
        except DomainError:
            r *= 0.5
            continue
        if count > 0 and pos <= eps and ang <= eps:
            return float(r)
        r *= 0.5
    return 0.0


# ---------------------------------------------------------------------------
# singular set fits
# ---------------------------------------------------------------------------


def cluster_points(points, link: float) -> List[np.ndarray]:
    """Single-linkage clusters at distance ``link``; each as sorted index arrays."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(P)
    parent = np.arange(m)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(cKDTree(P).query_pairs(link)):
        a, b = find(i), find(j)
        if a != b:
            parent[max(a, b)] = min(a, b)
    roots = np.array([find(i) for i in range(m)])
    return [np.flatnonzero(roots == r) for r in np.unique(roots)]


@dataclass
class CircleFit:
    center: np.ndarray
    normal: np.ndarray
    radius: float
    residuals: np.ndarray

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))


def fit_circle(points) -> CircleFit:
    """Least-squares circle: best plane by PCA, then an algebraic fit refined geometrically."""
    P = np.asarray(points, dtype=float)
    c0 = P.mean(axis=0)
    n = P.shape[1]
    if n == 3:
        _, _, Vt = np.linalg.svd(P - c0)
        normal = Vt[2]
        B = Vt[:2].T
    else:
        normal = np.zeros(2)
        B = np.eye(2)
    q = (P - c0) @ B
    A = np.column_stack([2 * q, np.ones(len(q))])
    sol, *_ = np.linalg.lstsq(A, np.sum(q * q, axis=1), rcond=None)
    a0 = sol[:2]
    r0 = math.sqrt(max(sol[2] + a0 @ a0, 0.0))

    def resid(z):
        return np.linalg.norm(q - z[:2], axis=1) - z[2]

    z = optimize.least_squares(resid, np.r_[a0, r0]).x
    center = c0 + B @ z[:2]
    # distance from each point to the circle in 3-D (includes out-of-plane offset)
    D = P - center
    if n == 3:
        off = D @ normal
        inplane = np.linalg.norm(D - np.outer(off, normal), axis=1)
        res = np.hypot(inplane - z[2], off)
    else:
        res = np.abs(np.linalg.norm(D, axis=1) - z[2])
    return CircleFit(center, normal, float(z[2]), res)


@dataclass
class SingularSetModel:
    kind: str                       # "point", "curve" or "unclassified"
    points: np.ndarray              # input locations
    nullity: Optional[int]
    residuals: np.ndarray           # per input point
    angles: np.ndarray              # per input point tangent/axis angle (curves only)
    center: Optional[np.ndarray] = None
    polyline: Optional[np.ndarray] = None
    tangents: Optional[np.ndarray] = None
    closed: bool = False
    circle: Optional[CircleFit] = None
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def rms_residual(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2))) if len(self.residuals) else 0.0

    @property
    def mean_angle(self) -> float:
        return float(np.mean(self.angles)) if len(self.angles) else 0.0

    def to_text(self) -> str:
        lines = [
            "[singular_set]",
            f"kind = {self.kind}",
            f"points = {len(self.points)}",
            f"nullity = {self.nullity}",
            f"rms_residual = {self.rms_residual:.6g}",
        ]
        if self.kind == "point":
            lines.append("center = " + " ".join("%.9g" % v for v in self.center))
        if self.kind == "curve":
            lines.append(f"closed = {self.closed}")
            lines.append(f"mean_axis_angle_deg = {math.degrees(self.mean_angle):.4g}")
            if self.circle is not None:
                lines.append("circle_center = " + " ".join("%.9g" % v for v in self.circle.center))
                lines.append(f"circle_radius = {self.circle.radius:.9g}")
                lines.append(f"circle_rms = {self.circle.rms:.6g}")
        for k, v in sorted(self.diagnostics.items()):
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _mls_project(P, radius, iters=3):
    """Moving-least-squares projection of each point onto its local principal line."""
    tree = cKDTree(P)
    Q = P.copy()
    T = np.zeros_like(P)
    for _ in range(iters):
        newQ = np.empty_like(Q)
        for i, q in enumerate(Q):
            nb = tree.query_ball_point(q, radius)
            X = P[nb]
            w = np.exp(-np.sum((X - q) ** 2, axis=1) / (0.5 * radius) ** 2)
            c = (w[:, None] * X).sum(axis=0) / w.sum()
            C = ((X - c) * w[:, None]).T @ (X - c)
            vals, vecs = np.linalg.eigh(C)
            t = vecs[:, -1]
            T[i] = t
            newQ[i] = c + ((P[i] - c) @ t) * t
        Q = newQ
    return Q, T


def _order_chain(Q, link):
    """Nearest-neighbour chain through the projected points."""
    m = len(Q)
    c = Q.mean(axis=0)
    _, _, Vt = np.linalg.svd(Q - c)
    start = int(np.argmin((Q - c) @ Vt[0]))
    order = [start]
    left = set(range(m)) - {start}
    while left:
        last = Q[order[-1]]
        rest = np.fromiter(left, dtype=int)
        j = int(rest[np.argmin(np.linalg.norm(Q[rest] - last, axis=1))])
        order.append(j)
        left.discard(j)
    closed = m > 3 and np.linalg.norm(Q[order[0]] - Q[order[-1]]) <= link
    return np.array(order), bool(closed)


def fit_singular_set(records: Sequence[SingularPointRecord], h: float, link_cells: float = 4.0,
                     mls_cells: float = 6.0) -> SingularSetModel:
    """Point or curve model for one connected cluster of singular points."""
    if not records:
        raise ValueError("need at least one record")
    P = np.array([r.location for r in records])
    if len(cluster_points(P, link_cells * h)) != 1:
        raise ValueError("records do not form one connected cluster")
    ks = {r.nullity for r in records}
    labels = sorted({r.label for r in records})
    if len(ks) != 1:
        return SingularSetModel("unclassified", P, None, np.zeros(len(P)), np.zeros(0),
                                diagnostics={"nullities": sorted(ks), "labels": labels})
    k = ks.pop()
    if k == 0 or len(P) < 3:
        c = P.mean(axis=0)
        return SingularSetModel("point", P, k, np.linalg.norm(P - c, axis=1), np.zeros(0), center=c,
                                diagnostics={"labels": labels})
    if k != 1:
        return SingularSetModel("unclassified", P, k, np.zeros(len(P)), np.zeros(0),
                                diagnostics={"labels": labels, "note": "nullity >= 2 reported raw"})
    Q, T = _mls_project(P, mls_cells * h)
    residuals = np.linalg.norm(P - Q, axis=1)
    angles = np.empty(len(P))
    for i, r in enumerate(records):
        a = r.axis[:, 0] if r.axis is not None and r.axis.shape[1] >= 1 else None
        angles[i] = np.nan if a is None else math.acos(min(1.0, abs(float(T[i] @ a))))
    order, closed = _order_chain(Q, link_cells * h)
    circle = fit_circle(P) if closed and len(P) >= 5 else None
    return SingularSetModel("curve", P, 1, residuals, angles, polyline=Q[order], tangents=T,
                            closed=closed, circle=circle, diagnostics={"labels": labels})


def fit_all(records: Sequence[SingularPointRecord], h: float, link_cells: float = 4.0) -> List[SingularSetModel]:
    if not records:
        return []
    P = np.array([r.location for r in records])
    return [fit_singular_set([records[i] for i in idx], h, link_cells) for idx in cluster_points(P, link_cells * h)]


# ---------------------------------------------------------------------------
# slice maxima and Hessian continuity
# ---------------------------------------------------------------------------


@dataclass
class SliceProfile:
    z: np.ndarray
    umax: np.ndarray
    argmax: np.ndarray
    truncated: bool


def slice_max_profile(u, p, axis, interval, radius: float, slices: int = 21,
                      rings: int = 8, spokes: int = 24) -> SliceProfile:
    """``z -> max u`` over disks of ``radius`` orthogonal to ``axis`` centred on ``p + z axis``."""
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    a = np.asarray(axis, dtype=float).reshape(-1)
    a = a / np.linalg.norm(a)
    n = len(p)
    E = tangent_frame(a)
    if n == 2:
        s = np.linspace(-1.0, 1.0, 2 * rings + 1)
        disk = np.outer(s, E[:, 0])
    else:
        rr = np.linspace(0.0, 1.0, rings + 1)[1:]
        th = 2 * np.pi * np.arange(spokes) / spokes
        pol = np.concatenate([[[0.0, 0.0]], (rr[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)])
        disk = pol @ E.T
    disk = radius * disk
    zs = np.linspace(interval[0], interval[1], slices)
    umax = np.full(slices, np.nan)
    arg = np.full((slices, n), np.nan)
    truncated = False
    for i, z in enumerate(zs):
        c = p + z * a
        vals = interpolate_many(f, c + disk)
        if np.any(np.isnan(vals)):
            truncated = True
            continue
        j = int(np.argmax(vals))
        w0 = (disk[j] @ E) / radius

        def neg(w):
            if np.linalg.norm(w) > 1.0:
                return -vals[j] + np.linalg.norm(w) - 1.0
            return -float(interpolate_many(f, c + radius * (E @ w))[0])

        res = optimize.minimize(neg, w0, method="Nelder-Mead",
                                options={"xatol": 1e-3, "fatol": 1e-12, "maxiter": 200})
        best = max(vals[j], -res.fun)
        umax[i] = best
        arg[i] = c + radius * (E @ (res.x if -res.fun >= vals[j] else w0))
    return SliceProfile(zs, umax, arg, truncated)


@dataclass
class ContinuityModulus:
    radii: np.ndarray
    modulus: np.ndarray
    samples: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "modulus", "samples"])
            for r, m, c in zip(self.radii, self.modulus, self.samples):
                w.writerow(["%.12g" % r, "%.12g" % m, int(c)])


def hessian_continuity_modulus(u, p, radii, hp=None, max_samples: int = 400,
                               hess_step: float = HESSIAN_STEP) -> ContinuityModulus:
    """``max ||hess u(x) - hess u(p)||_2`` over sampled ``x`` in ``B_r(p)``.

    Where ``|grad u|`` clears the floor the Hessian comes from level-set
    geometry, elsewhere from central differences of the point values.
    """
    f = _field_of(u)
    p = np.asarray(p, dtype=float)
    h = f.h
    floor = grad_floor(f)
    hp = hessian_at(f, p, hess_step * h) if hp is None else np.asarray(hp)
    radii = np.asarray(radii, dtype=float)
    block, _ = local_block(f, p, int(math.ceil(radii.max() / h)) + 2, strict=False)
    X = block.grid.coords().reshape(-1, f.dim)
    d = np.linalg.norm(X - p, axis=1)
    out = np.zeros(len(radii))
    counts = np.zeros(len(radii), dtype=int)
    cache = {}

    def hess(i):
        if i not in cache:
            x = X[i]
            M = None
            try:
                if np.linalg.norm(f.gradient(x)) >= floor:
                    M = hessian_reconstruct(surface_geometry(f, x, floor=floor))
            except (NearSingularError, MeanConvexityError, DomainError):
                M = None
            if M is None:
                M = hessian_at(f, x, hess_step * h)
            cache[i] = M
        return cache[i]

    for j, r in enumerate(radii):
        idx = np.flatnonzero(d <= r)
        idx = idx[[f.valid(X[i]) and f.grid.contains(X[i], 2 * hess_step + 4) if isinstance(f, ScalarField)
                   else True for i in idx]] if len(idx) else idx
        if len(idx) > max_samples:
            idx = idx[np.linspace(0, len(idx) - 1, max_samples).astype(int)]
        counts[j] = len(idx)
        if len(idx):
            out[j] = max(np.linalg.norm(hess(i) - hp, 2) for i in idx)
    return ContinuityModulus(radii, out, counts)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def write_report(path, records, lojasiewicz=(), models=(), extra: Optional[dict] = None) -> None:
    """Structured text: one block per singular point, Lojasiewicz report and set model."""
    with open(path, "w") as fh:
        if extra:
            fh.write("[run]\n")
            for k, v in extra.items():
                fh.write(f"{k} = {v}\n")
            fh.write("\n")
        for rec in records:
            fh.write(rec.to_text() + "\n")
        for rep in lojasiewicz:
            fh.write(rep.to_text() + "\n")
        for m in models:
            fh.write(m.to_text() + "\n")


def write_records_csv(path, records: Sequence[SingularPointRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n = records[0].dim if records else 0
        w.writerow([f"x{a}" for a in range(n)] + ["u", "grad_norm"] + [f"lambda{a}" for a in range(n)]
                   + ["nullity", "classification", "local_shape"])
        for r in records:
            w.writerow(["%.12g" % v for v in r.location] + ["%.12g" % r.value, "%.6g" % r.grad_norm]
                       + ["%.9g" % v for v in r.eigenvalues] + [r.nullity, r.label, r.local_shape])
