"""Integral curves of the unit normal ``N = grad u / |grad u|``.

Along such a curve ``du/ds = |grad u|``, so a flowline climbs the arrival
time until it reaches a critical point.  Under a Lojasiewicz bound
``|u - u(p)|^{1/2} <= beta |grad u|`` its length into ``p`` is at most
``2 beta sqrt(u(p) - u(start))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .field import DomainError, ScalarField
from .surface import NearSingularError, _field_of, grad_floor

REACHED_CRITICAL = "ReachedCritical"
LEFT_DOMAIN = "LeftDomain"
STEP_LIMIT = "StepLimit"

SLOWDOWN = 5.0  # steps shrink once |grad u| < SLOWDOWN * floor


@dataclass
class FlowLine:
    s: np.ndarray          # arc length, strictly increasing
    x: np.ndarray          # (m, n) positions
    u: np.ndarray          # arrival time at the samples
    grad_norm: np.ndarray  # |grad u| at the samples
    reason: str
    direction: int = 1
    closed_to_critical: bool = False  # last sample is a Newton-located critical point

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def end(self) -> np.ndarray:
        return self.x[-1]


def _valid(f, x) -> bool:
    if isinstance(f, ScalarField):
        # gradient interpolation needs a neighbour layer around the cell
        return f.grid.contains(x, margin=2.0)
    return f.valid(x)


def _direction(f, x, sign):
    g = f.gradient(x)
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return np.zeros_like(g), 0.0
    return sign * g / gn, gn


def _newton_closure(f, x, floor, max_dist):
    """Newton iterations on ``grad u = 0`` from ``x`` with a pseudo-inverse Hessian."""
    y = x.copy()
    g0 = float(np.linalg.norm(f.gradient(y)))
    for _ in range(20):
        g = f.gradient(y)
        w, V = np.linalg.eigh(f.hessian(y))
        keep = np.abs(w) > 0.05 * np.abs(w).max() if np.abs(w).max() > 0 else np.zeros(len(w), bool)
        if not keep.any():
            return None
        dy = -(V[:, keep] / w[keep]) @ (V[:, keep].T @ g)
        y = y + dy
        if not _valid(f, y) or np.linalg.norm(y - x) > max_dist:
            return None
        if np.linalg.norm(dy) < 1e-12 * max(f.h, 1.0):
            break
    if float(np.linalg.norm(f.gradient(y))) > 0.5 * g0:
        return None
    return y


def trace_flowline(u, p, step: Optional[float] = None, max_len: Optional[float] = None,
                   floor: Optional[float] = None, direction: int = 1, closure: bool = True) -> FlowLine:
    """Fourth-order Runge-Kutta along ``direction * N`` from ``p``.

    Stops when ``|grad u|`` drops below ``floor`` (ReachedCritical), the
    curve leaves the region where the gradient can be interpolated
    (LeftDomain), or the arc length exceeds ``max_len`` (StepLimit).  With
    ``closure`` an ascending line that reached the floor is finished by
    Newton's method to the critical point, and that final segment is part of
    the arc length.
    """
    f = _field_of(u)
    h = f.h
    step = 0.5 * h if step is None else step
    floor = grad_floor(f) if floor is None else floor
    if max_len is None:
        max_len = 2.0 * (f.grid.diagonal if isinstance(f, ScalarField) else 512 * h)
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    x = np.asarray(p, dtype=float).copy()
    if not _valid(f, x):
        raise DomainError(f"start point {x} is outside the field")
    value = getattr(f, "taylor_value", f.value)
    d, gn = _direction(f, x, direction)
    if gn < floor:
        raise NearSingularError(f"|grad u| = {gn:.3g} at the start point is below the floor {floor:.3g}")
    S = [0.0]
    X = [x.copy()]
    U = [value(x)]
    G = [gn]
    s = 0.0
    reason = STEP_LIMIT
    while True:
        ds = step * min(1.0, gn / (SLOWDOWN * floor))
        ds = max(ds, 1e-3 * step)
        if s + ds > max_len:
            reason = STEP_LIMIT
            break
        k1 = d
        stages = [x + 0.5 * ds * k1]
        if not _valid(f, stages[0]):
            reason = LEFT_DOMAIN
            break
        k2, _ = _direction(f, stages[0], direction)
        q = x + 0.5 * ds * k2
        if not _valid(f, q):
            reason = LEFT_DOMAIN
            break
        k3, _ = _direction(f, q, direction)
        q = x + ds * k3
        if not _valid(f, q):
            reason = LEFT_DOMAIN
            break
        k4, _ = _direction(f, q, direction)
        xn = x + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not _valid(f, xn):
            reason = LEFT_DOMAIN
            break
        dn, gnn = _direction(f, xn, direction)
        s += float(np.linalg.norm(xn - x))
        x, d, gn = xn, dn, gnn
        S.append(s)
        X.append(x.copy())
        U.append(value(x))
        G.append(gn)
        if gn < floor:
            reason = REACHED_CRITICAL
            break
    closed = False
    if reason == REACHED_CRITICAL and closure and direction == 1:
        y = _newton_closure(f, x, floor, max_dist=2.0 * floor / max(1e-12, _curv_scale(f, x)) + 2 * h)
        if y is not None:
            uy = value(y)
            dist = float(np.linalg.norm(y - x))
            if uy > U[-1] and dist > 0:
                S.append(s + dist)
                X.append(y)
                U.append(uy)
                G.append(float(np.linalg.norm(f.gradient(y))))
                closed = True
    return FlowLine(np.array(S), np.array(X), np.array(U), np.array(G), reason, direction, closed)


def _curv_scale(f, x) -> float:
    w = np.abs(np.linalg.eigvalsh(f.hessian(x)))
    return float(w.max()) if w.max() > 0 else 1.0


def trace_many(u, points: Sequence, **kw) -> List[FlowLine]:
    """Independent traces in input order."""
    return [trace_flowline(u, p, **kw) for p in points]


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def speed_error(line: FlowLine, window: Optional[float] = None, h: Optional[float] = None) -> float:
    """Largest relative mismatch between ``du/ds`` over windows and the mean ``|grad u|``.

    The Newton closure segment is excluded.  Windows are consecutive runs of
    samples spanning at least ``window`` arc length (default ``4h``).
    """
    m = len(line.s) - (1 if line.closed_to_critical else 0)
    s, uu, g = line.s[:m], line.u[:m], line.grad_norm[:m]
    if window is None:
        step = np.median(np.diff(s)) if m > 1 else 0.0
        window = 8.0 * step if h is None else 4.0 * h
    worst = 0.0
    i = 0
    while i < m - 1:
        j = i + 1
        while j < m - 1 and s[j] - s[i] < window:
            j += 1
        if s[j] - s[i] <= 0:
            break
        slope = (uu[j] - uu[i]) / (s[j] - s[i])
        # trapezoid mean of |grad u| over the window
        gw, sw = g[i:j + 1], s[i:j + 1]
        mean_g = 0.5 * np.sum((gw[1:] + gw[:-1]) * np.diff(sw)) / (s[j] - s[i])
        worst = max(worst, abs(slope - mean_g) / mean_g)
        i = j
    return float(worst)


def monotone(line: FlowLine) -> bool:
    """``u`` strictly increases (descends for ``direction = -1``) sample to sample."""
    du = np.diff(line.u) * line.direction
    return bool(np.all(du > 0))


@dataclass
class ArcBoundReport:
    applicable: bool
    length: float
    length_bound: float
    length_slack: float
    pointwise_slack: float
    worst_slack: float
    note: str = ""

    @property
    def ratio(self) -> float:
        return self.length / self.length_bound if self.length_bound > 0 else math.inf


def verify_arc_bounds(line: FlowLine, beta: float, p_target, u_target: Optional[float] = None,
                      tol: Optional[float] = None) -> ArcBoundReport:
    """Check ``L <= 2 beta sqrt(u(p) - u(start))`` and ``|x - p| <= 2 beta sqrt(|u - u(p)|)``.

    ``u_target`` defaults to the arrival time at the end of the line.  The
    line must end (ReachedCritical) within ``tol`` of ``p_target``.
    """
    p = np.asarray(p_target, dtype=float)
    nan = float("nan")
    if line.reason != REACHED_CRITICAL:
        return ArcBoundReport(False, line.length, nan, nan, nan, nan, f"line ended with {line.reason}")
    step = np.median(np.diff(line.s)) if len(line.s) > 1 else 0.0
    tol = 6.0 * step if tol is None else tol
    miss = float(np.linalg.norm(line.end - p))
    if miss > tol:
        return ArcBoundReport(False, line.length, nan, nan, nan, nan,
                              f"line ends {miss:.3g} from the target (tolerance {tol:.3g})")
    ut = float(line.u[-1]) if u_target is None else float(u_target)
    drop = ut - float(line.u[0])
    if drop <= 0:
        return ArcBoundReport(False, line.length, nan, nan, nan, nan, "start is not below the target")
    bound = 2.0 * beta * math.sqrt(drop)
    length_slack = bound - line.length
    pw = 2.0 * beta * np.sqrt(np.abs(line.u - ut)) - np.linalg.norm(line.x - p, axis=1)
    pointwise = float(pw.min())
    return ArcBoundReport(True, line.length, bound, length_slack, pointwise, min(length_slack, pointwise))


def cone_coordinates(x, p, axis):
    """``(|y|, |z|)`` of points relative to the cone vertex ``p`` with axis span ``axis``."""
    A = np.atleast_2d(np.asarray(axis, dtype=float).T).T
    Q, _ = np.linalg.qr(A)
    D = np.atleast_2d(x) - p
    z = D @ Q
    y = D - z @ Q.T
    return np.linalg.norm(y, axis=1), np.linalg.norm(z, axis=1)


def stays_in_cone(line: FlowLine, p, axis, phi: float, inflation: float = math.radians(5.0)) -> bool:
    """All samples satisfy ``|y| <= |z| tan(phi + inflation)``."""
    ry, rz = cone_coordinates(line.x, np.asarray(p, dtype=float), axis)
    return bool(np.all(ry <= rz * math.tan(phi + inflation) + 1e-12))


def cone_consistency(beta: float, phi: float, n: int, zc: float, tc: float) -> dict:
    """Whether a point at axial distance ``zc`` and time offset ``tc < 0`` meets both cone estimates.

    The cylinder length estimate ``z >= sqrt(n-2) cot(phi) sqrt(-t)`` and the
    speed estimate ``z <= 2 beta sqrt(-t)`` cannot both hold once
    ``tan(phi) < sqrt(n-2) / (2 beta)``.
    """
    root = math.sqrt(max(-tc, 0.0))
    length_ok = zc >= math.sqrt(n - 2) / math.tan(phi) * root
    speed_ok = zc <= 2.0 * beta * root
    return {"length": length_ok, "speed": speed_ok, "both": length_ok and speed_ok,
            "phi_admissible": math.tan(phi) < math.sqrt(n - 2) / (2.0 * beta)}


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_flowlines_csv(path, lines: Sequence[FlowLine]) -> None:
    n = lines[0].x.shape[1] if lines else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "s"] + [f"x{a}" for a in range(n)] + ["u", "grad_norm", "reason"])
        for i, ln in enumerate(lines):
            for s, x, uu, g in zip(ln.s, ln.x, ln.u, ln.grad_norm):
                w.writerow([i, "%.12g" % s] + ["%.12g" % v for v in x] + ["%.12g" % uu, "%.9g" % g, ln.reason])


def write_flowlines_vtk(path, lines: Sequence[FlowLine], title: str = "mcflab flowlines") -> None:
    """Legacy ASCII POLYDATA with one polyline per trace."""
    pts = [ln.x if ln.x.shape[1] == 3 else np.column_stack([ln.x, np.zeros(len(ln.x))]) for ln in lines]
    total = sum(len(p) for p in pts)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {total} double\n")
        for P in pts:
            for q in P:
                fh.write("%.17g %.17g %.17g\n" % tuple(q))
        fh.write(f"LINES {len(pts)} {total + len(pts)}\n")
        start = 0
        for P in pts:
            fh.write(f"{len(P)} " + " ".join(str(start + i) for i in range(len(P))) + "\n")
            start += len(P)
