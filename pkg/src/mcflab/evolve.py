"""Arrival time of the mean-convex level set flow by explicit time stepping.

The level function ``phi`` (negative inside) evolves by
``phi_t = |grad phi| div(grad phi / |grad phi|)``.  Because the initial region
is mean-convex the front only moves inward, so every inside cell changes sign
exactly once; the time at which it does is the arrival time ``u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from . import kernels
from .field import GridSpec, ScalarField, level_curvature, signed_distance_init
from .shapes import Shape, ShapeError

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class FrontExtinct(RuntimeError):
    """The level function has no zero set left (normal end of the flow)."""


@dataclass(frozen=True)
class EvolveConfig:
    dt: Optional[float] = None          # time units; None -> 0.2 h^2 / n
    eps_reg: float = 1e-6               # multiple of h inside the regularised |grad phi|
    reinit_every: int = 5               # steps between redistancing passes
    t_max: Optional[float] = None       # time units; None -> (box diagonal)^2
    band: int = 8                       # cells kept as true distance by redistancing
    reinit_tol: float = 1e-3            # multiple of h
    crossing_order: int = 1

    def resolve(self, grid: GridSpec, ambient_dim: Optional[int] = None) -> "EvolveConfig":
        """Fill defaults for ``grid`` and validate; raises :class:`ConfigError`."""
        n = ambient_dim or grid.dim
        h = grid.h
        dt = 0.2 * h * h / n if self.dt is None else float(self.dt)
        t_max = grid.diagonal**2 if self.t_max is None else float(self.t_max)
        if not dt > 0:
            raise ConfigError("dt", f"time step must be positive, got {dt}")
        if dt > 0.25 * h * h / n * (1 + 1e-12):
            raise ConfigError("dt", f"time step {dt:.3g} exceeds the explicit limit 0.25 h^2/n = {0.25 * h * h / n:.3g}")
        if not 0 < self.eps_reg <= 1:
            raise ConfigError("eps_reg", "must lie in (0, 1]")
        if not t_max > 0:
            raise ConfigError("t_max", "must be positive")
        if self.reinit_every < 1:
            raise ConfigError("reinit_every", "must be at least 1")
        if self.band < self.reinit_every + 2:
            raise ConfigError("band", "must exceed reinit_every + 1 cells")
        if self.crossing_order != 1:
            raise ConfigError("crossing_order", "only linear-in-time crossings (1) are implemented")
        if not 0 < self.reinit_tol < 1:
            raise ConfigError("reinit_tol", "must lie in (0, 1)")
        return replace(self, dt=dt, t_max=t_max)


@dataclass
class ArrivalField:
    u: ScalarField
    mask: np.ndarray                  # reached cells, grid shape
    extinction_time: float            # max u over reached cells
    steps: int = 0
    coverage: float = 1.0
    final_time: float = 0.0
    warnings: list = dc_field(default_factory=list)
    meta: dict = dc_field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @property
    def h(self) -> float:
        return self.u.grid.h

    @property
    def dim(self) -> int:
        return self.u.grid.dim

    def valid(self, p) -> bool:
        return self.u.valid(p)

    def value(self, p):
        return self.u.value(p)

    def gradient(self, p):
        return self.u.gradient(p)

    def hessian(self, p):
        return self.u.hessian(p)

    def metadata_text(self) -> str:
        lines = [
            f"steps = {self.steps}",
            f"final_time = {self.final_time:.9g}",
            f"extinction_time = {self.extinction_time:.9g}",
            f"sweep_coverage = {self.coverage:.6f}",
        ]
        lines += [f"{k} = {v}" for k, v in sorted(self.meta.items()) if np.isscalar(v)]
        lines += [f"warning = {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def _clamp(grid: GridSpec) -> float:
    return grid.diagonal


def mcf_step(phi: ScalarField, cfg: EvolveConfig = EvolveConfig()) -> ScalarField:
    """One explicit step of the level-set mean curvature flow."""
    c = cfg.resolve(phi.grid)
    h = phi.h
    out = kernels.mcf_update(phi.values, h, c.dt, (c.eps_reg * h) ** 2, _clamp(phi.grid))
    return ScalarField(phi.grid, out, "level-function")


def _redistance_values(phi: np.ndarray, h: float, cap: float, tol: float) -> np.ndarray:
    dist, seeded = kernels.redistance(phi, h, cap, tol)
    if not seeded.any():
        raise FrontExtinct("no zero crossing left in the level function")
    d = np.minimum(dist, cap)
    return np.where(phi < 0.0, -d, np.where(phi > 0.0, d, 0.0))


def reinitialize(phi: ScalarField, tol: float = 1e-3, band: Optional[float] = None) -> ScalarField:
    """Signed distance with the same zero set, by a closest-point transform.

    ``band`` (length units) caps the distance; default is the box diagonal.
    Raises :class:`FrontExtinct` when ``phi`` does not change sign.
    """
    h = phi.h
    cap = phi.grid.diagonal if band is None else float(band)
    vals = _redistance_values(phi.values, h, cap, tol * h)
    return ScalarField(phi.grid, vals, "signed-distance")


SnapshotHook = Callable[[int, float, ScalarField], None]


def _evolve(phi0: np.ndarray, grid: GridSpec, cfg: EvolveConfig, m_rot: float = 0.0,
            emit_every: int = 0, on_snapshot: Optional[SnapshotHook] = None) -> ArrivalField:
    h = grid.h
    eps2 = (cfg.eps_reg * h) ** 2
    clamp = _clamp(grid)
    rho0 = grid.lower[0] + 0.5 * h
    inside0 = (phi0 < 0.0).ravel()
    reached = np.zeros(phi0.size, dtype=bool)
    u = np.zeros(phi0.size)
    n_inside = int(inside0.sum())
    phi = _redistance_values(phi0, h, cfg.band * h, cfg.reinit_tol * h)
    t = 0.0
    steps = 0
    warnings = []
    chunk = cfg.reinit_every
    if emit_every:
        chunk = min(chunk, emit_every)
    since_reinit = 0
    while True:
        nsteps = min(chunk, cfg.reinit_every - since_reinit)
        if emit_every:
            nsteps = min(nsteps, emit_every - steps % emit_every)
        phi, t = kernels.advance(phi, u, reached, inside0, t, cfg.dt, nsteps, h, eps2, clamp, m_rot, rho0)
        steps += nsteps
        since_reinit += nsteps
        if on_snapshot is not None and emit_every and steps % emit_every == 0:
            on_snapshot(steps, t, ScalarField(grid, phi, "level-function"))
        if not np.any(inside0 & ~reached):
            break
        if t >= cfg.t_max:
            break
        if since_reinit >= cfg.reinit_every:
            try:
                phi = _redistance_values(phi, h, cfg.band * h, cfg.reinit_tol * h)
            except FrontExtinct:
                warnings.append(f"front vanished at t={t:.6g} before sweeping every inside cell")
                break
            since_reinit = 0
    coverage = float(reached[inside0].sum()) / max(n_inside, 1)
    if coverage < 0.99:
        msg = f"partial result: front swept {100 * coverage:.2f}% of the inside region by t={t:.6g}"
        warnings.append(msg)
        log.warning(msg)
    u = np.where(reached, u, np.where(inside0, t, -phi0.ravel()))
    ext = float(u[reached].max()) if reached.any() else 0.0
    return ArrivalField(
        u=ScalarField(grid, u, "arrival-time"),
        mask=reached.reshape(grid.shape),
        extinction_time=ext,
        steps=steps,
        coverage=coverage,
        final_time=t,
        warnings=warnings,
        meta={"dt": cfg.dt, "h": h, "reinit_every": cfg.reinit_every, "band": cfg.band,
              "eps_reg": cfg.eps_reg, "backend": kernels.use_numba() and "numba" or "numpy"},
    )


def compute_arrival_time(shape: Shape, grid: GridSpec, cfg: EvolveConfig = EvolveConfig(),
                         emit_every: int = 0, on_snapshot: Optional[SnapshotHook] = None) -> ArrivalField:
    """Arrival-time field of the flow starting from the boundary of ``shape``."""
    c = cfg.resolve(grid)
    phi0 = signed_distance_init(shape, grid).values
    return _evolve(np.array(phi0), grid, c, 0.0, emit_every, on_snapshot)


def _check_meridian_mean_convex(phi, h, m, rho, rel_tol=0.1):
    core = (slice(2, -2), slice(2, -2))
    kappa = level_curvature(phi, h)
    gr = np.gradient(phi, h, axis=0)
    gn = np.sqrt(sum(g * g for g in np.gradient(phi, h))) + 1e-12
    kappa = kappa + m * gr / (rho[:, None] * gn)
    band = np.abs(phi[core]) < 0.75 * h
    if not band.any():
        raise ShapeError("boundary is not resolved by the meridian grid")
    k = kappa[core][band]
    if k.min() < -rel_tol * np.median(np.abs(k)):
        raise ShapeError(f"boundary is not mean-convex: sampled mean curvature {k.min():.3g} < 0")


def compute_meridian_arrival(shape: Shape, meridian: GridSpec, cfg: EvolveConfig = EvolveConfig(),
                             ambient_dim: int = 3, emit_every: int = 0,
                             on_snapshot: Optional[SnapshotHook] = None) -> ArrivalField:
    """Arrival time of a surface of revolution on its ``(rho, z)`` half plane.

    ``meridian.lower[0]`` must be 0 so that the first column of samples sits
    at ``rho = h/2``; the edge condition then mirrors across the axis.
    A grid starting at ``z = 0`` likewise mirrors across that plane, which
    halves the work for shapes symmetric in ``z``.
    """
    if meridian.dim != 2:
        raise ValueError("meridian grid must be 2-D")
    if abs(meridian.lower[0]) > 1e-12 * meridian.h:
        raise ValueError("meridian grid must start at rho = 0")
    if not shape.axisymmetric:
        raise ShapeError("shape is not a surface of revolution about the last axis")
    c = cfg.resolve(meridian, ambient_dim)
    coords = meridian.coords()
    phi0 = np.asarray(shape.meridian_sdf(coords[..., 0], coords[..., 1]), dtype=float)
    if not np.any(phi0 < 0):
        raise ShapeError("shape contains no grid sample: empty region")
    m = ambient_dim - 2
    _check_meridian_mean_convex(phi0, meridian.h, m, meridian.axis_coords(0))
    af = _evolve(phi0, meridian, c, float(m), emit_every, on_snapshot)
    af.meta["ambient_dim"] = ambient_dim
    af.meta["z_mirror"] = int(abs(meridian.lower[1]) <= 1e-12 * meridian.h)
    return af


def lift_meridian(mer: ArrivalField, target: GridSpec, fill: Optional[Callable] = None) -> ArrivalField:
    """Rotate a meridian arrival field onto a 3-D grid (cubic spline in ``(rho, z)``).

    Target points beyond the meridian grid take ``fill(x)`` when given (they
    must lie outside the initial region, where ``u = -sdf``); otherwise
    they are an error.
    """
    g = mer.grid
    x = target.coords()
    rho = np.hypot(x[..., 0], x[..., 1])
    ci = (rho / g.h - 0.5).ravel()
    z = np.abs(x[..., 2]) if mer.meta.get("z_mirror") else x[..., 2]
    cj = ((z - g.lower[1]) / g.h - 0.5).ravel()
    # reflect mode is the half-sample mirror, so the half cell below the
    # first sample is still covered on mirrored edges
    inside = (ci <= g.cells[0] - 1) & (cj >= (-0.5 if mer.meta.get("z_mirror") else 0.0)) & (cj <= g.cells[1] - 1)
    if not inside.all() and fill is None:
        raise ValueError("target grid reaches outside the meridian grid")
    coords = np.stack([ci[inside], cj[inside]])
    u = np.empty(target.size)
    mask = np.zeros(target.size, dtype=bool)
    u[inside] = ndimage.map_coordinates(mer.u.values, coords, order=3, mode="reflect")
    mask[inside] = ndimage.map_coordinates(mer.mask.astype(float), coords, order=0, mode="reflect") > 0.5
    if not inside.all():
        pts = x.reshape(-1, 3)[~inside]
        u[~inside] = -np.asarray(fill(pts), dtype=float)
    af = ArrivalField(
        u=ScalarField(target, u, "arrival-time"),
        mask=mask.reshape(target.shape),
        extinction_time=mer.extinction_time,
        steps=mer.steps,
        coverage=mer.coverage,
        final_time=mer.final_time,
        warnings=list(mer.warnings),
        meta=dict(mer.meta, meridian_h=g.h, axisymmetric=1),
    )
    af.meta["meridian"] = mer
    return af


def compute_arrival_time_axisymmetric(shape: Shape, meridian: GridSpec, target: GridSpec,
                                      cfg: EvolveConfig = EvolveConfig()) -> ArrivalField:
    return lift_meridian(compute_meridian_arrival(shape, meridian, cfg, target.dim), target, fill=shape.sdf)
