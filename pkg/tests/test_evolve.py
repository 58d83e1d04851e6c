import numpy as np
import pytest

from mcflab.evolve import (ConfigError, EvolveConfig, FrontExtinct, compute_arrival_time, compute_meridian_arrival,
                           lift_meridian, mcf_step, reinitialize)
from mcflab.field import GridSpec, ScalarField, signed_distance_init
from mcflab.shapes import CylinderSlab, Dumbbell, ShapeError, Sphere
from mcflab.singular import interior_local_minima
from mcflab.surface import extract_level_set

BAND = 8  # cells the evolution keeps as true distance


def _mean_radius(phi, axial=None):
    v = extract_level_set(phi, 0.0).vertices
    if axial is None:
        return float(np.mean(np.linalg.norm(v, axis=1)))
    sel = np.abs(v[:, axial]) < 0.5
    return float(np.mean(np.linalg.norm(np.delete(v[sel], axial, axis=1), axis=1)))


def test_config_validation():
    g = GridSpec.cube(1.0, 64, 2)
    c = EvolveConfig().resolve(g)
    assert c.dt == pytest.approx(0.2 * g.h**2 / 2)
    with pytest.raises(ConfigError) as e:
        EvolveConfig(dt=0.3 * g.h**2 / 2).resolve(g)
    assert e.value.key == "dt"
    with pytest.raises(ConfigError) as e:
        EvolveConfig(eps_reg=0.0).resolve(g)
    assert e.value.key == "eps_reg"
    with pytest.raises(ConfigError) as e:
        EvolveConfig(t_max=-1.0).resolve(g)
    assert e.value.key == "t_max"


def test_step_shrinks_circle_at_ode_rate():
    g = GridSpec.cube(1.0, 128, 2)
    R = 0.5
    cfg = EvolveConfig().resolve(g)
    phi = signed_distance_init(Sphere((0.0, 0.0), R), g)
    dr = _mean_radius(phi) - _mean_radius(mcf_step(phi, cfg))
    assert dr == pytest.approx((2 - 1) * cfg.dt / R, rel=0.1)


def test_step_shrinks_cylinder_at_ode_rate():
    g = GridSpec.cube(1.0, 48, 3)
    R = 0.5
    cfg = EvolveConfig().resolve(g)
    phi = signed_distance_init(CylinderSlab(R, axis=2), g)
    dr = _mean_radius(phi, 2) - _mean_radius(mcf_step(phi, cfg), 2)
    assert dr == pytest.approx(cfg.dt / R, rel=0.1)


def test_flat_front_is_stationary():
    g = GridSpec.cube(1.0, 64, 2)
    flat = ScalarField.sample(g, lambda x: x[..., 0] - 0.1, "level-function")
    assert np.max(np.abs(mcf_step(flat).values - flat.values)) < 1e-14


def test_reinitialize_fixed_point_and_eikonal():
    g = GridSpec.cube(1.0, 128, 2)
    phi = signed_distance_init(Sphere((0.0, 0.0), 0.5), g)
    band = np.abs(phi.values) <= BAND * g.h
    r = reinitialize(phi)
    assert np.max(np.abs(r.values - phi.values)[band]) <= 1e-3 * g.h
    r2 = reinitialize(ScalarField(g, 2.0 * phi.values, "level-function"))
    assert np.max(np.abs(r2.values - phi.values)[band]) <= 1e-2 * g.h
    assert np.array_equal(np.sign(r2.values), np.sign(phi.values))


def test_reinitialize_signals_extinction():
    g = GridSpec.cube(1.0, 16, 2)
    with pytest.raises(FrontExtinct):
        reinitialize(ScalarField(g, np.ones(g.size), "level-function"))


def test_sphere_arrival_time_small_grid():
    g = GridSpec.cube(1.0, 64, 2)
    af = compute_arrival_time(Sphere((0.0, 0.0), 0.8), g)
    X = g.coords()
    r2 = np.sum(X * X, axis=-1)
    sel = r2 <= 0.56**2
    assert np.max(np.abs(af.u.values - (0.64 - r2) / 2)[sel]) <= 0.01
    assert af.coverage >= 0.99
    assert np.all(af.u.values[af.mask] >= 0)
    assert af.extinction_time == pytest.approx(0.32, abs=0.01)
    assert len(interior_local_minima(af)) == 0
    assert "extinction_time" in af.metadata_text()


def _level_set_residual(af):
    v = af.u.values
    h = af.h
    gx, gy = np.gradient(v, h)
    gxx = np.gradient(gx, h, axis=0)
    gxy = np.gradient(gx, h, axis=1)
    gyy = np.gradient(gy, h, axis=1)
    gn = np.hypot(gx, gy)
    nx, ny = gx / (gn + 1e-300), gy / (gn + 1e-300)
    tang = gxx + gyy - (nx * nx * gxx + 2 * nx * ny * gxy + ny * ny * gyy)
    X = af.grid.coords()
    keep = (gn > 0.1) & af.mask & (np.sum(X * X, axis=-1) < 0.7**2)
    return np.abs(-tang - 1.0)[keep]


def test_level_set_residual_decreases_with_h():
    res = []
    for cells in (64, 128):
        af = compute_arrival_time(Sphere((0.0, 0.0), 0.8), GridSpec.cube(1.0, cells, 2))
        r = _level_set_residual(af)
        res.append(float(np.max(r)))
        assert np.max(r) <= 1.0 * np.sqrt(af.h)
    assert res[1] < res[0]


def test_parabolic_rescaling():
    lam = 2.0
    small = compute_arrival_time(Sphere((0.0, 0.0), 0.4), GridSpec.cube(0.5, 64, 2))
    big = compute_arrival_time(Sphere((0.0, 0.0), 0.8), GridSpec.cube(1.0, 64, 2))
    both = small.mask & big.mask
    assert np.allclose(big.u.values[both], lam**2 * small.u.values[both], rtol=1e-6, atol=1e-9)


def test_inside_region_shrinks_monotonically():
    g = GridSpec.cube(1.0, 48, 2)
    insides = []
    compute_arrival_time(Sphere((0.1, 0.0), 0.7), g, emit_every=20,
                         on_snapshot=lambda step, t, phi: insides.append(phi.values < 0))
    assert len(insides) > 3
    for a, b in zip(insides, insides[1:]):
        assert not np.any(b & ~a)


def test_meridian_matches_full_grid():
    shape = Sphere((0.0, 0.0, 0.0), 0.6)
    mer = compute_meridian_arrival(shape, GridSpec((0.0, -0.8), (0.8, 0.8), (64, 128)))
    assert mer.extinction_time == pytest.approx(0.36 / 4, abs=0.005)
    lifted = lift_meridian(mer, GridSpec.cube(0.5, 20, 3))
    X = lifted.grid.coords()
    exact = (0.36 - np.sum(X * X, axis=-1)) / 4
    assert np.max(np.abs(lifted.u.values - exact)[lifted.mask]) <= 0.005


def test_z_mirrored_meridian():
    shape = Sphere((0.0, 0.0, 0.0), 0.6)
    full = compute_meridian_arrival(shape, GridSpec((0.0, -0.8), (0.8, 0.8), (64, 128)))
    half = compute_meridian_arrival(shape, GridSpec((0.0, 0.0), (0.8, 0.8), (64, 64)))
    assert half.meta["z_mirror"] == 1
    m = full.mask[:, 64:]
    assert np.array_equal(half.mask, m)
    assert np.max(np.abs(half.u.values - full.u.values[:, 64:])[m]) <= 0.1 * half.h**2


def test_non_mean_convex_dumbbell_rejected():
    with pytest.raises(ShapeError):
        Dumbbell(0.5, 0.5, 0.1)
