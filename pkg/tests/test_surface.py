import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from mcflab.evolve import compute_arrival_time
from mcflab.field import GridSpec, cylinder_arrival, hessian_fd, sphere_arrival
from mcflab.shapes import Sphere
from mcflab.surface import (EntropySearchCfg, MeanConvexityError, NearSingularError, cylinder_gaussian_closed_form,
                            entropy, extract_level_set, gaussian_area, gaussian_areas, hessian_reconstruct,
                            parametric_surface, polyline_surface, surface_geometry, two_convexity_ratio)

ROOT_2PI_E = math.sqrt(2 * math.pi / math.e)


def _circle(radius, m=4096, center=(0.0, 0.0)):
    th = 2 * np.pi * np.arange(m) / m
    return polyline_surface(np.asarray(center) + radius * np.column_stack([np.cos(th), np.sin(th)]))


@pytest.fixture(scope="module")
def sphere_run():
    return compute_arrival_time(Sphere((0.0, 0.0), 0.8), GridSpec.cube(1.0, 128, 2))


# extraction --------------------------------------------------------------------

def test_extract_circle_length():
    h = 0.01
    g = GridSpec.cube(1.0, 200, 2)
    u = sphere_arrival(2, 0.8).sample_vectorized(g)
    s = extract_level_set(u, 0.14)
    assert g.h <= h
    assert s.is_closed() and not s.clipped
    assert s.total_area == pytest.approx(2 * np.pi * 0.6, rel=0.01)
    assert np.all(s.areas > 0)
    assert np.max(np.abs(np.linalg.norm(s.vertices, axis=1) - 0.6)) <= g.h


def test_extract_cylinder_tube():
    g = GridSpec.cube(1.0, 48, 3)
    u = cylinder_arrival(3, 1, 0.8).sample_vectorized(g)
    s = extract_level_set(u, 0.2)
    r = np.hypot(s.vertices[:, 0], s.vertices[:, 1])
    assert np.max(np.abs(r - math.sqrt(0.64 - 0.4))) <= g.h
    assert s.clipped  # the tube runs through the top and bottom faces
    assert s.boundary_count() > 0


def test_extract_closed_sphere_mesh():
    g = GridSpec.cube(1.0, 40, 3)
    u = sphere_arrival(3, 0.8).sample_vectorized(g)
    s = extract_level_set(u, 0.1)
    assert s.is_closed()
    assert s.total_area == pytest.approx(4 * np.pi * (0.64 - 0.4), rel=0.02)


def test_extract_level_out_of_range():
    g = GridSpec.cube(1.0, 32, 2)
    u = sphere_arrival(2, 0.8).sample_vectorized(g)
    with pytest.raises(ValueError):
        extract_level_set(u, 1.0)


def test_polydata_vtk(tmp_path):
    s = _circle(1.0, 16)
    s.write_vtk(tmp_path / "c.vtk")
    text = (tmp_path / "c.vtk").read_text().splitlines()
    assert text[3] == "DATASET POLYDATA" and text[4] == "POINTS 16 double"
    assert "LINES 16 48" in text


# pointwise geometry ----------------------------------------------------------------

@pytest.mark.parametrize("r", [0.2, 0.5, 0.9])
def test_sphere_curvature(r):
    f = sphere_arrival(2)
    g = surface_geometry(f, np.array([r, 0.0]))
    assert g.H == pytest.approx(1 / r, rel=1e-9)
    assert g.A[0, 0] == pytest.approx(1 / r, rel=1e-9)


def test_cylinder_geometry():
    f = cylinder_arrival(3, 1)
    r = 0.4
    g = surface_geometry(f, np.array([r, 0.0, 0.1]))
    assert np.allclose(np.sort(g.kappa), [0.0, 1 / r], atol=1e-9)
    assert g.H == pytest.approx(1 / r)
    axial = np.array([0.0, 0.0, 1.0])
    ea = g.frame.T @ axial
    AH = g.A / g.H
    assert ea @ AH @ ea == pytest.approx(0.0, abs=1e-9)
    round_dir = np.array([-ea[1], ea[0]])
    assert round_dir @ AH @ round_dir == pytest.approx(1.0, abs=1e-9)
    assert abs(np.linalg.norm(g.N) - 1) < 1e-12
    assert np.allclose(g.frame.T @ g.frame, np.eye(2), atol=1e-12)


def test_near_singular_rejected():
    with pytest.raises(NearSingularError):
        surface_geometry(sphere_arrival(2), np.array([1e-3, 0.0]))


def test_speed_matches_curvature_on_computed_sphere(sphere_run):
    rng = np.random.default_rng(1)
    for _ in range(20):
        r = rng.uniform(0.25, 0.65)
        th = rng.uniform(0, 2 * np.pi)
        g = surface_geometry(sphere_run, r * np.array([np.cos(th), np.sin(th)]))
        assert g.speed_curvature == pytest.approx(g.H, rel=0.02)


def test_reconstruct_exact_templates():
    M = hessian_reconstruct(surface_geometry(sphere_arrival(2), np.array([0.3, -0.2])))
    assert np.allclose(M, -np.eye(2), atol=1e-6)
    M = hessian_reconstruct(surface_geometry(cylinder_arrival(3, 1), np.array([0.2, 0.25, 0.3])))
    assert np.allclose(M, np.diag([-1.0, -1.0, 0.0]), atol=1e-6)


def test_reconstruct_matches_fd_on_computed_sphere(sphere_run):
    g = sphere_run.grid
    for th in np.linspace(0, 2 * np.pi, 9)[:-1]:
        idx = g.nearest_index(0.4 * np.array([np.cos(th), np.sin(th)]))
        M = hessian_reconstruct(surface_geometry(sphere_run, g.point(idx)))
        assert np.max(np.abs(M - hessian_fd(sphere_run.u, idx))) <= 0.05


def test_reconstruct_converges_on_sampled_fields():
    p = np.array([0.3, 0.2, 0.1])
    for make in (lambda h: sphere_arrival(3, 0.0, None, h), lambda h: cylinder_arrival(3, 1, 0.0, h)):
        errs = []
        for h in (1 / 64, 1 / 128):
            grid = GridSpec.from_spacing(p - 12 * h, p + 12 * h, h)
            f = make(h).sample_vectorized(grid)
            idx = grid.nearest_index(p)
            M = hessian_reconstruct(surface_geometry(f, grid.point(idx), speed=False, step=2 * h))
            errs.append(np.max(np.abs(M - hessian_fd(f, idx))))
        assert errs[1] < errs[0]


def test_reconstruct_rejects_nonpositive_h():
    geo = surface_geometry(sphere_arrival(2), np.array([0.3, 0.0]))
    geo.H = -1.0
    with pytest.raises(MeanConvexityError):
        hessian_reconstruct(geo)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.15, 0.9), st.floats(0, 2 * np.pi), st.floats(-0.5, 0.5))
def test_trace_of_a_is_h(r, th, z):
    f = cylinder_arrival(3, 1)
    g = surface_geometry(f, np.array([r * np.cos(th), r * np.sin(th), z]))
    assert np.trace(g.A) == pytest.approx(g.H, rel=1e-6)


# two-convexity -----------------------------------------------------------------

def test_two_convexity_ratio_examples():
    assert two_convexity_ratio(sphere_arrival(3), [[0.3, 0.1, 0.2], [0.0, 0.5, 0.0]]) == pytest.approx(1.0)
    assert two_convexity_ratio(cylinder_arrival(3, 1), [[0.3, 0.1, 0.2]]) == pytest.approx(1.0)
    assert two_convexity_ratio(cylinder_arrival(4, 2), [[0.5, 0.0, 0.1, 0.2]]) == pytest.approx(0.0, abs=1e-9)
    assert two_convexity_ratio(sphere_arrival(4), [[0.3, 0.2, 0.1, 0.0]]) == pytest.approx(2 / 3)


# Gaussian areas ----------------------------------------------------------------

def test_flat_line_has_unit_gaussian_area():
    x = np.linspace(-5, 5, 20001)
    s = polyline_surface(np.column_stack([x, np.zeros_like(x)]), closed=False)
    assert gaussian_area(s, np.zeros(2), 0.05) == pytest.approx(1.0, abs=1e-6)


def test_flat_plane_has_unit_gaussian_area():
    s = parametric_surface(lambda a, b: (a, b, 0 * a), (-3, 3), (-3, 3), 241, 241)
    assert gaussian_area(s, np.array([0.1, -0.2, 0.0]), 0.02) == pytest.approx(1.0, abs=1e-6)


def test_circle_gaussian_area():
    assert gaussian_area(_circle(math.sqrt(2)), np.zeros(2), 1.0) == pytest.approx(ROOT_2PI_E, abs=1e-3)


def test_gaussian_area_rejects_bad_input():
    with pytest.raises(ValueError):
        gaussian_area(_circle(1.0), np.zeros(2), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.05, 2.0))
def test_gaussian_area_parabolic_change_of_variables(s, px, py, lam):
    circ = _circle(1.0, 2048)
    p = np.array([px, py])
    a = gaussian_area(circ, p, lam)
    b = gaussian_area(circ.transformed(scale=1.0 / s), p / s, lam / s**2)
    assert a == pytest.approx(b, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_gaussian_area_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    sph = parametric_surface(lambda a, b: (np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)),
                             (1e-6, math.pi - 1e-6), (0, 2 * math.pi), 40, 80, periodic=(False, True))
    R = Rotation.random(random_state=seed).as_matrix()
    t = rng.normal(size=3)
    p = rng.normal(size=3) * 0.5
    lam = rng.uniform(0.1, 1.0)
    moved = sph.transformed(rotation=R, shift=t)
    assert gaussian_area(moved, R @ p + t, lam) == pytest.approx(gaussian_area(sph, p, lam), rel=1e-9)


# closed forms ------------------------------------------------------------------------

def test_cylinder_closed_form_examples():
    assert cylinder_gaussian_closed_form(2, 0, np.zeros(2), 1.0) == pytest.approx(ROOT_2PI_E, rel=1e-12)
    assert cylinder_gaussian_closed_form(3, 1, np.zeros(3), 1.0) == pytest.approx(ROOT_2PI_E, rel=1e-12)
    assert cylinder_gaussian_closed_form(3, 0, np.zeros(3), 1.0) == pytest.approx(4 / math.e, rel=1e-12)
    with pytest.raises(ValueError):
        cylinder_gaussian_closed_form(3, 2, np.zeros(3), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(2, 0), (3, 0), (3, 1), (4, 0), (4, 1), (4, 2)]),
       st.floats(0.0, 2.0), st.floats(0.05, 10.0))
def test_closed_form_bessel_matches_quadrature(nk, a, lam):
    n, k = nk
    p = np.zeros(n)
    p[0] = a
    b = cylinder_gaussian_closed_form(n, k, p, lam, "bessel")
    q = cylinder_gaussian_closed_form(n, k, p, lam, "quadrature")
    assert b == pytest.approx(q, rel=1e-8, abs=1e-300)


def test_closed_form_decays_for_large_scale():
    vals = [cylinder_gaussian_closed_form(3, 1, np.array([0.3, 0.0, 0.0]), lam) for lam in (1e2, 1e4, 1e6)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-2
    # bound by the area of the sphere factor over (4 pi Lambda)^{(n-k-1)/2}
    for lam, v in zip((1e2, 1e4, 1e6), vals):
        assert v <= 2 * math.pi * math.sqrt(2) / math.sqrt(4 * math.pi * lam)


def test_closed_form_matches_quadrature_of_mesh():
    rc = math.sqrt(2)
    cyl = parametric_surface(lambda a, b: (rc * np.cos(b), rc * np.sin(b), a), (-12, 12), (0, 2 * math.pi),
                             481, 128, periodic=(False, True))
    p = np.array([0.3, -0.2, 0.1])
    assert gaussian_area(cyl, p, 0.8) == pytest.approx(cylinder_gaussian_closed_form(3, 1, p, 0.8), rel=1e-3)


# entropy --------------------------------------------------------------------------

def test_entropy_of_circle():
    res = entropy(_circle(math.sqrt(2), 2048), EntropySearchCfg(centers_per_axis=5, lam_count=24))
    assert res.value == pytest.approx(1.5203, abs=1e-3)
    assert np.linalg.norm(res.center) < 1e-2
    assert res.lam == pytest.approx(1.0, rel=0.02)
    # the supremum dominates every probe
    assert np.all(res.probes[:, -1] <= res.value + 1e-12)


def test_entropy_dominates_random_probes():
    s = _circle(0.7, 1024, center=(0.2, -0.1))
    res = entropy(s, EntropySearchCfg(centers_per_axis=5, lam_count=24))
    rng = np.random.default_rng(3)
    P = rng.uniform(-1, 1, size=(200, 2))
    L = np.exp(rng.uniform(np.log(1e-3), np.log(10), size=200))
    assert np.all(gaussian_areas(s, P, L) <= res.value + 1e-9)


def test_entropy_csv(tmp_path):
    res = entropy(_circle(1.0, 256), EntropySearchCfg(centers_per_axis=3, lam_count=8, refine_starts=1))
    res.write_csv(tmp_path / "e.csv")
    head = (tmp_path / "e.csv").read_text().splitlines()[0]
    assert head == "p0,p1,Lambda,F"
