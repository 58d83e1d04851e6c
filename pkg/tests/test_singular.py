import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcflab.field import AnalyticField, DomainError, GridSpec, ScalarField, cylinder_arrival, sphere_arrival
from mcflab.singular import (CYLINDRICAL, INDETERMINATE, LOCAL_MAX, ROUND, SADDLE, TYPE_I, TYPE_II, UNCLASSIFIED,
                             ClassifyCfg, LojasiewiczCfg, classify_all, classify_hessian, classify_singularity,
                             clearing_out_check, cluster_points, contradiction_flag, cylindrical_scale,
                             detect_critical_points, fit_all, fit_circle, fit_singular_set,
                             hessian_continuity_modulus, interior_local_minima, lojasiewicz_analyze,
                             lojasiewicz_verdict, slice_max_profile, templates_separated, write_records_csv,
                             write_report)

H = 1.0 / 64


def sampled(field, half=0.5, h=H, dim=None):
    dim = dim or field.dim
    return field.with_resolution(h).sample_vectorized(GridSpec.cube(half, int(round(2 * half / h)), dim))


def ring_field(R=0.5, h=H):
    """Exact-model arrival time ``-((rho - R)^2 + z^2) / 2`` around a circle of radius ``R``."""
    grid = GridSpec.from_spacing((-R - 0.35, -R - 0.35, -0.35), (R + 0.35, R + 0.35, 0.35), h)

    def value(x):
        rho = np.hypot(x[..., 0], x[..., 1])
        return -0.5 * ((rho - R) ** 2 + x[..., 2] ** 2)

    return ScalarField.sample(grid, value)


@pytest.fixture(scope="module")
def ring():
    return ring_field()


# detection -----------------------------------------------------------------------

def test_detect_single_round_point():
    f = sampled(sphere_arrival(2, 0.8, center=(0.013, -0.021)))
    pts = detect_critical_points(f)
    assert len(pts) == 1
    assert np.linalg.norm(pts[0] - [0.013, -0.021]) <= 2 * H


def test_detect_nothing_on_linear_field():
    g = GridSpec.cube(0.5, 64, 2)
    assert detect_critical_points(ScalarField.sample(g, lambda x: x[..., 0] + 0.3 * x[..., 1])) == []


def test_detect_and_fit_ring(ring):
    # the model field has a kink on the z axis, away from the ring
    pts = [q for q in detect_critical_points(ring) if np.hypot(q[0], q[1]) > 0.25]
    assert len(pts) > 50
    recs = classify_all(ring, pts, ClassifyCfg(u_floor=1e-12))
    assert len(recs) == len(pts)
    assert all(r.label == "Cylindrical(1)" and r.local_shape == LOCAL_MAX for r in recs)
    models = fit_all(recs, ring.h)
    assert len(models) == 1
    m = models[0]
    assert m.kind == "curve" and m.closed
    assert m.circle.radius == pytest.approx(0.5, abs=ring.h)
    assert m.circle.rms <= 2 * ring.h
    assert math.degrees(m.mean_angle) <= 10.0


# classification --------------------------------------------------------------------

def test_classify_round_cylindrical_saddle():
    r = classify_singularity(sampled(sphere_arrival(2)), np.zeros(2), ClassifyCfg(u_floor=1e-12))
    assert r.classification == ROUND and r.label == "Round"
    assert np.max(np.abs(r.hessian + np.eye(2))) <= 0.05
    c = classify_singularity(sampled(cylinder_arrival(3, 1), half=0.3), np.zeros(3), ClassifyCfg(u_floor=1e-12))
    assert c.label == "Cylindrical(1)"
    assert abs(abs(c.axis[2, 0]) - 1) < 1e-9
    g = GridSpec.cube(0.3, 38, 3)
    s = ScalarField.sample(g, lambda x: 0.5 * (-x[..., 0] ** 2 - x[..., 1] ** 2 + x[..., 2] ** 2))
    rec = classify_singularity(s, np.zeros(3), ClassifyCfg(u_floor=1e-12))
    assert rec.classification == SADDLE
    assert rec.sign_counts[0] > 0 and rec.sign_counts[1] > 0


def test_classify_near_boundary_rejected():
    f = sampled(sphere_arrival(2))
    with pytest.raises(DomainError):
        classify_singularity(f, np.array([0.48, 0.0]))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_templates_separated(n):
    assert templates_separated(n)


@pytest.mark.parametrize("n,k", [(3, 0), (3, 1), (4, 0), (4, 1), (4, 2)])
def test_classify_hessian_templates(n, k):
    Hm = np.diag([-1.0 / (n - k - 1)] * (n - k) + [0.0] * k)
    cls, nullity, axis, _ = classify_hessian(Hm)
    assert nullity == k
    assert cls == (ROUND if k == 0 else CYLINDRICAL)
    cls, _, _, _ = classify_hessian(np.diag([-0.7] + [-0.2] * (n - 1)))
    assert cls == UNCLASSIFIED


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_classification_scale_equivariant(lam, cx, cy):
    # x -> lam^-2 u(lam x) sampled on the correspondingly scaled grid
    h = H
    base = GridSpec.cube(0.5, 64, 2)
    fn = lambda x: (0.6 - (x[..., 0] - cx) ** 2 - 0.5 * (x[..., 1] - cy) ** 2) / 2
    u = ScalarField.sample(base, fn)
    g2 = GridSpec(tuple(np.divide(base.lower, lam)), tuple(np.divide(base.upper, lam)), base.cells)
    v = ScalarField.sample(g2, lambda x: fn(lam * x) / lam**2)
    p = np.array([cx, cy])
    a = classify_singularity(u, p, ClassifyCfg(u_floor=1e-12))
    b = classify_singularity(v, p / lam, ClassifyCfg(u_floor=1e-12))
    assert a.label == b.label
    assert np.allclose(a.hessian, b.hessian, atol=1e-8)


# Lojasiewicz ------------------------------------------------------------------------

@pytest.mark.parametrize("field,expected", [
    (sphere_arrival(2), math.sqrt(0.5)),
    (sphere_arrival(3), 1.0),
    (cylinder_arrival(3, 1), math.sqrt(0.5)),
])
def test_lojasiewicz_exact_constant(field, expected):
    rep = lojasiewicz_analyze(field, np.zeros(field.dim))
    assert rep.verdict == TYPE_I
    assert np.nanmax(np.abs(rep.sup - expected)) <= 1e-3


@pytest.mark.parametrize("make,dim", [(lambda: sphere_arrival(2), 2), (lambda: cylinder_arrival(3, 1), 3)])
def test_lojasiewicz_on_sampled_fields(make, dim):
    h = 1.0 / 128
    f = make().with_resolution(h).sample_vectorized(GridSpec.cube(0.2, 52, dim) if dim == 3 else GridSpec.cube(0.25, 64, 2))
    rep = lojasiewicz_analyze(f, np.zeros(dim), LojasiewiczCfg(u_floor=1e-12))
    assert np.nanmax(np.abs(rep.sup - math.sqrt(0.5))) <= 1e-3


def test_lojasiewicz_verdicts():
    assert lojasiewicz_verdict([0.7, 0.71, 0.7, 0.72]) == TYPE_I
    assert lojasiewicz_verdict([0.5, 0.6, 1.0, 1.6, 2.5]) == TYPE_II
    assert lojasiewicz_verdict([0.5, 0.6, 0.8, 1.0, 1.2]) == INDETERMINATE
    assert lojasiewicz_verdict([0.7, np.nan]) == INDETERMINATE


def test_lojasiewicz_type_ii_on_degenerate_saddle():
    # u = -x^2/2 + y^4: |u|^{1/2} / |grad u| ~ 1 / |y| along the y axis,
    # which an odd cell count puts on the grid
    g = GridSpec.cube(0.5 + 0.5 / 128, 129, 2)
    f = ScalarField.sample(g, lambda x: -0.5 * x[..., 0] ** 2 + x[..., 1] ** 4)
    rep = lojasiewicz_analyze(f, np.zeros(2), LojasiewiczCfg(u_floor=1e-12, r0_cells=32))
    s = rep.sup[np.isfinite(rep.sup)]
    assert np.all(np.diff(s[-3:]) > 0)
    assert rep.verdict == TYPE_II


def test_contradiction_flag():
    f = sampled(sphere_arrival(2))
    rec = classify_singularity(f, np.zeros(2), ClassifyCfg(u_floor=1e-12))
    rep = lojasiewicz_analyze(f, np.zeros(2), LojasiewiczCfg(u_floor=1e-12))
    assert not contradiction_flag(rec, rep)
    rec.classification = SADDLE
    assert contradiction_flag(rec, rep)


def test_lojasiewicz_skips_sparse_radii():
    rep = lojasiewicz_analyze(sampled(sphere_arrival(2)), np.zeros(2),
                              LojasiewiczCfg(u_floor=1e-12, r_min_cells=0.5))
    assert len(rep.skipped) >= 1
    assert "skipped_radii" in rep.to_text()


# clearing out ------------------------------------------------------------------

def test_clearing_out_round_point_trivial():
    f = sampled(sphere_arrival(2, 0.4))
    res = clearing_out_check(f, np.zeros(2), 3.0, [1e-3, 1e-2])
    assert res.all_cleared()


def test_clearing_out_fails_through_regular_level_sets():
    g = GridSpec.cube(0.5, 64, 2)
    f = ScalarField.sample(g, lambda x: x[..., 0])
    res = clearing_out_check(f, np.zeros(2), 3.0, [1e-3, 4e-3], tolerance=1e-12)
    assert not np.any(res.cleared)
    assert np.all(res.margin < 0)


def test_clearing_out_unevaluable_near_boundary():
    f = sampled(sphere_arrival(2))
    res = clearing_out_check(f, np.zeros(2), 30.0, [0.1])
    assert not res.evaluable[0] and not res.all_cleared()
    with pytest.raises(ValueError):
        clearing_out_check(f, np.zeros(2), 3.0, [-1.0])


# cylindrical scale --------------------------------------------------------------

def test_cylindrical_scale_exact_cylinder_and_sphere():
    cyl = sampled(cylinder_arrival(3, 1), half=0.4)
    r_max = 16 * cyl.h
    assert cylindrical_scale(cyl, np.zeros(3), np.array([0.0, 0.0, 1.0]), r_max=r_max) == pytest.approx(r_max)
    sph = sampled(sphere_arrival(3), half=0.4)
    assert cylindrical_scale(sph, np.zeros(3), np.array([0.0, 0.0, 1.0]), r_max=r_max) == 0.0
    with pytest.raises(ValueError):
        cylindrical_scale(cyl, np.zeros(3), np.array([0.0, 0.0, 1.0]), phi=2.0)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.01, 0.1), st.floats(0.01, 0.1))
def test_cylindrical_scale_monotone_in_eps(e1, e2):
    f = ring_field(h=1.0 / 48)
    p = np.array([0.5, 0.0, 0.0])
    axis = np.array([0.0, 1.0, 0.0])
    lo, hi = sorted((e1, e2))
    assert cylindrical_scale(f, p, axis, phi=1.0, eps=lo) <= cylindrical_scale(f, p, axis, phi=1.0, eps=hi)


# set fits ---------------------------------------------------------------------------

def test_fit_circle_recovers_circle():
    th = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    P = np.column_stack([1.2 * np.cos(th) + 0.1, 1.2 * np.sin(th), 0.3 + 0 * th])
    c = fit_circle(P)
    assert c.radius == pytest.approx(1.2)
    assert np.allclose(c.center, [0.1, 0.0, 0.3])
    assert c.rms < 1e-10


def test_point_and_cluster_models():
    f = sampled(sphere_arrival(2))
    rec = classify_singularity(f, np.zeros(2), ClassifyCfg(u_floor=1e-12))
    m = fit_singular_set([rec], f.h)
    assert m.kind == "point" and m.rms_residual == 0.0
    other = classify_singularity(f, np.array([0.2, 0.0]), ClassifyCfg(u_floor=1e-12))
    assert len(fit_all([rec, other], f.h)) == 2
    with pytest.raises(ValueError):
        fit_singular_set([rec, other], f.h)


def test_cluster_points_links_chains():
    P = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [1.0, 1.0]])
    groups = cluster_points(P, 0.15)
    assert sorted(len(g) for g in groups) == [1, 3]


# profiles and moduli ---------------------------------------------------------------

def test_slice_max_profile_constant_on_cylinder():
    f = sampled(cylinder_arrival(3, 1, 0.3), half=0.4)
    prof = slice_max_profile(f, np.zeros(3), np.array([0.0, 0.0, 1.0]), (-0.2, 0.2), 0.1, slices=9)
    assert not prof.truncated
    assert np.allclose(prof.umax, 0.045, atol=1e-9)


def test_slice_max_profile_flags_truncation():
    f = sampled(cylinder_arrival(3, 1, 0.3), half=0.4)
    prof = slice_max_profile(f, np.zeros(3), np.array([0.0, 0.0, 1.0]), (-0.6, 0.0), 0.1, slices=7)
    assert prof.truncated and np.isnan(prof.umax[0])


def test_hessian_modulus_exact_sphere_is_small():
    f = sampled(sphere_arrival(2, 0.4))
    mod = hessian_continuity_modulus(f, np.zeros(2), 8 * f.h * np.array([2.0, 1.0, 0.5]))
    assert np.all(mod.samples > 0)
    assert np.max(mod.modulus) <= 0.1


def test_interior_local_minima_found_on_dimple():
    g = GridSpec.cube(0.5, 64, 2)
    f = ScalarField.sample(g, lambda x: 1 - np.sum(x * x, -1) - 0.05 * np.exp(-np.sum((x - 0.2) ** 2, -1) / 0.002))
    mins = interior_local_minima(f)
    assert len(mins) == 1 and np.linalg.norm(mins[0] - 0.2) <= 2 * g.h
    assert len(interior_local_minima(sampled(sphere_arrival(2)))) == 0


def test_reports(tmp_path):
    f = sampled(sphere_arrival(2))
    rec = classify_singularity(f, np.zeros(2), ClassifyCfg(u_floor=1e-12))
    rep = lojasiewicz_analyze(f, np.zeros(2), LojasiewiczCfg(u_floor=1e-12))
    write_report(tmp_path / "r.txt", [rec], [rep], fit_all([rec], f.h), {"scenario": "x"})
    text = (tmp_path / "r.txt").read_text()
    for block in ("[run]", "[singular_point]", "[lojasiewicz]", "[singular_set]", "classification = Round"):
        assert block in text
    write_records_csv(tmp_path / "r.csv", [rec])
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0].startswith("x0,x1,u,grad_norm") and rows[1].endswith("Round,LocalMax")
    rep.write_csv(tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text().startswith("r,s,samples")
