"""End-to-end runs of the builtin scenarios (cached for the session)."""
import math

import numpy as np
import pytest

from mcflab.flowlines import REACHED_CRITICAL, cone_consistency, monotone
from mcflab.scenarios import select_points
from mcflab.singular import CYLINDRICAL, ROUND, SADDLE, SingularPointRecord, TYPE_I, slice_max_profile

pytestmark = pytest.mark.slow


def _rec(x, cls=ROUND, g=0.0):
    n = len(x)
    return SingularPointRecord(np.array(x, float), 0.0, g, -np.eye(n), -np.ones(n), np.eye(n), 0, cls, None, "")


def test_select_points_orders_saddles_then_clusters():
    h = 0.01
    recs = [_rec((0.0, 0.0)), _rec((0.01, 0.0), g=1e-3), _rec((1.0, 0.0), SADDLE, 1e-2),
            _rec((1.01, 0.0), SADDLE, 1e-4), _rec((-1.0, 0.0))]
    out = select_points(recs, h, 3)
    assert out[0] is recs[3]                        # the flattest saddle comes first
    assert {id(r) for r in out[1:]} == {id(recs[0]), id(recs[4])}
    assert select_points(recs, h, 0) == []


def test_sphere2d(run_of):
    rep, af, out = run_of("sphere2d")
    assert len(rep.records) == 1 and rep.records[0].classification == ROUND
    assert np.linalg.norm(rep.records[0].location) <= af.h
    assert rep.extinction_time == pytest.approx(0.32, abs=1e-3)
    # a shrinking circle: entropy of the circle, non-increasing Huisken functional
    assert rep.entropy.value == pytest.approx(math.sqrt(2 * math.pi / math.e), rel=1e-3)
    F = rep.huisken[:, 1]
    assert np.all(np.diff(F) <= 1e-3 * F[0])
    a = rep.analyses[0]
    assert a.lojasiewicz.verdict == TYPE_I
    assert all(l.reason == REACHED_CRITICAL and monotone(l) for l in a.flowlines)
    assert all(b.applicable and b.worst_slack >= 0 for b in a.arc_bounds)
    for name in ("report.txt", "singular_points.csv", "arrival.vtk", "entropy.csv", "flowlines.csv"):
        assert (out / name).exists()
    assert "[acceptance]" in (out / "report.txt").read_text()


def test_cylinder3d(run_of):
    rep, af, _ = run_of("cylinder3d")
    assert rep.extinction_time == pytest.approx(0.3**2 / 2, rel=0.01)
    assert rep.records and all(r.label == "Cylindrical(1)" for r in rep.records)
    for r in rep.records:
        assert np.hypot(r.location[0], r.location[1]) <= af.h
        assert abs(abs(r.axis[2, 0]) - 1) <= 1e-3
    assert all(a.lojasiewicz.verdict == TYPE_I for a in rep.analyses)
    assert rep.passed


def test_torus3d_flowlines_and_cone(run_of):
    rep, af, _ = run_of("torus3d")
    assert all(r.classification == CYLINDRICAL for r in rep.records)
    phi = 0.3
    for a in rep.analyses:
        beta = a.lojasiewicz.beta
        assert beta == pytest.approx(math.sqrt(0.5), rel=0.1)
        ok = [b for b in a.arc_bounds if b.applicable]
        assert len(ok) == len(a.flowlines) > 0
        assert min(b.worst_slack for b in ok) >= 0
        # normal-plane launches keep z ~ 0, so the two cone estimates never both hold
        p, axis = a.local.location, a.local.axis[:, 0]
        for l in a.flowlines:
            for x, u in zip(l.x, l.u):
                c = cone_consistency(beta, phi, 3, abs((x - p) @ axis), u - a.local.value)
                assert c["phi_admissible"] and not c["both"]


def test_dumbbell3d_saddle(run_of):
    rep, af, _ = run_of("dumbbell3d")
    labels = sorted(r.label for r in rep.records)
    assert labels.count("Round") == 2 and SADDLE in labels
    sad = [a for a in rep.analyses if a.record.classification == SADDLE]
    assert len(sad) == 1
    s = sad[0]
    assert np.linalg.norm(s.local.location) <= 0.05
    assert s.local.eigenvalues[-1] > 0 > s.local.eigenvalues[0]
    assert s.clearing.all_cleared()
    # the measured Lojasiewicz ratio stays bounded, which contradicts a saddle
    assert s.contradiction
    tips = sorted(a.local.location[2] for a in rep.analyses if a.record.classification == ROUND)
    assert tips[0] == pytest.approx(-tips[1], abs=2 * af.h)


def test_dumbbell3d_slice_profile_has_minimum_at_neck(run_of):
    # at a saddle u increases away from the neck along the axis: no slice
    # maximum falls below the neck value
    rep, af, _ = run_of("dumbbell3d")
    s = next(a for a in rep.analyses if a.record.classification == SADDLE)
    pr = slice_max_profile(af.u, s.local.location, [0.0, 0.0, 1.0], (-0.3, 0.3), 0.05, slices=13)
    d = pr.umax - s.local.value
    assert not pr.truncated
    assert np.all(d[:5] > 5e-4) and np.all(d[-5:] > 5e-4)
    assert np.all(np.diff(d[:6]) < 0) and np.all(np.diff(d[7:]) > 0)
    assert abs(d[6]) <= 1e-4


def test_torus3d_slice_profile_constant_along_ring(run_of):
    rep, af, _ = run_of("torus3d")
    a = rep.analyses[0]
    p, tangent = a.local.location, a.local.axis[:, 0]
    pr = slice_max_profile(af.u, p, tangent, (-0.2, 0.2), 0.05, slices=9)
    assert not pr.truncated
    assert np.max(np.abs(pr.umax - a.local.value)) <= 2e-4
