import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import CURVED3, SPHERE, TORUS, cached_spec
from nambugeom import verify as vf
from nambugeom.embedding import resolve, spec_from_dict


# -- sampling -------------------------------------------------------------------

def test_sphere_grid_three_avoids_poles():
    pts = vf.sample_points(cached_spec(SPHERE), "grid", k=3)
    assert len(pts) == 9
    assert all(0 < p[0] < math.pi and abs(math.sin(p[0])) > 1e-3 for p in pts)


def test_random_points_reproduce():
    spec = cached_spec(TORUS)
    a = vf.sample_points(spec, "random", count=5, seed=42)
    assert a == vf.sample_points(spec, "random", count=5, seed=42)
    assert a != vf.sample_points(spec, "random", count=5, seed=43)
    # the generator is PCG64 from numpy; freeze the first draw
    expected = np.random.Generator(np.random.PCG64(42)).random(2)
    box = vf.interior_box(spec)
    assert a[0][0] == pytest.approx(box[0][0] + (box[0][1] - box[0][0]) * expected[0], rel=0, abs=0)


def test_torus_grid_two_interior():
    spec = cached_spec(TORUS)
    pts = vf.sample_points(spec, "grid", k=2)
    assert len(pts) == 4
    box = vf.interior_box(spec)
    assert all(lo <= x <= hi for p in pts for x, (lo, hi) in zip(p, box))
    assert sorted({p[0] for p in pts}) == pytest.approx([math.pi / 2, 3 * math.pi / 2])


@given(st.integers(2, 6), st.sampled_from(["catalog:plane", SPHERE, "catalog:s3?r=1"]))
def test_grid_points_inside_margin_box(k, ref):
    spec = cached_spec(ref)
    pts = vf.grid_points(spec, k)
    assert len(pts) == k ** spec.n
    box = vf.interior_box(spec)
    assert all(lo <= x <= hi for p in pts for x, (lo, hi) in zip(p, box))
    assert len(set(pts)) == len(pts)


def test_sampling_preconditions():
    spec = cached_spec(SPHERE)
    with pytest.raises(ValueError):
        vf.grid_points(spec, 1)
    with pytest.raises(ValueError):
        vf.random_points(spec, 0, 1)
    with pytest.raises(ValueError):
        vf.sample_points(spec, "sobol")


# -- run_suite ------------------------------------------------------------------

def _suite(ref, points, **kw):
    return vf.run_suite(cached_spec(ref), points, **kw)


def test_sphere_grid_three_all_pass():
    spec = cached_spec(SPHERE)
    rep = vf.run_suite(spec, vf.grid_points(spec, 3))
    assert rep.all_passed, [c.as_dict() for c in rep.failures()][:3]
    assert rep.counts["pass"] > 0


def test_every_check_listed_for_every_point_and_mode():
    spec = cached_spec("catalog:clifford")
    pts = vf.random_points(spec, 2, 3)
    rep = vf.run_suite(spec, pts)
    assert len(rep.checks) == len(pts) * 2 * len(vf.CHECK_IDS)
    assert sum(rep.counts.values()) == len(rep.checks)
    by_status = {s: sum(c.status == s for c in rep.checks) for s in rep.counts}
    assert by_status == rep.counts
    na = {c.id for c in rep.checks if c.status == "n/a"}
    # hypersurface and R^3 checks are gated off for a codimension 2 surface in R^4
    assert {"detW", "symmetric-functions", "cm-surface-r3", "poisson-r3", "cm-hyper-swap"} <= na
    assert "barm-TrBN" not in na and "complex-structure" not in na


def test_residual_invariants():
    rep = _suite("catalog:graph3", vf.grid_points(cached_spec("catalog:graph3"), 2))
    for c in rep.checks:
        if c.residual is not None:
            assert c.residual >= 0
            assert c.passed == (c.residual <= c.tol)


def test_clifford_reports_Z_trace_two():
    spec = cached_spec("catalog:clifford")
    rep = vf.run_suite(spec, vf.random_points(spec, 4, 1), which=["z-trace", "z-idempotent"])
    vals = [c.value for c in rep.checks if c.id == "z-trace"]
    assert len(vals) == 8 and rep.all_passed
    assert all(v == pytest.approx(2.0, abs=1e-9) for v in vals)


def test_saddle_negative_curvature_reported():
    spec = resolve("catalog:graph2?f=u1^2-u2^2")
    rep = vf.run_suite(spec, vf.grid_points(spec, 3), which=["gauss-K-S", "gauss-K-Z"])
    assert rep.all_passed
    ks = [c.value for c in rep.checks if c.id == "gauss-K-S"]
    assert all(k < 0 for k in ks)
    # centre of the 3x3 grid is the origin, where K = -4
    centre = [c for c in rep.checks if c.id == "gauss-K-S" and np.allclose(c.point, 0)]
    assert centre and centre[0].value == pytest.approx(-4.0, abs=1e-12)


def test_curved_ambient_suite_gates_euclidean_checks():
    spec = spec_from_dict(CURVED3)
    rep = vf.run_suite(spec, vf.grid_points(spec, 2))
    assert rep.all_passed, [c.as_dict() for c in rep.failures()][:3]
    na = {c.id for c in rep.checks if c.status == "n/a"}
    assert {"barm-TrBB", "detW", "gauss-K-Z", "cm-surface-r3", "cm-hyper-swap"} <= na
    assert "cm-thm" not in na and "gauss-K-S" not in na


def test_degenerate_points_are_listed_not_dropped():
    spec = cached_spec(SPHERE)
    rep = vf.run_suite(spec, [(0.0, 1.0), (1.0, 1.0)])
    assert len(rep.skipped) == 2  # the pole, in both density modes
    assert {s["density_mode"] for s in rep.skipped} == {"sqrt_g", "one"}
    pole = [c for c in rep.checks if c.point == (0.0, 1.0)]
    assert len(pole) == 2 * len(vf.CHECK_IDS)
    assert {c.status for c in pole} <= {"skipped-degenerate", "n/a"}
    assert rep.all_passed


def test_custom_density_mode_runs_when_declared():
    spec = resolve("catalog:torus?R=2,r=1")
    from dataclasses import replace
    from nambugeom.exprlang import parse
    spec = replace(spec, density=parse("2+cos(u1)"))
    rep = vf.run_suite(spec, vf.grid_points(spec, 2))
    assert rep.density_modes == ("sqrt_g", "one", "custom") and rep.all_passed


def test_unreachable_tolerance_fails():
    rep = _suite(TORUS, [(0.5, 0.5)], tolerances=vf.Tolerances.uniform(1e-20))
    assert not rep.all_passed and rep.failures()
    assert rep.summary_line().startswith("FAIL")


def test_unknown_check_id_rejected():
    with pytest.raises(ValueError):
        _suite(TORUS, [(0.5, 0.5)], which=["not-a-check"])


def test_check_ids_unique_and_kinds_known():
    assert len(set(vf.CHECK_IDS)) == len(vf.CHECK_IDS)
    assert {c.kind for c in vf.CHECKS} <= {"mixed", "algebraic", "trace", "orthogonal"}
    assert all(c.ref for c in vf.CHECKS)


# -- serialization -----------------------------------------------------------------

def test_report_json_schema_and_determinism():
    spec = cached_spec(TORUS)
    pts = vf.grid_points(spec, 2)
    a = vf.run_suite(spec, pts, sampling={"mode": "grid", "k": 2}).to_json()
    b = vf.run_suite(spec, pts, sampling={"mode": "grid", "k": 2}).to_json()
    assert a == b and a.endswith("\n")
    doc = json.loads(a)
    assert doc["schema_version"] == 1
    assert doc["run"]["point_count"] == 4 and doc["run"]["sampling"] == {"mode": "grid", "k": 2}
    assert sum(doc["summary"].values()) == len(doc["checks"])
    first = doc["checks"][0]
    assert set(first) == {"id", "paper_ref", "point", "density_mode", "residual", "tol", "status",
                          "pass", "value", "detail"}


def test_dumps_folds_negative_zero_and_nonfinite():
    text = vf.dumps({"a": -0.0, "b": float("nan"), "c": [float("inf"), np.float64(1.5)], "d": 0.1})
    assert json.loads(text) == {"a": 0.0, "b": None, "c": [None, 1.5], "d": 0.1}
    assert "-0.0" not in text and "0.1" in text


def test_nonfinite_residual_is_a_failure():
    c = vf.IdentityCheck("x", "ref", (0.0,), "one", float("nan"), 1e-8, "fail")
    assert not c.passed and json.loads(vf.dumps(c.as_dict()))["residual"] is None


# -- accuracy near coordinate singularities ------------------------------------------------

def test_accuracy_degrades_towards_a_coordinate_singularity():
    # s3 hyperspherical coordinates: sqrt(g) -> 0 as u1, u2 -> 0, so the induced metric is ill-conditioned
    spec = cached_spec("catalog:s3?r=1")
    worst = {}
    for t in (3e-3, 1e-1):
        rep = vf.run_suite(spec, [(t, t, 1.0)], density_modes=["sqrt_g"])
        worst[t] = max(c.residual for c in rep.checks if c.residual is not None)
    assert worst[3e-3] > 1e-7
    assert worst[1e-1] < 1e-9
    # with rho = 1 the same near-singular point falls under the gamma threshold instead
    rep = vf.run_suite(spec, [(3e-3, 3e-3, 1.0)], density_modes=["one"])
    assert rep.skipped and "gamma" in rep.skipped[0]["reason"]
