import json
import math

import numpy as np
import pytest

import aflow

GOLDEN = math.log((3 + math.sqrt(5)) / 2)


def test_torus_and_quotient():
    assert aflow.torus_reduce(1.25, -0.5) == (0.25, 0.5)
    assert aflow.quotient_canonical(0.5, 0.5) == (0.5, 0.5)
    a = aflow.quotient_canonical(0.3, 0.8)
    b = aflow.quotient_canonical(0.7, 0.2)
    assert a == pytest.approx(b, abs=1e-15)


def test_anosov_map_half_point():
    image, jac = aflow.anosov_map(0.5, 0.0)
    assert image == pytest.approx((0.0, 0.5))
    np.testing.assert_array_equal(jac, [[2.0, 1.0], [1.0, 1.0]])


def test_da_map_outside_support_is_linear():
    image, _ = aflow.da_map(0.4, 0.3)
    assert image == aflow.anosov_map(0.4, 0.3)[0]
    with pytest.raises(ValueError):
        aflow.da_map(0.4, 0.3, {"radius": 0.7})


def test_suspension_seam():
    s = aflow.suspension_flow(aflow.anosov_system())
    rec = aflow.integrate(s, "mapping_torus", np.array([0.3, 0.7, 0.0]), 1.0)
    chart, x = rec["states"][-1]
    assert chart == "mapping_torus"
    assert x[0] == pytest.approx(0.3, abs=1e-8)
    assert min(x[1], 1 - x[1]) < 1e-8
    assert [e[1] for e in rec["events"]] == ["seam"]


def test_anosov_spectrum():
    s = aflow.suspension_flow(aflow.anosov_system())
    ex = aflow.lyapunov_spectrum(s, "mapping_torus", np.array([0.12, 0.56, 0.0]), 2000.0)
    assert ex[0] == pytest.approx(GOLDEN, rel=0.01)
    assert abs(ex[1]) < 0.01
    assert ex[2] == pytest.approx(-GOLDEN, rel=0.01)


def test_local_model_cycle():
    sys = aflow.lemma1_system()
    o = aflow.find_periodic_orbit(sys, "lemma1", np.array([1.1, 0.0, 0.1]), np.array([0.0, 1.0, 0.0]))
    assert o["period"] == pytest.approx(2 * math.pi, abs=1e-6)
    assert o["stability"] == "attracting"
    for m in o["floquet_multipliers"]:
        assert abs(m - math.exp(-2 * math.pi)) < 1e-4 * math.exp(-2 * math.pi)


def test_gradient_sphere_equilibria():
    g = aflow.gradient_sphere_flow(3)
    eq = aflow.find_equilibria(g, [("sphere", np.array([0.01, 0, 0, 1.0])), ("sphere", np.array([0.01, 0, 0, -1.0]))])
    assert sorted(e["stability"] for e in eq) == ["sink", "source"]


def test_box_counting_square():
    rng = np.random.default_rng(0)
    pts = rng.random((50000, 2))
    d = aflow.box_counting(pts, [1 / k for k in (4, 6, 9, 13, 19, 28)])
    assert d["value"] == pytest.approx(2.0, abs=0.05)


def test_plykin_non_orientable():
    s = aflow.suspension_flow(aflow.plykin_system())
    v = aflow.orientability_test(s, "mapping_torus", np.array([0.3, 0.6, 0.0]), 3000.0, transient=500.0)
    assert v["verdict"] == "non-orientable"


def test_run_experiment_reports_are_reproducible():
    cfg = "system = da_susp\nseed = 3\nanalyses = lyapunov, trap_check\nlyapunov.T = 200\n"
    a = aflow.run_experiment(cfg)
    b = aflow.run_experiment(cfg)
    assert a["exit_code"] == 0
    assert a["reports"] == b["reports"]
    report = json.loads(a["reports"]["trap_check"])
    assert report["passed"] is True
    assert report["schema_version"] == 1


def test_config_errors_raise_value_error():
    with pytest.raises(ValueError, match="line 2"):
        aflow.run_experiment("system = lemma1\nbogus = 1\n")


def test_assembly_system():
    s = aflow.theorem1_assembly()
    assert s.charts[:3] == ["s3", "south", "plykin"]
    assert "theorem1" in aflow.list_systems()
