import json

import numpy as np
import pytest

from diffinv import catalog, verify
from diffinv.core import hitting_probability
from diffinv.doob import make_dual
from diffinv.errors import ConfigError, InsufficientSurvivors, RejectionStarvation
from diffinv.verify import Thresholds, Verdict


def _bm(domain, x0):
    e = catalog.get("brownian", {"domain": domain})
    return e.spec, e.inversion(x0)


def test_hitting_probabilities_closed_form():
    spec, inv = _bm([0, 3], 1.0)
    a = 0.5
    ia = float(inv.apply(a))
    assert ia == pytest.approx(5 / 3)
    base = hitting_probability(inv.base_scale, a, 1.0, ia)
    dual = hitting_probability(make_dual(spec, inv).dual_scale, ia, 1.0, a)
    assert base == pytest.approx(4 / 7, abs=1e-12)
    assert dual == pytest.approx(4 / 7, abs=1e-12)


def test_hitting_symmetry_report():
    spec, inv = _bm([0, 3], 1.0)
    rep = verify.check_hitting_symmetry(spec, inv, 20_000, 1e-2, x_points=(0.5,), seed=1)
    assert rep.verdict is Verdict.PASS
    names = [r.identity for r in rep.rows]
    assert names[0] == "hitting_symmetry:(0,3)"
    assert any(n.startswith("hitting_asymmetry") for n in names)
    row = rep.rows[1]
    assert row.detail["closed_form_base"] == pytest.approx(4 / 7)


def test_hitting_symmetry_reflection_is_one_half():
    spec, inv = _bm([0, 3], 1.5)
    dual = make_dual(spec, inv)
    assert dual.self_dual
    assert hitting_probability(inv.base_scale, 0.0, 1.5, 3.0) == pytest.approx(0.5)


def test_hitting_symmetry_needs_pairs():
    spec, inv = _bm([0, 3], 1.0)
    with pytest.raises(ConfigError):
        verify.check_hitting_symmetry(spec, inv, 100, 1e-2, x_points=(1.0,))
    spec, inv = _bm([0, "inf"], 1.0)
    with pytest.raises(ConfigError):
        verify.check_hitting_symmetry(spec, inv, 100, 1e-2)


def test_theorem1_reflection():
    spec, inv = _bm(["-inf", "inf"], 0.0)
    rep = verify.check_theorem1_marginal(spec, inv, (0.5, 1.0), 2000, 1e-2, seed=2)
    assert rep.verdict is Verdict.PASS
    assert rep.samples_meta["level"] == pytest.approx(0.005)
    assert rep.samples_meta["dt_halving"]["verdict"] == "Pass"


def test_theorem1_bm_half_line_to_bessel3():
    spec, inv = _bm([0, "inf"], 1.0)
    rep = verify.check_theorem1_marginal(spec, inv, (0.3,), 2000, 1e-3, seed=2, max_time=5.0,
                                         dt_halving=False, keep_samples=True)
    assert rep.verdict is Verdict.PASS
    assert "transformed_t=0.3" in rep.samples
    assert rep.samples_csv().startswith("sample,value\n")


def test_theorem1_insufficient_survivors():
    e = catalog.get("brownian_drift", {"mu": -1, "domain": [0, 2]})
    inv = e.inversion(0.6)
    with pytest.raises(InsufficientSurvivors):
        verify.check_theorem1_marginal(e.spec, inv, (0.3,), 50, 1e-2, dt_halving=False)


def test_conditioning_bm():
    spec, inv = _bm([0, 1], 0.3)
    rep = verify.check_conditioning(spec, inv, 0.1, 5000, 1e-3, seed=3)
    assert rep.verdict is Verdict.PASS
    acc = rep.rows[0].detail
    assert acc["closed_form"] == pytest.approx(0.3)


def test_conditioning_errors():
    spec, inv = _bm([0, "inf"], 1.0)
    with pytest.raises(ConfigError):
        verify.check_conditioning(spec, inv, 0.1, 100, 1e-3)
    spec, inv = _bm([0, 1], 0.3)
    with pytest.raises(RejectionStarvation):
        verify.check_conditioning(spec, inv, 0.1, 100, 1e-3, sides=("upper",),
                                  thresholds=Thresholds(min_acceptance=0.9))


def test_lifetime_hyperbolic_small():
    rep = verify.check_lifetime_laws("HypBessel", 1000, 1e-3, 20.0, seed=5)
    assert rep.verdict is Verdict.PASS
    assert rep.samples_meta["experiment"] == "HypBessel"


def test_clock_duality_report():
    spec, inv = _bm([0, 3], 1.0)
    rep = verify.check_clock_duality(spec, inv, (1e-3, 5e-4), 30, 20.0, seed=4)
    assert rep.rows[1].verdict is Verdict.PASS
    assert len(rep.rows[0].detail["median_sup_deviation"]) == 2


def test_calibration_small():
    rep = verify.calibration(n_rep=100, n=500, seed=1)
    assert rep.verdict is Verdict.PASS
    assert [r.identity for r in rep.rows] == ["calibration:uniform", "calibration:levy",
                                              "calibration:inverse_gaussian"]


def test_verdicts_are_deterministic():
    spec, inv = _bm([0, 1], 0.3)
    a = verify.check_conditioning(spec, inv, 0.1, 2000, 1e-3, seed=9)
    b = verify.check_conditioning(spec, inv, 0.1, 2000, 1e-3, seed=9)
    assert a.to_json() == b.to_json()


def test_report_formats():
    rows = [verify.ReportRow("x", Verdict.PASS, 0.1, 0.5), verify.ReportRow("y", Verdict.FAIL)]
    rep = verify.VerificationReport("demo", {"n": np.int64(3)}, rows, Verdict.FAIL)
    d = json.loads(rep.to_json())
    assert d["verdict"] == "Fail" and d["samples_meta"]["n"] == 3
    assert rep.to_csv() == "identity,D,p_value,verdict\nx,0.1,0.5,Pass\ny,,,Fail\n"
    table = rep.to_table().splitlines()
    assert table[0] == "demo: Fail"
    assert table[1].split() == ["identity", "D", "p_value", "verdict"]


def test_thresholds():
    th = Thresholds.from_dict({"alpha": 0.05, "slope_range": [0.5, 1.5]})
    assert th.alpha == 0.05 and th.slope_range == (0.5, 1.5)
    assert Thresholds.from_dict(None) == Thresholds()
    with pytest.raises(ConfigError):
        Thresholds.from_dict({"beta": 1})
    assert verify.thresholds_dict(th)["slope_range"] == [0.5, 1.5]
