import math

import jsonschema
import numpy as np
import pytest

from diffinv import catalog
from diffinv.core import BoundaryType
from diffinv.errors import ParamError, UnknownEntry
from diffinv.inversion import build_inversion

from conftest import CATALOG_CASES, case_id, grid, s_margin


def test_bessel2_is_type4_with_square_inversion():
    e = catalog.get("bessel", {"delta": 2})
    assert e.scale(1.5).boundary_type is BoundaryType.TYPE4
    inv = e.inversion(1.5)
    xs = np.geomspace(0.01, 100, 50)
    np.testing.assert_allclose(inv.apply(xs), 2.25 / xs, rtol=1e-12)
    np.testing.assert_allclose(e.exact_inversion(1.5)(xs), 2.25 / xs, rtol=1e-15)


def test_negative_drift_half_line():
    e = catalog.get("brownian_drift", {"mu": -1, "domain": [0, "inf"]})
    assert e.scale().boundary_type is BoundaryType.TYPE2
    xs = np.linspace(0.01, 4, 50)
    np.testing.assert_allclose(e.inversion().harmonic_h(xs), np.expm1(2 * xs) / math.sqrt(2),
                               rtol=1e-10)


def test_hyperbolic_bessel_drift():
    e = catalog.get("hyperbolic_bessel3")
    xs = np.linspace(0.01, 5, 50)
    np.testing.assert_allclose(e.spec.drift(xs), 1 / np.tanh(xs), rtol=1e-14)
    assert e.spec.domain.lower == 0.0 and math.isinf(e.spec.domain.upper)


@pytest.mark.parametrize("delta,expected", [(3, BoundaryType.TYPE3), (5, BoundaryType.TYPE3),
                                            (2, BoundaryType.TYPE4),
                                            (1.5, BoundaryType.TYPE2)])
def test_bessel_index_cases(delta, expected):
    e = catalog.get("bessel", {"delta": delta})
    assert e.scale(1.0).boundary_type is expected


def test_negative_bessel_mirror():
    e = catalog.get("bessel", {"delta": 3, "sign": -1})
    assert e.spec.domain.upper == 0.0
    np.testing.assert_allclose(e.spec.drift(np.array([-2.0])), [-0.5])
    assert e.scale(-1.0).boundary_type is BoundaryType.TYPE2


@pytest.mark.parametrize("name,params", [
    ("bessel", {"delta": 1.5, "killed": False}),
    ("bessel", {"delta": 3, "killed": True}),
    ("bessel", {"delta": "three"}),
    ("bessel", {"sign": 2}),
    ("brownian", {"mu": 1}),
    ("brownian", {"domain": [3, 1]}),
    ("hyperbolic_bessel3", {"mu": -1}),
    ("brownian_drift", {"mu": float("nan")}),
])
def test_param_errors(name, params):
    with pytest.raises(ParamError):
        catalog.get(name, params)


def test_unknown_entry():
    with pytest.raises(UnknownEntry):
        catalog.get("ornstein_uhlenbeck")
    with pytest.raises(UnknownEntry):
        catalog.expected_duality("ornstein_uhlenbeck")


# -- expected duality --------------------------------------------------------


def test_expected_dual_bessel():
    d = catalog.expected_duality("bessel", {"delta": 3})
    assert d.family == "bessel"
    assert d.params["delta"] == 1.0 and d.params["killed"] is True


def test_expected_dual_bm_half_line():
    d = catalog.expected_duality("brownian", {"domain": [0, "inf"]}, 2.0)
    assert d.family == "bessel" and d.params["delta"] == 3.0
    assert d.offset == 0.0 and d.orientation == 1.0


def test_expected_dual_bm_midpoint_is_self_dual():
    d = catalog.expected_duality("brownian", {"domain": [0, 3]}, 1.5)
    assert d.family == "brownian"
    assert d.params["domain"] == [0.0, 3.0]


def test_expected_dual_negative_drift():
    d = catalog.expected_duality("brownian_drift", {"mu": -1})
    assert d.family == "hyperbolic_bessel3" and d.params["mu"] == 1.0


@pytest.mark.parametrize("case", CATALOG_CASES, ids=case_id)
def test_expected_dual_drift_matches_dual(case):
    from diffinv.doob import make_dual
    name, params, x0, spread = case
    e = catalog.get(name, params)
    inv = e.inversion(x0)
    xs = s_margin(inv, grid(e.spec.domain, inv.x0, spread or 100.0, n=200))
    exp = catalog.expected_duality(name, params, inv.x0)
    got = make_dual(e.spec, inv).dual_drift(xs)
    want = exp.drift(xs)
    np.testing.assert_allclose(got, want, rtol=1e-7, atol=1e-9)


# -- closed forms against the generic pipeline -------------------------------


@pytest.mark.parametrize("case", CATALOG_CASES, ids=case_id)
def test_exact_scale_matches_quadrature(case):
    name, params, x0, spread = case
    e = catalog.get(name, params)
    anchor = e.default_x0 if x0 is None else x0
    exact = e.scale(anchor, reference=False)
    numeric = e.numeric_scale(anchor)
    assert numeric.boundary_type is exact.boundary_type
    dom = e.spec.domain
    xs = grid(dom, anchor, min(spread or 100.0, 10.0), n=200)
    a, b = exact.s(xs), numeric.s(xs)
    ok = np.isfinite(a) & (np.abs(a) < 1e6)
    np.testing.assert_allclose(b[ok], a[ok], rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("case", CATALOG_CASES, ids=case_id)
def test_exact_inversion_matches_pipeline(case):
    name, params, x0, spread = case
    e = catalog.get(name, params)
    x0 = e.default_x0 if x0 is None else x0
    exact = e.exact_inversion(x0) if e.exact_inversion else None
    if exact is None:
        pytest.skip("no closed-form inversion at this x0")
    inv = build_inversion(e.numeric_scale(x0), x0)
    xs = s_margin(inv, grid(e.spec.domain, x0, min(spread or 100.0, 10.0), n=100), 1e-4)
    want = exact(xs)
    np.testing.assert_allclose(inv.apply(xs), want, rtol=1e-8, atol=1e-8)


# -- schema ------------------------------------------------------------------


def test_schema_validates_catalog_configs():
    sch = catalog.schema()
    jsonschema.validate({"kind": "bessel", "params": {"delta": 3}}, sch)
    jsonschema.validate({"kind": "brownian", "params": {"domain": [0, "inf"]}}, sch)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"kind": "bessel", "params": {"nu": 3}}, sch)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"kind": "ou"}, sch)


def test_registry_names():
    assert set(catalog.NAMES) == {"brownian", "brownian_drift", "bessel", "hyperbolic_bessel3"}
    for name in catalog.NAMES:
        e = catalog.get(name)
        assert e.notes
