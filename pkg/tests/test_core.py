import math
import threading

import numpy as np
import pytest
from scipy import integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from diffinv import catalog
from diffinv.core import (
    BoundaryType,
    ClosedFormScale,
    DiffusionSpec,
    Interval,
    build_scale,
    expected_exit_time,
    green_kernel,
    hitting_probability,
    scale_inverse,
    speed_density,
)
from diffinv.errors import BoundaryError, DomainError, RangeError
from diffinv.paths import SimulationJob, run_batch
from diffinv.stats import MCEstimate


def const(v):
    return lambda x: np.full_like(np.asarray(x, dtype=float), v)


def bm(l, r):
    return DiffusionSpec(Interval.parse([l, r]), const(1.0), const(0.0), name="bm")


def bessel3():
    return DiffusionSpec(Interval(0.0, math.inf), const(1.0),
                         lambda x: 1.0 / np.asarray(x, dtype=float), name="bes3")


def drift_bm(mu):
    return DiffusionSpec(Interval(0.0, math.inf), const(1.0), const(mu), name="dbm")


# -- Interval ----------------------------------------------------------------

def test_interval_parse_tokens():
    iv = Interval.parse(["-inf", "inf"])
    assert iv.lower == -math.inf and iv.upper == math.inf
    assert iv.to_tokens() == ["-inf", "inf"]
    assert Interval.parse([0, "inf"]).to_tokens() == [0.0, "inf"]


@pytest.mark.parametrize("bounds", [[1, 1], [2, 1], ["nan", 1], [0]])
def test_interval_rejects_bad_bounds(bounds):
    with pytest.raises(DomainError):
        Interval.parse(bounds)


def test_interval_is_open():
    iv = Interval(0.0, 1.0)
    assert not iv.contains(0.0) and not iv.contains(1.0) and iv.contains(0.5)


# -- build_scale -------------------------------------------------------------

def test_scale_of_bm_is_affine():
    sc = build_scale(bm(0, 1), 0.5)
    xs = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(sc.s(xs), xs - 0.5, atol=1e-12)
    assert sc.boundary_type is BoundaryType.TYPE1
    assert sc.s_at_l == pytest.approx(-0.5, abs=1e-12)
    assert sc.s_at_r == pytest.approx(0.5, abs=1e-12)


def test_scale_of_bessel3_is_affine_image_of_minus_inverse():
    # normalized at 1: s(x) = 1 - 1/x
    sc = build_scale(bessel3(), 1.0)
    xs = np.geomspace(0.05, 50, 40)
    np.testing.assert_allclose(sc.s(xs), 1 - 1 / xs, rtol=1e-10, atol=1e-12)
    assert sc.s_at_l == -math.inf
    assert sc.s_at_r == pytest.approx(1.0, abs=1e-9)
    assert sc.boundary_type is BoundaryType.TYPE3


def test_scale_of_negative_drift_bm_is_type2():
    c = 0.3
    sc = build_scale(drift_bm(-1.0), c)
    xs = np.linspace(0.01, 4, 40)
    np.testing.assert_allclose(sc.s(xs), (np.exp(2 * (xs - c)) - 1) / 2, rtol=1e-10, atol=1e-12)
    assert sc.s_at_l == pytest.approx((math.exp(-2 * c) - 1) / 2, abs=1e-10)
    assert sc.s_at_r == math.inf
    assert sc.boundary_type is BoundaryType.TYPE2


def test_scale_of_bm_on_line_is_type4():
    sc = build_scale(bm("-inf", "inf"), 0.0)
    assert sc.boundary_type is BoundaryType.TYPE4


def test_anchor_outside_domain():
    with pytest.raises(DomainError):
        build_scale(bm(0, 1), 1.5)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
@settings(max_examples=50, deadline=None)
def test_normalization_and_monotonicity(anchor, other):
    spec = DiffusionSpec(Interval(0.0, 1.0), lambda x: 1 + np.asarray(x) ** 2,
                         lambda x: np.sin(3 * np.asarray(x)))
    sc = build_scale(spec, anchor)
    assert abs(float(sc.s(anchor))) < 1e-9
    assert abs(float(sc.s_prime(anchor)) - 1) < 1e-9
    xs = np.sort(np.random.default_rng(0).uniform(0.001, 0.999, 200))
    assert np.all(np.diff(sc.s(xs)) > 0)
    assert np.all(sc.s_prime(xs) > 0)
    # s agrees with the direct double integral at one more point
    assert float(sc.s(other)) == pytest.approx(_double_integral(spec, anchor, other), abs=1e-9)


def _double_integral(spec, c, x):
    # independent oracle: nested adaptive quadrature
    def g(z):
        return 2 * float(spec.drift(z)) / float(spec.sigma2(z))

    def sp(z):
        return math.exp(-integrate.quad(g, c, z, epsabs=1e-14, epsrel=1e-13)[0])

    return integrate.quad(sp, c, x, epsabs=1e-14, epsrel=1e-13)[0]


@pytest.mark.parametrize("name, params, expected", [
    ("brownian", {"domain": [0, 1]}, BoundaryType.TYPE1),
    ("brownian", {"domain": [0, "inf"]}, BoundaryType.TYPE2),
    ("brownian", {"domain": ["-inf", 0]}, BoundaryType.TYPE3),
    ("brownian", {"domain": ["-inf", "inf"]}, BoundaryType.TYPE4),
    ("brownian_drift", {"mu": -1}, BoundaryType.TYPE2),
    ("brownian_drift", {"mu": 1}, BoundaryType.TYPE1),
    ("bessel", {"delta": 3}, BoundaryType.TYPE3),
    ("bessel", {"delta": 1, "killed": True}, BoundaryType.TYPE2),
    ("bessel", {"delta": 2}, BoundaryType.TYPE4),
    ("hyperbolic_bessel3", {"mu": 1}, BoundaryType.TYPE3),
])
def test_classification_numeric_and_reference_agree(name, params, expected):
    e = catalog.get(name, params)
    anchor = e.default_x0 or 1.0 if e.spec.domain.contains(1.0) else (e.default_x0 or -1.0)
    assert e.scale(anchor).boundary_type is expected
    assert e.numeric_scale(anchor).boundary_type is expected


def test_boundary_type_matches_limits():
    for bt, (l, r) in {BoundaryType.TYPE1: (0, 1), BoundaryType.TYPE2: (0, math.inf),
                       BoundaryType.TYPE3: (-math.inf, 0), BoundaryType.TYPE4: (-math.inf, math.inf)}.items():
        assert BoundaryType.from_limits(l, r) is bt


def test_closed_form_reference_scale_kept_as_given():
    cf = ClosedFormScale(value=lambda x: -1 / np.asarray(x), derivative=lambda x: 1 / np.asarray(x) ** 2)
    sc = build_scale(bessel3(), 1.0, closed_form=cf, normalize=False)
    assert float(sc.s(2.0)) == -0.5
    assert sc.s_at_r == pytest.approx(0.0, abs=1e-12)


# -- scale_inverse -----------------------------------------------------------

def test_scale_inverse_examples():
    assert float(scale_inverse(build_scale(bm(0, 1), 0.5), 0.0)) == pytest.approx(0.5, abs=1e-12)
    cf = ClosedFormScale(value=lambda x: -1 / np.asarray(x), derivative=lambda x: 1 / np.asarray(x) ** 2)
    sc = build_scale(bessel3(), 1.0, closed_form=cf, normalize=False)
    assert float(scale_inverse(sc, -2.0)) == pytest.approx(0.5, rel=1e-12)
    cf = ClosedFormScale(value=lambda x: (np.exp(2 * np.asarray(x)) - 1) / 2,
                         derivative=lambda x: np.exp(2 * np.asarray(x)))
    sc = build_scale(drift_bm(-1.0), 0.5, closed_form=cf, normalize=False)
    x = float(scale_inverse(sc, 1.0))
    assert x == pytest.approx(0.5 * math.log(3), rel=1e-10)
    assert float(sc.s(x)) == pytest.approx(1.0, abs=1e-10)


def test_scale_inverse_out_of_range():
    sc = build_scale(bm(0, 1), 0.5)
    with pytest.raises(RangeError):
        scale_inverse(sc, 0.6)


@given(st.floats(-0.999, 0.999))
@settings(max_examples=100, deadline=None)
def test_scale_inverse_round_trip_numeric(y):
    sc = build_scale(bessel3(), 1.0)  # s = 1 - 1/x, range (-inf, 1)
    x = float(scale_inverse(sc, y))
    assert float(sc.s(x)) == pytest.approx(y, abs=1e-10)


# -- hitting probabilities and Green kernel ----------------------------------

def test_hitting_probability_examples():
    assert hitting_probability(build_scale(bm(0, 2), 1.0), 0.0, 0.5, 2.0) == pytest.approx(0.75)
    cf = ClosedFormScale(value=lambda x: -1 / np.asarray(x), derivative=lambda x: 1 / np.asarray(x) ** 2)
    sc = build_scale(bessel3(), 1.0, closed_form=cf, normalize=False)
    assert hitting_probability(sc, 0.5, 1.0, 2.0) == pytest.approx(1 / 3)


def test_hitting_probability_at_s_midpoint():
    sc = build_scale(drift_bm(-1.0), 0.5)
    a, b = 0.2, 1.5
    mid = float(sc.inverse(0.5 * (sc.s(a) + sc.s(b))))
    assert hitting_probability(sc, a, mid, b) == pytest.approx(0.5, abs=1e-10)


def test_hitting_probability_errors():
    sc = build_scale(bm(0, "inf"), 1.0)
    with pytest.raises(DomainError):
        hitting_probability(sc, 0.5, 0.2, 2.0)
    with pytest.raises(BoundaryError):
        hitting_probability(sc, 0.5, 1.0, math.inf)


def test_hitting_probability_matches_monte_carlo():
    spec = bm(0, 2)
    job = SimulationJob(spec, 0.5, 1e-3, 200.0, seed=5, bridge=True, stop_when_observed=False)
    r = run_batch(job, 20000)
    est = MCEstimate.from_samples(r.exit_side == 0)
    assert abs(est.mean - 0.75) < 3 * est.stderr


def test_green_kernel_examples():
    sc = build_scale(bm(0, 1), 0.5)
    J = Interval(0.0, 1.0)
    assert green_kernel(sc, J, 0.5, 0.5) == pytest.approx(0.25)
    assert green_kernel(sc, J, 1e-12, 0.4) == pytest.approx(0.0, abs=1e-11)
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0.01, 0.99, (2, 100))
    np.testing.assert_allclose(green_kernel(sc, J, x, y), green_kernel(sc, J, y, x), atol=1e-12)
    with pytest.raises(DomainError):
        green_kernel(sc, J, 1.5, 0.5)


@pytest.mark.parametrize("x", [0.5, 0.25, 0.1])
def test_expected_exit_time_bm(x):
    sc = build_scale(bm(0, 1), 0.5)
    assert expected_exit_time(sc, speed_density(bm(0, 1), sc), Interval(0.0, 1.0), x) == \
        pytest.approx(x * (1 - x), rel=1e-9)


def test_speed_density_definition():
    spec = bessel3()
    sc = build_scale(spec, 1.0)
    xs = np.linspace(0.2, 5, 30)
    np.testing.assert_allclose(speed_density(spec, sc).m_prime(xs), 2 / sc.s_prime(xs), rtol=1e-12)


@pytest.mark.parametrize("spec, J, x", [
    (bm(0, 1), Interval(0.0, 1.0), 0.3),
    (bessel3(), Interval(0.5, 2.0), 1.0),
])
def test_exit_time_matches_monte_carlo(spec, J, x):
    sc = build_scale(spec, x)
    exact = expected_exit_time(sc, speed_density(spec, sc), J, x)
    job = SimulationJob(spec, x, 1e-4, 50.0, seed=9, kill_interval=J, bridge=True,
                        stop_when_observed=False)
    r = run_batch(job, 4000)
    est = MCEstimate.from_samples(r.lifetime)
    assert abs(est.mean - exact) < 3 * est.stderr + 1e-3 * exact


def test_scale_is_thread_safe():
    sc = build_scale(bessel3(), 1.0)
    xs = np.geomspace(0.01, 1e4, 300)
    out = [None] * 4

    def work(k):
        out[k] = sc.s(xs[k::4])

    threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    merged = np.empty_like(xs)
    for k in range(4):
        merged[k::4] = out[k]
    np.testing.assert_allclose(merged, 1 - 1 / xs, rtol=1e-10, atol=1e-12)
