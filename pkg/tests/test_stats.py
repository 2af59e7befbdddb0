import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from diffinv import stats
from diffinv.errors import SampleError


def test_ks_identical_and_disjoint():
    a = np.arange(1.0, 11.0)
    assert stats.ks_two_sample(a, a).statistic == 0.0
    assert stats.ks_two_sample(a, a).p_value == pytest.approx(1.0)
    assert stats.ks_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert stats.ks_distance([1, 2], [3, 4]) == 1.0
    assert stats.ks_two_sample(a, a + 100).statistic == 1.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=60),
       st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=60))
@settings(max_examples=100, deadline=None)
def test_ks_matches_scipy(a, b):
    r = stats.ks_two_sample(a, b)
    ref = sps.ks_2samp(a, b, method="asymp")
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-12)
    assert 0.0 <= r.p_value <= 1.0
    assert r.effective_size == pytest.approx(len(a) * len(b) / (len(a) + len(b)))


GRID = st.lists(st.integers(-40, 40).map(lambda k: k / 8), min_size=10, max_size=50)


@given(GRID, GRID, st.floats(0.1, 10), st.floats(-10, 10))
@settings(max_examples=100, deadline=None)
def test_ks_invariant_under_increasing_maps(a, b, scale, shift):
    # points on a 1/8 grid stay distinct under exp in floating point
    d = stats.ks_distance(a, b)
    assert stats.ks_distance(np.exp(a), np.exp(b)) == pytest.approx(d, abs=1e-12)
    aa = scale * np.array(a) + shift
    bb = scale * np.array(b) + shift
    # affine maps can merge distinct floats by rounding; only exact ties matter
    if len(set(aa)) == len(set(a)) and len(set(bb)) == len(set(b)) \
            and len(set(aa) | set(bb)) == len(set(a) | set(b)):
        assert stats.ks_distance(aa, bb) == pytest.approx(d, abs=1e-12)


def test_ks_p_value_formula():
    g = np.random.default_rng(1)
    a, b = g.normal(size=300), g.normal(0.2, size=200)
    r = stats.ks_two_sample(a, b)
    from scipy.special import kolmogorov
    assert r.p_value == pytest.approx(kolmogorov(math.sqrt(120.0) * r.statistic))


def test_ks_sample_errors():
    with pytest.raises(SampleError):
        stats.ks_two_sample(np.arange(9.0), np.arange(20.0))
    with pytest.raises(SampleError):
        stats.ks_two_sample(np.r_[np.arange(10.0), np.nan], np.arange(20.0))


def test_ks_calibration_uniform():
    passes = 0
    for i in range(100):
        g = np.random.default_rng([7, i])
        passes += stats.ks_two_sample(g.random(10_000), g.random(10_000)).p_value > 0.01
    assert passes >= 98


def test_estimate_stderr():
    est = stats.MCEstimate.from_samples([1.0, 3.0])
    assert est.mean == 2.0 and est.n == 2
    assert est.stderr == pytest.approx(math.sqrt(2) / math.sqrt(2))
    with pytest.raises(SampleError):
        stats.MCEstimate.from_samples([1.0])
    other = stats.MCEstimate(0.0, 0.4, 10)
    assert stats.MCEstimate(0.0, 0.3, 10).combined_stderr(other) == pytest.approx(0.5)


def test_stderr_halves_when_n_quadruples():
    g = np.random.default_rng(3)
    e1 = stats.MCEstimate.from_samples(g.normal(size=20_000))
    e2 = stats.MCEstimate.from_samples(g.normal(size=80_000))
    assert e1.stderr / e2.stderr == pytest.approx(2.0, rel=0.2)
    e3 = stats.MCEstimate.from_samples(g.normal(size=40_000))
    assert e1.stderr / e3.stderr == pytest.approx(math.sqrt(2), rel=0.2)


def test_levy_sampler_against_cdf():
    g = np.random.default_rng(5)
    s = stats.levy_hitting_time(20_000, g)
    assert sps.kstest(s, stats.levy_cdf).pvalue > 1e-3
    # independent closed form: P(H <= t) = 2 P(Z > 1/sqrt(t))
    t = np.array([0.1, 1.0, 10.0])
    np.testing.assert_allclose(stats.levy_cdf(t), 2 * sps.norm.sf(1 / np.sqrt(t)), rtol=1e-12)
    assert stats.levy_cdf(-1.0) == 0.0


def test_levy_from_other_start():
    g = np.random.default_rng(6)
    s = stats.levy_hitting_time(20_000, g, x=2.0)
    assert sps.kstest(s, lambda t: stats.levy_cdf(t, 2.0)).pvalue > 1e-3


@pytest.mark.parametrize("mean,shape", [(0.44068679350977147, 0.194204), (1.0, 1.0), (2.0, 0.5)])
def test_inverse_gaussian_sampler_against_cdf(mean, shape):
    g = np.random.default_rng(8)
    s = stats.inverse_gaussian(20_000, mean, shape, g)
    cdf = lambda t: stats.inverse_gaussian_cdf(t, mean, shape)
    assert sps.kstest(s, cdf).pvalue > 1e-3
    t = np.array([0.05, 0.3, 1.0, 4.0])
    np.testing.assert_allclose(cdf(t), sps.invgauss.cdf(t, mean / shape, scale=shape), rtol=1e-10)
    assert s.mean() == pytest.approx(mean, rel=0.05)


def test_inverse_gaussian_errors():
    with pytest.raises(SampleError):
        stats.inverse_gaussian(10, -1.0, 1.0, np.random.default_rng(0))
