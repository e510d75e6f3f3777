import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from iterpdd.error_analysis import (NSR_RATIOS, NSR_REFERENCE, NSR_S, GlobalErrorParams,
                                    NsrParams, a0_from_epsilon, epsilon_from_a0, extreme_cdf,
                                    gt_constant, gumbel_cdf, gumbel_params, inverse_extreme_cdf,
                                    nsr_simulate, nsr_table, sample_max_normals)

S_SWEEP = (10, 100, 1000, 10_000, 100_000)


def test_gt_constant():
    assert gt_constant(0.0, 2.0, 1.0) == 0.0
    assert gt_constant(1.0, 1.0, 1.0) == pytest.approx(math.e - 1)
    vals = [gt_constant(b, 2.0, 3.0) for b in np.linspace(0, 5, 20)]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(ValueError):
        gt_constant(1.0, 0.0, 1.0)


def test_extreme_cdf_examples():
    assert extreme_cdf(0.0, 1) == pytest.approx(0.5)
    assert extreme_cdf(0.0, 2) == pytest.approx(0.25)


@settings(max_examples=200, deadline=None)
@given(P=st.floats(1e-6, 1 - 1e-6), s=st.integers(1, 100_000))
def test_inverse_round_trip(P, s):
    x = inverse_extreme_cdf(P, s)
    assert extreme_cdf(x, s) == pytest.approx(P, abs=1e-10)


def test_extreme_cdf_brute_force():
    rng = np.random.default_rng(30)
    m = np.empty(1_000_000)
    for i in range(0, m.size, 100_000):
        m[i:i + 100_000] = rng.standard_normal((100_000, 100)).max(axis=1)
    x = inverse_extreme_cdf(0.955, 100)
    assert np.mean(m <= x) == pytest.approx(0.955, abs=0.01)
    for t in (1.5, 2.0, 2.5, 3.0, 3.5):
        assert np.mean(m <= t) == pytest.approx(extreme_cdf(t, 100), abs=0.01)


def test_extreme_cdf_monotone():
    xs = np.linspace(-3, 5, 50)
    for s in (1, 10, 1000):
        F = extreme_cdf(xs, s)
        d = np.diff(F)
        assert np.all(d >= 0) and np.all(d[F[1:] > 1e-300] > 0)
    for x in (-1.0, 0.5, 2.0, 4.0):
        vals = np.array([extreme_cdf(x, s) for s in S_SWEEP])
        live = vals[1:] > 0
        assert np.all(np.diff(vals) <= 0) and np.all(np.diff(vals)[live] < 0)


def _params(s=10, q=2, gamma=1.5):
    from iterpdd.error_analysis import CONFIDENCE
    return GlobalErrorParams(gamma, 1.0, s, q, CONFIDENCE[q])


def test_a0_linear_in_eps():
    p = _params()
    assert a0_from_epsilon(0.2, p) == 2 * a0_from_epsilon(0.1, p)
    assert epsilon_from_a0(a0_from_epsilon(0.3, p), p) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        a0_from_epsilon(0.0, p)


def test_a0_decreasing_in_s_and_mild():
    r = [a0_from_epsilon(1.0, _params(s)) for s in S_SWEEP]
    assert np.all(np.diff(r) < 0)
    assert r[0] / r[-1] < 2


def test_a0_formula_oracle():
    # direct evaluation with scipy's erfinv as an independent route
    from scipy.special import erfinv
    p = _params(100, 2, 1.5)
    expected = 2 * 0.1 / (1.5 * 1.0 * (1 + 2 * math.sqrt(2) / 2 * erfinv(2 * 0.955 ** (1 / 100) - 1)))
    assert a0_from_epsilon(0.1, p) == pytest.approx(expected, rel=1e-12)


def test_global_params_validation():
    with pytest.raises(ValueError):
        GlobalErrorParams(0.5, 1.0, 10)
    with pytest.raises(ValueError):
        GlobalErrorParams(1.5, 1.0, 10, 2, 0.683)
    with pytest.raises(ValueError):
        GlobalErrorParams(1.5, 0.0, 10)


def test_gumbel_params():
    with pytest.raises(ValueError):
        gumbel_params(2)
    with pytest.raises(ValueError):
        gumbel_params(1)
    locs = [gumbel_params(s)[0] for s in S_SWEEP]
    assert np.all(np.diff(locs) > 0)
    loc, scale = gumbel_params(100)
    assert scale == pytest.approx(1 / loc)


def test_gumbel_ks():
    s = 10_000
    loc, scale = gumbel_params(s)
    draws = sample_max_normals(s, 100_000, np.random.default_rng(31))
    ks = stats.kstest(draws, lambda x: gumbel_cdf(x, loc, scale)).statistic
    assert ks <= 0.05


def test_max_sampler_against_brute_force():
    rng = np.random.default_rng(32)
    exact = sample_max_normals(10, 200_000, rng)
    brute = rng.standard_normal((200_000, 10)).max(axis=1)
    assert stats.ks_2samp(exact, brute).pvalue > 1e-3


@pytest.mark.parametrize("r, s, g, expected, tol", [
    (0.0, 10, 1.0, 0.54, 0.02),
    (0.0, 100_000, 1.0, 0.12, 0.01),
    (100.0, 10, 2.0, 0.0094, 0.001),
])
def test_nsr_examples(r, s, g, expected, tol):
    rng = np.random.default_rng(33)
    assert nsr_simulate(NsrParams(r, g, 2.0, s), rng) == pytest.approx(expected, abs=tol)


def test_nsr_independent_of_gamma_when_ratio_zero():
    a = nsr_simulate(NsrParams(0.0, 1.0, 2.0, 100), np.random.default_rng(1))
    b = nsr_simulate(NsrParams(0.0, 3.0, 2.0, 100), np.random.default_rng(1))
    assert a == pytest.approx(b, rel=1e-12)


def test_nsr_vanishes_for_large_ratio():
    vals = [nsr_simulate(NsrParams(r, 1.0, 2.0, 100), np.random.default_rng(2))
            for r in (1.0, 10.0, 100.0, 1e3, 1e4)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-4


def test_nsr_params_validation():
    with pytest.raises(ValueError):
        NsrParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        NsrParams(1.0, 1.0, sample_count=100)


def test_nsr_table_shape_and_reference_layout():
    assert len(NSR_RATIOS) == 6 and len(NSR_S) == 5
    for g, ref in NSR_REFERENCE.items():
        assert np.array(ref).shape == (6, 5)
    tab = nsr_table(1.0, sample_count=10_000, seed=3)
    assert tab.shape == (6, 5)
    assert np.all(tab > 0)
