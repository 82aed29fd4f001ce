import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from unbiased_iv.core import (
    InstrumentBlock,
    ReducedFormStats,
    ar_confidence_set,
    ar_statistic,
    as_block,
    beta_2sls_single,
    beta_fuller,
    beta_u,
    beta_u_draws,
    chi2_1_quantile,
    delta_hat,
    first_stage_f,
    tau_hat,
)
from unbiased_iv.exceptions import ConditioningError, DegenerateError, DomainError
from unbiased_iv.normal import mills_ratio

S = [[1.0, 0.5], [0.5, 1.0]]


def blk(x1, x2, sigma=S):
    return InstrumentBlock([x1, x2], sigma)


# -- types --------------------------------------------------------------------


def test_stats_validation():
    with pytest.raises(ConditioningError):
        ReducedFormStats([1.0], [1.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ConditioningError):
        ReducedFormStats([1.0], [1.0], [[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(DomainError):
        ReducedFormStats([1.0, 2.0], [1.0], np.eye(4))


def test_block_extraction():
    sig = np.arange(16.0).reshape(4, 4)
    sig = sig @ sig.T + np.eye(4)
    st_ = ReducedFormStats([1, 2], [3, 4], sig)
    b = st_.block(1)
    np.testing.assert_array_equal(b.xi, [2, 4])
    np.testing.assert_array_equal(b.sigma, sig[np.ix_([1, 3], [1, 3])])
    assert st_.k == 2


def test_checked_conversion():
    one = ReducedFormStats([3.0], [2.0], S)
    assert beta_u(one) == beta_u(blk(3, 2))
    with pytest.raises(DomainError):
        as_block(ReducedFormStats([1, 1], [1, 1], np.eye(4)))


# -- estimators ---------------------------------------------------------------


def test_tau_hat_examples():
    assert tau_hat(0.0, 1.0) == pytest.approx(1.2533141373155003, rel=1e-14)
    assert tau_hat(2.0, 4.0) == pytest.approx(0.5 * mills_ratio(1.0), rel=1e-15)
    assert tau_hat(2.0, 4.0) == pytest.approx(0.3278402, abs=1e-6)
    with pytest.raises(DomainError):
        tau_hat(1.0, 0.0)
    with pytest.raises(DomainError):
        tau_hat(1.0, -1.0)


def test_tau_hat_unbiased_mc():
    rng = np.random.default_rng(101)
    x = 2.0 + rng.standard_normal(10**7)
    t = tau_hat(x, 1.0)
    se = t.std(ddof=1) / math.sqrt(t.size)
    assert abs(t.mean() - 0.5) <= 4 * se


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20, allow_subnormal=False), st.floats(0.01, 100), st.floats(1e-3, 1e3))
def test_tau_hat_scale_rule(x2, s2sq, a):
    assert tau_hat(a * x2, a * a * s2sq) == pytest.approx(tau_hat(x2, s2sq) / a, rel=1e-12)


def test_delta_hat_examples():
    assert delta_hat(blk(3, 2)) == pytest.approx(2.0)
    assert delta_hat(blk(3, 2, np.eye(2))) == 3.0
    sig = [[2.0, 0.6], [0.6, 1.5]]
    for c in (1.0, -3.0):
        assert delta_hat(blk(c * 0.6 / 1.5, c, sig)) == pytest.approx(0.0, abs=1e-15)


def test_beta_u_examples():
    assert beta_u(blk(0, 2, np.eye(2))) == 0.0
    assert beta_u(blk(3, 2)) == pytest.approx(0.4213692292880545 * 2 + 0.5, rel=1e-14)
    assert beta_u(blk(3, 2)) == pytest.approx(1.3427385, abs=1e-7)


def test_beta_u_unbiased_mc():
    rng = np.random.default_rng(202)
    n = 10**7
    xi = np.column_stack([4.0 + rng.standard_normal(n), 4.0 + rng.standard_normal(n)])
    est = beta_u_draws(xi, np.eye(2))
    se = est.std(ddof=1) / math.sqrt(n)
    assert abs(est.mean() - 1.0) <= 4 * se


def test_2sls_examples():
    assert beta_2sls_single(blk(3, 2)) == 1.5
    assert beta_2sls_single(blk(0, -4)) == 0.0
    assert beta_2sls_single(blk(-2.5, -2.5)) == 1.0
    with pytest.raises(DegenerateError):
        beta_2sls_single(blk(1, 0))


def test_fuller_examples():
    assert beta_fuller(blk(3, 2)) == pytest.approx(1.3)
    assert beta_fuller(blk(0, 0, np.eye(2))) == 0.0
    r = beta_fuller(blk(2e3, 1e3, np.eye(2)))
    assert abs(r - 2.0) <= 10 / 1e6


def test_first_stage_f():
    st_ = ReducedFormStats([0, 0], [3, 4], np.diag([1, 1, 1, 4.0]))
    assert first_stage_f(st_) == pytest.approx((9 + 4) / 2)


# -- AR set -------------------------------------------------------------------


def test_chi2_quantile():
    assert chi2_1_quantile(0.95) == pytest.approx(3.841458820694124, rel=1e-12)
    with pytest.raises(DomainError):
        chi2_1_quantile(1.0)


def _grid_set(b, level, lo=-200, hi=200, step=1e-3):
    g = np.arange(lo, hi, step)
    return g, ar_statistic(g, b) <= chi2_1_quantile(level)


def test_ar_examples():
    cs = ar_confidence_set(blk(0, 10, np.eye(2)))
    assert cs.kind == "interval" and cs.contains(0.0)

    b = blk(3, 2, np.eye(2))
    cs = ar_confidence_set(b, 0.95)
    assert cs.kind == "interval"
    assert cs.lower == pytest.approx(0.432, abs=1e-3)
    q = chi2_1_quantile(0.95)
    # (3 - 2b)^2 <= q (1 + b^2) has roots of (4 - q) b^2 - 12 b + (9 - q)
    assert cs.upper == pytest.approx((12 + np.sqrt(144 - 4 * (4 - q) * (9 - q))) / (2 * (4 - q)), rel=1e-12)
    g, inside = _grid_set(b, 0.95, -5, 100, 1e-4)
    assert g[inside].min() == pytest.approx(cs.lower, abs=2e-4)
    assert g[inside].max() == pytest.approx(cs.upper, abs=2e-4)


def test_ar_weak_instrument_is_whole_line():
    # AR(b) never exceeds (1 + 0.01) / 1 here, so every b is accepted
    b = blk(1, 0.1, np.eye(2))
    cs = ar_confidence_set(b)
    assert cs.kind == "whole_line"
    g, inside = _grid_set(b, 0.95)
    assert inside.all()


def test_ar_union_of_rays():
    b = blk(3, 1, np.eye(2))
    cs = ar_confidence_set(b)
    assert cs.kind == "union_of_rays" and cs.lower < cs.upper
    g, inside = _grid_set(b, 0.95, -50, 50, 1e-3)
    np.testing.assert_array_equal(cs.contains(g), inside)


def test_ar_linear_fallback():
    q = chi2_1_quantile(0.95)
    b = blk(1.0, math.sqrt(q), np.eye(2))
    cs = ar_confidence_set(b)
    assert cs.kind == "interval" and math.isinf(cs.lower) != math.isinf(cs.upper)
    g, inside = _grid_set(b, 0.95, -50, 50, 1e-2)
    np.testing.assert_array_equal(cs.contains(g), inside)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5, allow_subnormal=False), st.floats(-5, 5, allow_subnormal=False), st.floats(-0.9, 0.9, allow_subnormal=False), st.floats(0.5, 0.99))
def test_ar_set_matches_statistic(x1, x2, r, level):
    b = blk(x1, x2, [[1.0, r], [r, 1.0]])
    cs = ar_confidence_set(b, level)
    g = np.linspace(-30, 30, 601)
    stat = ar_statistic(g, b)
    q = chi2_1_quantile(level)
    clear = np.abs(stat - q) > 1e-8
    np.testing.assert_array_equal(np.asarray(cs.contains(g))[clear], (stat <= q)[clear])


# -- properties ---------------------------------------------------------------


def _random_blocks(rng, n):
    s1 = np.exp(rng.uniform(-1, 1, n))
    s2 = np.exp(rng.uniform(-1, 1, n))
    r = rng.uniform(-0.95, 0.95, n)
    x1 = rng.normal(0, 3, n)
    x2 = rng.normal(0, 3, n)
    return x1, x2, s1, s2, r * s1 * s2


def test_shrinkage_and_opposite_side():
    rng = np.random.default_rng(5)
    x1, x2, s1, s2, s12 = _random_blocks(rng, 10**5)
    rho = s12 / s2**2
    xi = np.column_stack([x1, x2])
    bu = np.array([beta_u(InstrumentBlock(xi[i], [[s1[i] ** 2, s12[i]], [s12[i], s2[i] ** 2]]))
                   for i in range(2000)])
    # the scalar path agrees with the vectorized formula used below
    from unbiased_iv.core import _beta_u

    vec = _beta_u(x1, x2, s12, s2**2)
    np.testing.assert_allclose(vec[:2000], bu, rtol=1e-14)
    b2 = x1 / x2
    pos = x2 > 0
    lo = np.minimum(rho, b2)
    hi = np.maximum(rho, b2)
    assert np.all((vec[pos] > lo[pos]) & (vec[pos] < hi[pos]))
    neg = x2 < 0
    assert np.all(np.sign(vec[neg] - rho[neg]) == -np.sign(b2[neg] - rho[neg]))


def test_strong_iv_agreement_derived_bound():
    # |tau - 1/xi2| <= s2^2 / xi2^3 gives |beta_u - 2sls| <= (s2/xi2)^2 |2sls - rho|
    from unbiased_iv.core import _beta_u

    rng = np.random.default_rng(6)
    x1, x2, s1, s2, s12 = _random_blocks(rng, 10**5)
    x2 = np.abs(x2) + 1e-3
    bu = _beta_u(x1, x2, s12, s2**2)
    b2 = x1 / x2
    bound = (s2 / x2) ** 2 * np.abs(b2 - s12 / s2**2)
    assert np.all(np.abs(bu - b2) <= bound * (1 + 1e-12) + 1e-300)


finite = st.floats(-50, 50, allow_subnormal=False)


def beta_u_condition(b):
    # forward-error scale of tau_hat * delta_hat + slope: tau_hat multiplies
    # the rounding error of both terms of delta_hat
    slope = b.sigma[0, 1] / b.sigma[1, 1]
    return tau_hat(b.xi[1], b.sigma[1, 1]) * (abs(b.xi[0]) + abs(slope * b.xi[1])) + abs(slope)


@settings(max_examples=300, deadline=None)
@given(finite, finite, st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-0.95, 0.95, allow_subnormal=False),
       st.one_of(st.floats(0.05, 20), st.floats(-20, -0.05)), finite, st.floats(0.05, 20))
def test_equivariance(x1, x2, s1, s2, r, a1, a2, a3):
    assume(abs(x2) > 1e-3)
    # keep the Mills ratio inside the double range
    assume(x2 / s2 > -37.0)
    sig = np.array([[s1 * s1, r * s1 * s2], [r * s1 * s2, s2 * s2]])
    a = np.array([[a1, a2], [0.0, a3]])
    b = blk(x1, x2, sig)
    bt = InstrumentBlock(a @ b.xi, a @ sig @ a.T)
    for f in (beta_u, beta_2sls_single, beta_fuller):
        want = (a1 * f(b) + a2) / a3
        scale = abs(a1) * beta_u_condition(b) + a3 * beta_u_condition(bt) if f is beta_u else 0.0
        assert f(bt) == pytest.approx(want, rel=1e-10, abs=1e-10 * (abs(a1 * f(b)) + abs(a2) + scale) / a3)


@pytest.mark.parametrize("a", [1e-6, 1.0, 1e6])
def test_scale_invariance(a):
    rng = np.random.default_rng(7)
    for _ in range(200):
        x = rng.normal(0, 2, 2)
        r = rng.uniform(-0.9, 0.9)
        sig = np.array([[1.3, r], [r, 0.8]])
        b = InstrumentBlock(x, sig)
        assert beta_u(InstrumentBlock(math.sqrt(a) * x, a * sig)) == pytest.approx(beta_u(b), rel=1e-12)


def test_confidence_set_str():
    assert str(ar_confidence_set(blk(1, 0.1, np.eye(2)))) == "(-inf, inf)"
    assert "U" in str(ar_confidence_set(blk(3, 1, np.eye(2))))


def test_tiny_asymmetry_is_tolerated():
    # A @ sigma @ A.T can leave subnormal noise off the diagonal
    sig = np.array([[3.0625, 7.8e-313], [0.0, 4.0]])
    b = InstrumentBlock([0.0, 1.0], sig)
    assert b.sigma[0, 1] == b.sigma[1, 0]
    with pytest.raises(ConditioningError):
        InstrumentBlock([0.0, 1.0], [[1.0, 0.5], [0.4, 1.0]])
