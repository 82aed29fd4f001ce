import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unbiased_iv.exceptions import DomainError
from unbiased_iv.normal import mills_ratio, std_normal_cdf, std_normal_pdf

mpmath.mp.dps = 50


def mp_cdf(x):
    return mpmath.ncdf(mpmath.mpf(x))


def mp_mills(x):
    x = mpmath.mpf(x)
    return mpmath.erfc(x / mpmath.sqrt(2)) / 2 / mpmath.npdf(x)


def test_cdf_examples():
    assert std_normal_cdf(0.0) == 0.5
    for x in (0.5, 1.0, 3.0):
        assert std_normal_cdf(x) == pytest.approx(1.0 - std_normal_cdf(-x), rel=1e-15)
    assert std_normal_cdf(2.0) == pytest.approx(0.9772498680518208, rel=1e-15)


def test_pdf_examples():
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert std_normal_pdf(1.0) == pytest.approx(float(mpmath.npdf(1)), rel=1e-15)
    for x in (0.7, 2.5):
        assert std_normal_pdf(x) == std_normal_pdf(-x)


def test_mills_examples():
    assert mills_ratio(0.0) == pytest.approx(0.5 * math.sqrt(2 * math.pi), rel=1e-15)
    assert mills_ratio(2.0) == pytest.approx(0.4213692292880545, rel=1e-14)
    m = mills_ratio(30.0)
    assert 1 / (30 + 1 / 30) < m < 1 / 30


@pytest.mark.parametrize("f", [std_normal_cdf, std_normal_pdf, mills_ratio])
@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_rejected(f, bad):
    with pytest.raises(DomainError):
        f(bad)
    with pytest.raises(DomainError):
        f(np.array([0.0, bad]))


def test_cdf_against_mpmath():
    xs = np.linspace(-37.5, 38.0, 1501)
    got = std_normal_cdf(xs)
    want = np.array([float(mp_cdf(x)) for x in xs])
    assert np.max(np.abs(got / want - 1.0)) < 1e-14


def test_pdf_against_mpmath():
    xs = np.linspace(-38.0, 38.0, 1001)
    want = np.array([float(mpmath.npdf(x)) for x in xs])
    got = std_normal_pdf(xs)
    normal = want > np.finfo(float).tiny
    assert np.max(np.abs(got[normal] / want[normal] - 1.0)) < 1e-14
    # subnormal range: only absolute accuracy is representable
    assert np.max(np.abs(got[~normal] - want[~normal])) < 1e-320


def test_mills_against_mpmath():
    xs = np.linspace(-37.6, 38.0, 1501)
    want = np.array([float(mp_mills(x)) for x in xs])
    assert np.max(np.abs(mills_ratio(xs) / want - 1.0)) < 1e-12


def test_mills_overflow_region_is_inf():
    # true value exceeds the largest double here
    assert mp_mills(-38.0) > mpmath.mpf(np.finfo(float).max)
    assert mills_ratio(-38.0) == math.inf


def test_mills_monotone_on_grid():
    xs = np.linspace(-37.6, 38.0, 10_000)
    m = mills_ratio(xs)
    assert np.all(np.diff(m) < 0)
    assert np.all(m > 0)


@pytest.mark.parametrize("x", [1.0, 2.0, 5.0, 10.0, 100.0, 1e4])
def test_small_tail_identity(x):
    assert abs(x * mills_ratio(x) - 1.0) <= 1.0 / x**2


def test_left_tail_limit():
    v = mills_ratio(-10.0) * std_normal_pdf(-10.0)
    assert 1 - 1e-10 <= v <= 1.0


def test_naive_quotient_agrees_in_bulk():
    xs = np.linspace(-8, 8, 801)
    naive = std_normal_cdf(-xs) / std_normal_pdf(xs)
    assert np.max(np.abs(mills_ratio(xs) / naive - 1)) < 1e-12


def test_baricz_bracket():
    xs = np.geomspace(1e-3, 1e8, 2000)
    m = mills_ratio(xs)
    # strict in exact arithmetic; for large x both sides round to the same double
    assert np.all(m <= 1 / xs)
    assert np.all(m >= 1 / (xs + 1 / xs))
    small = xs < 1e6
    assert np.all(m[small] < 1 / xs[small])


def test_scalar_and_shape():
    assert isinstance(mills_ratio(1.0), float)
    assert mills_ratio(np.zeros((2, 3))).shape == (2, 3)
    assert std_normal_cdf(np.zeros((4, 1))).shape == (4, 1)


@settings(max_examples=300, deadline=None)
@given(st.floats(-37.0, 37.0, allow_subnormal=False))
def test_cdf_symmetry_property(x):
    assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(1.0, abs=2e-16)


@settings(max_examples=300, deadline=None)
@given(st.floats(-37.0, 37.0, allow_subnormal=False))
def test_mills_is_tail_over_density(x):
    # cdf(-x) = mills(x) * pdf(x); checked where neither side underflows
    lhs = std_normal_cdf(-x)
    rhs = mills_ratio(x) * std_normal_pdf(x)
    assert lhs == pytest.approx(rhs, rel=1e-13)
