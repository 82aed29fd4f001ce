"""Standard normal cdf, pdf and Mills ratio.

All three kernels are evaluated from W. J. Cody's rational Chebyshev
approximations (the ones behind R's ``pnorm``), written directly in ``x``.
Working in ``x`` rather than ``x / sqrt(2)`` avoids the argument rounding that
costs ``erfc``/``erfcx`` based routes roughly ``x**2`` ulps in the far tails.

Evaluation regimes, in ``|x|``:

* ``|x| <= 0.67448975``: central rational approximation of ``Phi(x) - 1/2``.
* ``0.67448975 < |x| <= sqrt(32)``: rational approximation of the scaled
  upper tail ``(1 - Phi(y)) * exp(y**2 / 2)``.
* ``|x| > sqrt(32)``: asymptotic rational form in ``1 / y**2`` of the same
  scaled tail.

``exp(-y**2 / 2)`` is always split as ``exp(-s**2 / 2) * exp(-(y - s)(y + s) / 2)``
with ``s = trunc(16 y) / 16`` so that ``s**2`` is exact.

The Mills ratio ``(1 - Phi(x)) / phi(x)`` never forms the naive quotient: for
``x > 0.674`` it is the scaled tail itself (times ``sqrt(2 pi)``), for
``x < -0.674`` it is ``sqrt(2 pi) * (exp(x**2 / 2) - scaled_tail(-x))``. It
overflows to ``inf`` only where the true value exceeds the largest double
(``x < -37.65`` or so).
"""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError

__all__ = ["std_normal_cdf", "std_normal_pdf", "mills_ratio"]

SQRT_2PI = 2.5066282746310002
INV_SQRT_2PI = 0.3989422804014327

_SPLIT = 0.67448975
_SQRT_32 = 5.656854249492380195206754896838

_A = (
    2.2352520354606839287,
    161.02823106855587881,
    1067.6894854603709582,
    18154.981253343561249,
    0.065682337918207449113,
)
_B = (
    47.20258190468824187,
    976.09855173777669322,
    10260.932208618978205,
    45507.789335026729956,
)
_C = (
    0.39894151208813466764,
    8.8831497943883759412,
    93.506656132177855979,
    597.27027639480026226,
    2494.5375852903726711,
    6848.1904505362823326,
    11602.651437647350124,
    9842.7148383839780218,
    1.0765576773720192317e-8,
)
_D = (
    22.266688044328115691,
    235.38790178262499861,
    1519.377599407554805,
    6485.558298266760755,
    18615.571640885098091,
    34900.952721145977266,
    38912.003286093271411,
    19685.429676859990727,
)
_P = (
    0.21589853405795699,
    0.1274011611602473639,
    0.022235277870649807,
    0.001421619193227893466,
    2.9112874951168792e-5,
    0.02307344176494017303,
)
_Q = (
    1.28426009614491121,
    0.468238212480865118,
    0.0659881378689285515,
    0.00378239633202758244,
    7.29751555083966205e-5,
)


def _as_finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _central(x):
    # Phi(x) - 1/2 for |x| <= _SPLIT
    xsq = x * x
    num = _A[4] * xsq
    den = xsq
    for i in range(3):
        num = (num + _A[i]) * xsq
        den = (den + _B[i]) * xsq
    return x * (num + _A[3]) / (den + _B[3])


def _scaled_tail(y):
    """``(1 - Phi(y)) * exp(y**2 / 2)`` for ``y > _SPLIT``."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    mid = y <= _SQRT_32
    if np.any(mid):
        ym = y[mid]
        num = _C[8] * ym
        den = ym
        for i in range(7):
            num = (num + _C[i]) * ym
            den = (den + _D[i]) * ym
        out[mid] = (num + _C[7]) / (den + _D[7])
    far = ~mid
    if np.any(far):
        yf = y[far]
        xsq = 1.0 / (yf * yf)
        num = _P[5] * xsq
        den = xsq
        for i in range(4):
            num = (num + _P[i]) * xsq
            den = (den + _Q[i]) * xsq
        t = xsq * (num + _P[4]) / (den + _Q[4])
        out[far] = (INV_SQRT_2PI - t) / yf
    return out


def _exp_half_square(y, sign):
    # exp(sign * y**2 / 2) without the rounding error of forming y**2
    s = np.trunc(y * 16.0) / 16.0
    rem = (y - s) * (y + s)
    return np.exp(sign * 0.5 * s * s) * np.exp(sign * 0.5 * rem)


def _scalar_or_array(out, x):
    return float(out) if np.ndim(x) == 0 else out


def std_normal_pdf(x):
    """Standard normal density ``exp(-x**2/2) / sqrt(2 pi)``.

    Accepts scalars or arrays; raises ``DomainError`` on non-finite input.
    """
    arr = _as_finite(x)
    out = INV_SQRT_2PI * _exp_half_square(np.abs(arr), -1.0)
    return _scalar_or_array(out, x)


def std_normal_cdf(x):
    """Standard normal cdf ``Phi(x)``, accurate in relative terms in both tails."""
    arr = np.atleast_1d(_as_finite(x))
    out = np.empty_like(arr)
    y = np.abs(arr)

    cen = y <= _SPLIT
    out[cen] = 0.5 + _central(arr[cen])

    tail = ~cen
    if np.any(tail):
        yt = y[tail]
        upper = _exp_half_square(yt, -1.0) * _scaled_tail(yt)
        out[tail] = np.where(arr[tail] < 0.0, upper, 1.0 - upper)
    return _scalar_or_array(out.reshape(np.shape(x)), x)


_CF_START = 1e3
_CF_DEPTH = 8


def _continued_fraction(x):
    # Laplace's fraction 1/(x + 1/(x + 2/(x + ...))); evaluated this way the
    # result keeps the bracket x/(1+x^2) <= R(x) <= 1/x after rounding
    d = x.copy()
    for n in range(_CF_DEPTH, 0, -1):
        d = x + n / d
    return 1.0 / d


def mills_ratio(x):
    """Mills ratio ``(1 - Phi(x)) / phi(x)``.

    Parameters
    ----------
    x : float or array_like
        Standardized argument; must be finite.

    Returns
    -------
    float or ndarray
        Strictly positive and decreasing in ``x``. Behaves like ``1/x`` for
        large positive ``x`` and like ``sqrt(2 pi) exp(x**2/2)`` for large
        negative ``x``; returns ``inf`` once the latter exceeds the double range.
    """
    arr = np.atleast_1d(_as_finite(x))
    out = np.empty_like(arr)
    y = np.abs(arr)

    cen = y <= _SPLIT
    if np.any(cen):
        xc = arr[cen]
        out[cen] = (0.5 - _central(xc)) / (INV_SQRT_2PI * np.exp(-0.5 * xc * xc))

    pos = (arr > _SPLIT) & (arr <= _CF_START)
    if np.any(pos):
        out[pos] = SQRT_2PI * _scaled_tail(arr[pos])

    far = arr > _CF_START
    if np.any(far):
        out[far] = _continued_fraction(arr[far])

    neg = arr < -_SPLIT
    if np.any(neg):
        yn = y[neg]
        with np.errstate(over="ignore"):
            out[neg] = SQRT_2PI * (_exp_half_square(yn, 1.0) - _scaled_tail(yn))
    return _scalar_or_array(out.reshape(np.shape(x)), x)
