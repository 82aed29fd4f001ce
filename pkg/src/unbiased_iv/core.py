"""Reduced-form statistics and the single-instrument estimators.

The model is summarised by the reduced-form and first-stage coefficients
``xi = (xi1', xi2')'`` with known covariance ``sigma`` (``2k x 2k``). For a
single instrument the unbiased estimator is

    beta_u = tau_hat(xi2, s2^2) * (xi1 - s12/s2^2 * xi2) + s12/s2^2,

where ``tau_hat`` is the unbiased estimator of ``1/pi`` built from the Mills
ratio. Every public estimator here takes an :class:`InstrumentBlock` (or a
``k = 1`` :class:`ReducedFormStats`); the ``*_draws`` variants evaluate the
same formulas on stacked arrays of draws for the simulation code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .exceptions import ConditioningError, DegenerateError, DomainError
from .normal import mills_ratio

__all__ = [
    "InstrumentBlock",
    "ReducedFormStats",
    "ConfidenceSet",
    "tau_hat",
    "delta_hat",
    "beta_u",
    "beta_2sls_single",
    "beta_fuller",
    "ar_statistic",
    "ar_confidence_set",
    "chi2_1_quantile",
    "first_stage_f",
    "beta_u_draws",
    "beta_2sls_draws",
    "beta_fuller_draws",
    "as_block",
]


def _check_pd(sigma, what):
    """Symmetrized ``sigma`` after symmetry and positive-definiteness checks."""
    if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=1e-12 * np.abs(sigma).max()):
        raise ConditioningError(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"{what} is not positive definite") from exc
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True)
class InstrumentBlock:
    """Coefficients ``(xi1_i, xi2_i)`` on one instrument and their 2x2 covariance."""

    xi: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float)
        if xi.shape != (2,) or sigma.shape != (2, 2):
            raise DomainError("InstrumentBlock needs a 2-vector and a 2x2 matrix")
        sigma = _check_pd(sigma, "block covariance")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "sigma", sigma)

    @property
    def xi1(self) -> float:
        return float(self.xi[0])

    @property
    def xi2(self) -> float:
        return float(self.xi[1])

    @property
    def s1sq(self) -> float:
        return float(self.sigma[0, 0])

    @property
    def s12(self) -> float:
        return float(self.sigma[0, 1])

    @property
    def s2sq(self) -> float:
        return float(self.sigma[1, 1])


@dataclass(frozen=True)
class ReducedFormStats:
    """Sufficient statistic ``(xi1, xi2, sigma)`` for ``k`` instruments.

    ``sigma`` is the covariance of the stacked vector ``(xi1', xi2')'`` and must
    be symmetric positive definite.
    """

    xi1: np.ndarray
    xi2: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        xi1 = np.atleast_1d(np.asarray(self.xi1, dtype=float)).reshape(-1)
        xi2 = np.atleast_1d(np.asarray(self.xi2, dtype=float)).reshape(-1)
        k = xi1.size
        sigma = np.asarray(self.sigma, dtype=float)
        if k < 1 or xi2.size != k or sigma.shape != (2 * k, 2 * k):
            raise DomainError(
                f"inconsistent dimensions: xi1 {xi1.shape}, xi2 {xi2.shape}, sigma {sigma.shape}"
            )
        sigma = _check_pd(sigma, "sigma")
        object.__setattr__(self, "xi1", xi1)
        object.__setattr__(self, "xi2", xi2)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_stacked(cls, xi, sigma) -> ReducedFormStats:
        xi = np.asarray(xi, dtype=float).reshape(-1)
        k = xi.size // 2
        return cls(xi[:k], xi[k:], sigma)

    @property
    def k(self) -> int:
        return self.xi1.size

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([self.xi1, self.xi2])

    @property
    def sigma11(self) -> np.ndarray:
        return self.sigma[: self.k, : self.k]

    @property
    def sigma12(self) -> np.ndarray:
        return self.sigma[: self.k, self.k :]

    @property
    def sigma21(self) -> np.ndarray:
        return self.sigma[self.k :, : self.k]

    @property
    def sigma22(self) -> np.ndarray:
        return self.sigma[self.k :, self.k :]

    def block(self, i: int) -> InstrumentBlock:
        """Coefficients and 2x2 covariance for instrument ``i`` (0-based)."""
        k = self.k
        idx = [i, k + i]
        return InstrumentBlock(self.xi[idx], self.sigma[np.ix_(idx, idx)])


def as_block(obj) -> InstrumentBlock:
    """Accept an InstrumentBlock or a single-instrument ReducedFormStats."""
    if isinstance(obj, InstrumentBlock):
        return obj
    if isinstance(obj, ReducedFormStats):
        if obj.k != 1:
            raise DomainError(f"expected a single instrument, got k={obj.k}")
        return obj.block(0)
    raise TypeError(f"cannot interpret {type(obj).__name__} as an instrument block")


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def tau_hat(xi2, sigma2_sq):
    """Unbiased estimator of ``1/pi`` from ``xi2 ~ N(pi, sigma2_sq)``, ``pi > 0``.

    Works elementwise on arrays.
    """
    s2sq = np.asarray(sigma2_sq, dtype=float)
    if np.any(s2sq <= 0):
        raise DomainError("sigma2_sq must be positive")
    s2 = np.sqrt(s2sq)
    return mills_ratio(np.asarray(xi2, dtype=float) / s2) / s2


def delta_hat(block) -> float:
    """``xi1 - (s12 / s2^2) xi2``, the part of ``xi1`` orthogonal to ``xi2``."""
    b = as_block(block)
    return b.xi1 - (b.s12 / b.s2sq) * b.xi2


def _beta_u(xi1, xi2, s12, s2sq):
    slope = s12 / s2sq
    return tau_hat(xi2, s2sq) * (xi1 - slope * xi2) + slope


def beta_u(block) -> float:
    """Unbiased single-instrument estimator of ``beta`` (requires ``pi > 0``)."""
    b = as_block(block)
    return float(_beta_u(b.xi1, b.xi2, b.s12, b.s2sq))


def beta_2sls_single(block) -> float:
    """Just-identified IV estimate ``xi1 / xi2``."""
    b = as_block(block)
    if b.xi2 == 0.0:
        raise DegenerateError("2SLS undefined at xi2 = 0")
    return b.xi1 / b.xi2


def beta_fuller(block) -> float:
    """Fuller estimator with constant one, ``(xi2 xi1 + s12) / (xi2^2 + s2^2)``."""
    b = as_block(block)
    return (b.xi2 * b.xi1 + b.s12) / (b.xi2**2 + b.s2sq)


def beta_u_draws(xi, sigma) -> np.ndarray:
    """``beta_u`` on an ``(n, 2)`` array of draws sharing one 2x2 covariance."""
    xi = np.asarray(xi, dtype=float)
    return _beta_u(xi[..., 0], xi[..., 1], sigma[0][1], sigma[1][1])


def beta_2sls_draws(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return xi[..., 0] / xi[..., 1]


def beta_fuller_draws(xi, sigma) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return (xi[..., 1] * xi[..., 0] + sigma[0][1]) / (xi[..., 1] ** 2 + sigma[1][1])


def first_stage_f(stats: ReducedFormStats) -> float:
    """Wald-type first-stage F statistic ``xi2' sigma22^{-1} xi2 / k``."""
    return float(stats.xi2 @ np.linalg.solve(stats.sigma22, stats.xi2) / stats.k)


# ---------------------------------------------------------------------------
# Anderson-Rubin set
# ---------------------------------------------------------------------------


def chi2_1_quantile(level: float) -> float:
    """``level`` quantile of the chi-square(1) distribution."""
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    return float(ndtri(0.5 + 0.5 * level)) ** 2


@dataclass(frozen=True)
class ConfidenceSet:
    """A subset of the real line produced by inverting the AR test.

    ``interval`` is ``[lower, upper]`` (either end may be infinite),
    ``union_of_rays`` is ``(-inf, lower] U [upper, inf)`` with ``lower < upper``.
    """

    kind: str
    lower: float
    upper: float
    level: float

    def contains(self, b) -> np.ndarray | bool:
        b = np.asarray(b, dtype=float)
        if self.kind == "interval":
            out = (b >= self.lower) & (b <= self.upper)
        elif self.kind == "union_of_rays":
            out = (b <= self.lower) | (b >= self.upper)
        elif self.kind == "whole_line":
            out = np.ones_like(b, dtype=bool)
        else:
            out = np.zeros_like(b, dtype=bool)
        return bool(out) if out.ndim == 0 else out

    def __str__(self) -> str:
        if self.kind == "interval":
            return f"[{self.lower:.6g}, {self.upper:.6g}]"
        if self.kind == "union_of_rays":
            return f"(-inf, {self.lower:.6g}] U [{self.upper:.6g}, inf)"
        if self.kind == "whole_line":
            return "(-inf, inf)"
        return "{}"


def ar_statistic(beta0, block) -> np.ndarray | float:
    """AR statistic ``(xi1 - b xi2)^2 / (s1^2 - 2 b s12 + b^2 s2^2)``."""
    b = as_block(block)
    beta0 = np.asarray(beta0, dtype=float)
    out = (b.xi1 - beta0 * b.xi2) ** 2 / (b.s1sq - 2 * beta0 * b.s12 + beta0**2 * b.s2sq)
    return float(out) if out.ndim == 0 else out


def ar_confidence_set(block, level: float = 0.95) -> ConfidenceSet:
    """Exact inversion of ``AR(b) <= chi2_1(level)`` as a quadratic inequality in ``b``."""
    bl = as_block(block)
    q = chi2_1_quantile(level)
    # a b^2 + l b + c <= 0
    a = bl.xi2**2 - q * bl.s2sq
    lin = -2.0 * (bl.xi1 * bl.xi2 - q * bl.s12)
    c = bl.xi1**2 - q * bl.s1sq

    if a == 0.0:
        if lin > 0:
            return ConfidenceSet("interval", -math.inf, -c / lin, level)
        if lin < 0:
            return ConfidenceSet("interval", -c / lin, math.inf, level)
        return ConfidenceSet("whole_line" if c <= 0 else "empty", -math.inf, math.inf, level)

    disc = lin * lin - 4.0 * a * c
    if disc <= 0.0:
        if a < 0:
            return ConfidenceSet("whole_line", -math.inf, math.inf, level)
        if disc == 0.0:
            r = -lin / (2.0 * a)
            return ConfidenceSet("interval", r, r, level)
        return ConfidenceSet("empty", math.nan, math.nan, level)

    # cancellation-free roots
    h = -0.5 * (lin + math.copysign(math.sqrt(disc), lin))
    r1, r2 = sorted((h / a, c / h)) if h != 0.0 else sorted((math.sqrt(-c / a), -math.sqrt(-c / a)))
    if a > 0:
        return ConfidenceSet("interval", r1, r2, level)
    return ConfidenceSet("union_of_rays", r1, r2, level)
