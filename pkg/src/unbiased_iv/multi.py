"""Unbiased estimation with several instruments.

The Rao-Blackwellized estimator averages, over artificial split-sample draws
``xi_a = xi + zeta`` and ``xi_b = xi - zeta`` with ``zeta ~ N(0, sigma)``, the
combination

    sum_i w_i(xi_b) * beta_u(xi_a(i), 2 sigma(i)).

Because ``xi_a`` and ``xi_b`` are independent, data-dependent weights computed
from ``xi_b`` do not bias the per-instrument unbiased estimates computed from
``xi_a``. The conditional expectation given ``xi`` has no closed form and is
evaluated by Monte Carlo over ``zeta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mc
from .core import ReducedFormStats, _beta_u, beta_u
from .exceptions import ConditioningError, DegenerateError, DomainError

__all__ = [
    "WeightSpec",
    "RobustTransform",
    "SplitPair",
    "RbEstimate",
    "beta_2sls_multi",
    "gmm_two_step_weight",
    "split_draw",
    "rb_weights",
    "beta_w",
    "beta_rb",
    "beta_rb_batch",
    "robust_transform",
    "beta_rb_c",
    "beta_rb_c_batch",
    "robust_matrix",
    "stable_cholesky",
    "DEFAULT_S_SIMULATION",
    "DEFAULT_S_DATA",
]

DEFAULT_S_SIMULATION = 1_000
DEFAULT_S_DATA = 100_000

# fraction of zeta draws allowed to produce a zero weight denominator
_MAX_DEGENERATE_FRACTION = 1e-3
# target number of doubles per batched chunk (rows x S x 2k)
_BATCH_ELEMS = 1 << 21


@dataclass(frozen=True)
class WeightSpec:
    """How the combination weights ``w(xi_b)`` are formed.

    kind
        ``"fixed"`` (nonrandom ``w`` summing to one), ``"quadratic"``
        (``w_i = xi2' W e_i e_i' xi2 / xi2' W xi2``; ``W=None`` means ``Z'Z``),
        or ``"gmm_two_step"`` (the same with ``W`` the inverse variance of the
        moments ``xi1 - b xi2`` at a preliminary 2SLS estimate ``b``).
    """

    kind: str
    w: np.ndarray | None = None
    W: np.ndarray | None = None
    preliminary: str = "2sls"

    def __post_init__(self):
        if self.kind == "fixed":
            w = np.asarray(self.w, dtype=float).reshape(-1)
            if abs(w.sum() - 1.0) > 1e-10:
                raise DomainError(f"fixed weights must sum to one, got {w.sum()!r}")
            object.__setattr__(self, "w", w)
        elif self.kind == "quadratic":
            if self.W is not None:
                W = np.asarray(self.W, dtype=float)
                if not np.allclose(W, W.T, rtol=1e-12, atol=1e-12 * np.abs(W).max()):
                    raise DomainError("quadratic weight matrix must be symmetric")
                try:
                    np.linalg.cholesky(W)
                except np.linalg.LinAlgError as exc:
                    raise DomainError("quadratic weight matrix must be positive definite") from exc
                object.__setattr__(self, "W", W)
        elif self.kind == "gmm_two_step":
            if self.preliminary != "2sls":
                raise DomainError(f"unknown preliminary estimator {self.preliminary!r}")
        else:
            raise DomainError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def fixed(cls, w) -> WeightSpec:
        return cls("fixed", w=w)

    @classmethod
    def quadratic(cls, W=None) -> WeightSpec:
        return cls("quadratic", W=W)

    @classmethod
    def gmm_two_step(cls, preliminary: str = "2sls") -> WeightSpec:
        return cls("gmm_two_step", preliminary=preliminary)


@dataclass(frozen=True)
class RobustTransform:
    c: float
    m: np.ndarray
    m_inverse: np.ndarray


@dataclass(frozen=True)
class SplitPair:
    xi_a: np.ndarray
    xi_b: np.ndarray


@dataclass(frozen=True)
class RbEstimate:
    """Monte Carlo evaluation of a Rao-Blackwellized estimate."""

    value: float
    mc_std_error: float
    draws: int
    degenerate: int = 0
    draw_values: np.ndarray | None = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------------------
# GMM comparators
# ---------------------------------------------------------------------------


def beta_2sls_multi(stats: ReducedFormStats, w_matrix) -> float:
    """GMM estimate ``xi2' W xi1 / xi2' W xi2`` (2SLS when ``W = Z'Z``)."""
    W = np.asarray(w_matrix, dtype=float)
    den = stats.xi2 @ W @ stats.xi2
    if den == 0.0 or not np.isfinite(den):
        raise DegenerateError("xi2' W xi2 is zero")
    return float(stats.xi2 @ W @ stats.xi1 / den)


def gmm_two_step_weight(stats: ReducedFormStats, preliminary_beta: float) -> np.ndarray:
    """``(S11 - b (S12 + S21) + b^2 S22)^{-1}`` at preliminary estimate ``b``."""
    b = float(preliminary_beta)
    inner = stats.sigma11 - b * (stats.sigma12 + stats.sigma21) + b * b * stats.sigma22
    inner = 0.5 * (inner + inner.T)
    try:
        chol = np.linalg.cholesky(inner)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(
            f"moment variance is not positive definite at preliminary beta={b!r}"
        ) from exc
    inv_chol = np.linalg.inv(chol)
    out = inv_chol.T @ inv_chol
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# Split-sample draws and weights
# ---------------------------------------------------------------------------


def stable_cholesky(sigma) -> np.ndarray:
    """Lower Cholesky factor; one retry with a ``1e-12 * trace / n`` ridge."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    n = sigma.shape[0]
    ridge = 1e-12 * np.trace(sigma) / n
    try:
        return np.linalg.cholesky(sigma + ridge * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("covariance matrix could not be factorized") from exc


def split_draw(stats: ReducedFormStats, rng: np.random.Generator) -> SplitPair:
    """One pair ``(xi + zeta, xi - zeta)`` with ``zeta ~ N(0, sigma)``."""
    chol = stable_cholesky(stats.sigma)
    zeta = chol @ rng.standard_normal(2 * stats.k)
    xi = stats.xi
    return SplitPair(xi + zeta, xi - zeta)


def _weights(xi2_b, spec: WeightSpec, z_gram, xi1_b=None, sigma=None):
    """Weights (..., k) and their quadratic-form denominators (...)."""
    k = xi2_b.shape[-1]
    if spec.kind == "fixed":
        w = np.broadcast_to(spec.w, xi2_b.shape)
        return w, np.ones(xi2_b.shape[:-1])
    if spec.kind == "quadratic":
        W = z_gram if spec.W is None else spec.W
        Wx = xi2_b @ W
    else:
        if xi1_b is None or sigma is None:
            raise DomainError("two-step GMM weights need xi1_b and sigma")
        zg = np.asarray(z_gram, dtype=float)
        prelim = np.sum((xi2_b @ zg) * xi1_b, axis=-1) / np.sum((xi2_b @ zg) * xi2_b, axis=-1)
        s11, s22 = sigma[:k, :k], sigma[k:, k:]
        s12s = sigma[:k, k:] + sigma[k:, :k]
        b = prelim[..., None, None]
        inner = s11 - b * s12s + b * b * s22
        Wx = np.linalg.solve(inner, xi2_b[..., None])[..., 0]
    num = Wx * xi2_b
    den = num.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = num / den[..., None]
    return w, den


def rb_weights(xi2_b, spec: WeightSpec, z_gram=None, *, xi1_b=None, sigma=None) -> np.ndarray:
    """Combination weights ``w(xi_b)`` for one draw; they sum to one.

    ``xi1_b`` and ``sigma`` are needed only for two-step GMM weights.
    """
    xi2_b = np.asarray(xi2_b, dtype=float).reshape(-1)
    if z_gram is None:
        z_gram = np.eye(xi2_b.size)
    if xi1_b is not None:
        xi1_b = np.asarray(xi1_b, dtype=float).reshape(-1)
    w, den = _weights(xi2_b, spec, np.asarray(z_gram, dtype=float), xi1_b, sigma)
    if not np.isfinite(den) or den == 0.0:
        raise DegenerateError("weight denominator is zero")
    return np.array(w, dtype=float)


def beta_w(stats: ReducedFormStats, w) -> float:
    """``sum_i w_i beta_u(xi(i), sigma(i))`` for fixed weights summing to one."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != stats.k:
        raise DomainError(f"need {stats.k} weights, got {w.size}")
    if abs(w.sum() - 1.0) > 1e-10:
        raise DomainError(f"weights must sum to one, got {w.sum()!r}")
    return float(sum(w[i] * beta_u(stats.block(i)) for i in range(stats.k)))


def _rb_draws(xi, sigma, spec, z_gram, zeta):
    """Per-draw values ``beta_s`` for outer rows ``xi`` (N, 2k), ``zeta`` (N, S, 2k).

    Returns (values (N, S), degenerate mask (N, S)).
    """
    k = xi.shape[-1] // 2
    xa = xi[:, None, :] + zeta
    xb = xi[:, None, :] - zeta
    idx = np.arange(k)
    s12 = 2.0 * sigma[idx, k + idx]
    s2sq = 2.0 * sigma[k + idx, k + idx]
    bu = _beta_u(xa[..., :k], xa[..., k:], s12, s2sq)
    w, den = _weights(xb[..., k:], spec, z_gram, xb[..., :k], sigma)
    bad = ~np.isfinite(den) | (den == 0.0)
    with np.errstate(invalid="ignore"):
        vals = np.sum(w * bu, axis=-1)
    vals = np.where(bad, np.nan, vals)
    return vals, bad


def _check_degenerate(n_bad: int, n: int):
    if n_bad > _MAX_DEGENERATE_FRACTION * n:
        raise DegenerateError(f"{n_bad} of {n} split draws gave degenerate weights")


def beta_rb(
    stats: ReducedFormStats,
    spec: WeightSpec,
    z_gram=None,
    s_draws: int = DEFAULT_S_DATA,
    seed=0,
    *,
    workers: int = 1,
    keep_draws: bool = False,
) -> RbEstimate:
    """Rao-Blackwellized estimate, averaged over ``s_draws`` split draws.

    With ``spec`` fixed the exact conditional expectation equals
    :func:`beta_w`; otherwise the weights depend on ``xi_b`` and only the Monte
    Carlo average is available. Draws producing a zero weight denominator are
    dropped and counted; more than 0.1% of them is an error.
    """
    if s_draws < 1:
        raise DomainError("s_draws must be at least 1")
    k = stats.k
    zg = np.eye(k) if z_gram is None else np.asarray(z_gram, dtype=float)
    chol = stable_cholesky(stats.sigma)
    xi = stats.xi[None, :]

    def run(rng, size, start):
        zeta = rng.standard_normal((1, size, 2 * k)) @ chol.T
        vals, bad = _rb_draws(xi, stats.sigma, spec, zg, zeta)
        return vals[0], int(bad.sum())

    parts = mc.map_chunks(run, s_draws, seed, workers=workers)
    vals = np.concatenate([p[0] for p in parts])
    n_bad = sum(p[1] for p in parts)
    _check_degenerate(n_bad, s_draws)
    good = vals[np.isfinite(vals)] if n_bad else vals
    value, se = mc.mean_and_se(good)
    if good.size < 2:
        se = 0.0 if good.size == 1 else float("nan")
    return RbEstimate(value, se, s_draws, n_bad, vals if keep_draws else None)


def beta_rb_batch(
    xi,
    sigma,
    spec: WeightSpec,
    z_gram,
    s_draws: int,
    seed,
    *,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """``beta_rb`` for many observed ``xi`` rows (N, 2k) sharing one ``sigma``.

    Returns the per-row Monte Carlo averages and their standard errors. Rows
    are processed in fixed-size groups, group ``j`` drawing its ``zeta`` from
    the stream ``(seed, j)``, so equal seeds give common random numbers across
    weight specs.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    n, two_k = xi.shape
    zg = np.asarray(z_gram, dtype=float)
    chol = stable_cholesky(sigma)
    rows = max(1, _BATCH_ELEMS // (s_draws * two_k))

    def run(rng, size, start):
        zeta = rng.standard_normal((size, s_draws, two_k)) @ chol.T
        vals, bad = _rb_draws(xi[start : start + size], sigma, spec, zg, zeta)
        n_bad = int(bad.sum())
        if n_bad:
            _check_degenerate(n_bad, bad.size)
            means = np.nanmean(vals, axis=1)
            ses = np.nanstd(vals, axis=1, ddof=1) / np.sqrt(np.sum(~bad, axis=1))
        else:
            means = vals.mean(axis=1)
            ses = vals.std(axis=1, ddof=1) / np.sqrt(s_draws) if s_draws > 1 else np.zeros(size)
        return means, ses

    parts = mc.map_chunks(run, n, seed, chunk=rows, workers=workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# ---------------------------------------------------------------------------
# Sign-robust transformation
# ---------------------------------------------------------------------------


def robust_matrix(sigma22_diag, c: float) -> np.ndarray:
    """``M = C(c) Diag(sigma22)^{-1/2}``, ``C`` with unit diagonal and ``c`` elsewhere."""
    if not 0.0 <= c < 1.0:
        raise DomainError(f"c must lie in [0, 1), got {c!r}")
    d = np.asarray(sigma22_diag, dtype=float)
    if np.any(d <= 0):
        raise DomainError("diagonal of sigma22 must be positive")
    k = d.size
    cmat = np.full((k, k), c)
    np.fill_diagonal(cmat, 1.0)
    return cmat / np.sqrt(d)[None, :]


def robust_transform(stats: ReducedFormStats, z_gram, c: float):
    """Recombine instruments with ``M(c)``.

    Returns ``(stats_t, W_t, transform)`` where ``xi_t = (I2 x M) xi``,
    ``sigma_t = (I2 x M) sigma (I2 x M)'`` and ``W_t = M^{-1}' W M^{-1}``. GMM
    estimates computed from the transformed triple equal those from the
    original one.
    """
    m = robust_matrix(np.diag(stats.sigma22), c)
    m_inv = np.linalg.inv(m)
    t = np.kron(np.eye(2), m)
    sig = t @ stats.sigma @ t.T
    sig = 0.5 * (sig + sig.T)
    W = np.asarray(z_gram, dtype=float)
    W_t = m_inv.T @ W @ m_inv
    W_t = 0.5 * (W_t + W_t.T)
    stats_t = ReducedFormStats(m @ stats.xi1, m @ stats.xi2, sig)
    return stats_t, W_t, RobustTransform(float(c), m, m_inv)


def _transform_spec(spec: WeightSpec, m_inv) -> WeightSpec:
    if spec.kind == "quadratic" and spec.W is not None:
        W_t = m_inv.T @ spec.W @ m_inv
        return WeightSpec.quadratic(0.5 * (W_t + W_t.T))
    return spec


def beta_rb_c(
    stats: ReducedFormStats,
    z_gram,
    c: float,
    spec: WeightSpec | None = None,
    s_draws: int = DEFAULT_S_DATA,
    seed=0,
    *,
    workers: int = 1,
) -> RbEstimate:
    """Rao-Blackwellized estimate on the ``M(c)``-recombined instruments.

    Unbiased whenever ``M(c) pi`` is positive, which tolerates mildly
    wrong-signed first-stage coefficients when ``c > 0``.
    """
    spec = WeightSpec.quadratic() if spec is None else spec
    stats_t, W_t, tr = robust_transform(stats, z_gram, c)
    return beta_rb(stats_t, _transform_spec(spec, tr.m_inverse), W_t, s_draws, seed, workers=workers)


def beta_rb_c_batch(xi, sigma, z_gram, c, spec=None, s_draws=DEFAULT_S_SIMULATION, seed=0, *, workers=1):
    """Batched :func:`beta_rb_c` over rows of ``xi`` sharing ``sigma``."""
    spec = WeightSpec.quadratic() if spec is None else spec
    sigma = np.asarray(sigma, dtype=float)
    k = sigma.shape[0] // 2
    m = robust_matrix(np.diag(sigma[k:, k:]), c)
    m_inv = np.linalg.inv(m)
    t = np.kron(np.eye(2), m)
    sig_t = t @ sigma @ t.T
    sig_t = 0.5 * (sig_t + sig_t.T)
    W_t = m_inv.T @ np.asarray(z_gram, dtype=float) @ m_inv
    W_t = 0.5 * (W_t + W_t.T)
    xi_t = np.atleast_2d(xi) @ t.T
    return beta_rb_batch(xi_t, sig_t, _transform_spec(spec, m_inv), W_t, s_draws, seed, workers=workers)
