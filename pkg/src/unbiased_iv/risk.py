"""Risk lower bound for unbiased estimators.

If the direction ``pi*`` of the first stage were known, the model collapses to
a single-instrument problem in the GLS projection

    xi* = Sigma* P' Sigma^{-1} xi,   Sigma* = (P' Sigma^{-1} P)^{-1},   P = I2 x pi*,

whose mean is ``(beta, 1)``. ``beta_u`` on ``(xi*, Sigma*)`` is then the best
unbiased estimator in the submodel, so its mean absolute deviation bounds the
risk of every estimator unbiased in the full model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import mc
from .core import InstrumentBlock, ReducedFormStats, _beta_u, beta_u
from .exceptions import DomainError
from .multi import stable_cholesky

__all__ = ["SubmodelStats", "submodel_projection", "submodel_stats", "oracle_beta", "mad_lower_bound"]


@dataclass(frozen=True)
class SubmodelStats:
    xi_star: np.ndarray
    sigma_star: np.ndarray

    def block(self) -> InstrumentBlock:
        return InstrumentBlock(self.xi_star, self.sigma_star)


def submodel_projection(sigma, pi_star) -> tuple[np.ndarray, np.ndarray]:
    """The 2 x 2k matrix ``G`` with ``xi* = G xi``, and ``Sigma*``."""
    pi_star = np.asarray(pi_star, dtype=float).reshape(-1)
    if not np.any(pi_star != 0.0):
        raise DomainError("pi_star must be nonzero")
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (2 * pi_star.size, 2 * pi_star.size):
        raise DomainError("sigma and pi_star dimensions disagree")
    p = np.kron(np.eye(2), pi_star[:, None])
    cho = linalg.cho_factor(sigma, lower=True)
    sinv_p = linalg.cho_solve(cho, p)
    info = p.T @ sinv_p
    sigma_star = linalg.inv(info)
    sigma_star = 0.5 * (sigma_star + sigma_star.T)
    return sigma_star @ sinv_p.T, sigma_star


def submodel_stats(stats: ReducedFormStats, pi_star) -> SubmodelStats:
    g, sigma_star = submodel_projection(stats.sigma, pi_star)
    return SubmodelStats(g @ stats.xi, sigma_star)


def oracle_beta(stats: ReducedFormStats, pi_star) -> float:
    """``beta_u`` evaluated on the known-direction submodel statistic."""
    return beta_u(submodel_stats(stats, pi_star).block())


def mad_lower_bound(pi, beta, sigma, n_draws: int = 100_000, seed=0, *, workers: int = 1):
    """Monte Carlo ``E|oracle_beta - beta|`` at ``pi* = pi``.

    Returns ``(value, mc_std_error)``.
    """
    if n_draws < 1000:
        raise DomainError("n_draws must be at least 1000")
    pi = np.asarray(pi, dtype=float).reshape(-1)
    sigma = np.asarray(sigma, dtype=float)
    g, s_star = submodel_projection(sigma, pi)
    chol = stable_cholesky(sigma)
    mean = np.concatenate([pi * beta, pi])

    def run(rng, size, start):
        xi = mean + rng.standard_normal((size, mean.size)) @ chol.T
        xs = xi @ g.T
        est = _beta_u(xs[:, 0], xs[:, 1], s_star[0, 1], s_star[1, 1])
        return np.abs(est - beta)

    dev = np.concatenate(mc.map_chunks(run, n_draws, seed, workers=workers))
    return mc.mean_and_se(dev)
