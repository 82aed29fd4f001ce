"""Simulation studies at desk scale.

Single-instrument designs are parametrized, after the triangular equivariance
reduction, by ``(pi, sigma12)`` with ``beta = 0`` and unit variances. The
multi-instrument design draws ``xi`` with mean ``(0', ||pi|| d')'`` and
covariance ``[[1, s_uv], [s_uv, 1]] x (Z'Z)^{-1}`` for a positive direction
``d``.

Every random quantity is drawn from a chunked stream keyed by the scenario
seed and a stream tag (see :mod:`unbiased_iv.mc`), so results are reproducible
bit for bit and independent of the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import roots_hermite, roots_legendre

from . import __version__, mc
from .core import _beta_u, chi2_1_quantile
from .exceptions import DomainError
from .multi import (
    DEFAULT_S_SIMULATION,
    WeightSpec,
    beta_rb_batch,
    beta_rb_c_batch,
    stable_cholesky,
)
from .normal import mills_ratio, std_normal_cdf
from .risk import mad_lower_bound, submodel_projection

__all__ = [
    "Scenario",
    "GridSpec1",
    "MultiDesign",
    "ReducedSingle",
    "reduce_single",
    "bias_quadrature",
    "draw_xi",
    "estimator_draws",
    "deviation_quantiles",
    "ks_dominance",
    "ks_pair_stats",
    "median_bias",
    "sign_agreement",
    "build_multi_design",
    "pi_norm_for_ef",
    "first_stage_f_draws",
    "ar_containment",
    "nearest_rank_quantile",
    "run_single_grid",
    "run_multi_design",
    "run_bound_table",
    "write_table",
    "write_manifest",
    "DEFAULT_SIGMA12",
    "DEFAULT_PI",
    "DEFAULT_DRAWS",
    "SINGLE_ESTIMATORS",
    "MULTI_ESTIMATORS",
]

DEFAULT_SIGMA12 = (0.0, 0.3, 0.5, 0.7, 0.95)
DEFAULT_PI = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_DRAWS = 100_000
MIN_PI_QUADRATURE = 0.16

SINGLE_ESTIMATORS = ("beta_u", "2sls", "fuller")
MULTI_ESTIMATORS = ("2sls", "beta_w", "rb", "rb_gmm", "rb_c", "oracle")

# stream tags
_XI, _ZETA = 0, 1


@dataclass(frozen=True)
class Scenario:
    """A design point: ``xi ~ N((pi beta, pi), sigma)``.

    ``z_gram`` (``Z'Z``) is used only by multi-instrument weight schemes and
    defaults to the identity.
    """

    pi: np.ndarray
    beta: float = 0.0
    sigma: np.ndarray | None = None
    n_draws: int = DEFAULT_DRAWS
    seed: int = 0
    z_gram: np.ndarray | None = None
    sign_violating: bool = False

    def __post_init__(self):
        pi = np.atleast_1d(np.asarray(self.pi, dtype=float)).reshape(-1)
        k = pi.size
        sigma = np.eye(2 * k) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        if sigma.shape != (2 * k, 2 * k):
            raise DomainError("sigma must be 2k x 2k")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise DomainError("sigma must be positive definite") from exc
        if not self.sign_violating and np.any(pi <= 0):
            raise DomainError("pi must be positive unless the scenario is flagged sign_violating")
        if self.n_draws < 1:
            raise DomainError("n_draws must be positive")
        zg = np.eye(k) if self.z_gram is None else np.asarray(self.z_gram, dtype=float)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "z_gram", zg)
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def canonical(cls, pi: float, sigma12: float, n_draws: int = DEFAULT_DRAWS, seed: int = 0) -> Scenario:
        """Single instrument with ``beta = 0`` and unit variances."""
        return cls(np.array([pi]), 0.0, np.array([[1.0, sigma12], [sigma12, 1.0]]), n_draws, seed)

    @property
    def k(self) -> int:
        return self.pi.size

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([self.pi * self.beta, self.pi])

    @property
    def expected_f(self) -> float:
        """``1 + pi' sigma22^{-1} pi / k``."""
        s22 = self.sigma[self.k :, self.k :]
        return 1.0 + float(self.pi @ np.linalg.solve(s22, self.pi)) / self.k


@dataclass(frozen=True)
class GridSpec1:
    sigma12_values: tuple[float, ...] = DEFAULT_SIGMA12
    pi_values: tuple[float, ...] = DEFAULT_PI

    def __post_init__(self):
        if any(not 0.0 <= s < 1.0 for s in self.sigma12_values):
            raise DomainError("sigma12 values must lie in [0, 1)")
        if any(p <= 0 for p in self.pi_values):
            raise DomainError("pi values must be positive")

    def scenarios(self, n_draws: int = DEFAULT_DRAWS, seed: int = 0) -> list[Scenario]:
        out = []
        for s12 in self.sigma12_values:
            for p in self.pi_values:
                out.append(Scenario.canonical(p, s12, n_draws, seed))
        return out


@dataclass(frozen=True)
class MultiDesign:
    """Positive first-stage direction, ``Z'Z``, and the grid of ``||pi||`` and ``s_uv``."""

    pi_direction: np.ndarray
    z_gram: np.ndarray
    pi_norm_values: tuple[float, ...]
    sigma_uv_values: tuple[float, ...] = (0.5,)

    def __post_init__(self):
        d = np.asarray(self.pi_direction, dtype=float).reshape(-1)
        if np.any(d <= 0):
            raise DomainError("pi_direction entries must be positive")
        object.__setattr__(self, "pi_direction", d / np.linalg.norm(d))
        object.__setattr__(self, "z_gram", np.asarray(self.z_gram, dtype=float))

    @classmethod
    def stylized_quarter_of_birth(cls, expected_f=(1.5, 3.0, 10.0), sigma_uv=(0.5,)) -> MultiDesign:
        """Three demeaned quarter dummies with a direction satisfying ``Z'Z d > 0``."""
        p = np.array([0.24, 0.25, 0.26])
        z_gram = np.diag(p) - np.outer(p, p)
        d = np.array([0.5, 0.6, 0.62])
        d = d / np.linalg.norm(d)
        norms = tuple(pi_norm_for_ef(d, z_gram, ef) for ef in expected_f)
        return cls(d, z_gram, norms, tuple(sigma_uv))

    def scenarios(self, n_draws: int = DEFAULT_DRAWS, seed: int = 0) -> list[Scenario]:
        return [
            build_multi_design(self.pi_direction, self.z_gram, nrm, suv, n_draws=n_draws, seed=seed)
            for suv in self.sigma_uv_values
            for nrm in self.pi_norm_values
        ]


# ---------------------------------------------------------------------------
# Equivariance reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedSingle:
    pi: float
    sigma12: float
    transform: np.ndarray


def reduce_single(beta, pi, sigma1_sq, sigma12, sigma2_sq) -> ReducedSingle:
    """Map a single-instrument model to ``beta = 0``, ``s1 = s2 = 1``, ``s12 >= 0``.

    With ``A = [[a1, a2], [0, a3]]``, ``A xi`` has mean
    ``((a1 beta + a2) pi, a3 pi)`` and covariance ``A sigma A'``. Taking
    ``a3 = 1/s2``, ``a2 = -a1 beta`` and ``|a1| = Var(xi1 - beta xi2)^{-1/2}``
    gives the canonical form; the sign of ``a1`` makes the correlation
    nonnegative.
    """
    if sigma1_sq <= 0 or sigma2_sq <= 0:
        raise DomainError("variances must be positive")
    if sigma12**2 >= sigma1_sq * sigma2_sq:
        raise DomainError("covariance matrix is singular")
    a3 = 1.0 / math.sqrt(sigma2_sq)
    v = sigma1_sq - 2.0 * beta * sigma12 + beta * beta * sigma2_sq
    slope = sigma12 - beta * sigma2_sq
    a1 = (1.0 if slope >= 0 else -1.0) / math.sqrt(v)
    a2 = -a1 * beta
    corr = a1 * a3 * slope
    return ReducedSingle(a3 * pi, corr, np.array([[a1, a2], [0.0, a3]]))


# ---------------------------------------------------------------------------
# Quadrature bias
# ---------------------------------------------------------------------------


def _expected_tau(pi: float, nodes: int) -> float:
    """``E[tau_hat(xi2, 1)]`` for ``xi2 ~ N(pi, 1)``.

    The integrand ``mills(x) phi(x - pi) = (1 - Phi(x)) exp(pi x - pi^2/2)``
    decays only like ``exp(pi x)`` as ``x -> -inf``, which Gauss-Hermite
    handles poorly. It is integrated instead by composite Gauss-Legendre
    (panels of width 2, ``nodes`` points each) over ``[-60/pi, pi + 40]``;
    the neglected tails are below ``exp(-60)`` and ``exp(-800)``.
    """
    lo, hi = -60.0 / pi, pi + 40.0
    n_panels = int(math.ceil((hi - lo) / 2.0))
    t, wg = roots_legendre(nodes)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (half[:, None] * t[None, :] + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
    w = (half[:, None] * wg[None, :]).ravel()
    f = np.empty_like(x)
    neg = x < 0
    f[neg] = std_normal_cdf(-x[neg]) * np.exp(pi * x[neg] - 0.5 * pi * pi)
    xp = x[~neg]
    f[~neg] = mills_ratio(xp) * np.exp(-0.5 * (xp - pi) ** 2) / math.sqrt(2.0 * math.pi)
    return float(np.sum(w * f))


def bias_quadrature(estimator: str, pi: float, sigma12: float, nodes: int = 200) -> float:
    """Bias ``E[estimator] - beta`` in the canonical model, by quadrature.

    ``fuller`` uses a tensor Gauss-Hermite rule in ``(xi1, xi2)``. For
    ``beta_u`` the ``delta_hat`` and ``xi2`` directions are independent, so
    the expectation factors as ``E[tau_hat] E[delta_hat] + s12``; the
    ``xi2`` integral uses the rule described in :func:`_expected_tau`.
    """
    if nodes < 50:
        raise DomainError("nodes must be at least 50")
    if not -1.0 < sigma12 < 1.0:
        raise DomainError("sigma12 must lie in (-1, 1)")
    if estimator == "beta_u":
        if pi < MIN_PI_QUADRATURE:
            raise DomainError(
                f"beta_u bias quadrature needs pi >= {MIN_PI_QUADRATURE}: below that the heavy "
                "tails of beta_u make the integral numerically unreliable"
            )
        e_delta = -sigma12 * pi
        return _expected_tau(pi, nodes) * e_delta + sigma12
    if estimator == "fuller":
        x, w = roots_hermite(nodes)
        z = math.sqrt(2.0) * x
        w = w / math.sqrt(math.pi)
        z1, z2 = np.meshgrid(z, z, indexing="ij")
        ww = np.outer(w, w)
        xi2 = pi + z2
        xi1 = sigma12 * z2 + math.sqrt(1.0 - sigma12**2) * z1
        est = (xi2 * xi1 + sigma12) / (xi2 * xi2 + 1.0)
        return float(np.sum(ww * est))
    raise DomainError(f"unknown estimator {estimator!r} for quadrature")


# ---------------------------------------------------------------------------
# Monte Carlo draws
# ---------------------------------------------------------------------------


def _seed(scenario: Scenario, stream: int, sub: int = _XI):
    return (int(scenario.seed), int(stream), int(sub))


def draw_xi(scenario: Scenario, stream: int = 0, *, workers: int = 1) -> np.ndarray:
    """``(n_draws, 2k)`` draws of ``xi`` from stream ``stream`` of the scenario."""
    chol = stable_cholesky(scenario.sigma)
    mean = scenario.mean

    def run(rng, size, start):
        return mean + rng.standard_normal((size, mean.size)) @ chol.T

    return np.concatenate(mc.map_chunks(run, scenario.n_draws, _seed(scenario, stream), workers=workers))


def _single_estimates(tag, xi, sigma):
    x1, x2 = xi[:, 0], xi[:, 1]
    if tag == "beta_u":
        return _beta_u(x1, x2, sigma[0, 1], sigma[1, 1])
    if tag == "2sls":
        with np.errstate(divide="ignore", invalid="ignore"):
            return x1 / x2
    if tag == "fuller":
        return (x2 * x1 + sigma[0, 1]) / (x2 * x2 + sigma[1, 1])
    raise DomainError(f"unknown single-instrument estimator {tag!r}")


def estimator_draws(
    tag: str,
    scenario: Scenario,
    stream: int = 0,
    *,
    s_draws: int = DEFAULT_S_SIMULATION,
    c: float = 0.5,
    weights=None,
    workers: int = 1,
) -> np.ndarray:
    """Estimates on ``scenario.n_draws`` simulated ``xi``.

    ``k = 1`` tags: ``beta_u``, ``2sls``, ``fuller``. Any ``k``: ``2sls``
    (GMM with ``W = Z'Z``), ``beta_w`` (fixed ``weights``, equal by default),
    ``rb`` (quadratic ``Z'Z`` weights), ``rb_gmm`` (two-step GMM weights),
    ``rb_c`` (robust transform with constant ``c``) and ``oracle`` (known
    direction ``pi``). Rao-Blackwellized estimators draw ``zeta`` from a
    sub-stream of ``stream``, so two tags evaluated on the same stream share
    both ``xi`` and ``zeta``.
    """
    xi = draw_xi(scenario, stream, workers=workers)
    k, sigma = scenario.k, scenario.sigma
    if k == 1 and tag in SINGLE_ESTIMATORS:
        return _single_estimates(tag, xi, sigma)
    zg = scenario.z_gram
    zeta_seed = _seed(scenario, stream, _ZETA)
    if tag == "2sls":
        a = xi[:, k:] @ zg
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sum(a * xi[:, :k], axis=1) / np.sum(a * xi[:, k:], axis=1)
    if tag == "beta_w":
        w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
        idx = np.arange(k)
        bu = _beta_u(xi[:, :k], xi[:, k:], sigma[idx, k + idx], sigma[k + idx, k + idx])
        return bu @ w
    if tag == "rb":
        return beta_rb_batch(xi, sigma, WeightSpec.quadratic(), zg, s_draws, zeta_seed, workers=workers)[0]
    if tag == "rb_gmm":
        return beta_rb_batch(xi, sigma, WeightSpec.gmm_two_step(), zg, s_draws, zeta_seed, workers=workers)[0]
    if tag == "rb_c":
        return beta_rb_c_batch(xi, sigma, zg, c, None, s_draws, zeta_seed, workers=workers)[0]
    if tag == "oracle":
        g, s_star = submodel_projection(sigma, scenario.pi)
        xs = xi @ g.T
        return _beta_u(xs[:, 0], xs[:, 1], s_star[0, 1], s_star[1, 1])
    raise DomainError(f"unknown estimator {tag!r} for k={k}")


def nearest_rank_quantile(x, probs) -> np.ndarray:
    """Nearest-rank quantiles: the ``ceil(p n)``-th order statistic."""
    return np.quantile(np.asarray(x, dtype=float), np.asarray(probs, dtype=float), method="inverted_cdf")


def deviation_quantiles(tag: str, scenario: Scenario, probs: Sequence[float], stream: int = 0, **kw) -> list[float]:
    """Nearest-rank quantiles of ``|estimate - beta|``."""
    probs = list(probs)
    if any(not 0.0 < p < 1.0 for p in probs):
        raise DomainError("probabilities must lie in (0, 1)")
    dev = np.abs(estimator_draws(tag, scenario, stream, **kw) - scenario.beta)
    return nearest_rank_quantile(dev, probs).tolist()


def median_bias(tag: str, scenario: Scenario, stream: int = 0, **kw) -> float:
    est = estimator_draws(tag, scenario, stream, **kw)
    return float(nearest_rank_quantile(est, [0.5])[0]) - scenario.beta


def sign_agreement(tag: str, scenario: Scenario, stream: int = 0, **kw) -> float:
    """Share of draws with ``sign(est - rho) == sign(beta - rho)``, ``rho = sigma12 / sigma2^2``.

    A diagnostic only; single-instrument scenarios with ``beta != rho``.
    """
    if scenario.k != 1:
        raise DomainError("sign diagnostic is single-instrument only")
    rho = scenario.sigma[0, 1] / scenario.sigma[1, 1]
    target = np.sign(scenario.beta - rho)
    if target == 0:
        raise DomainError("beta equals sigma12 / sigma2^2; the sign is undefined")
    est = estimator_draws(tag, scenario, stream, **kw)
    return float(np.mean(np.sign(est - rho) == target))


def _ecdf_at(sorted_x, points):
    return np.searchsorted(sorted_x, points, side="right") / sorted_x.size


def ks_dominance(dev_a, dev_b) -> float:
    """One-sided KS statistic for "``a`` first-order dominates ``b``".

    ``sup_x (F_a(x) - F_b(x))^+``: zero when ``a`` is stochastically at least
    as large as ``b`` in the sample.
    """
    a = np.sort(np.asarray(dev_a, dtype=float).reshape(-1))
    b = np.sort(np.asarray(dev_b, dtype=float).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise DomainError("samples must be nonempty")
    pts = np.concatenate([a, b])
    return float(max(0.0, np.max(_ecdf_at(a, pts) - _ecdf_at(b, pts))))


def ks_pair_stats(scenario: Scenario, *, workers: int = 1) -> tuple[float, float]:
    """``(KS(|e_2sls| >= |e_u|), KS(|e_u| >= |e_fuller|))`` with ``e = est - median``.

    2SLS and Fuller share one stream; ``beta_u`` uses an independent one.
    """
    if scenario.k != 1:
        raise DomainError("dominance study is single-instrument only")
    xi = draw_xi(scenario, 0, workers=workers)
    xi_u = draw_xi(scenario, 1, workers=workers)
    sig = scenario.sigma
    devs = {}
    for tag, draws in (("2sls", xi), ("fuller", xi), ("beta_u", xi_u)):
        est = _single_estimates(tag, draws, sig)
        devs[tag] = np.abs(est - nearest_rank_quantile(est, [0.5])[0])
    return ks_dominance(devs["2sls"], devs["beta_u"]), ks_dominance(devs["beta_u"], devs["fuller"])


# ---------------------------------------------------------------------------
# Multi-instrument design
# ---------------------------------------------------------------------------


def pi_norm_for_ef(direction, z_gram, expected_f: float) -> float:
    """``||pi||`` giving ``E[F] = 1 + pi' Z'Z pi / k`` along ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if expected_f <= 1.0:
        raise DomainError("expected F must exceed one")
    return math.sqrt(d.size * (expected_f - 1.0) / float(d @ np.asarray(z_gram) @ d))


def build_multi_design(
    pi_direction, z_gram, pi_norm: float, sigma_uv: float, *, n_draws: int = DEFAULT_DRAWS, seed: int = 0
) -> Scenario:
    """Scenario with ``pi = ||pi|| d / ||d||``, ``beta = 0`` and Kronecker ``sigma``."""
    d = np.asarray(pi_direction, dtype=float).reshape(-1)
    if np.any(d <= 0):
        raise DomainError("pi_direction entries must be positive")
    if not -1.0 < sigma_uv < 1.0:
        raise DomainError("sigma_uv must lie in (-1, 1)")
    zg = np.atleast_2d(np.asarray(z_gram, dtype=float))
    try:
        np.linalg.cholesky(zg)
    except np.linalg.LinAlgError as exc:
        raise DomainError("z_gram must be positive definite") from exc
    q_z = np.linalg.inv(zg)
    q_z = 0.5 * (q_z + q_z.T)
    sigma = np.kron(np.array([[1.0, sigma_uv], [sigma_uv, 1.0]]), q_z)
    return Scenario(pi_norm * d / np.linalg.norm(d), 0.0, sigma, n_draws, seed, zg)


def first_stage_f_draws(xi, sigma) -> np.ndarray:
    """``xi2' sigma22^{-1} xi2 / k`` for each row of ``xi``."""
    xi = np.atleast_2d(xi)
    k = xi.shape[1] // 2
    x2 = xi[:, k:]
    sol = np.linalg.solve(np.asarray(sigma)[k:, k:], x2.T).T
    return np.sum(x2 * sol, axis=1) / k


def ar_containment(scenario: Scenario, level: float = 0.95, stream: int = 0, *, workers: int = 1) -> float:
    """Frequency with which the AR set at ``level`` contains ``beta_u``.

    Membership of ``b`` in the set is ``AR(b) <= chi2_1(level)``; it is
    evaluated at ``b = beta_u`` draw by draw.
    """
    if scenario.k != 1:
        raise DomainError("AR containment is implemented for a single instrument only")
    q = chi2_1_quantile(level)
    xi = draw_xi(scenario, stream, workers=workers)
    s = scenario.sigma
    b = _single_estimates("beta_u", xi, s)
    ar = (xi[:, 0] - b * xi[:, 1]) ** 2 / (s[0, 0] - 2.0 * b * s[0, 1] + b * b * s[1, 1])
    return float(np.mean(ar <= q))


# ---------------------------------------------------------------------------
# Table runners
# ---------------------------------------------------------------------------

SINGLE_COLUMNS = (
    "scenario", "pi", "sigma12", "expected_f", "estimator", "draws", "seed",
    "quad_bias", "mean_bias", "median_bias", "mad", "q10", "q50", "q90",
    "ks_dominates_next", "ar_containment",
)
MULTI_COLUMNS = (
    "scenario", "k", "pi_norm", "sigma_uv", "expected_f", "estimator", "draws", "zeta_draws",
    "seed", "mean_bias", "mean_bias_se", "median_bias", "mad", "mad_se", "q10", "q50", "q90",
)
BOUND_COLUMNS = (
    "scenario", "k", "pi_norm", "sigma12", "expected_f", "draws", "seed",
    "bound", "bound_se", "estimator", "mad", "mad_se",
)


def _summary(est, beta):
    dev = np.abs(est - beta)
    q10, q50, q90 = nearest_rank_quantile(dev, [0.1, 0.5, 0.9])
    mean, mean_se = mc.mean_and_se(est - beta)
    mad, mad_se = mc.mean_and_se(dev)
    return {
        "mean_bias": mean,
        "mean_bias_se": mean_se,
        "median_bias": float(nearest_rank_quantile(est, [0.5])[0]) - beta,
        "mad": mad,
        "mad_se": mad_se,
        "q10": float(q10),
        "q50": float(q50),
        "q90": float(q90),
    }


def run_single_grid(
    grid: GridSpec1,
    n_draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    *,
    level: float = 0.95,
    nodes: int = 200,
    workers: int = 1,
) -> list[dict]:
    """One row per (scenario, estimator) over a canonical single-instrument grid."""
    rows = []
    for idx, (s12, p) in enumerate((s, p) for s in grid.sigma12_values for p in grid.pi_values):
        sc = Scenario.canonical(p, s12, n_draws, seed=_scenario_seed(seed, idx))
        ks_2sls_u, ks_u_full = ks_pair_stats(sc, workers=workers)
        contain = ar_containment(sc, level, stream=1, workers=workers)
        for tag in SINGLE_ESTIMATORS:
            stream = 1 if tag == "beta_u" else 0
            est = estimator_draws(tag, sc, stream, workers=workers)
            row = {
                "scenario": idx, "pi": p, "sigma12": s12, "expected_f": sc.expected_f,
                "estimator": tag, "draws": n_draws, "seed": sc.seed,
            }
            if tag == "2sls":
                quad = math.nan
            elif tag == "beta_u" and p < MIN_PI_QUADRATURE:
                quad = math.nan
            else:
                quad = bias_quadrature(tag, p, s12, nodes)
            row["quad_bias"] = quad
            row.update({c: v for c, v in _summary(est, 0.0).items() if c in SINGLE_COLUMNS})
            row["ks_dominates_next"] = {"2sls": ks_2sls_u, "beta_u": ks_u_full}.get(tag, math.nan)
            row["ar_containment"] = contain if tag == "beta_u" else math.nan
            rows.append(row)
    return rows


def _scenario_seed(seed: int, idx: int) -> int:
    # distinct, reproducible 63-bit seed per scenario
    return int(np.random.SeedSequence([int(seed), int(idx)]).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)


def run_multi_design(
    design: MultiDesign,
    n_draws: int = 10_000,
    seed: int = 0,
    *,
    s_draws: int = DEFAULT_S_SIMULATION,
    c: float = 0.5,
    estimators: Iterable[str] = MULTI_ESTIMATORS,
    workers: int = 1,
) -> list[dict]:
    """One row per (scenario, estimator) over a multi-instrument design.

    All estimators of a scenario see the same ``xi`` and ``zeta`` draws.
    """
    rows = []
    for idx, sc in enumerate(design.scenarios(n_draws)):
        sc = Scenario(sc.pi, sc.beta, sc.sigma, n_draws, _scenario_seed(seed, idx), sc.z_gram)
        s_uv = float(sc.sigma[0, sc.k] / sc.sigma[sc.k, sc.k])
        for tag in estimators:
            est = estimator_draws(tag, sc, 0, s_draws=s_draws, c=c, workers=workers)
            row = {
                "scenario": idx, "k": sc.k, "pi_norm": float(np.linalg.norm(sc.pi)),
                "sigma_uv": s_uv, "expected_f": sc.expected_f, "estimator": tag,
                "draws": n_draws, "zeta_draws": s_draws, "seed": sc.seed,
            }
            row.update(_summary(est, sc.beta))
            rows.append(row)
    return rows


def run_bound_table(
    scenarios: Sequence[Scenario],
    seed: int = 0,
    *,
    estimators: Iterable[str] | None = None,
    s_draws: int = DEFAULT_S_SIMULATION,
    c: float = 0.5,
    workers: int = 1,
) -> list[dict]:
    """Risk lower bound next to the MAD of unbiased estimators, per scenario."""
    rows = []
    for idx, sc in enumerate(scenarios):
        sc = Scenario(sc.pi, sc.beta, sc.sigma, sc.n_draws, _scenario_seed(seed, idx), sc.z_gram)
        bound, bound_se = mad_lower_bound(sc.pi, sc.beta, sc.sigma, sc.n_draws, (sc.seed, 7), workers=workers)
        tags = estimators or (("beta_u",) if sc.k == 1 else ("rb", "rb_c", "beta_w"))
        for tag in tags:
            est = estimator_draws(tag, sc, 0, s_draws=s_draws, c=c, workers=workers)
            mad, mad_se = mc.mean_and_se(np.abs(est - sc.beta))
            rows.append({
                "scenario": idx, "k": sc.k, "pi_norm": float(np.linalg.norm(sc.pi)),
                "sigma12": float(sc.sigma[0, sc.k] / math.sqrt(sc.sigma[0, 0] * sc.sigma[sc.k, sc.k])),
                "expected_f": sc.expected_f, "draws": sc.n_draws, "seed": sc.seed,
                "bound": bound, "bound_se": bound_se, "estimator": tag, "mad": mad, "mad_se": mad_se,
            })
    return rows


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, rows: Sequence[dict], columns: Sequence[str], schema: str) -> None:
    """Tidy CSV with a leading ``#schema=<name>`` comment line."""
    buf = io.StringIO()
    buf.write(f"#schema={schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c, "")) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_manifest(path, records: Sequence[dict]) -> None:
    """JSON-lines run manifest (no timestamps, so reruns are byte-identical)."""
    lines = []
    for rec in records:
        rec = {"version": __version__, **rec}
        lines.append(json.dumps(_jsonable(rec), sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj
