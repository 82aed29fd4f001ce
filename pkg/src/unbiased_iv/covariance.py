"""From raw data to ``(xi, sigma)``.

Controls are partialled out of outcome, regressor and instruments, the
reduced-form and first-stage coefficients are fitted by least squares on the
residualized instruments, and their joint covariance is estimated with a
heteroskedasticity-robust or a CR0 cluster-robust sandwich.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg

from .core import ReducedFormStats
from .exceptions import ConditioningError, DataError, DomainError
from .normal import mills_ratio

__all__ = [
    "IvDataset",
    "FittedReducedForm",
    "residualize",
    "reduced_form_fit",
    "robust_vcov",
    "clustered_vcov",
    "sign_calibrate",
    "fit_dataset",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class IvDataset:
    """Outcome, endogenous regressor, instruments, controls and cluster ids."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    controls: np.ndarray
    cluster_ids: np.ndarray | None = None
    z_names: tuple[str, ...] = ()
    control_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1)
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        t = y.size
        w = np.asarray(self.controls, dtype=float)
        if w.ndim == 1:
            w = w.reshape(t, -1) if w.size else np.zeros((t, 0))
        if x.size != t or z.shape[0] != t or w.shape[0] != t:
            raise DataError("y, x, z and controls must have the same number of rows")
        k, p = z.shape[1], w.shape[1]
        if k < 1:
            raise DataError("at least one instrument is required")
        if t <= k + p:
            raise DataError(f"need more than k + p = {k + p} observations, got {t}")
        for name, arr in (("y", y), ("x", x), ("z", z), ("controls", w)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        cl = self.cluster_ids
        if cl is not None:
            cl = np.asarray(cl).reshape(-1)
            if cl.size != t:
                raise DataError("cluster_ids must have one entry per row")
        z_names = tuple(self.z_names) or tuple(f"z{i + 1}" for i in range(k))
        c_names = tuple(self.control_names) or tuple(f"w{i + 1}" for i in range(p))
        for attr, val in (
            ("y", y), ("x", x), ("z", z), ("controls", w), ("cluster_ids", cl),
            ("z_names", z_names), ("control_names", c_names),
        ):
            object.__setattr__(self, attr, val)

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @classmethod
    def from_csv(
        cls,
        path,
        *,
        add_intercept: bool = True,
        cluster_col: str | None = "cluster",
    ) -> IvDataset:
        """Read ``y, x, z1..zk`` and optional ``w1..wp`` and cluster columns.

        An intercept is prepended to the controls unless ``add_intercept`` is
        false. ``cluster_col`` names the cluster column; it is used when
        present and ignored otherwise (pass ``None`` to never cluster).
        """
        path = Path(path)
        try:
            df = pd.read_csv(path, sep=",", decimal=".", thousands=None, encoding="utf-8")
        except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        df.columns = [str(c).strip() for c in df.columns]
        for col in ("y", "x", "z1"):
            if col not in df.columns:
                raise DataError(f"missing required column '{col}'")
        z_cols = _numbered(df.columns, "z")
        w_cols = _numbered(df.columns, "w")
        use_cluster = cluster_col is not None and cluster_col in df.columns
        cols = ["y", "x", *z_cols, *w_cols] + ([cluster_col] if use_cluster else [])

        missing = df[cols].isna()
        if missing.any().any():
            rows = (np.flatnonzero(missing.any(axis=1).to_numpy()) + 2).tolist()
            shown = ", ".join(map(str, rows[:10])) + (" ..." if len(rows) > 10 else "")
            raise DataError(f"missing values in rows {shown} (line numbers, header is line 1)")

        num = {}
        for col in ["y", "x", *z_cols, *w_cols]:
            vals = pd.to_numeric(df[col], errors="coerce")
            bad = vals.isna().to_numpy()
            if bad.any():
                rows = (np.flatnonzero(bad) + 2).tolist()
                raise DataError(f"non-numeric values in column '{col}' at rows {rows[:10]}")
            num[col] = vals.to_numpy(dtype=float)

        t = len(df)
        controls = [num[c] for c in w_cols]
        names = list(w_cols)
        if add_intercept:
            controls.insert(0, np.ones(t))
            names.insert(0, "intercept")
        w = np.column_stack(controls) if controls else np.zeros((t, 0))
        return cls(
            y=num["y"],
            x=num["x"],
            z=np.column_stack([num[c] for c in z_cols]),
            controls=w,
            cluster_ids=df[cluster_col].to_numpy() if use_cluster else None,
            z_names=tuple(z_cols),
            control_names=tuple(names),
        )


def _numbered(columns, prefix):
    found = {}
    for c in columns:
        if c.startswith(prefix) and c[len(prefix):].isdigit():
            found[int(c[len(prefix):])] = c
    idx = sorted(found)
    if idx and idx != list(range(1, len(idx) + 1)):
        raise DataError(f"columns {prefix}1..{prefix}{len(idx)} must be numbered consecutively")
    return [found[i] for i in idx]


@dataclass(frozen=True)
class FittedReducedForm:
    stats: ReducedFormStats
    residuals_u: np.ndarray = field(repr=False)
    residuals_v: np.ndarray = field(repr=False)
    z_res: np.ndarray = field(repr=False)


def _orth_basis(mat, names, what):
    """Orthonormal basis of ``col(mat)`` via pivoted QR; error on rank loss."""
    if mat.shape[1] == 0:
        return mat
    q, r, piv = linalg.qr(mat, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = RANK_TOL * diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < mat.shape[1]:
        dependent = [names[j] for j in piv[rank:]]
        raise DataError(f"{what} are rank deficient; linearly dependent: {', '.join(dependent)}")
    return q


def residualize(dataset: IvDataset):
    """Residuals of ``y``, ``x`` and ``z`` after projecting off the controls."""
    q = _orth_basis(dataset.controls, dataset.control_names, "controls")

    def off(v):
        if q.shape[1] == 0:
            return v.copy()
        return v - q @ (q.T @ v)

    return off(dataset.y), off(dataset.x), off(dataset.z)


def _least_squares(z_res, *targets):
    q, r, piv = linalg.qr(z_res, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or np.any(diag <= RANK_TOL * diag[0]):
        raise ConditioningError("Z'Z is singular after residualization")
    out = []
    for v in targets:
        coef = np.empty(z_res.shape[1])
        coef[piv] = linalg.solve_triangular(r, q.T @ v)
        out.append(coef)
    return out


def reduced_form_fit(y_res, x_res, z_res, *, cluster_ids=None) -> FittedReducedForm:
    """Least-squares ``xi1 = (Z'Z)^{-1} Z'y``, ``xi2 = (Z'Z)^{-1} Z'x`` and their covariance.

    The covariance is the robust sandwich, or the CR0 cluster sandwich when
    ``cluster_ids`` is given.
    """
    z_res = np.asarray(z_res, dtype=float)
    if z_res.ndim == 1:
        z_res = z_res[:, None]
    y_res = np.asarray(y_res, dtype=float)
    x_res = np.asarray(x_res, dtype=float)
    xi1, xi2 = _least_squares(z_res, y_res, x_res)
    u = y_res - z_res @ xi1
    v = x_res - z_res @ xi2
    if cluster_ids is None:
        sigma = robust_vcov(z_res, u, v)
    else:
        sigma = clustered_vcov(z_res, u, v, cluster_ids)
    return FittedReducedForm(ReducedFormStats(xi1, xi2, sigma), u, v, z_res)


def _sandwich(z, meat):
    k = z.shape[1]
    zz_inv = linalg.inv(z.T @ z)
    zz_inv = 0.5 * (zz_inv + zz_inv.T)
    bread = np.kron(np.eye(2), zz_inv)
    out = bread @ meat @ bread
    out = 0.5 * (out + out.T)
    try:
        np.linalg.cholesky(out)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"estimated {2 * k}x{2 * k} covariance is not positive definite") from exc
    return out


def _scores(z, u, v):
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    u = np.asarray(u, dtype=float).reshape(-1, 1)
    v = np.asarray(v, dtype=float).reshape(-1, 1)
    return z, np.hstack([z * u, z * v])


def robust_vcov(z_res, residuals_u, residuals_v) -> np.ndarray:
    """Heteroskedasticity-robust covariance of ``(xi1', xi2')'``.

    ``(I2 x (Z'Z)^{-1}) [sum_t g_t g_t'] (I2 x (Z'Z)^{-1})`` with scores
    ``g_t = (U_t Z_t', V_t Z_t')'``; no degrees-of-freedom correction.
    """
    z, g = _scores(z_res, residuals_u, residuals_v)
    return _sandwich(z, g.T @ g)


def clustered_vcov(z_res, residuals_u, residuals_v, cluster_ids) -> np.ndarray:
    """CR0 cluster-robust covariance: scores are summed within clusters first."""
    z, g = _scores(z_res, residuals_u, residuals_v)
    ids = np.asarray(cluster_ids).reshape(-1)
    if ids.size != g.shape[0]:
        raise DataError("cluster_ids must have one entry per row")
    labels, inv = np.unique(ids, return_inverse=True)
    k = z.shape[1]
    if labels.size < k + 1:
        raise DataError(f"need at least {k + 1} clusters, got {labels.size}")
    sums = np.zeros((labels.size, g.shape[1]))
    np.add.at(sums, inv, g)
    return _sandwich(z, sums.T @ sums)


def sign_calibrate(pi_hat, se) -> np.ndarray:
    """Posterior mean of ``pi`` under a flat prior on the negative orthant.

    ``pi_hat - se * phi(z) / (1 - Phi(z))`` with ``z = pi_hat / se``; every
    entry of the result is strictly negative.
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    se = np.asarray(se, dtype=float)
    if np.any(se <= 0):
        raise DomainError("standard errors must be positive")
    z = pi_hat / se
    big = z > 1e3
    zs = np.where(big, 1.0, z)
    with np.errstate(divide="ignore"):
        gap = zs - 1.0 / mills_ratio(zs)
    # z - phi/(1-Phi) = -1/z + 2/z^3 - 10/z^5 + ... for large z
    zb = np.where(big, z, 1.0)
    gap = np.where(big, -(1.0 / zb) * (1.0 - 2.0 / zb**2 + 10.0 / zb**4), gap)
    out = se * gap
    return float(out) if out.ndim == 0 else out


def fit_dataset(dataset: IvDataset, *, cluster: bool | None = None) -> FittedReducedForm:
    """Residualize, fit and estimate the covariance in one step.

    Clusters are used when the dataset carries cluster ids, unless ``cluster``
    is set explicitly.
    """
    y_res, x_res, z_res = residualize(dataset)
    use = dataset.cluster_ids is not None if cluster is None else cluster
    if use and dataset.cluster_ids is None:
        raise DataError("clustered covariance requested but the dataset has no cluster ids")
    return reduced_form_fit(y_res, x_res, z_res, cluster_ids=dataset.cluster_ids if use else None)
