"""Panel regression: fixed-effect demeaning, OLS, cluster-robust covariance, 2SLS.

Covariances are sandwich estimators. With cluster ids they use the CR1
small-sample factor ``G/(G-1) * (n-1)/(n-k)``; without, the HC1 factor
``n/(n-k)``. Rows with any missing value in the variables used are
dropped before fitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from .errors import RankDeficiencyError, ValidationError

RANK_TOL = 1e-10
INTERCEPT = "const"
FE_DIMS = ("group", "time")


@dataclass(frozen=True)
class PanelDataset:
    """Long-format panel: one row per observation.

    ``group`` and ``time`` name the identifier columns; ``cluster`` names
    the column used for clustering (defaults to ``group``). With
    ``unique=True`` duplicate ``(group, time)`` pairs are rejected.
    """

    data: pd.DataFrame
    group: str
    time: str
    cluster: str | None = None
    unique: bool = True

    def __post_init__(self):
        for col in (self.group, self.time, self.cluster_column):
            if col not in self.data.columns:
                raise ValidationError(f"panel has no column {col!r}")
        if self.unique and self.data.duplicated([self.group, self.time]).any():
            raise ValidationError(f"duplicate ({self.group}, {self.time}) rows in panel")

    @property
    def cluster_column(self) -> str:
        return self.cluster or self.group

    def __len__(self) -> int:
        return len(self.data)

    def complete(self, columns: Sequence[str]) -> "PanelDataset":
        """Listwise deletion over ``columns`` (plus identifiers)."""
        missing = [c for c in columns if c not in self.data.columns]
        if missing:
            raise ValidationError(f"panel has no columns {missing}")
        keep = list(dict.fromkeys([self.group, self.time, self.cluster_column, *columns]))
        frame = self.data.loc[self.data[keep].notna().all(axis=1)].reset_index(drop=True)
        return PanelDataset(frame, self.group, self.time, self.cluster, self.unique)


def within_transform(
    panel: PanelDataset,
    columns: Sequence[str],
    dims: Sequence[str] = ("group",),
    max_sweeps: int = 50,
    tol: float = 1e-12,
) -> PanelDataset:
    """Subtract cell means of ``columns`` along each dimension in ``dims``.

    Two-way demeaning alternates the one-way passes until the largest
    change in a sweep falls below ``tol`` or ``max_sweeps`` is reached.
    """
    if len(panel) == 0:
        raise ValidationError("cannot demean an empty panel")
    dims = list(dict.fromkeys(dims))
    bad = [d for d in dims if d not in FE_DIMS]
    if bad:
        raise ValidationError(f"unknown fixed-effect dimension(s) {bad}")
    frame = panel.data.copy()
    if not dims or not columns:
        return PanelDataset(frame, panel.group, panel.time, panel.cluster, panel.unique)
    keys = [frame[panel.group if d == "group" else panel.time] for d in dims]
    values = frame[list(columns)].astype(float)
    sweeps = 1 if len(dims) == 1 else max_sweeps
    for _ in range(sweeps):
        change = 0.0
        for key in keys:
            means = values.groupby(key.to_numpy()).transform("mean")
            change = max(change, float(np.abs(means.to_numpy()).max()))
            values = values - means
        if change < tol:
            break
    frame[list(columns)] = values
    return PanelDataset(frame, panel.group, panel.time, panel.cluster, panel.unique)


def _absorbed_dof(panel: PanelDataset, dims: Sequence[str]) -> int:
    dims = list(dict.fromkeys(dims))
    if not dims:
        return 0
    levels = [panel.data[panel.group if d == "group" else panel.time].nunique() for d in dims]
    return int(sum(levels) - (len(levels) - 1))


def check_rank(X: np.ndarray, names: Sequence[str], tol: float = RANK_TOL) -> None:
    """Raise :class:`RankDeficiencyError` naming the columns a pivoted QR drops."""
    if X.shape[0] < X.shape[1]:
        raise RankDeficiencyError(
            f"{X.shape[0]} observations for {X.shape[1]} columns", list(names)
        )
    if X.shape[1] == 0:
        return
    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = diag[0] if diag[0] > 0 else 1.0
    rank = int(np.sum(diag > tol * scale)) if diag[0] > 0 else 0
    if rank < X.shape[1]:
        dropped = [names[i] for i in piv[rank:]]
        raise RankDeficiencyError(f"design matrix is rank deficient; collinear: {dropped}", dropped)


def cluster_robust_cov(
    X: np.ndarray,
    resid: np.ndarray,
    clusters: Sequence | None = None,
    bread: np.ndarray | None = None,
) -> np.ndarray:
    """Sandwich covariance ``B (sum_g X_g' u_g u_g' X_g) B`` with ``B = (X'X)^-1``.

    ``clusters=None`` gives HC1 (every row its own cluster, factor
    ``n/(n-k)``); otherwise CR1 with ``G/(G-1) * (n-1)/(n-k)``.
    """
    X = np.asarray(X, dtype=float)
    u = np.asarray(resid, dtype=float)
    n, k = X.shape
    if n <= k:
        raise ValidationError("need more observations than regressors")
    if bread is None:
        bread = linalg.inv(X.T @ X)
    scores = X * u[:, None]
    if clusters is None:
        meat = scores.T @ scores
        factor = n / (n - k)
    else:
        codes, uniques = pd.factorize(pd.Series(list(clusters)))
        G = len(uniques)
        if G < 2:
            raise ValidationError("cluster-robust covariance needs at least 2 clusters")
        summed = np.zeros((G, k))
        np.add.at(summed, codes, scores)
        meat = summed.T @ summed
        factor = G / (G - 1) * (n - 1) / (n - k)
    cov = factor * bread @ meat @ bread
    return 0.5 * (cov + cov.T)


@dataclass
class FitResult:
    """Coefficients and fit statistics of one linear regression."""

    names: list[str]
    params: np.ndarray
    cov: np.ndarray
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    n_obs: int
    df_resid: int
    resid: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    cov_type: str = "HC1"
    n_clusters: int | None = None

    @property
    def coefficients(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.params)))

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def tstat(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.params / self.se

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def table(self) -> list[dict]:
        return [
            {"name": n, "estimate": float(b), "se": float(s), "t": float(t)}
            for n, b, s, t in zip(self.names, self.params, self.se, self.tstat)
        ]

    def to_dict(self) -> dict:
        return {
            "coefficients": self.table(),
            "r_squared": self.r_squared,
            "adj_r_squared": self.adj_r_squared,
            "f_statistic": self.f_statistic,
            "n_obs": self.n_obs,
            "cov_type": self.cov_type,
            "n_clusters": self.n_clusters,
        }


def _design(frame: pd.DataFrame, columns: Sequence[str], intercept: bool):
    names = ([INTERCEPT] if intercept else []) + list(columns)
    parts = [np.ones(len(frame))] if intercept else []
    parts += [frame[c].to_numpy(dtype=float) for c in columns]
    X = np.column_stack(parts) if parts else np.empty((len(frame), 0))
    return X, names


def _fit_stats(y, fitted, resid, k_slopes, intercept, absorbed, n):
    """R^2 against the intercept-only model (or the demeaned data under FE)."""
    rss = float(resid @ resid)
    yc = y - y.mean() if intercept else y
    tss = float(yc @ yc)
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)
    k_total = k_slopes + (1 if intercept else 0) + absorbed
    df_resid = n - k_total
    if df_resid <= 0:
        raise ValidationError("not enough observations for the number of parameters")
    adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid if (intercept or absorbed) else 1.0 - (1.0 - r2) * n / df_resid
    if k_slopes == 0:
        f = float("nan")
    elif r2 >= 1.0:
        f = float("inf")
    else:
        f = (r2 / k_slopes) / ((1.0 - r2) / df_resid)
    return r2, adj, f, df_resid


def _solve(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> np.ndarray:
    check_rank(X, names)
    beta, *_ = linalg.lstsq(X, y, lapack_driver="gelsy")
    return beta


def ols(
    panel: PanelDataset,
    dependent: str,
    regressors: Sequence[str],
    intercept: bool = True,
    absorb: Sequence[str] = (),
    cluster: bool = True,
) -> FitResult:
    """Least squares of ``dependent`` on ``regressors``.

    ``absorb`` lists fixed-effect dimensions (``"group"``, ``"time"``)
    removed by the within transform; the intercept is then dropped.
    ``cluster=True`` clusters on ``panel.cluster_column``; ``False`` gives HC1.
    """
    regressors = list(regressors)
    panel = panel.complete([dependent, *regressors])
    if len(panel) == 0:
        raise ValidationError("no complete observations")
    if absorb:
        panel = within_transform(panel, [dependent, *regressors], absorb)
        intercept = False
    frame = panel.data
    y = frame[dependent].to_numpy(dtype=float)
    X, names = _design(frame, regressors, intercept)
    beta = _solve(X, y, names)
    fitted = X @ beta
    resid = y - fitted
    n = len(y)
    absorbed = _absorbed_dof(panel, absorb)
    r2, adj, f, df_resid = _fit_stats(y, fitted, resid, len(regressors), intercept, absorbed, n)
    bread = linalg.inv(X.T @ X)
    clusters = frame[panel.cluster_column].to_numpy() if cluster else None
    cov = cluster_robust_cov(X, resid, clusters, bread)
    return FitResult(
        names=names,
        params=beta,
        cov=cov,
        r_squared=r2,
        adj_r_squared=adj,
        f_statistic=f,
        n_obs=n,
        df_resid=df_resid,
        resid=resid,
        fitted=fitted,
        cov_type="CR1" if cluster else "HC1",
        n_clusters=int(pd.Series(clusters).nunique()) if cluster else None,
    )


@dataclass
class IvResult:
    first_stage: list[FitResult]
    second_stage: FitResult
    first_stage_f: dict[str, float]
    j_statistic: float
    j_dof: int

    def to_dict(self) -> dict:
        return {
            "second_stage": self.second_stage.to_dict(),
            "first_stage_f": self.first_stage_f,
            "first_stage": [fs.to_dict() for fs in self.first_stage],
            "j_statistic": self.j_statistic,
            "j_dof": self.j_dof,
        }


def _partial_f(y, Z, restricted, q, df_resid):
    """Classical F test that the ``q`` excluded-instrument coefficients are zero."""
    def rss(M):
        if M.shape[1] == 0:
            return float(y @ y)
        b, *_ = linalg.lstsq(M, y, lapack_driver="gelsy")
        e = y - M @ b
        return float(e @ e)

    rss_u, rss_r = rss(Z), rss(restricted)
    if rss_u == 0:
        return float("inf")
    return ((rss_r - rss_u) / q) / (rss_u / df_resid)


def tsls(
    panel: PanelDataset,
    dependent: str,
    endogenous: Sequence[str],
    instruments: Sequence[str],
    exogenous: Sequence[str] = (),
    intercept: bool = True,
    absorb: Sequence[str] = (),
    cluster: bool = True,
) -> IvResult:
    """Two-stage least squares.

    Each endogenous regressor is projected on the exogenous regressors and
    the excluded instruments; the second stage uses the projections.
    Residuals for covariance and the J statistic use the observed
    regressors. ``J = n * R^2`` (uncentred) from regressing those residuals
    on all instruments and exogenous regressors; degrees of freedom are
    ``#instruments - #endogenous``.
    """
    endogenous, instruments, exogenous = list(endogenous), list(instruments), list(exogenous)
    if not endogenous:
        raise ValidationError("tsls needs at least one endogenous regressor")
    if len(instruments) < len(endogenous):
        raise ValidationError(
            f"under-identified: {len(instruments)} instruments for {len(endogenous)} endogenous"
        )
    overlap = set(instruments) & set(exogenous)
    if overlap:
        raise ValidationError(f"columns listed as both instrument and exogenous: {sorted(overlap)}")
    used = [dependent, *endogenous, *instruments, *exogenous]
    panel = panel.complete(list(dict.fromkeys(used)))
    if len(panel) == 0:
        raise ValidationError("no complete observations")
    if absorb:
        panel = within_transform(panel, list(dict.fromkeys(used)), absorb)
        intercept = False
    frame = panel.data
    n = len(frame)
    absorbed = _absorbed_dof(panel, absorb)
    clusters = frame[panel.cluster_column].to_numpy() if cluster else None
    cov_type = "CR1" if cluster else "HC1"

    W, w_names = _design(frame, exogenous, intercept)
    Zx = np.column_stack([frame[c].to_numpy(dtype=float) for c in instruments])
    Z = np.column_stack([W, Zx])
    z_names = w_names + instruments
    check_rank(Z, z_names)

    first, first_f, fitted_endog = [], {}, []
    for name in endogenous:
        fs = ols(panel, name, exogenous + instruments, intercept=intercept, cluster=cluster)
        x = frame[name].to_numpy(dtype=float)
        fs_df = n - Z.shape[1] - absorbed
        first_f[name] = _partial_f(x, Z, W, len(instruments), fs_df)
        first.append(fs)
        fitted_endog.append(fs.fitted)

    y = frame[dependent].to_numpy(dtype=float)
    X = np.column_stack([W] + [frame[c].to_numpy(dtype=float) for c in endogenous])
    Xhat = np.column_stack([W] + fitted_endog)
    names = w_names + endogenous
    check_rank(Xhat, names)
    beta, *_ = linalg.lstsq(Xhat, y, lapack_driver="gelsy")
    fitted = X @ beta
    resid = y - fitted
    k_slopes = len(exogenous) + len(endogenous)
    r2, adj, f, df_resid = _fit_stats(y, fitted, resid, k_slopes, intercept, absorbed, n)
    bread = linalg.inv(Xhat.T @ Xhat)
    cov = cluster_robust_cov(Xhat, resid, clusters, bread)
    second = FitResult(
        names=names,
        params=beta,
        cov=cov,
        r_squared=r2,
        adj_r_squared=adj,
        f_statistic=f,
        n_obs=n,
        df_resid=df_resid,
        resid=resid,
        fitted=fitted,
        cov_type=cov_type,
        n_clusters=int(pd.Series(clusters).nunique()) if cluster else None,
    )

    g, *_ = linalg.lstsq(Z, resid, lapack_driver="gelsy")
    explained = Z @ g
    uu = float(resid @ resid)
    j = n * float(explained @ explained) / uu if uu > 0 else 0.0
    return IvResult(first, second, first_f, max(j, 0.0), len(instruments) - len(endogenous))
