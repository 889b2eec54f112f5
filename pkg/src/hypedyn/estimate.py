"""Estimation pipelines: contagion, market impact and peer effects.

All standard errors are clustered by ticker (CR1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ValidationError
from .features import (
    commenter_network_dataset,
    build_commenter_network,
    contagion_features,
    frequent_posters_dataset,
    market_impact_vars,
    neutral_logodds,
    placebo_rewire,
    predict_author_count,
    reconstruct_phi_hat,
    rewire_network,
)
from .regression import FitResult, IvResult, PanelDataset, ols, tsls

CONTAGION_REGRESSORS = {
    "returns": ["mix", "a_lag", "rbar_lag", "sigma2_lag"],
    "sentiment": ["mix", "a_lag", "phi_rbar", "phi2_sigma2"],
}
SENTIMENT_REGRESSORS = ["rbar_lag", "sigma2_lag", "Phi_plus_lag", "Phi_minus_lag"]


def _weekly_panel(frame: pd.DataFrame) -> PanelDataset:
    return PanelDataset(frame, group="ticker", time="week")


def contagion(weekly: pd.DataFrame, fe: str = "none", spec: str = "returns") -> FitResult:
    """Log share ratio ``l = log(a/s)`` on lagged mixing, share and market terms.

    ``fe="none"`` pools with an intercept; ``"ticker"`` absorbs ticker
    effects; ``"week"`` absorbs week effects.
    """
    if spec not in CONTAGION_REGRESSORS:
        raise ValidationError(f"unknown contagion spec {spec!r}")
    absorb = {"none": (), "ticker": ("group",), "week": ("time",)}
    if fe not in absorb:
        raise ValidationError(f"unknown fixed effect {fe!r}")
    frame = contagion_features(weekly)
    return ols(_weekly_panel(frame), "l", CONTAGION_REGRESSORS[spec], absorb=absorb[fe])


def _week_fe_prediction(frame: pd.DataFrame, dependent: str, regressors: list[str], fit: FitResult):
    """Fitted levels ``X b + eta_week`` from a week fixed-effect fit."""
    X = frame[regressors].to_numpy(float)
    b = np.array([fit.coef(r) for r in regressors])
    xb = X @ b
    resid = frame[dependent].to_numpy(float) - xb
    ok = np.isfinite(resid)
    eta = pd.Series(resid[ok]).groupby(frame["week"].to_numpy()[ok]).mean()
    return xb + frame["week"].map(eta).to_numpy(float)


@dataclass
class ImpactResult:
    contagion_stage: FitResult
    sentiment_stages: dict[str, FitResult]
    reduced_form: dict[str, FitResult]
    iv: dict[str, IvResult]
    data: pd.DataFrame

    def to_dict(self) -> dict:
        return {
            "contagion_stage": self.contagion_stage.to_dict(),
            "sentiment_stages": {k: v.to_dict() for k, v in self.sentiment_stages.items()},
            "reduced_form": {k: v.to_dict() for k, v in self.reduced_form.items()},
            "iv": {k: v.to_dict() for k, v in self.iv.items()},
        }


IMPACT_EQUATIONS = {
    "return": ("d_rbar", "dOmega", "dChi"),
    "variance": ("d_sigma2", "dOmega_star", "dChi_star"),
    "volume": ("d_volume", "dOmega_star", "dChi_star"),
}


def impact(weekly: pd.DataFrame, equations=tuple(IMPACT_EQUATIONS)) -> ImpactResult:
    """Market-impact regressions with week fixed effects.

    Predicted contagion: the contagion model with week effects gives
    ``l_hat``, then ``A_hat = V_bench[t-1] * exp(l_hat)``. Predicted
    consensus: week-effect models for the bullish and bearish log-odds over
    neutral give ``phi_hat``. The predicted proxies instrument the observed
    ones in 2SLS for each equation.
    """
    frame = market_impact_vars(contagion_features(weekly))
    frame["Phi_plus"] = neutral_logodds(frame["p_bull"], frame["p_neutral"])
    frame["Phi_minus"] = neutral_logodds(frame["p_bear"], frame["p_neutral"])
    frame = frame.merge(
        _lag_columns(frame, ["Phi_plus", "Phi_minus", "phi", "mcap"]), on=["ticker", "week"], how="left"
    )
    panel = _weekly_panel(frame)

    regs = CONTAGION_REGRESSORS["returns"]
    c_fit = ols(panel, "l", regs, absorb=("time",))
    l_hat = _week_fe_prediction(frame, "l", regs, c_fit)
    A_hat = predict_author_count(l_hat, frame["V_bench_lag"].to_numpy(float))
    scale = 1.0 / frame["mcap_lag"]
    dA_hat = A_hat - frame["A_lag"]
    frame["dOmega_hat"] = frame["phi_lag"] * scale * dA_hat
    frame["dOmega_star_hat"] = frame["phi_lag"].abs() * scale * dA_hat

    s_fits, preds = {}, {}
    for name in ("Phi_plus", "Phi_minus"):
        fit = ols(panel, name, SENTIMENT_REGRESSORS, absorb=("time",))
        s_fits[name] = fit
        preds[name] = _week_fe_prediction(frame, name, SENTIMENT_REGRESSORS, fit)
    phi_hat = reconstruct_phi_hat(preds["Phi_plus"], preds["Phi_minus"])
    frame["phi_hat"] = phi_hat
    frame["dChi_hat"] = frame["A_lag"] * scale * (phi_hat - frame["phi_lag"])
    frame["dChi_star_hat"] = frame["A_lag"] * scale * (np.abs(phi_hat) - frame["phi_lag"].abs())

    panel = _weekly_panel(frame)
    reduced, iv = {}, {}
    for eq in equations:
        dep, omega, chi = IMPACT_EQUATIONS[eq]
        reduced[eq] = ols(panel, dep, [omega, chi], absorb=("time",))
        iv[eq] = tsls(panel, dep, [omega, chi], [f"{omega}_hat", f"{chi}_hat"], absorb=("time",))
    return ImpactResult(c_fit, s_fits, reduced, iv, frame)


def _lag_columns(frame: pd.DataFrame, columns: list[str]) -> pd.DataFrame:
    from .timeutil import week_ordinal

    base = frame[["ticker", "week", *columns]].copy()
    base["_w"] = [week_ordinal(w) + 1 for w in base["week"]]
    lagged = base.drop(columns="week").rename(columns={c: f"{c}_lag" for c in columns})
    keys = frame[["ticker", "week"]].assign(_w=[week_ordinal(w) for w in frame["week"]])
    return keys.merge(lagged, on=["ticker", "_w"], how="left").drop(columns="_w")


@dataclass
class PeerResult:
    method: str
    ols: FitResult
    iv: IvResult | None
    placebo: FitResult | None
    n_rows: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_rows": self.n_rows,
            "ols": self.ols.to_dict(),
            "iv": self.iv.to_dict() if self.iv else None,
            "placebo": self.placebo.to_dict() if self.placebo else None,
        }


def peers(
    submissions: pd.DataFrame,
    comments: pd.DataFrame | None = None,
    method: str = "frequent",
    placebo: bool = True,
    seed: int = 0,
) -> PeerResult:
    """Peer-effect regressions of own sentiment on peer sentiment (ticker effects)."""
    if method == "frequent":
        data = frequent_posters_dataset(submissions)
        if data.empty:
            raise ValidationError("no consecutive same-author posts with intervening peers")
        data = data.assign(row=np.arange(len(data)))
        panel = PanelDataset(data, group="ticker", time="row")
        controls = ["Phi_prev"]
        fit = ols(panel, "Phi", ["peer_mean", *controls], absorb=("group",))
        ivr = tsls(panel, "Phi", ["peer_mean"], ["peer_prior_mean"], controls, absorb=("group",))
        plc = None
        if placebo:
            rew = placebo_rewire(data.drop(columns="row"), submissions, seed).assign(row=np.arange(len(data)))
            plc = ols(PanelDataset(rew, group="ticker", time="row"), "Phi", ["peer_mean", *controls], absorb=("group",))
    elif method == "network":
        if comments is None:
            raise ValidationError("the network method needs comments")
        net = build_commenter_network(submissions, comments)
        data = commenter_network_dataset(submissions, comments, net)
        if data.empty:
            raise ValidationError("no submission has commenter-network neighbours")
        panel = PanelDataset(data, group="ticker", time="submission_id")
        controls = ["prev_bull", "prev_bear", "prev_none"]
        fit = ols(panel, "Phi", ["neighbour_mean", *controls], absorb=("group",))
        ivr = tsls(panel, "Phi", ["neighbour_mean"], ["two_hop_mean"], controls, absorb=("group",))
        plc = None
        if placebo:
            rew = commenter_network_dataset(submissions, comments, rewire_network(net, submissions, seed))
            plc = ols(PanelDataset(rew, group="ticker", time="submission_id"), "Phi",
                      ["neighbour_mean", *controls], absorb=("group",))
    else:
        raise ValidationError(f"unknown peer method {method!r}")
    return PeerResult(method, fit, ivr, plc, len(data))
