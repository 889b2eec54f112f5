"""Regressor builders for the contagion, market-impact and peer-effect regressions.

Weekly panels use the columns produced by
:func:`hypedyn.panel_io.weekly_aggregate`: ``ticker, week, A, a, s,
V_bench, phi, p_bull, p_bear, p_neutral, rbar, sigma2, volume, mcap``.
Lags require the previous ISO week to be present for the same ticker;
otherwise the lagged value is missing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import sparse

from .errors import ValidationError
from .timeutil import week_ordinal

LOGODDS_CAP = 0.98
LOGODDS_FLOOR = 0.01
SIMPLEX_TOL = 1e-6


# -- contagion -----------------------------------------------------------------


def contagion_terms(a) -> tuple[np.ndarray, np.ndarray]:
    """Mixing term ``a (1 - a)`` and share ``a``."""
    a = np.asarray(a, dtype=float)
    finite = a[np.isfinite(a)]
    if np.any((finite < 0) | (finite > 1)):
        raise ValidationError("author shares must lie in [0, 1]")
    return a * (1.0 - a), a


def share_ratio_multiplier(c: float, d: float, a_from: float, a_to: float) -> float:
    """Multiplier on ``a/s`` when the lagged share moves from ``a_from`` to ``a_to``."""
    (m_from, m_to), (s_from, s_to) = contagion_terms([a_from, a_to])
    return math.exp(c * (m_to - m_from) + d * (s_to - s_from))


def interpret_log_odds(coef: float, delta: float = math.log(2.0)) -> float:
    """Odds multiplier ``exp(coef * delta)``.

    The default ``delta = ln 2`` is a doubling of the peer odds under the
    half-log-odds sentiment scale, giving ``2 ** coef``.
    """
    coef, delta = float(coef), float(delta)
    if not (math.isfinite(coef) and math.isfinite(delta)):
        raise ValidationError("coef and delta must be finite")
    return math.exp(coef * delta)


def _lagged(frame: pd.DataFrame, column: str, k: int) -> pd.Series:
    order = frame["_week_no"]
    by = frame.groupby("ticker", sort=False)
    value = by[column].shift(k)
    gap = order - by["_week_no"].shift(k)
    return value.where(gap == k)


def _with_week_numbers(weekly: pd.DataFrame) -> pd.DataFrame:
    missing = {"ticker", "week"} - set(weekly.columns)
    if missing:
        raise ValidationError(f"weekly panel lacks columns {sorted(missing)}")
    frame = weekly.copy()
    frame["_week_no"] = [week_ordinal(w) for w in frame["week"]]
    if frame.duplicated(["ticker", "_week_no"]).any():
        raise ValidationError("duplicate (ticker, week) rows")
    return frame.sort_values(["ticker", "_week_no"], kind="mergesort").reset_index(drop=True)


def contagion_features(weekly: pd.DataFrame) -> pd.DataFrame:
    """Add the contagion regression's dependent variable and lagged regressors.

    New columns: ``l = log(a / s)``, ``mix = a[t-1] (1 - a[t-1])``,
    ``a_lag``, ``rbar_lag``, ``sigma2_lag``, ``phi_lag2``,
    ``phi_rbar = phi[t-2] rbar[t-1]``, ``phi2_sigma2 = phi[t-2]**2 sigma2[t-1]``,
    ``A_lag`` and ``V_bench_lag``.
    """
    frame = _with_week_numbers(weekly)
    contagion_terms(frame["a"])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = frame["a"] / frame["s"]
        frame["l"] = np.log(ratio.where(ratio > 0))
    a_lag = _lagged(frame, "a", 1)
    frame["mix"], frame["a_lag"] = contagion_terms(a_lag)
    frame["rbar_lag"] = _lagged(frame, "rbar", 1)
    frame["sigma2_lag"] = _lagged(frame, "sigma2", 1)
    frame["phi_lag2"] = _lagged(frame, "phi", 2)
    frame["phi_rbar"] = frame["phi_lag2"] * frame["rbar_lag"]
    frame["phi2_sigma2"] = frame["phi_lag2"] ** 2 * frame["sigma2_lag"]
    frame["A_lag"] = _lagged(frame, "A", 1)
    frame["V_bench_lag"] = _lagged(frame, "V_bench", 1)
    return frame.drop(columns="_week_no")


# -- market impact -------------------------------------------------------------


def market_impact_vars(weekly: pd.DataFrame) -> pd.DataFrame:
    """Contagion and consensus proxies scaled by lagged market cap.

    ``dOmega = phi[t-1] / q[t-1] * (A[t] - A[t-1])`` and
    ``dChi = A[t-1] / q[t-1] * (phi[t] - phi[t-1])``; the starred versions
    use ``|phi|``. Also adds the weekly changes ``d_rbar``, ``d_sigma2`` and
    the percentage change in volume ``d_volume``. First weeks are missing.
    """
    frame = _with_week_numbers(weekly)
    q = frame["mcap"]
    if (q.dropna() <= 0).any():
        raise ValidationError("market cap must be positive")
    phi = frame["phi"]
    if ((phi.dropna() < -1) | (phi.dropna() > 1)).any():
        raise ValidationError("phi must lie in [-1, 1]")
    frame["_abs_phi"] = phi.abs()
    A_lag = _lagged(frame, "A", 1)
    phi_lag = _lagged(frame, "phi", 1)
    abs_lag = _lagged(frame, "_abs_phi", 1)
    q_lag = _lagged(frame, "mcap", 1)
    dA = frame["A"] - A_lag
    frame["dOmega"] = phi_lag / q_lag * dA
    frame["dChi"] = A_lag / q_lag * (phi - phi_lag)
    frame["dOmega_star"] = abs_lag / q_lag * dA
    frame["dChi_star"] = A_lag / q_lag * (frame["_abs_phi"] - abs_lag)
    for col in ("rbar", "sigma2"):
        if col in frame:
            frame[f"d_{col}"] = frame[col] - _lagged(frame, col, 1)
    if "volume" in frame:
        v_lag = _lagged(frame, "volume", 1)
        frame["d_volume"] = (frame["volume"] - v_lag) / v_lag.where(v_lag > 0)
    return frame.drop(columns=["_week_no", "_abs_phi"])


def reconstruct_phi_hat(phi_plus, phi_minus):
    """Expected sentiment from log-odds of bullish and bearish over neutral.

    ``(e^{P+} - e^{P-}) / (1 + e^{P+} + e^{P-})``, evaluated after shifting
    by the largest exponent so it stays finite for any finite input.
    """
    p = np.asarray(phi_plus, dtype=float)
    m = np.asarray(phi_minus, dtype=float)
    top = np.maximum(0.0, np.maximum(p, m))
    ep, em, e0 = np.exp(p - top), np.exp(m - top), np.exp(-top)
    out = (ep - em) / (e0 + ep + em)
    return float(out) if out.ndim == 0 else out


def predict_author_count(l_hat, baseline_count):
    """Predicted author count ``V_prev * exp(l_hat)``."""
    base = np.asarray(baseline_count, dtype=float)
    if np.any(base[np.isfinite(base)] < 0):
        raise ValidationError("baseline author count must be non-negative")
    out = base * np.exp(np.asarray(l_hat, dtype=float))
    return float(out) if out.ndim == 0 else out


# -- sentiment -----------------------------------------------------------------


def _clip_simplex(bull: float, bear: float, neutral: float) -> tuple[float, float, float]:
    flipped = bear > bull
    top, low = (bear, bull) if flipped else (bull, bear)
    if top >= LOGODDS_CAP or low == 0.0:
        if top > LOGODDS_CAP:
            rest = low + neutral
            spare = 1.0 - LOGODDS_CAP
            if rest > 0:
                low, neutral = spare * low / rest, spare * neutral / rest
            else:
                low = neutral = spare / 2.0
            top = LOGODDS_CAP
        if low == 0.0:
            take = min(LOGODDS_FLOOR, neutral)
            neutral -= take
            top -= LOGODDS_FLOOR - take
            low = LOGODDS_FLOOR
            if top == 0.0:  # both directional classes were empty
                top = LOGODDS_FLOOR
                neutral -= LOGODDS_FLOOR
    return (low, top, neutral) if flipped else (top, low, neutral)


def sentiment_logodds(p_bull: float, p_bear: float, p_neutral: float) -> float:
    """Half log-odds of bullish over bearish, ``0.5 * ln(p_bull / p_bear)``.

    Degenerate triples are clipped first. If the larger directional class
    exceeds 0.98 it is capped at 0.98 and the spare mass is shared by the
    other two classes in proportion to their original mass (equally if both
    are zero). A directional class that is still zero is raised to 0.01,
    taken from the neutral class where possible and otherwise from the
    larger class.
    """
    probs = [float(p_bull), float(p_bear), float(p_neutral)]
    if not all(math.isfinite(p) and p >= 0 for p in probs):
        raise ValidationError(f"probabilities must be finite and non-negative: {probs}")
    if abs(sum(probs) - 1.0) > SIMPLEX_TOL:
        raise ValidationError(f"probabilities must sum to 1, got {sum(probs)}")
    bull, bear, _ = _clip_simplex(*probs)
    # difference of logs: the ratio overflows for subnormal classes
    return 0.5 * (math.log(bull) - math.log(bear))


def sentiment_logodds_array(p_bull, p_bear, p_neutral) -> np.ndarray:
    return np.array(
        [sentiment_logodds(b, e, n) for b, e, n in zip(p_bull, p_bear, p_neutral)], dtype=float
    )


def neutral_logodds(p_class, p_neutral):
    """``log(p_class / p_neutral)``; missing where either probability is zero."""
    c = np.asarray(p_class, dtype=float)
    n = np.asarray(p_neutral, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(c / n)
    return np.where((c > 0) & (n > 0), out, np.nan)


def sentiment_category(p_bull, p_bear, p_neutral) -> np.ndarray:
    """Most likely class: +1 bullish, -1 bearish, 0 neutral (ties go to neutral)."""
    b, e, n = (np.asarray(x, dtype=float) for x in (p_bull, p_bear, p_neutral))
    return np.where((b > e) & (b > n), 1, np.where((e > b) & (e > n), -1, 0))


# -- peer datasets -------------------------------------------------------------


_SUB_COLS = ("submission_id", "author_id", "ticker", "timestamp_utc", "Phi")


def _prepare_submissions(subs: pd.DataFrame) -> pd.DataFrame:
    frame = subs.copy()
    if "Phi" not in frame:
        frame["Phi"] = sentiment_logodds_array(frame["p_bull"], frame["p_bear"], frame["p_neutral"])
    missing = set(_SUB_COLS) - set(frame.columns)
    if missing:
        raise ValidationError(f"submissions lack columns {sorted(missing)}")
    return frame.sort_values(["ticker", "timestamp_utc", "submission_id"], kind="mergesort").reset_index(
        drop=True
    )


def frequent_posters_dataset(subs: pd.DataFrame) -> pd.DataFrame:
    """Consecutive same-author posts on a ticker with the peer posts in between.

    For an author's posts at ``t1 < t2`` on one ticker, the peers are the
    other authors posting on that ticker strictly inside ``(t1, t2)``. Each
    peer's observed sentiment is the mean ``Phi`` of their posts inside the
    window; ``peer_mean`` averages over peers. Each peer's prior sentiment
    is their latest ``Phi`` on the ticker before their first post in the
    window; ``peer_prior_mean`` averages over peers that have one (missing
    if none do). Pairs with no peers produce no row.
    """
    frame = _prepare_submissions(subs)
    rows = []
    for ticker, g in frame.groupby("ticker", sort=True):
        times = g["timestamp_utc"].to_numpy(float)
        authors = g["author_id"].to_numpy()
        phis = g["Phi"].to_numpy(float)
        ids = g["submission_id"].to_numpy()
        for author in pd.unique(authors):
            own = np.nonzero(authors == author)[0]
            for i1, i2 in zip(own[:-1], own[1:]):
                t1, t2 = times[i1], times[i2]
                inside = np.nonzero((times > t1) & (times < t2) & (authors != author))[0]
                if inside.size == 0:
                    continue
                observed, prior = {}, {}
                for k in inside:
                    observed.setdefault(authors[k], []).append(phis[k])
                for peer in observed:
                    first = times[inside[authors[inside] == peer][0]]
                    earlier = np.nonzero((authors == peer) & (times < first))[0]
                    if earlier.size:
                        prior[peer] = phis[earlier[-1]]
                rows.append(
                    {
                        "ticker": ticker,
                        "author_id": author,
                        "submission_id": ids[i2],
                        "prev_submission_id": ids[i1],
                        "timestamp_utc": t2,
                        "prev_timestamp_utc": t1,
                        "Phi": phis[i2],
                        "Phi_prev": phis[i1],
                        "peer_mean": float(np.mean([np.mean(v) for v in observed.values()])),
                        "peer_prior_mean": float(np.mean(list(prior.values()))) if prior else np.nan,
                        "n_peers": len(observed),
                        "peers": tuple(sorted(observed, key=str)),
                    }
                )
    columns = [
        "ticker", "author_id", "submission_id", "prev_submission_id", "timestamp_utc",
        "prev_timestamp_utc", "Phi", "Phi_prev", "peer_mean", "peer_prior_mean", "n_peers", "peers",
    ]
    return pd.DataFrame(rows, columns=columns)


def placebo_rewire(dataset: pd.DataFrame, subs: pd.DataFrame, seed: int = 0) -> pd.DataFrame:
    """Replace each row's peers with a random cohort of earlier posters.

    The cohort has the row's peer count and is drawn without replacement
    from other authors who posted on the ticker before the author's first
    post of the pair; a smaller pool is taken whole. ``peer_mean`` becomes
    the mean of each cohort member's latest ``Phi`` before that post, and
    ``peer_prior_mean`` is set to the same value.
    """
    frame = _prepare_submissions(subs)
    rng = np.random.default_rng(seed)
    out = dataset.copy().reset_index(drop=True)
    means, cohorts = [], []
    by_ticker = {t: g for t, g in frame.groupby("ticker", sort=False)}
    for row in out.itertuples(index=False):
        g = by_ticker[row.ticker]
        before = g[(g["timestamp_utc"] < row.prev_timestamp_utc) & (g["author_id"] != row.author_id)]
        latest = before.groupby("author_id", sort=True)["Phi"].last()
        pool = list(latest.index)
        k = min(int(row.n_peers), len(pool))
        chosen = [pool[i] for i in sorted(rng.choice(len(pool), size=k, replace=False))] if k else []
        cohorts.append(tuple(chosen))
        means.append(float(latest.loc[chosen].mean()) if chosen else np.nan)
    out["peers"] = cohorts
    out["n_placebo"] = [len(c) for c in cohorts]
    out["peer_mean"] = means
    out["peer_prior_mean"] = means
    return out


@dataclass
class CommenterNetwork:
    """Row-normalised submission adjacency matrix and its row labels."""

    W: sparse.csr_matrix
    submission_ids: np.ndarray
    phi: np.ndarray

    def neighbour_mean(self) -> np.ndarray:
        return _row_apply(self.W, self.phi)

    def two_hop_mean(self) -> np.ndarray:
        return _row_apply(_row_normalise(self.W @ self.W), self.phi)


def _row_normalise(M: sparse.spmatrix) -> sparse.csr_matrix:
    M = sparse.csr_matrix(M, dtype=float)
    sums = np.asarray(M.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    return sparse.diags(inv) @ M


def _row_apply(M: sparse.csr_matrix, x: np.ndarray) -> np.ndarray:
    """``M x`` with rows that have no entries reported as missing."""
    values = M @ x
    empty = np.diff(M.indptr) == 0
    return np.where(empty, np.nan, values)


def build_commenter_network(subs: pd.DataFrame, comments: pd.DataFrame) -> CommenterNetwork:
    """Adjacency ``W[i, k]`` = share of comments by i's author on submission k.

    Only comments made before submission ``i`` on strictly older
    submissions of the same ticker by a different author count. Each row is
    divided by its total so it sums to one, or is empty.
    """
    frame = _prepare_submissions(subs)
    need = {"author_id", "submission_id", "timestamp_utc"}
    if need - set(comments.columns):
        raise ValidationError(f"comments lack columns {sorted(need - set(comments.columns))}")
    index = {sid: i for i, sid in enumerate(frame["submission_id"])}
    unknown = set(comments["submission_id"]) - set(index)
    if unknown:
        raise ValidationError(f"comments reference unknown submissions: {sorted(unknown, key=str)[:5]}")
    target = comments["submission_id"].map(index).to_numpy()
    c_author = comments["author_id"].to_numpy()
    c_time = comments["timestamp_utc"].to_numpy(float)
    s_author = frame["author_id"].to_numpy()
    s_time = frame["timestamp_utc"].to_numpy(float)
    s_ticker = frame["ticker"].to_numpy()

    by_author: dict = {}
    for k in range(len(comments)):
        by_author.setdefault(c_author[k], []).append(k)
    rows, cols = [], []
    for i in range(len(frame)):
        for k in by_author.get(s_author[i], ()):
            j = target[k]
            if (
                s_ticker[j] == s_ticker[i]
                and s_time[j] < s_time[i]
                and s_author[j] != s_author[i]
                and c_time[k] < s_time[i]
            ):
                rows.append(i)
                cols.append(j)
    n = len(frame)
    counts = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    counts.sum_duplicates()
    return CommenterNetwork(_row_normalise(counts), frame["submission_id"].to_numpy(), frame["Phi"].to_numpy(float))


def commenter_network_dataset(
    subs: pd.DataFrame, comments: pd.DataFrame, network: CommenterNetwork | None = None
) -> pd.DataFrame:
    """One row per submission with at least one neighbour.

    Columns: ``Phi``, the author's previous sentiment category on the ticker
    (``prev_cat``: 1, -1, 0, or missing) with dummies ``prev_bull``,
    ``prev_bear``, ``prev_none``, the neighbour mean ``W Phi`` and the
    two-hop instrument (row-normalised ``W^2`` applied to ``Phi``).
    """
    frame = _prepare_submissions(subs)
    net = network or build_commenter_network(subs, comments)
    if not np.array_equal(net.submission_ids, frame["submission_id"].to_numpy()):
        raise ValidationError("network rows do not match the submissions")
    frame["neighbour_mean"] = net.neighbour_mean()
    frame["two_hop_mean"] = net.two_hop_mean()
    if {"p_bull", "p_bear", "p_neutral"} <= set(frame.columns):
        cat = pd.Series(
            sentiment_category(frame["p_bull"], frame["p_bear"], frame["p_neutral"]), dtype="float"
        )
    else:
        cat = pd.Series(np.sign(frame["Phi"].to_numpy()), dtype="float")
    frame["_cat"] = cat
    prev = frame.sort_values("timestamp_utc", kind="mergesort").groupby(["author_id", "ticker"])["_cat"].shift(1)
    frame["prev_cat"] = prev.reindex(frame.index)
    frame["prev_bull"] = (frame["prev_cat"] == 1).astype(float)
    frame["prev_bear"] = (frame["prev_cat"] == -1).astype(float)
    frame["prev_none"] = frame["prev_cat"].isna().astype(float)
    keep = frame["neighbour_mean"].notna()
    cols = [
        "submission_id", "author_id", "ticker", "timestamp_utc", "Phi", "prev_cat",
        "prev_bull", "prev_bear", "prev_none", "neighbour_mean", "two_hop_mean",
    ]
    return frame.loc[keep, cols].reset_index(drop=True)


def rewire_network(net: CommenterNetwork, subs: pd.DataFrame, seed: int = 0) -> CommenterNetwork:
    """Random rewiring keeping each row's out-degree and weights.

    Each row's targets are redrawn without replacement from the older
    same-ticker submissions by other authors (the whole pool if it is
    smaller than the degree; weights are then renormalised).
    """
    frame = _prepare_submissions(subs)
    rng = np.random.default_rng(seed)
    s_author = frame["author_id"].to_numpy()
    s_time = frame["timestamp_utc"].to_numpy(float)
    s_ticker = frame["ticker"].to_numpy()
    W = net.W.tocsr()
    rows, cols, vals = [], [], []
    for i in range(W.shape[0]):
        start, end = W.indptr[i], W.indptr[i + 1]
        if start == end:
            continue
        weights = W.data[start:end]
        pool = np.nonzero((s_ticker == s_ticker[i]) & (s_time < s_time[i]) & (s_author != s_author[i]))[0]
        k = min(len(weights), len(pool))
        picks = np.sort(rng.choice(pool, size=k, replace=False))
        rows.extend([i] * k)
        cols.extend(picks.tolist())
        vals.extend(weights[:k].tolist())
    n = W.shape[0]
    M = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return CommenterNetwork(_row_normalise(M), net.submission_ids, net.phi)
