"""Matching treated users (who commented on ticker posts) to similar controls.

Six distances compare a treated and a control user:

* D1, per exposure: days from the exposure to the control's next activity,
  capped at 30 (only the five most recent exposures are used);
* D2: difference in average comment/post length;
* D3: difference in average monthly comment/post count;
* D4: difference in the number of external subreddits;
* D5: one minus the Jaccard overlap of external subreddits;
* D6: difference in average posts per external subreddit.

Each component is min-max normalised over the candidate pool and summed;
the match score is ``1 / (D + eps)`` and pairs are chosen to maximise the
total score with every user used at most once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError

DAY = 86400.0
D1_CAP_DAYS = 30.0
MAX_EXPOSURES = 5
SCORE_EPS = 1e-9
COMPONENTS = ("D1", "D2", "D3", "D4", "D5", "D6")


@dataclass(frozen=True)
class UserProfile:
    """Observable behaviour of one forum user (times in UTC seconds)."""

    user_id: str
    first_active: float
    last_active: float
    avg_length: float
    avg_count: float
    external_posts: Mapping[str, int] = field(default_factory=dict)
    activity: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "activity", tuple(float(t) for t in self.activity))
        object.__setattr__(self, "external_posts", dict(self.external_posts))
        if any(b < a for a, b in zip(self.activity, self.activity[1:])):
            raise ValidationError(f"activity of {self.user_id} is not sorted")
        if self.last_active < self.first_active:
            raise ValidationError(f"{self.user_id}: last activity precedes first")
        if self.avg_length < 0 or self.avg_count < 0:
            raise ValidationError(f"{self.user_id}: averages must be non-negative")
        if any(v < 0 for v in self.external_posts.values()):
            raise ValidationError(f"{self.user_id}: post counts must be non-negative")

    @property
    def subreddits(self) -> frozenset:
        return frozenset(k for k, v in self.external_posts.items() if v > 0)

    @property
    def posts_per_subreddit(self) -> float:
        subs = self.subreddits
        return sum(self.external_posts[s] for s in subs) / len(subs) if subs else 0.0


def d1_days(control: UserProfile, exposure: float) -> float:
    """Days from ``exposure`` to the control's next activity, capped at 30."""
    later = [t for t in control.activity if t > exposure]
    if not later:
        return D1_CAP_DAYS
    return min((later[0] - exposure) / DAY, D1_CAP_DAYS)


def recent_exposures(exposure_times: Sequence[float]) -> list[float]:
    """The five most recent exposure times, oldest first."""
    return sorted(float(t) for t in exposure_times)[-MAX_EXPOSURES:]


def distances(
    treated: UserProfile, control: UserProfile, exposure_times: Sequence[float]
) -> tuple[list[float], float, float, float, float, float]:
    """Raw ``(D1 terms, D2, D3, D4, D5, D6)`` between two users."""
    d1 = [d1_days(control, s) for s in recent_exposures(exposure_times)]
    a, b = treated.subreddits, control.subreddits
    union = a | b
    d5 = 1.0 - len(a & b) / len(union) if union else 0.0
    return (
        d1,
        abs(treated.avg_length - control.avg_length),
        abs(treated.avg_count - control.avg_count),
        float(abs(len(a) - len(b))),
        d5,
        abs(treated.posts_per_subreddit - control.posts_per_subreddit),
    )


@dataclass
class MatchProblem:
    treated: list[str]
    controls: list[str]
    scores: np.ndarray
    distance: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.treated), len(self.controls)):
            raise ValidationError("score matrix shape does not match the user lists")
        if not np.all(np.isfinite(self.scores)) or np.any(self.scores < 0):
            raise ValidationError("scores must be finite and non-negative")


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = np.nanmin(x), np.nanmax(x)
    if not hi > lo:
        return np.where(np.isnan(x), np.nan, 0.0)
    return (x - lo) / (hi - lo)


def score_matrix(
    treated: Sequence[UserProfile],
    controls: Sequence[UserProfile],
    exposures: Mapping[str, Sequence[float]],
    weights: Mapping[str, float] | None = None,
) -> MatchProblem:
    """Scores ``1 / (D + 1e-9)`` for every treated-control pair.

    Components are min-max normalised over all pairs in the problem (all D1
    terms share one normalisation); a component with zero range becomes 0.
    ``weights`` optionally scales each normalised component.
    """
    if not controls:
        raise ValidationError("empty control pool")
    if not treated:
        raise ValidationError("no treated users")
    w = {k: 1.0 for k in COMPONENTS}
    w.update(weights or {})
    nt, nc = len(treated), len(controls)
    n_exp = max(1, max(len(recent_exposures(exposures.get(t.user_id, ()))) for t in treated))
    d1 = np.full((nt, nc, n_exp), np.nan)
    rest = np.empty((nt, nc, 5))
    for i, t in enumerate(treated):
        for j, c in enumerate(controls):
            terms, *others = distances(t, c, exposures.get(t.user_id, ()))
            d1[i, j, : len(terms)] = terms
            rest[i, j] = others
    total = np.zeros((nt, nc))
    if np.isfinite(d1).any():
        total += w["D1"] * np.nansum(_minmax(d1), axis=2)
    for k, name in enumerate(COMPONENTS[1:]):
        total += w[name] * _minmax(rest[:, :, k])
    return MatchProblem(
        [t.user_id for t in treated],
        [c.user_id for c in controls],
        1.0 / (total + SCORE_EPS),
        total,
    )


@dataclass
class MatchResult:
    pairs: list[tuple[str, str]]
    total_score: float
    pair_scores: list[float]


def optimal_match(problem: MatchProblem) -> MatchResult:
    """Maximum-total-score matching; each user appears in at most one pair.

    The assignment LP is totally unimodular, so the rectangular assignment
    solution is integral. Pairs with zero score add nothing and are dropped.
    """
    M = problem.scores
    if M.size == 0:
        return MatchResult([], 0.0, [])
    rows, cols = linear_sum_assignment(M, maximize=True)
    keep = [(i, j) for i, j in zip(rows, cols) if M[i, j] > 0]
    scores = [float(M[i, j]) for i, j in keep]
    pairs = [(problem.treated[i], problem.controls[j]) for i, j in keep]
    return MatchResult(pairs, float(math.fsum(scores)), scores)


def exposure_bucket(n: int) -> str:
    """Treatment-intensity bucket: ``"1"`` to ``"4"``, or ``"5+"``."""
    if n < 1:
        raise ValidationError("a treated user has at least one exposure")
    return "5+" if n >= 5 else str(int(n))


@dataclass(frozen=True)
class Effect:
    pi_treated: float
    pi_control: float
    difference: float
    n_pairs: int


def treatment_effect(treated_outcomes: Sequence[bool], control_outcomes: Sequence[bool]) -> Effect:
    """Posting proportions among matched treated and control users and their gap."""
    t = np.asarray(treated_outcomes, dtype=float)
    c = np.asarray(control_outcomes, dtype=float)
    if t.size == 0 or t.size != c.size:
        raise ValidationError("need at least one matched pair with both outcomes")
    pt, pc = float(t.mean()), float(c.mean())
    return Effect(pt, pc, pt - pc, int(t.size))


def treatment_effects(pairs: pd.DataFrame) -> pd.DataFrame:
    """Effects per ticker and exposure bucket.

    ``pairs`` needs ``ticker``, ``n_exposures``, ``treated_posted`` and
    ``control_posted`` columns, one row per matched pair.
    """
    need = {"ticker", "n_exposures", "treated_posted", "control_posted"}
    if need - set(pairs.columns):
        raise ValidationError(f"pairs lack columns {sorted(need - set(pairs.columns))}")
    if len(pairs) == 0:
        raise ValidationError("no matched pairs")
    frame = pairs.assign(bucket=[exposure_bucket(int(n)) for n in pairs["n_exposures"]])
    rows = []
    for (ticker, bucket), g in frame.groupby(["ticker", "bucket"], sort=True):
        e = treatment_effect(g["treated_posted"].astype(bool), g["control_posted"].astype(bool))
        rows.append({"ticker": ticker, "bucket": bucket, "pi_treated": e.pi_treated,
                     "pi_control": e.pi_control, "difference": e.difference, "n_pairs": e.n_pairs})
    return pd.DataFrame(rows)
