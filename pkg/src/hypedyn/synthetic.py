"""Synthetic weekly panels with known coefficients, for recovery checks.

The generator follows the estimating equations exactly:

* log share ratios ``l = const + c a(1-a) + d a + b1 rbar + b2 sigma2 + zeta``
  on last week's values, with shares ``a = s exp(l)`` and ``s`` fixed by
  ``sum(a) + s = 1``;
* bullish and bearish log-odds over neutral follow week-effect
  autoregressions on last week's returns, variance and log-odds;
* return and volume changes load on the contagion and consensus proxies
  plus week effects, with errors correlated with the contagion and
  sentiment shocks so that the proxies are endogenous.

Daily variance is drawn independently each week and is not itself a
structural outcome.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .panel_io import WEEKLY_COLUMNS
from .timeutil import iso_week


@dataclass(frozen=True)
class Truth:
    const: float = -3.89
    c: float = 83.49
    # steeper than the pooled estimate so that shares stay stationary;
    # with d = -48.01 single tickers run away towards a = 1
    d: float = -100.0
    b1: float = 1.24
    b2: float = -2.15
    sent_r: tuple[float, float] = (2.0, -2.0)
    sent_var: tuple[float, float] = (-1.0, 1.0)
    sent_own: tuple[float, float] = (0.5, 0.4)
    sent_cross: tuple[float, float] = (0.1, 0.1)
    omega_r: float = 0.004
    chi_r: float = 0.006
    omega_v: float = 0.02
    chi_v: float = -0.015
    zeta_sd: float = 0.4
    sent_sd: float = 0.3
    ret_sd: float = 0.01
    vol_sd: float = 0.03
    endog: float = 0.6
    authors: float = 5000.0

    def coefficients(self) -> dict[str, dict[str, float]]:
        return {
            "contagion": {"const": self.const, "mix": self.c, "a_lag": self.d,
                          "rbar_lag": self.b1, "sigma2_lag": self.b2},
            "return": {"dOmega": self.omega_r, "dChi": self.chi_r},
            "volume": {"dOmega_star": self.omega_v, "dChi_star": self.chi_v},
        }


def generate_weekly_panel(
    seed: int, n_tickers: int = 40, n_weeks: int = 50, truth: Truth = Truth()
) -> pd.DataFrame:
    """One synthetic ticker-week panel in the weekly-aggregate column layout."""
    rng = np.random.default_rng(seed)
    J, T = n_tickers, n_weeks
    start = dt.date(2020, 1, 6)
    weeks = [iso_week(start + dt.timedelta(weeks=t)) for t in range(T)]

    q_base = rng.uniform(1.0, 10.0, J)
    a = np.full(J, 0.02)
    rbar = rng.normal(0.0, 0.01, J)
    sigma2 = rng.gamma(2.0, 0.025, J)
    phi_p = rng.normal(0.0, 0.3, J)
    phi_m = rng.normal(-0.3, 0.3, J)
    volume = np.full(J, 100.0)
    A = a * truth.authors
    phi = (np.exp(phi_p) - np.exp(phi_m)) / (1 + np.exp(phi_p) + np.exp(phi_m))
    q = q_base.copy()

    rows = []
    for t in range(T):
        if t == 0:
            s = 1.0 - a.sum()
            ps = [phi_p, phi_m]
        else:
            zeta = rng.normal(0.0, truth.zeta_sd, J)
            l = (truth.const + truth.c * a * (1 - a) + truth.d * a
                 + truth.b1 * rbar + truth.b2 * sigma2 + zeta)
            e = np.exp(l)
            s = 1.0 / (1.0 + e.sum())
            a_new = s * e

            eps = rng.normal(0.0, truth.sent_sd, (2, J))
            eta = rng.normal(0.0, 0.2, 2)
            new_p = (truth.sent_r[0] * rbar + truth.sent_var[0] * sigma2 + truth.sent_own[0] * phi_p
                     + truth.sent_cross[0] * phi_m + eta[0] + eps[0])
            new_m = (truth.sent_r[1] * rbar + truth.sent_var[1] * sigma2 + truth.sent_cross[1] * phi_p
                     + truth.sent_own[1] * phi_m + eta[1] + eps[1])
            phi_new = (np.exp(new_p) - np.exp(new_m)) / (1 + np.exp(new_p) + np.exp(new_m))

            A_new = a_new * truth.authors
            d_omega = phi / q * (A_new - A)
            d_chi = A / q * (phi_new - phi)
            d_omega_s = np.abs(phi) / q * (A_new - A)
            d_chi_s = A / q * (np.abs(phi_new) - np.abs(phi))

            shock = truth.endog * (zeta / truth.zeta_sd + eps[0] / truth.sent_sd) / np.sqrt(2)
            week_r, week_v = rng.normal(0.0, 0.005), rng.normal(0.0, 0.01)
            u_r = truth.ret_sd * (shock + np.sqrt(1 - truth.endog**2) * rng.normal(size=J))
            u_v = truth.vol_sd * (shock + np.sqrt(1 - truth.endog**2) * rng.normal(size=J))
            d_rbar = truth.omega_r * d_omega + truth.chi_r * d_chi + week_r + u_r
            d_vol = truth.omega_v * d_omega_s + truth.chi_v * d_chi_s + week_v + u_v

            rbar = rbar + d_rbar
            volume = volume * (1.0 + d_vol)
            a, A, phi, phi_p, phi_m = a_new, A_new, phi_new, new_p, new_m
            sigma2 = rng.gamma(2.0, 0.025, J)
            q = q_base * np.exp(rng.normal(0.0, 0.02, J))
            ps = [phi_p, phi_m]
        denom = 1 + np.exp(ps[0]) + np.exp(ps[1])
        p_bull, p_bear = np.exp(ps[0]) / denom, np.exp(ps[1]) / denom
        for j in range(J):
            rows.append({
                "ticker": f"T{j:03d}", "week": weeks[t], "A": A[j], "a": a[j], "s": s,
                "V_bench": s * truth.authors, "n_subs": 0, "phi": phi[j],
                "p_bull": p_bull[j], "p_bear": p_bear[j], "p_neutral": 1.0 / denom[j],
                "rbar": rbar[j], "sigma2": sigma2[j], "volume": volume[j], "mcap": q[j],
            })
    return pd.DataFrame(rows, columns=list(WEEKLY_COLUMNS))
