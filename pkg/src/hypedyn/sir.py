"""Contagion of asset interest as a susceptible-active-recovered (SIR) system.

    dV/dt = -c A V,    dA/dt = c A V - r A,    dB/dt = r A

Compartments are real-valued. ``c`` is a per-person contact-transmission
rate and ``r`` the inverse of the mean active period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

DEFAULT_DT = 0.01
# Headline contagion rate quoted alongside tau = 1.1% and gamma = 1.2e-4 %,
# whose product is about 1.3e-8; kept for reference only.
REPORTED_CONTAGION_RATE = 9.8e-7


def _check(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SirParams:
    c: float
    r: float
    N: float

    def __post_init__(self):
        if _check("c", self.c) < 0:
            raise ValidationError("contagion rate c must be non-negative")
        if _check("r", self.r) <= 0:
            raise ValidationError("recovery rate r must be positive")
        if _check("N", self.N) <= 0:
            raise ValidationError("population N must be positive")


@dataclass(frozen=True)
class SirState:
    V: float
    A: float
    B: float

    def __post_init__(self):
        for name in ("V", "A", "B"):
            if _check(name, getattr(self, name)) < 0:
                raise ValidationError(f"compartment {name} must be non-negative")

    @property
    def total(self) -> float:
        return self.V + self.A + self.B


@dataclass(frozen=True)
class SirSeries:
    t: np.ndarray
    V: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final(self) -> SirState:
        return SirState(float(self.V[-1]), float(self.A[-1]), float(self.B[-1]))


def integrate(
    params: SirParams,
    init: SirState,
    dt: float = DEFAULT_DT,
    horizon: float = 100.0,
) -> SirSeries:
    """Fixed-step RK4 integration from ``t = 0`` to ``horizon``.

    The number of steps is ``round(horizon / dt)``. Raises
    :class:`NumericalError` if the step drives a compartment below
    ``-1e-12 N`` or breaks conservation by more than ``1e-9 N``.
    """
    N = params.N
    if abs(init.total - N) > 1e-9 * N:
        raise ValidationError(f"V + A + B = {init.total} does not equal N = {N}")
    dt, horizon = _check("dt", dt), _check("horizon", horizon)
    if dt <= 0 or horizon < dt:
        raise ValidationError("need dt > 0 and horizon >= dt")
    n = int(round(horizon / dt))
    c, r = params.c, params.r
    V = np.empty(n + 1)
    A = np.empty(n + 1)
    B = np.empty(n + 1)
    v, a, b = float(init.V), float(init.A), float(init.B)
    V[0], A[0], B[0] = v, a, b
    floor = -1e-12 * N
    drift_tol = 1e-9 * N
    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(n):
        i1 = c * a * v
        dv1, da1 = -i1, i1 - r * a
        v2, a2 = v + h2 * dv1, a + h2 * da1
        i2 = c * a2 * v2
        dv2, da2 = -i2, i2 - r * a2
        v3, a3 = v + h2 * dv2, a + h2 * da2
        i3 = c * a3 * v3
        dv3, da3 = -i3, i3 - r * a3
        v4, a4 = v + dt * dv3, a + dt * da3
        i4 = c * a4 * v4
        dv4, da4 = -i4, i4 - r * a4
        dv = h6 * (dv1 + 2 * dv2 + 2 * dv3 + dv4)
        da = h6 * (da1 + 2 * da2 + 2 * da3 + da4)
        # dB is minus the other two increments, so the total is conserved
        v, a, b = v + dv, a + da, b - dv - da
        if v < floor or a < floor or b < floor:
            raise NumericalError(f"step dt={dt} drives a compartment negative at t={(k + 1) * dt}")
        if abs(v + a + b - N) > drift_tol:
            raise NumericalError(f"conservation violated at t={(k + 1) * dt}")
        V[k + 1], A[k + 1], B[k + 1] = v, a, b
    return SirSeries(np.arange(n + 1) * dt, V, A, B)


def derive_rates(tau: float, gamma_c: float, infectious_period: float) -> tuple[float, float]:
    """``c = tau * gamma_c`` and ``r = 1 / infectious_period``."""
    tau, gamma_c = _check("tau", tau), _check("gamma_c", gamma_c)
    period = _check("infectious_period", infectious_period)
    if not 0.0 <= tau <= 1.0:
        raise ValidationError("transmissibility tau must lie in [0, 1]")
    if gamma_c < 0:
        raise ValidationError("contact rate must be non-negative")
    if period <= 0:
        raise ValidationError("infectious period must be positive")
    return tau * gamma_c, 1.0 / period


def outbreak_threshold(params: SirParams, V0: float) -> tuple[float, bool]:
    """Basic reproduction number ``c V0 / r`` and whether it exceeds one."""
    V0 = _check("V0", V0)
    if not 0 <= V0 <= params.N:
        raise ValidationError("V0 must lie in [0, N]")
    r0 = params.c * V0 / params.r
    return r0, r0 > 1.0


@dataclass(frozen=True)
class FinalSize:
    value: float
    below_threshold: bool


def final_size(params: SirParams, I0: float) -> FinalSize:
    """Total ever-active count solving ``c/r = log((N - I0) / (N - R)) / R``.

    Starting from ``V0 = N - I0``, ``A0 = I0``, ``B0 = 0``. The left side
    minus the right is negative at ``R = I0`` and diverges at ``R = N``,
    so a root always exists in ``(I0, N)``; it is found by bisection to
    ``1e-9 N``. ``below_threshold`` flags ``c (N - I0) / r <= 1``, where
    no outbreak takes off and the root only reflects the decay of ``I0``.
    """
    N = params.N
    I0 = _check("I0", I0)
    if not 0 < I0 < N:
        raise ValidationError("need 0 < I0 < N")
    k = params.c / params.r
    below = k * (N - I0) <= 1.0
    if k == 0.0:
        return FinalSize(I0, True)
    log_v0 = math.log(N - I0)

    def f(R: float) -> float:
        return log_v0 - math.log(N - R) - k * R

    lo, hi = I0, N  # f(hi) is treated as +inf
    tol = 1e-9 * N
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return FinalSize(0.5 * (lo + hi), below)


def required_ratio(N: float, I0: float, R_inf: float) -> float:
    """Contagion-to-recovery ratio ``c/r`` implied by a final size ``R_inf``."""
    N, I0, R_inf = _check("N", N), _check("I0", I0), _check("R_inf", R_inf)
    if not 0 < I0 < R_inf < N:
        raise ValidationError("need 0 < I0 < R_inf < N")
    return math.log((N - I0) / (N - R_inf)) / R_inf


def forecast_interest(
    params: SirParams,
    A0: float,
    N0: float,
    horizon: float,
    dt: float = DEFAULT_DT,
) -> tuple[np.ndarray, np.ndarray]:
    """Active share ``A(t) / N0`` from ``V0 = N0 - A0``, ``B0 = 0``.

    ``params.N`` is replaced by ``N0``. Returns ``(t, share)``.
    """
    A0, N0 = _check("A0", A0), _check("N0", N0)
    if not 0 <= A0 <= N0:
        raise ValidationError("need 0 <= A0 <= N0")
    p = SirParams(params.c, params.r, N0)
    series = integrate(p, SirState(N0 - A0, A0, 0.0), dt=dt, horizon=horizon)
    return series.t, series.A / N0
