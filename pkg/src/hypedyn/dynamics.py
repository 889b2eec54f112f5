"""Sentiment-return map of socially driven investors.

The aggregate buying intensity ``phi`` follows a hyperbolic-tangent
response to the previous period's sentiment and return, and the return
is the capacity-weighted change in buying intensity::

    phi[t+1] = tanh((beta * r[t] + alpha * phi[t]) / lam)
    r[t+1]   = C * (phi[t+1] - phi[t]) + noise[t+1]

Everything here is a pure function of its inputs plus an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

from .errors import ValidationError

EULER_GAMMA = 0.5772156649015329


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the sentiment-return system.

    ``lam`` is the decision-noise scale (``lambda`` is a keyword).
    ``gamma`` cancels out of the aggregate map but is kept so that the
    agent-level utilities can be simulated as written.
    """

    alpha: float
    beta: float = 1.0
    gamma: float = 0.0
    lam: float = 1.0
    capacity: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "capacity"):
            value = _finite(name, getattr(self, name))
            if value < 0:
                raise ValidationError(f"{name} must be non-negative, got {value}")
        lam = _finite("lam", self.lam)
        if lam <= 0:
            raise ValidationError(f"lam must be positive, got {lam}")

    @classmethod
    def from_market(cls, alpha, beta, cap: "CapacityInputs", gamma=0.0, lam=1.0):
        return cls(alpha=alpha, beta=beta, gamma=gamma, lam=lam, capacity=cap.capacity)

    def normalized(self) -> "ModelParams":
        """Equivalent parameters with ``lam`` rescaled to one."""
        return replace(self, alpha=self.alpha / self.lam, beta=self.beta / self.lam, lam=1.0)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class MarketState:
    phi: float
    ret: float

    def __post_init__(self):
        phi = _finite("phi", self.phi)
        _finite("ret", self.ret)
        if not -1.0 <= phi <= 1.0:
            raise ValidationError(f"phi must lie in [-1, 1], got {phi}")


@dataclass(frozen=True)
class CapacityInputs:
    """Per-investor capital ``M``, investor count ``N``, price ``p``, shares ``Q``."""

    M: float
    N: float
    p: float
    Q: float

    def __post_init__(self):
        for name in ("M", "N", "p", "Q"):
            value = _finite(name, getattr(self, name))
            if value <= 0:
                raise ValidationError(f"{name} must be strictly positive, got {value}")

    @property
    def capacity(self) -> float:
        return self.M * self.N / (self.p * self.Q)


@dataclass(frozen=True)
class GumbelFit:
    location: float
    scale: float


def signal(params: ModelParams, state: MarketState) -> float:
    """Noise-scaled utility signal ``(beta * r + alpha * phi) / lam``."""
    return (params.beta * state.ret + params.alpha * state.phi) / params.lam


def aggregate_sentiment(params: ModelParams, state: MarketState) -> float:
    """Next-period aggregate buying intensity ``tanh((beta r + alpha phi) / lam)``."""
    return math.tanh(signal(params, state))


def bullish_probability(params: ModelParams, state: MarketState) -> float:
    """Probability that one investor buys.

    Defined as ``exp(2x) / (exp(2x) + 1)`` with ``x`` the scaled signal, so
    that ``2p - 1`` is exactly the aggregate tanh map.
    """
    return float(expit(2.0 * signal(params, state)))


def step(params: ModelParams, state: MarketState, noise: float = 0.0) -> MarketState:
    """Advance one period; ``noise`` is added to the return only."""
    noise = _finite("noise", noise)
    phi_next = aggregate_sentiment(params, state)
    ret_next = params.capacity * (phi_next - state.phi) + noise
    return MarketState(phi_next, ret_next)


@dataclass(frozen=True)
class Trajectory:
    """States ``0..steps`` of one simulated path."""

    phi: np.ndarray
    ret: np.ndarray

    def __len__(self) -> int:
        return len(self.phi)

    def __getitem__(self, i) -> MarketState:
        return MarketState(float(self.phi[i]), float(self.ret[i]))

    def __iter__(self) -> Iterator[MarketState]:
        for i in range(len(self)):
            yield self[i]

    @property
    def final(self) -> MarketState:
        return self[-1]


def simulate(
    params: ModelParams,
    init: MarketState,
    steps: int,
    noise_std: float = 0.0,
    seed: int | None = 0,
) -> Trajectory:
    """Iterate the map ``steps`` times from ``init``.

    Return noise is i.i.d. Normal(0, noise_std**2), drawn from
    ``numpy.random.default_rng(seed)``; identical arguments reproduce the
    trajectory bit for bit.
    """
    if steps < 0:
        raise ValidationError("steps must be non-negative")
    noise_std = _finite("noise_std", noise_std)
    if noise_std < 0:
        raise ValidationError("noise_std must be non-negative")
    phi = np.empty(steps + 1)
    ret = np.empty(steps + 1)
    phi[0], ret[0] = init.phi, init.ret
    if noise_std > 0:
        noise = np.random.default_rng(seed).normal(0.0, noise_std, size=steps)
    else:
        noise = np.zeros(steps)

    a, b, lam, cap = params.alpha, params.beta, params.lam, params.capacity
    p, r = float(init.phi), float(init.ret)
    for t in range(steps):
        p_next = math.tanh((b * r + a * p) / lam)
        r = cap * (p_next - p) + float(noise[t])
        p = p_next
        phi[t + 1], ret[t + 1] = p, r
    return Trajectory(phi, ret)


def simulate_agents(
    params: ModelParams,
    state: MarketState,
    n_agents: int,
    seed: int | None = 0,
) -> float:
    """Monte Carlo mean of individual buy (+1) / sell (-1) decisions.

    Each agent compares the random utilities

        U(+1) = e+ + alpha*phi + beta*r - gamma*r**2
        U(-1) = e- - alpha*phi - beta*r - gamma*r**2

    with i.i.d. Gumbel errors of scale ``lam`` and picks the larger one.
    The difference of two such errors is logistic with scale ``lam``, so
    the mean converges to ``tanh((beta r + alpha phi) / lam)``.
    """
    if n_agents < 1:
        raise ValidationError("n_agents must be at least 1")
    rng = np.random.default_rng(seed)
    eps = rng.gumbel(0.0, params.lam, size=(2, int(n_agents)))
    drive = params.alpha * state.phi + params.beta * state.ret
    risk = params.gamma * state.ret**2
    u_buy = eps[0] + drive - risk
    u_sell = eps[1] - drive - risk
    decisions = np.where(u_buy > u_sell, 1.0, -1.0)
    return float(decisions.mean())


def price_return(cap: CapacityInputs, delta_phi: float) -> float:
    """Return implied by a change in buying intensity: ``M N / (p Q) * delta_phi``."""
    return cap.capacity * _finite("delta_phi", delta_phi)


def fit_gumbel(samples: Sequence[float]) -> GumbelFit:
    """Method-of-moments fit of a type-I extreme value (Gumbel) distribution.

    scale = s * sqrt(6) / pi, location = mean - scale * Euler-gamma.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ValidationError("fit_gumbel needs at least 10 samples")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise ValidationError("samples have zero variance; Gumbel fit is degenerate")
    scale = sd * math.sqrt(6.0) / math.pi
    return GumbelFit(location=float(np.mean(x)) - scale * EULER_GAMMA, scale=scale)
