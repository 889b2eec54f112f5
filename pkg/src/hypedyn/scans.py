"""Seeded ensemble scans: bifurcation diagrams and volatility against a parameter.

Each (grid value, run) pair gets its own generator whose seed is derived
from the base seed and the pair's indices in the sorted grid, so results
do not depend on evaluation order and parallel runs reproduce serial ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dynamics import ModelParams
from .errors import ValidationError

_MASK64 = (1 << 64) - 1
VARY_CHOICES = ("capacity", "alpha")


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finaliser on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def run_seed(base_seed: int, value_index: int, run_index: int) -> int:
    """Seed for one run: ``sm(sm(sm(base) ^ value_index) ^ run_index)``."""
    if value_index < 0 or run_index < 0:
        raise ValidationError("indices must be non-negative")
    h = splitmix64(int(base_seed) & _MASK64)
    h = splitmix64(h ^ value_index)
    return splitmix64(h ^ run_index)


@dataclass(frozen=True)
class ScanConfig:
    """One ensemble experiment.

    ``grid`` is stored sorted; seeds refer to positions in that order.
    """

    vary: str
    grid: tuple[float, ...]
    params: ModelParams
    n_init: int = 100
    iters: int = 1000
    burn_in: int = 50
    init_r_std: float = 0.5
    noise_std: float = 0.0
    base_seed: int = 0

    def __post_init__(self):
        if self.vary not in VARY_CHOICES:
            raise ValidationError(f"vary must be one of {VARY_CHOICES}, got {self.vary!r}")
        grid = tuple(sorted(float(v) for v in self.grid))
        if not grid:
            raise ValidationError("grid must be non-empty")
        if not all(math.isfinite(v) and v >= 0 for v in grid):
            raise ValidationError("grid values must be finite and non-negative")
        object.__setattr__(self, "grid", grid)
        if self.n_init < 1:
            raise ValidationError("n_init must be at least 1")
        if not self.iters > self.burn_in >= 0:
            raise ValidationError("need iters > burn_in >= 0")
        if not (math.isfinite(self.init_r_std) and self.init_r_std >= 0):
            raise ValidationError("init_r_std must be finite and non-negative")
        if not (math.isfinite(self.noise_std) and self.noise_std >= 0):
            raise ValidationError("noise_std must be finite and non-negative")

    def params_at(self, value: float) -> ModelParams:
        return replace(self.params, **{self.vary: float(value)})


@dataclass(frozen=True)
class ScanPoint:
    value: float
    run: int
    final_phi: float
    final_r: float
    std_r: float | None = None


def _iterate(params: ModelParams, r0: np.ndarray, noise: np.ndarray | None, iters: int):
    """Iterate all runs at once from ``phi = 0``; returns ``(phi_T, r_T, r_path)``."""
    a, b, lam, cap = params.alpha, params.beta, params.lam, params.capacity
    n = r0.shape[0]
    phi = np.zeros(n)
    r = r0.astype(float).copy()
    path = np.empty((iters + 1, n)) if noise is not None else None
    if path is not None:
        path[0] = r
    for t in range(iters):
        phi_next = np.tanh((b * r + a * phi) / lam)
        r = cap * (phi_next - phi)
        if noise is not None:
            r = r + noise[:, t]
            path[t + 1] = r
        phi = phi_next
    return phi, r, path


def _generators(config: ScanConfig, value_index: int):
    return [
        np.random.default_rng(run_seed(config.base_seed, value_index, k))
        for k in range(config.n_init)
    ]


def bifurcation_scan(config: ScanConfig) -> list[ScanPoint]:
    """Final states of ``n_init`` runs per grid value.

    Each run starts at ``phi = 0`` with ``r0 ~ Normal(0, init_r_std**2)``
    drawn from its own generator, then iterates ``iters`` times.
    """
    out: list[ScanPoint] = []
    for vi, value in enumerate(config.grid):
        params = config.params_at(value)
        rngs = _generators(config, vi)
        r0 = np.array([g.normal(0.0, config.init_r_std) for g in rngs])
        noise = None
        if config.noise_std > 0:
            noise = np.stack([g.normal(0.0, config.noise_std, config.iters) for g in rngs])
        phi, r, _ = _iterate(params, r0, noise, config.iters)
        out.extend(
            ScanPoint(value, k, float(phi[k]), float(r[k])) for k in range(config.n_init)
        )
    return out


def volatility_runs(config: ScanConfig) -> list[ScanPoint]:
    """Per-run return volatility: runs start at ``(0, 0)`` with return noise.

    ``std_r`` is the sample standard deviation (``ddof=1``) of
    ``r[burn_in + 1 : iters + 1]``, i.e. after discarding the first
    ``burn_in`` simulated returns.
    """
    if not config.noise_std > 0:
        raise ValidationError("volatility scans need noise_std > 0")
    out: list[ScanPoint] = []
    for vi, value in enumerate(config.grid):
        params = config.params_at(value)
        rngs = _generators(config, vi)
        noise = np.stack([g.normal(0.0, config.noise_std, config.iters) for g in rngs])
        phi, r, path = _iterate(params, np.zeros(config.n_init), noise, config.iters)
        std = path[config.burn_in + 1 :].std(axis=0, ddof=1)
        out.extend(
            ScanPoint(value, k, float(phi[k]), float(r[k]), float(std[k]))
            for k in range(config.n_init)
        )
    return out


def volatility_scan(config: ScanConfig) -> list[tuple[float, float]]:
    """Mean over runs of the per-run return volatility, one pair per grid value."""
    runs = volatility_runs(config)
    n = config.n_init
    return [
        (value, float(np.mean([p.std_r for p in runs[i * n : (i + 1) * n]])))
        for i, value in enumerate(config.grid)
    ]


def volatility_threshold(curve: Sequence[tuple[float, float]], factor: float = 10.0) -> float | None:
    """First grid value whose mean volatility exceeds ``factor`` times the first point's.

    The first point of ``curve`` is the baseline (normally ``C = 0``).
    Returns ``None`` when the curve never crosses.
    """
    if not curve:
        raise ValidationError("empty volatility curve")
    baseline = curve[0][1]
    for value, std in curve:
        if std > factor * baseline:
            return float(value)
    return None
