"""Steady states, Jacobians, eigenvalue classes and stability regions.

The analysis runs on parameters normalised to ``lam = 1`` (``alpha`` and
``beta`` are divided by ``lam`` first), so only ``alpha`` and the product
``C * beta`` matter.

Region labels at the zero steady state:
    A unstable node, B unstable focus, C stable focus, D stable node, E saddle.
Region labels at the symmetric pair of non-zero steady states:
    F unstable node, G unstable focus, H stable focus, I stable node.

The complex pair leaving the unit circle at ``C * beta = 1`` is often
called a Hopf bifurcation; for a map it is a Neimark-Sacker crossing,
referred to here as a unit-modulus complex crossing.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .dynamics import MarketState, ModelParams
from .errors import BoundaryCaseError, NumericalError, ValidationError

ROOT_TOL = 1e-12
UNIT_CIRCLE_TOL = 1e-9
BIFURCATION_TOL = 1e-9


class SteadyStateKind(str, Enum):
    ZERO = "zero"
    POSITIVE = "positive"
    NEGATIVE = "negative"


class StabilityClass(str, Enum):
    STABLE_NODE = "stable node"
    STABLE_FOCUS = "stable focus"
    UNSTABLE_NODE = "unstable node"
    UNSTABLE_FOCUS = "unstable focus"
    SADDLE = "saddle"


ZERO_REGIONS = {
    StabilityClass.UNSTABLE_NODE: "A",
    StabilityClass.UNSTABLE_FOCUS: "B",
    StabilityClass.STABLE_FOCUS: "C",
    StabilityClass.STABLE_NODE: "D",
    StabilityClass.SADDLE: "E",
}
NONZERO_REGIONS = {
    StabilityClass.UNSTABLE_NODE: "F",
    StabilityClass.UNSTABLE_FOCUS: "G",
    StabilityClass.STABLE_FOCUS: "H",
    StabilityClass.STABLE_NODE: "I",
}


@dataclass(frozen=True)
class SteadyState:
    phi: float
    kind: SteadyStateKind
    ret: float = 0.0

    def as_state(self) -> MarketState:
        return MarketState(self.phi, self.ret)


@dataclass(frozen=True)
class Jacobian2x2:
    a11: float
    a12: float
    a21: float
    a22: float

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])


@dataclass(frozen=True)
class EigenPair:
    x1: complex
    x2: complex

    @property
    def is_complex(self) -> bool:
        return self.x1.imag != 0.0 or self.x2.imag != 0.0

    @property
    def moduli(self) -> tuple[float, float]:
        return abs(self.x1), abs(self.x2)

    @property
    def spectral_radius(self) -> float:
        return max(self.moduli)


@dataclass(frozen=True)
class StabilityReport:
    """Everything the stability analysis says about one parameter point."""

    params: ModelParams
    steady_states: list[SteadyState]
    jacobians: list[Jacobian2x2]
    eigenvalues: list[EigenPair]
    classes: list[StabilityClass | None]
    zero_region: str | None
    nonzero_region: str | None
    at_bifurcation: bool


def _bisect(f, lo: float, hi: float, tol: float = ROOT_TOL, max_iter: int = 200) -> float:
    f_lo = f(lo)
    if f_lo == 0.0:
        return lo
    mid = lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0 or mid in (lo, hi):
            break
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    if abs(f(mid)) >= tol:
        raise NumericalError(f"bisection did not reach |f| < {tol:g}")
    return mid


def at_bifurcation(params: ModelParams, tol: float = BIFURCATION_TOL) -> bool:
    """True when ``alpha / lam`` lies within ``tol`` of the pitchfork point 1."""
    return abs(params.alpha / params.lam - 1.0) <= tol


def positive_root(ratio: float) -> float:
    """Positive solution of ``tanh(ratio * phi) = phi`` for ``ratio > 1``."""
    if ratio <= 1.0:
        raise ValidationError("a positive root exists only for alpha/lam > 1")
    return _bisect(lambda p: math.tanh(ratio * p) - p, 1e-9, 1.0)


def steady_states(params: ModelParams, tol: float = BIFURCATION_TOL) -> list[SteadyState]:
    """Steady states ``(phi, 0)`` of the map.

    One state at the origin for ``alpha/lam <= 1`` (the tangency at exactly
    one, and anything within ``tol`` of it, counts as the single-root side);
    otherwise the origin plus the symmetric pair ``+-phi+``.
    """
    ratio = params.alpha / params.lam
    states = [SteadyState(0.0, SteadyStateKind.ZERO)]
    if ratio > 1.0 + tol:
        root = positive_root(ratio)
        states.append(SteadyState(root, SteadyStateKind.POSITIVE))
        states.append(SteadyState(-root, SteadyStateKind.NEGATIVE))
    return states


def _sech2(x: float) -> float:
    return 1.0 / math.cosh(x) ** 2


def jacobian_at(params: ModelParams, s: SteadyState, tol: float = 1e-10) -> Jacobian2x2:
    """Jacobian of the map at steady state ``s`` (with ``lam`` normalised to one)."""
    p = params.normalized()
    residual = abs(math.tanh(p.alpha * s.phi) - s.phi)
    if s.ret != 0.0 or residual >= tol:
        raise ValidationError(
            f"({s.phi}, {s.ret}) is not a steady state (residual {residual:.3g})"
        )
    w = _sech2(p.alpha * s.phi)
    a, b, c = p.alpha, p.beta, p.capacity
    return Jacobian2x2(a * w, b * w, c * (a * w - 1.0), c * b * w)


def eigenvalues(j: Jacobian2x2) -> EigenPair:
    """Both roots of ``x**2 - trace x + det``; ``x1`` is the larger when real."""
    values = (j.a11, j.a12, j.a21, j.a22)
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("Jacobian entries must be finite")
    tr, det = j.trace, j.det
    disc = tr * tr - 4.0 * det
    if disc >= 0:
        root = math.sqrt(disc)
        return EigenPair(complex(0.5 * (tr + root)), complex(0.5 * (tr - root)))
    half_im = 0.5 * math.sqrt(-disc)
    return EigenPair(complex(0.5 * tr, half_im), complex(0.5 * tr, -half_im))


def closed_form_eigenvalues(params: ModelParams, s: SteadyState) -> EigenPair:
    """Eigenvalues written out directly in terms of ``alpha``, ``C beta`` and sech^2.

    Kept separate from :func:`eigenvalues` so the two routes can be checked
    against each other.
    """
    p = params.normalized()
    cb = p.capacity * p.beta
    w = 1.0 if s.kind is SteadyStateKind.ZERO else _sech2(p.alpha * s.phi)
    root = cmath.sqrt(w * w * (cb + p.alpha) ** 2 - 4.0 * cb * w)
    return EigenPair(0.5 * (w * (cb + p.alpha) + root), 0.5 * (w * (cb + p.alpha) - root))


def classify(
    e: EigenPair,
    tol: float = UNIT_CIRCLE_TOL,
    on_boundary: str = "raise",
) -> StabilityClass:
    """Stability class of a 2-D map's fixed point from its eigenvalues.

    A modulus within ``tol`` of one raises :class:`BoundaryCaseError` by
    default; ``on_boundary="unstable"`` counts it as outside the circle.
    """
    moduli = e.moduli
    if any(abs(m - 1.0) <= tol for m in moduli):
        if on_boundary == "raise":
            raise BoundaryCaseError(f"eigenvalue modulus on the unit circle: {moduli}", moduli)
        if on_boundary != "unstable":
            raise ValidationError(f"unknown on_boundary policy {on_boundary!r}")
    outside = [m > 1.0 - tol for m in moduli]
    if all(outside):
        return StabilityClass.UNSTABLE_FOCUS if e.is_complex else StabilityClass.UNSTABLE_NODE
    if not any(outside):
        return StabilityClass.STABLE_FOCUS if e.is_complex else StabilityClass.STABLE_NODE
    return StabilityClass.SADDLE


def region_label(
    params: ModelParams,
    tol: float = UNIT_CIRCLE_TOL,
    on_boundary: str = "raise",
) -> tuple[str, str | None]:
    """Region letter at the origin and (when it exists) at the non-zero pair."""
    states = steady_states(params)
    labels = []
    for s in states:
        cls = classify(eigenvalues(jacobian_at(params, s)), tol, on_boundary)
        table = ZERO_REGIONS if s.kind is SteadyStateKind.ZERO else NONZERO_REGIONS
        if cls not in table:
            raise NumericalError(f"{cls.value} is not a possible class at a {s.kind.value} state")
        labels.append(table[cls])
    if len(labels) == 3 and labels[1] != labels[2]:
        raise NumericalError("non-zero steady states received different labels")
    return labels[0], (labels[1] if len(labels) == 3 else None)


def analyze(params: ModelParams, on_boundary: str = "unstable") -> StabilityReport:
    states = steady_states(params)
    jacs = [jacobian_at(params, s) for s in states]
    eigs = [eigenvalues(j) for j in jacs]
    classes = []
    for e in eigs:
        try:
            classes.append(classify(e, on_boundary=on_boundary))
        except BoundaryCaseError:
            classes.append(None)
    try:
        zero, nonzero = region_label(params, on_boundary=on_boundary)
    except BoundaryCaseError:
        zero = nonzero = None
    return StabilityReport(
        params=params,
        steady_states=states,
        jacobians=jacs,
        eigenvalues=eigs,
        classes=classes,
        zero_region=zero,
        nonzero_region=nonzero,
        at_bifurcation=at_bifurcation(params),
    )


@dataclass(frozen=True)
class BoundaryPoint:
    alpha: float
    cbeta: float
    state: str  # "zero" or "nonzero"
    kind: str  # "discriminant", "unit_modulus_complex", "unit_modulus_real"


def _moduli(alpha: float, cbeta: np.ndarray, w: float):
    tr = w * (cbeta + alpha)
    det = w * cbeta
    disc = tr * tr - 4.0 * det
    root = np.sqrt(np.abs(disc))
    real = disc >= 0
    big = np.where(real, np.abs(0.5 * (tr + root)), np.sqrt(np.abs(det)))
    small = np.where(real, np.abs(0.5 * (tr - root)), np.sqrt(np.abs(det)))
    return disc, big, small


def _sign_changes(values: np.ndarray, eps: float = 1e-12):
    """Index pairs (i, j) of consecutive non-negligible samples with opposite sign."""
    idx = np.nonzero(np.abs(values) > eps)[0]
    signs = np.sign(values[idx])
    flips = np.nonzero(signs[:-1] != signs[1:])[0]
    return [(int(idx[k]), int(idx[k + 1])) for k in flips]


def trace_region_boundaries(
    alpha_grid: Sequence[float],
    cbeta_max: float,
    n_scan: int = 4001,
    tol: float = 1e-10,
) -> list[BoundaryPoint]:
    """Points ``(alpha, C beta)`` where the eigenvalue class switches.

    Three kinds of boundary are traced for the origin and, when
    ``alpha > 1``, for the non-zero pair (whose Jacobian carries the factor
    ``w = sech^2(alpha phi+)``):

    * ``discriminant``: real/complex switch, ``w (C beta + alpha)^2 = 4 C beta``;
    * ``unit_modulus_complex``: a complex pair crosses the unit circle, where
      the squared modulus equals the determinant ``w C beta = 1``;
    * ``unit_modulus_real``: a real eigenvalue crosses +-1, located by
      scanning ``[0, cbeta_max]`` and refining each crossing by bisection
      to ``tol``.

    A curve with no crossing in range is absent for that alpha.
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if alphas.ndim != 1 or np.any(alphas < 0) or np.any(np.diff(alphas) < 0):
        raise ValidationError("alpha_grid must be sorted and non-negative")
    if cbeta_max <= 0:
        raise ValidationError("cbeta_max must be positive")
    grid = np.linspace(0.0, cbeta_max, n_scan)
    out: list[BoundaryPoint] = []
    for alpha in alphas:
        alpha = float(alpha)
        weights = [("zero", 1.0)]
        if alpha > 1.0 + BIFURCATION_TOL:
            weights.append(("nonzero", _sech2(alpha * positive_root(alpha))))
        for state, w in weights:
            found = []
            wa = w * alpha
            if wa <= 1.0:
                half = 2.0 * math.sqrt(1.0 - wa)
                for x in sorted({(2.0 - wa - half) / w, (2.0 - wa + half) / w}):
                    if 0.0 <= x <= cbeta_max:
                        found.append((x, "discriminant"))
            x = 1.0 / w
            if x <= cbeta_max and _moduli(alpha, np.array([x]), w)[0][0] < 0:
                found.append((x, "unit_modulus_complex"))

            disc, big, small = _moduli(alpha, grid, w)
            for which in (1, 2):
                values = (big if which == 1 else small) - 1.0
                for i, j in _sign_changes(values):
                    if disc[i] < 0 or disc[j] < 0:
                        continue  # complex crossings are handled in closed form
                    lo, hi = grid[i], grid[j]
                    f = lambda v: float(_moduli(alpha, np.array([v]), w)[which][0]) - 1.0
                    f_lo = f(lo)
                    while hi - lo > tol:
                        mid = 0.5 * (lo + hi)
                        if (f(mid) > 0) == (f_lo > 0):
                            lo = mid
                        else:
                            hi = mid
                    found.append((0.5 * (lo + hi), "unit_modulus_real"))
            out.extend(BoundaryPoint(alpha, float(x), state, kind) for x, kind in found)
    return sorted(out, key=lambda p: (p.state, p.alpha, p.cbeta, p.kind))


def region_map(
    alphas: Sequence[float],
    cbetas: Sequence[float],
    beta: float = 1.0,
    on_boundary: str = "unstable",
) -> list[tuple[float, float, str | None, str | None]]:
    """Region labels on an ``alpha x C beta`` grid (``lam = 1``, ``C = cbeta / beta``)."""
    rows = []
    for a in alphas:
        for cb in cbetas:
            params = ModelParams(alpha=float(a), beta=beta, capacity=float(cb) / beta)
            zero, nonzero = region_label(params, on_boundary=on_boundary)
            rows.append((float(a), float(cb), zero, nonzero))
    return rows


def vector_field(params: ModelParams, r, phi):
    """Continualised field ``F(x) - x`` of the map, returned as ``(dr, dphi)``."""
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    phi_next = np.tanh((params.beta * r + params.alpha * phi) / params.lam)
    r_next = params.capacity * (phi_next - phi)
    return r_next - r, phi_next - phi


def _rk4(params: ModelParams, r0: float, phi0: float, steps: int, h: float) -> np.ndarray:
    path = np.empty((steps + 1, 2))
    x = np.array([r0, phi0], dtype=float)
    path[0] = x

    def f(v):
        dr, dp = vector_field(params, v[0], v[1])
        return np.array([float(dr), float(dp)])

    for k in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        path[k + 1] = x
    return path


@dataclass(frozen=True)
class PhasePortrait:
    r: np.ndarray
    phi: np.ndarray
    dr: np.ndarray
    dphi: np.ndarray
    trajectories: list[np.ndarray]  # each (steps + 1, 2) with columns (r, phi)


def phase_portrait(
    params: ModelParams,
    bbox: tuple[float, float, float, float],
    grid_n: int,
    trajectory_starts: Sequence[MarketState] = (),
    steps: int = 200,
    h: float = 0.05,
) -> PhasePortrait:
    """Vector field samples on a grid plus RK4 trajectories of the continualised flow.

    ``bbox`` is ``(r_min, r_max, phi_min, phi_max)``.
    """
    r_min, r_max, p_min, p_max = map(float, bbox)
    if not (r_max > r_min and p_max > p_min):
        raise ValidationError("bbox must be non-degenerate")
    if grid_n < 2:
        raise ValidationError("grid_n must be at least 2")
    rr, pp = np.meshgrid(np.linspace(r_min, r_max, grid_n), np.linspace(p_min, p_max, grid_n))
    dr, dp = vector_field(params, rr, pp)
    paths = [_rk4(params, s.ret, s.phi, steps, h) for s in trajectory_starts]
    return PhasePortrait(rr.ravel(), pp.ravel(), dr.ravel(), dp.ravel(), paths)
