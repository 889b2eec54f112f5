import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypedyn.dynamics import (
    EULER_GAMMA,
    CapacityInputs,
    MarketState,
    ModelParams,
    aggregate_sentiment,
    bullish_probability,
    fit_gumbel,
    price_return,
    simulate,
    simulate_agents,
    step,
)
from hypedyn.errors import ValidationError

finite = st.floats(-5, 5, allow_nan=False)
nonneg = st.floats(0, 5, allow_nan=False)
lams = st.floats(0.05, 5, allow_nan=False)
phis = st.floats(-1, 1, allow_nan=False)


def tanh_fixed_point(a):
    """Reference fixed point of tanh(a x) = x on (0, 1) via scipy's brentq."""
    from scipy.optimize import brentq

    return brentq(lambda x: math.tanh(a * x) - x, 1e-9, 1.0, xtol=1e-15)


class TestParams:
    @pytest.mark.parametrize("field", ["alpha", "beta", "gamma", "capacity"])
    def test_negative_rejected(self, field):
        kw = {"alpha": 1.0, field: -0.1}
        with pytest.raises(ValidationError):
            ModelParams(**kw)

    @pytest.mark.parametrize("lam", [0.0, -1.0, math.inf, math.nan])
    def test_lambda_positive_finite(self, lam):
        with pytest.raises(ValidationError):
            ModelParams(alpha=1.0, lam=lam)

    def test_normalized_rescales(self):
        p = ModelParams(alpha=3.0, beta=2.0, lam=2.0, capacity=0.5).normalized()
        assert (p.alpha, p.beta, p.lam, p.capacity) == (1.5, 1.0, 1.0, 0.5)

    @pytest.mark.parametrize("phi", [1.0001, -1.5, math.nan])
    def test_state_range(self, phi):
        with pytest.raises(ValidationError):
            MarketState(phi, 0.0)

    def test_capacity_from_inputs(self):
        cap = CapacityInputs(M=2.0, N=3.0, p=4.0, Q=6.0)
        assert cap.capacity == pytest.approx(0.25)
        assert ModelParams.from_market(1.0, 1.0, cap).capacity == pytest.approx(0.25)


class TestAggregateSentiment:
    def test_origin(self):
        assert aggregate_sentiment(ModelParams(alpha=1.5), MarketState(0.0, 0.0)) == 0.0

    def test_fixed_point_near_0858(self):
        # the stated value 0.8580 is a 4-digit rounding of the true root 0.85856
        root = tanh_fixed_point(1.5)
        assert aggregate_sentiment(ModelParams(alpha=1.5), MarketState(root, 0.0)) == pytest.approx(root, abs=1e-12)
        assert aggregate_sentiment(ModelParams(alpha=1.5), MarketState(0.8580, 0.0)) == pytest.approx(
            math.tanh(1.5 * 0.8580), abs=1e-15
        )

    def test_zero_alpha(self):
        out = aggregate_sentiment(ModelParams(alpha=0.0), MarketState(0.5, 0.1))
        assert out == pytest.approx(0.09967, abs=1e-5)

    @given(a=nonneg, b=nonneg, lam=lams, phi=phis, r=finite)
    def test_range_and_odd_symmetry(self, a, b, lam, phi, r):
        p = ModelParams(alpha=a, beta=b, lam=lam)
        up = aggregate_sentiment(p, MarketState(phi, r))
        down = aggregate_sentiment(p, MarketState(-phi, -r))
        assert -1.0 <= up <= 1.0
        assert up == pytest.approx(-down, abs=1e-12)

    @pytest.mark.parametrize("r", [math.nan, math.inf])
    def test_non_finite_rejected(self, r):
        with pytest.raises(ValidationError):
            aggregate_sentiment(ModelParams(alpha=1.0), MarketState(0.0, r))


class TestStep:
    @given(a=nonneg, b=nonneg, c=nonneg)
    def test_origin_is_fixed(self, a, b, c):
        s = step(ModelParams(alpha=a, beta=b, capacity=c), MarketState(0.0, 0.0))
        assert (s.phi, s.ret) == (0.0, 0.0)

    def test_worked_step(self):
        s = step(ModelParams(alpha=0.7, capacity=2.0), MarketState(0.0, 0.5))
        assert s.phi == pytest.approx(0.46212, abs=1e-5)
        assert s.ret == pytest.approx(0.92424, abs=1e-5)

    @given(phi=phis, r=finite, a=nonneg)
    def test_zero_capacity_kills_return(self, phi, r, a):
        assert step(ModelParams(alpha=a, capacity=0.0), MarketState(phi, r)).ret == 0.0

    def test_noise_enters_return_only(self):
        p = ModelParams(alpha=0.7, capacity=2.0)
        base = step(p, MarketState(0.2, 0.1))
        noisy = step(p, MarketState(0.2, 0.1), noise=0.3)
        assert noisy.phi == base.phi
        assert noisy.ret == pytest.approx(base.ret + 0.3, abs=1e-15)


class TestBullishProbability:
    @pytest.mark.parametrize("x, expected", [(0.0, 0.5), (math.log(3) / 2, 0.75)])
    def test_values(self, x, expected):
        p = bullish_probability(ModelParams(alpha=1.0), MarketState(0.0, x))
        assert p == pytest.approx(expected, abs=1e-15)

    def test_consistent_with_tanh_map(self, rng):
        for _ in range(1000):
            params = ModelParams(alpha=rng.uniform(0, 3), beta=rng.uniform(0, 3), lam=rng.uniform(0.1, 3))
            state = MarketState(rng.uniform(-1, 1), rng.normal(0, 2))
            diff = 2 * bullish_probability(params, state) - 1 - aggregate_sentiment(params, state)
            assert abs(diff) < 1e-12


class TestSimulate:
    def test_zero_steps(self):
        traj = simulate(ModelParams(alpha=1.0), MarketState(0.3, 0.1), 0)
        assert len(traj) == 1 and traj.final == MarketState(0.3, 0.1)

    def test_stable_focus_decays(self):
        traj = simulate(ModelParams(alpha=0.7, capacity=0.3), MarketState(0.0, 0.5), 2000)
        assert abs(traj.final.ret) < 1e-6

    def test_matches_repeated_step(self):
        p = ModelParams(alpha=1.2, beta=0.8, lam=0.9, capacity=1.4)
        traj = simulate(p, MarketState(0.1, -0.2), 50)
        s = MarketState(0.1, -0.2)
        for t in range(1, 51):
            s = step(p, s)
            assert traj[t].phi == pytest.approx(s.phi, abs=1e-15)
            assert traj[t].ret == pytest.approx(s.ret, abs=1e-15)

    def test_seeded_bit_identical(self):
        p = ModelParams(alpha=0.7, capacity=0.5)
        a = simulate(p, MarketState(0.0, 0.0), 300, noise_std=1e-3, seed=11)
        b = simulate(p, MarketState(0.0, 0.0), 300, noise_std=1e-3, seed=11)
        c = simulate(p, MarketState(0.0, 0.0), 300, noise_std=1e-3, seed=12)
        assert a.phi.tobytes() == b.phi.tobytes() and a.ret.tobytes() == b.ret.tobytes()
        assert a.ret.tobytes() != c.ret.tobytes()

    def test_noise_has_requested_scale(self):
        p = ModelParams(alpha=0.0, capacity=0.0)
        traj = simulate(p, MarketState(0.0, 0.0), 20000, noise_std=0.01, seed=3)
        assert np.std(traj.ret[1:]) == pytest.approx(0.01, rel=0.03)

    @pytest.mark.parametrize("kw", [{"steps": -1}, {"steps": 5, "noise_std": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            simulate(ModelParams(alpha=1.0), MarketState(0.0, 0.0), **kw)


class TestSimulateAgents:
    def test_symmetric_state(self):
        assert abs(simulate_agents(ModelParams(alpha=1.0), MarketState(0.0, 0.0), 10**6, seed=1)) < 0.005

    def test_matches_tanh(self):
        p = ModelParams(alpha=1.0, beta=1.0)
        m = simulate_agents(p, MarketState(0.3, 0.2), 10**6, seed=2)
        assert m == pytest.approx(math.tanh(0.5), abs=0.005)

    @pytest.mark.parametrize("n", [10**4, 10**5, 10**6])
    def test_convergence_rate(self, n):
        p = ModelParams(alpha=0.8, beta=0.5, lam=0.7)
        s = MarketState(-0.4, 0.3)
        assert abs(simulate_agents(p, s, n, seed=n) - aggregate_sentiment(p, s)) <= 5 / math.sqrt(n)

    def test_gamma_invariance(self):
        s = MarketState(0.2, 0.7)
        vals = {simulate_agents(ModelParams(alpha=1.0, gamma=g), s, 10**5, seed=9) for g in (0.0, 1.0, 10.0)}
        assert len(vals) == 1

    def test_zero_agents(self):
        with pytest.raises(ValidationError):
            simulate_agents(ModelParams(alpha=1.0), MarketState(0.0, 0.0), 0)


class TestPriceReturn:
    @pytest.mark.parametrize(
        "inputs, dphi, expected",
        [
            ((1.0, 1.0, 1.0, 1.0), 0.0, 0.0),
            ((1.0, 1.0, 1.0, 1.0), 0.1, 0.1),
            ((10_000.0, 1.8e6, 1.5e9, 1.0), 1.0, 12.0),
        ],
    )
    def test_values(self, inputs, dphi, expected):
        assert price_return(CapacityInputs(*inputs), dphi) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("bad", [(1.0, 1.0, 0.0, 1.0), (1.0, 1.0, 1.0, -2.0)])
    def test_nonpositive_rejected(self, bad):
        with pytest.raises(ValidationError):
            CapacityInputs(*bad)


class TestFitGumbel:
    def test_roundtrip(self):
        x = np.random.default_rng(5).gumbel(-1.30, 2.21, 10**5)
        fit = fit_gumbel(x)
        assert fit.location == pytest.approx(-1.30, rel=0.02)
        assert fit.scale == pytest.approx(2.21, rel=0.02)

    def test_closed_form(self):
        x = np.arange(20.0)
        fit = fit_gumbel(x)
        scale = np.std(x, ddof=1) * math.sqrt(6) / math.pi
        assert fit.scale == pytest.approx(scale, rel=1e-14)
        assert fit.location == pytest.approx(x.mean() - EULER_GAMMA * scale, rel=1e-14)

    def test_constant_rejected(self):
        with pytest.raises(ValidationError):
            fit_gumbel(np.ones(50))

    def test_too_few(self):
        with pytest.raises(ValidationError):
            fit_gumbel(np.arange(5.0))

    @settings(max_examples=50)
    @given(shift=st.floats(-100, 100, allow_nan=False))
    def test_translation_equivariance(self, shift):
        x = np.random.default_rng(0).gumbel(0.0, 1.0, 200)
        a, b = fit_gumbel(x), fit_gumbel(x + shift)
        assert b.location - a.location == pytest.approx(shift, abs=1e-12)
        assert b.scale == pytest.approx(a.scale, abs=1e-12)
