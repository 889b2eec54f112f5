import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from hypedyn.dynamics import MarketState, ModelParams, simulate
from hypedyn.errors import BoundaryCaseError, ValidationError
from hypedyn.stability import (
    EigenPair,
    Jacobian2x2,
    StabilityClass,
    SteadyState,
    SteadyStateKind,
    analyze,
    at_bifurcation,
    classify,
    closed_form_eigenvalues,
    eigenvalues,
    jacobian_at,
    phase_portrait,
    region_label,
    region_map,
    steady_states,
    trace_region_boundaries,
    vector_field,
)


def sech2(x):
    return 1.0 / math.cosh(x) ** 2


def random_params(rng, alpha_hi=3.0):
    return ModelParams(alpha=rng.uniform(0.0, alpha_hi), beta=rng.uniform(0.01, 3.0),
                       capacity=rng.uniform(0.0, 4.0))


class TestSteadyStates:
    @pytest.mark.parametrize("alpha, count", [(0.5, 1), (0.7, 1), (1.0, 1), (1.0 + 5e-10, 1), (1.1, 3), (2.0, 3)])
    def test_count(self, alpha, count):
        assert len(steady_states(ModelParams(alpha=alpha))) == count

    def test_positive_root_matches_oracle(self):
        states = steady_states(ModelParams(alpha=1.5))
        oracle = brentq(lambda x: math.tanh(1.5 * x) - x, 1e-9, 1.0, xtol=1e-15)
        assert states[1].phi == pytest.approx(oracle, abs=1e-12)
        assert states[1].phi == pytest.approx(0.8586, abs=1e-4)
        assert states[2].phi == -states[1].phi
        assert [s.kind for s in states] == [SteadyStateKind.ZERO, SteadyStateKind.POSITIVE, SteadyStateKind.NEGATIVE]

    def test_lambda_rescaling(self):
        a = steady_states(ModelParams(alpha=3.0, lam=2.0))
        b = steady_states(ModelParams(alpha=1.5))
        assert [s.phi for s in a] == pytest.approx([s.phi for s in b], abs=1e-13)

    @settings(max_examples=200)
    @given(alpha=st.floats(0, 10), lam=st.floats(0.1, 5))
    def test_root_residual(self, alpha, lam):
        for s in steady_states(ModelParams(alpha=alpha, lam=lam)):
            assert s.ret == 0.0
            assert abs(math.tanh(alpha * s.phi / lam) - s.phi) < 1e-12

    def test_bifurcation_band(self):
        assert at_bifurcation(ModelParams(alpha=1.0))
        assert at_bifurcation(ModelParams(alpha=2.0, lam=2.0 + 1e-9))
        assert not at_bifurcation(ModelParams(alpha=1.01))


class TestJacobian:
    def test_worked_example(self):
        j = jacobian_at(ModelParams(alpha=0.7, capacity=2.5), SteadyState(0.0, SteadyStateKind.ZERO))
        assert j.as_array() == pytest.approx(np.array([[0.7, 1.0], [-0.75, 2.5]]), abs=1e-15)

    def test_nonzero_state_scaling(self):
        p = ModelParams(alpha=1.5, beta=1.0, capacity=2.0)
        s = steady_states(p)[1]
        w = sech2(1.5 * s.phi)
        j = jacobian_at(p, s)
        assert j.as_array() == pytest.approx(np.array([[1.5 * w, w], [2.0 * (1.5 * w - 1), 2.0 * w]]), abs=1e-14)

    def test_identities_random(self, rng):
        for _ in range(1000):
            p = random_params(rng)
            cb = p.capacity * p.beta
            for s in steady_states(p):
                j = jacobian_at(p, s)
                w = sech2(p.alpha * s.phi)
                assert j.det == pytest.approx(cb * w, abs=1e-10)
                assert j.trace == pytest.approx(w * (p.alpha + cb), abs=1e-10)

    def test_not_a_steady_state(self):
        with pytest.raises(ValidationError):
            jacobian_at(ModelParams(alpha=1.5), SteadyState(0.5, SteadyStateKind.POSITIVE))


class TestEigenvalues:
    def test_real_pair(self):
        e = eigenvalues(Jacobian2x2(0.7, 1.0, -0.75, 2.5))
        assert (e.x1.real, e.x2.real) == pytest.approx(((3.2 + math.sqrt(0.24)) / 2, (3.2 - math.sqrt(0.24)) / 2), abs=1e-12)
        assert (round(e.x1.real, 4), round(e.x2.real, 4)) == (1.8449, 1.3551)

    def test_complex_pair(self):
        e = eigenvalues(jacobian_at(ModelParams(alpha=0.7, capacity=0.3), SteadyState(0.0, SteadyStateKind.ZERO)))
        assert e.is_complex
        assert e.moduli == pytest.approx((math.sqrt(0.3), math.sqrt(0.3)), abs=1e-12)

    def test_zero_capacity(self):
        e = eigenvalues(jacobian_at(ModelParams(alpha=0.6, capacity=0.0), SteadyState(0.0, SteadyStateKind.ZERO)))
        assert sorted([e.x1.real, e.x2.real]) == pytest.approx([0.0, 0.6], abs=1e-15)

    def test_matches_numpy_and_closed_form(self, rng):
        for _ in range(1000):
            p = random_params(rng)
            for s in steady_states(p):
                j = jacobian_at(p, s)
                e = eigenvalues(j)
                ref = np.linalg.eigvals(j.as_array())
                got = sorted([e.x1, e.x2], key=lambda z: (z.real, z.imag))
                ref = sorted(ref, key=lambda z: (z.real, z.imag))
                assert np.allclose(got, ref, atol=1e-10)
                cf = closed_form_eigenvalues(p, s)
                assert sorted([cf.x1, cf.x2], key=lambda z: (z.real, z.imag)) == pytest.approx(got, abs=1e-10)

    def test_conjugate_or_real(self, rng):
        for _ in range(200):
            e = eigenvalues(Jacobian2x2(*rng.normal(size=4)))
            if e.is_complex:
                assert e.x1 == pytest.approx(e.x2.conjugate(), abs=1e-12)
            else:
                assert e.x1.imag == e.x2.imag == 0.0

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            eigenvalues(Jacobian2x2(math.nan, 0, 0, 0))


class TestClassify:
    @pytest.mark.parametrize(
        "pair, expected",
        [
            ((1.8449, 1.3551), StabilityClass.UNSTABLE_NODE),
            ((0.5, 0.2), StabilityClass.STABLE_NODE),
            ((1.136, 0.264), StabilityClass.SADDLE),
            ((complex(0.3, 0.4), complex(0.3, -0.4)), StabilityClass.STABLE_FOCUS),
            ((complex(0.9, 0.9), complex(0.9, -0.9)), StabilityClass.UNSTABLE_FOCUS),
        ],
    )
    def test_table(self, pair, expected):
        assert classify(EigenPair(complex(pair[0]), complex(pair[1]))) is expected

    def test_focus_modulus(self):
        z = cmath.rect(math.sqrt(0.3), 1.0)
        assert classify(EigenPair(z, z.conjugate())) is StabilityClass.STABLE_FOCUS

    def test_boundary_raises(self):
        with pytest.raises(BoundaryCaseError) as info:
            classify(EigenPair(complex(1.0 + 1e-12), complex(0.5)))
        assert info.value.moduli[0] == pytest.approx(1.0)

    def test_boundary_resolves_unstable(self):
        assert classify(EigenPair(complex(1.0), complex(0.5)), on_boundary="unstable") is StabilityClass.SADDLE
        assert classify(EigenPair(complex(1.0), complex(1.0)), on_boundary="unstable") is StabilityClass.UNSTABLE_NODE


class TestRegions:
    @pytest.mark.parametrize(
        "alpha, cbeta, zero, nonzero",
        [(0.7, 2.5, "A", None), (0.7, 0.3, "C", None), (0.7, 0.05, "D", None), (0.7, 1.2, "B", None)],
    )
    def test_zero_regions(self, alpha, cbeta, zero, nonzero):
        assert region_label(ModelParams(alpha=alpha, capacity=cbeta)) == (zero, nonzero)

    def test_saddle_with_nonzero_label(self):
        p = ModelParams(alpha=1.1, capacity=0.3)
        zero, nonzero = region_label(p)
        s = steady_states(p)[1]
        w = sech2(1.1 * s.phi)
        e = closed_form_eigenvalues(p, s)
        assert zero == "E"
        assert nonzero == ("H" if e.is_complex else "I")
        assert max(e.moduli) < 1 and w < 1

    def test_symmetric_pair_labels(self, rng):
        for _ in range(300):
            p = ModelParams(alpha=rng.uniform(1.01, 3), beta=rng.uniform(0.1, 2), capacity=rng.uniform(0, 4))
            rep = analyze(p)
            assert rep.classes[1] == rep.classes[2]

    def test_regions_e_only_above_one(self, rng):
        for _ in range(300):
            p = random_params(rng)
            zero, nonzero = region_label(p, on_boundary="unstable")
            assert (zero == "E") == (p.alpha > 1)
            assert (nonzero is not None) == (p.alpha > 1)

    def test_region_map_rows(self):
        rows = region_map([0.7, 1.5], [0.3, 2.5])
        assert rows[0] == (0.7, 0.3, "C", None)
        assert rows[1] == (0.7, 2.5, "A", None)
        assert rows[2][2] == "E" and rows[2][3] in "FGHI"

    def test_analyze_fields(self):
        rep = analyze(ModelParams(alpha=1.5, capacity=2.0))
        assert len(rep.steady_states) == len(rep.jacobians) == len(rep.eigenvalues) == 3
        assert rep.zero_region == "E" and not rep.at_bifurcation


class TestBoundaries:
    @staticmethod
    def points(alpha, state="zero"):
        return [(p.cbeta, p.kind) for p in trace_region_boundaries([alpha], 5.0) if p.state == state]

    def test_alpha_zero(self):
        pts = self.points(0.0)
        disc = sorted(c for c, k in pts if k == "discriminant")
        assert disc == pytest.approx([0.0, 4.0], abs=1e-9)
        assert [c for c, k in pts if k == "unit_modulus_complex"] == pytest.approx([1.0], abs=1e-12)

    def test_alpha_one_double_root(self):
        disc = [c for c, k in self.points(1.0) if k == "discriminant"]
        assert disc == pytest.approx([1.0], abs=1e-6)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
    def test_discriminant_solves_quadratic(self, alpha):
        for c, k in self.points(alpha):
            if k == "discriminant":
                assert (c + alpha) ** 2 == pytest.approx(4 * c, abs=1e-9)
            elif k == "unit_modulus_complex":
                assert c == pytest.approx(1.0, abs=1e-12)

    def test_real_unit_crossings(self):
        for alpha in (0.3, 1.5, 2.5):
            for state in ("zero", "nonzero"):
                for c, k in self.points(alpha, state):
                    if k != "unit_modulus_real":
                        continue
                    p = ModelParams(alpha=alpha, capacity=c)
                    s = steady_states(p)[0 if state == "zero" else 1]
                    assert min(abs(m - 1) for m in eigenvalues(jacobian_at(p, s)).moduli) < 1e-8

    def test_nonzero_complex_crossing(self):
        pts = self.points(1.5, "nonzero")
        w = sech2(1.5 * steady_states(ModelParams(alpha=1.5))[1].phi)
        assert [c for c, k in pts if k == "unit_modulus_complex"] == pytest.approx([1 / w], rel=1e-9)

    def test_unsorted_grid_rejected(self):
        with pytest.raises(ValidationError):
            trace_region_boundaries([1.0, 0.5], 5.0)


class TestPhasePortrait:
    def test_field_zero_at_steady_states(self):
        p = ModelParams(alpha=1.5, capacity=0.7)
        for s in steady_states(p):
            dr, dp = vector_field(p, s.ret, s.phi)
            assert abs(dr) < 1e-12 and abs(dp) < 1e-12

    @given(r=st.floats(-3, 3), phi=st.floats(-1, 1))
    def test_odd_field(self, r, phi):
        p = ModelParams(alpha=1.3, beta=0.7, capacity=1.9)
        a = np.array(vector_field(p, r, phi))
        b = np.array(vector_field(p, -r, -phi))
        assert np.allclose(a, -b, atol=1e-12)

    def test_trajectory_matches_ode_oracle(self):
        p = ModelParams(alpha=0.7, capacity=0.3)
        pp = phase_portrait(p, (-1, 1, -1, 1), 5, [MarketState(0.1, 0.1)])
        end = pp.trajectories[0][-1]
        sol = solve_ivp(lambda t, v: vector_field(p, v[0], v[1]), (0, 10.0), [0.1, 0.1], rtol=1e-11, atol=1e-13)
        assert end == pytest.approx(sol.y[:, -1], abs=1e-7)
        # the flow contracts towards the origin
        assert np.hypot(*end) < np.hypot(0.1, 0.1) / 50

    def test_grid_shape(self):
        pp = phase_portrait(ModelParams(alpha=0.7), (-1, 1, -0.5, 0.5), 4)
        assert pp.r.shape == pp.phi.shape == pp.dr.shape == pp.dphi.shape == (16,)
        assert pp.trajectories == []

    @pytest.mark.parametrize("bbox, n", [((0, 0, -1, 1), 5), ((-1, 1, -1, 1), 1)])
    def test_invalid(self, bbox, n):
        with pytest.raises(ValidationError):
            phase_portrait(ModelParams(alpha=0.7), bbox, n)


def test_stable_regions_converge(rng):
    converged = []
    for _ in range(20):
        p = ModelParams(alpha=rng.uniform(0.05, 0.95), capacity=rng.uniform(0.05, 0.95))
        assert region_label(p)[0] in "CD"
        converged.append(abs(simulate(p, MarketState(1e-3, 1e-3), 5000).final.ret) < 1e-6)
    assert all(converged)
