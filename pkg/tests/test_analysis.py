import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spin1gs.analysis import (
    DecayFit,
    check_qualitative,
    completed_square_chain,
    convexity_counterexample,
    decay_fit,
    f_functional,
    midpoint_defect,
    probe_sec63,
    refinement_check,
    uniform_U_bound,
    upper_bound_U,
    verify_sec52_equality,
    verify_threetwo,
    verify_two_component_inequality,
)
from spin1gs.energy import ModelParams
from spin1gs.grid import GridSpec, build_grid
from spin1gs.solver import SolveOptions, solve_ground_state
from spin1gs.state import Constraints, SpinorState, project_constraints, random_admissible

from conftest import PARAMS, fixture_grid, ground, two_comp

# u0 linear-instability thresholds of z^M on the fixture, from u0_stability_gap
Q_LIN = {0.2: 0.0071146, 0.5: 0.047249, 0.8: 0.141460}


class TestTwoComponentBounds:
    @pytest.mark.parametrize("M", sorted(Q_LIN))
    def test_U_above_linear_threshold(self, M):
        z = two_comp(M).state
        c = Constraints(M)
        U = upper_bound_U(z, PARAMS, c)
        assert Q_LIN[M] < U < Q_LIN[M] + 2e-3
        assert U <= uniform_U_bound(z, PARAMS, c)

    @pytest.mark.parametrize("M", sorted(Q_LIN))
    def test_inequality_flips_at_U(self, M):
        z = two_comp(M).state
        c = Constraints(M)
        U = upper_bound_U(z, PARAMS, c)
        assert verify_two_component_inequality(z, PARAMS.with_q(0.99 * U), c).satisfied
        assert not verify_two_component_inequality(z, PARAMS.with_q(1.01 * U), c).satisfied

    def test_rejects_three_component_or_endpoint(self):
        with pytest.raises(ValueError):
            upper_bound_U(ground(0.5, 1.0).state, PARAMS, Constraints(0.5))
        with pytest.raises(ValueError):
            upper_bound_U(two_comp(0.5).state, PARAMS, Constraints(1.0))


THREE_C = [(0.2, 0.5), (0.5, 1.0), (0.8, 2.0)]


class TestThreeComponentIdentities:
    @pytest.mark.parametrize("M,q", THREE_C)
    def test_threetwo_equality(self, M, q):
        r = verify_threetwo(ground(M, q).state, PARAMS.with_q(q))
        assert r.satisfied
        assert r.gap < 1e-3

    @pytest.mark.parametrize("M,q", THREE_C)
    def test_f_functional_recovers_q(self, M, q):
        assert f_functional(ground(M, q).state, PARAMS.with_q(q)) == pytest.approx(q, rel=1e-3)

    @pytest.mark.parametrize("M,q", THREE_C)
    def test_sec52_equality(self, M, q):
        r = verify_sec52_equality(ground(M, q).state, PARAMS.with_q(q), Constraints(M))
        assert r.satisfied

    def test_f_functional_needs_u0(self):
        with pytest.raises(ValueError):
            f_functional(two_comp(0.5).state, PARAMS)

    def test_threetwo_trivial_on_2c(self):
        r = verify_threetwo(two_comp(0.5).state, PARAMS.with_q(1.0))
        assert r.lhs == 0.0 and r.rhs == 0.0

    def test_gap_is_second_order(self):
        def gap(grid):
            rep = solve_ground_state(PARAMS.with_q(1.0), Constraints(0.5), SolveOptions(), grid)
            return verify_threetwo(rep.state, PARAMS.with_q(1.0)).gap

        out = refinement_check(GridSpec(1, 8.0, 257), gap)
        assert out["passed"]
        assert out["ratio"] > 3.0

    def test_sec63_probe_is_finite(self):
        d = probe_sec63(ground(0.5, 1.0).state, PARAMS.with_q(1.0))
        assert d["both_finite"]
        assert 0.0 <= d["lhs_tail_share"] < 1e-3


class TestCompletedSquare:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.05, 20.0), st.sampled_from([1, 2]))
    def test_chain_identity(self, seed, sigma, dim):
        rng = np.random.default_rng(seed)
        g = build_grid(dim=dim, n=33 if dim == 1 else 11, extent=3.0)
        u1, u0, um1 = (0.05 + rng.random(g.shape) for _ in range(3))
        lhs, sq, rhs = completed_square_chain(g, u1, u0, um1, sigma)
        for a, b, c in zip(lhs, sq, rhs):
            np.testing.assert_allclose(a, b + c, rtol=1e-12, atol=1e-300)
            assert np.all(a >= c * (1 - 1e-12))


class TestQualitative:
    @pytest.mark.parametrize("M,q", [(0.3, 0.5), (0.5, 1.0), (0.7, 2.0)])
    def test_all_pass(self, M, q):
        rep = ground(M, q)
        res = check_qualitative(rep.state, PARAMS.with_q(q), Constraints(M), rep.multipliers)
        names = {r.name for r in res}
        assert names == {"ordering", "strict_interior_gap", "lambda_positive", "pm_components_positive", "lambda_identity"}
        assert all(r.satisfied for r in res), [r for r in res if not r.satisfied]

    def test_pm_collapse_at_zero_M(self):
        res = check_qualitative(ground(0.0, 0.5).state, PARAMS.with_q(0.5), Constraints(0.0))
        (r,) = [r for r in res if r.name == "pm_collapse"]
        assert r.satisfied

    def test_ordering_detects_swap(self):
        s = ground(0.5, 1.0).state.swap()
        res = check_qualitative(s, PARAMS.with_q(1.0), Constraints(0.5), ground(0.5, 1.0).multipliers)
        assert not {r.name: r for r in res}["ordering"].satisfied


class TestDecay:
    @pytest.mark.parametrize("t", [0.5, 2.0, 3.0])
    def test_synthetic_exponential(self, t):
        g = fixture_grid()
        f = np.exp(-t * np.abs(g.axis))
        s = SpinorState(g, f, f, f)
        fit = decay_fit(s, 1)
        assert fit.t == pytest.approx(t, abs=1e-6)
        assert fit.prefactor == pytest.approx(1.0, rel=1e-6)
        assert fit.accepted

    @pytest.mark.parametrize("M,q", [(0.3, 0.5), (0.5, 1.0), (0.7, 2.0)])
    def test_ground_state_tails(self, M, q):
        fit = decay_fit(ground(M, q).state, 1)
        assert fit.accepted
        x = fixture_grid().axis
        sel = (np.abs(x) >= 4) & (np.abs(x) <= 7)
        assert np.all(ground(M, q).state.u1[sel] <= fit.prefactor * np.exp(-fit.t * np.abs(x[sel])) * (1 + 1e-12))

    @pytest.mark.parametrize("window", [(5.0, 4.0), (0.0, 9.0), (4.0, 4.01)])
    def test_bad_window(self, window):
        s = ground(0.5, 1.0).state
        with pytest.raises(ValueError):
            decay_fit(s, 1, window)

    def test_accepted_rule(self):
        assert not DecayFit(1, -1.0, 1.0, (4, 7), 0.999).accepted
        assert not DecayFit(1, 1.0, 1.0, (4, 7), 0.98).accepted


class TestConvexity:
    def test_counterexample_closed_form(self):
        out = convexity_counterexample(fixture_grid(), PARAMS)
        assert out["D"] < 0
        assert out["gap"] <= 1e-10

    @pytest.mark.parametrize("beta_s", [0.1, 0.5, 2.0])
    def test_counterexample_scales_with_beta_s(self, beta_s):
        g = fixture_grid()
        a = convexity_counterexample(g, ModelParams(beta_s=beta_s))["D"]
        b = convexity_counterexample(g, ModelParams(beta_s=1.0))["D"]
        assert a == pytest.approx(beta_s * b, rel=1e-9)

    def test_overlapping_bumps_rejected(self):
        with pytest.raises(ValueError):
            convexity_counterexample(fixture_grid(), PARAMS, width=3.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.0, 0.9))
    def test_two_component_midpoint_convex(self, seed, M):
        g = build_grid(n=129, extent=8.0)
        c = Constraints(M)
        u, v = (random_admissible(c, g, seed + k) for k in (0, 1))
        u, v = (project_constraints(SpinorState(g, w.u1, np.zeros(g.shape), w.um1), c) for w in (u, v))
        assert midpoint_defect(u, v, PARAMS.with_q(0.7)) >= -1e-10
