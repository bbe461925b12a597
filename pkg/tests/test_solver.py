from dataclasses import replace

import numpy as np
import pytest

from spin1gs.energy import ModelParams, energy_parts, verify_lambda_identity
from spin1gs.grid import build_grid
from spin1gs.solver import (
    EPS_2C,
    SolveOptions,
    classify,
    continuation,
    lsq_multipliers,
    report_multipliers,
    seed_middle,
    solve_ground_state,
    solve_multistart,
    solve_two_component,
    u0_stability_gap,
)
from spin1gs.energy import gp_apply
from spin1gs.state import Constraints, magnetization, particle_number, random_admissible

from conftest import PARAMS, fixture_grid, ground, two_comp

SMALL = build_grid(n=129, extent=8.0)


class TestOptions:
    @pytest.mark.parametrize("kw", [dict(dt=0.0), dict(tol=-1.0), dict(max_iter=0), dict(init="x"), dict(init="warm")])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolveOptions(**kw)

    def test_classify_threshold(self):
        assert classify(0.0) == "2C"
        assert classify(EPS_2C / 2) == "2C"
        assert classify(EPS_2C) == "3C"


class TestSolveGroundState:
    @pytest.mark.parametrize("M,q", [(0.3, 0.5), (0.5, 1.0), (0.7, 2.0), (0.5, 0.0), (1.0, 3.0), (0.0, 0.5)])
    def test_converges_on_constraint_set(self, M, q):
        rep = ground(M, q)
        s = rep.state
        assert rep.converged
        assert rep.residual <= 10 * SolveOptions().tol
        assert s.is_nonnegative()
        assert particle_number(s) == pytest.approx(1.0, abs=1e-12)
        assert magnetization(s) == pytest.approx(M, abs=1e-12)

    def test_energy_trace_nonincreasing(self):
        tr = np.asarray(ground(0.5, 1.0).energy_trace)
        assert np.all(np.diff(tr) <= 1e-12)

    def test_report_fields(self):
        rep = ground(0.5, 1.0)
        d = rep.to_dict()
        assert d["classification"] == "3C" and d["M"] == 0.5 and d["q"] == 1.0
        assert d["energy"]["total"] == rep.energy.total

    def test_lambda_identity_on_ground_states(self):
        for M, q in [(0.3, 0.5), (0.5, 1.0)]:
            rep = ground(M, q)
            assert verify_lambda_identity(rep.state, PARAMS.with_q(q), rep.multipliers)["gap"] < 1e-6

    def test_seeded_u0_does_not_survive_below_threshold(self):
        rep = ground(0.5, 0.01)
        assert rep.classification == "2C"

    def test_random_init_reaches_same_minimum(self):
        o = SolveOptions(init="random", seed=3)
        rep = solve_ground_state(PARAMS.with_q(1.0), Constraints(0.5), o, fixture_grid())
        assert rep.energy.total == pytest.approx(ground(0.5, 1.0).energy.total, abs=1e-10)

    def test_warm_start_on_other_grid_rejected(self):
        o = SolveOptions(init="warm", warm=ground(0.5, 1.0).state)
        with pytest.raises(ValueError):
            solve_ground_state(PARAMS, Constraints(0.5), o, SMALL)

    def test_not_converged_flag(self):
        rep = solve_ground_state(PARAMS.with_q(1.0), Constraints(0.5), SolveOptions(max_iter=2, newton=False), SMALL)
        assert not rep.converged

    def test_without_newton_agrees(self):
        o = SolveOptions(newton=False, max_iter=200000)
        rep = solve_ground_state(PARAMS.with_q(1.0), Constraints(0.5), o, SMALL)
        ref = solve_ground_state(PARAMS.with_q(1.0), Constraints(0.5), SolveOptions(), SMALL)
        assert rep.converged and ref.converged
        assert rep.energy.total == pytest.approx(ref.energy.total, abs=1e-10)
        assert rep.state.distance(ref.state) < 1e-5

    def test_two_dimensional(self):
        g = build_grid(dim=2, n=41, extent=6.0)
        rep = solve_ground_state(PARAMS.with_q(1.0), Constraints(0.5), SolveOptions(), g)
        assert rep.converged and rep.classification == "3C"
        assert particle_number(rep.state) == pytest.approx(1.0, abs=1e-12)


class TestTwoComponent:
    def test_q_independent(self):
        a = solve_two_component(PARAMS.with_q(0.0), Constraints(0.5), SolveOptions(), SMALL)
        b = solve_two_component(PARAMS.with_q(5.0), Constraints(0.5), SolveOptions(), SMALL)
        assert np.array_equal(a.state.stack(), b.state.stack())
        assert b.energy.total == pytest.approx(a.energy.total + 5.0, abs=1e-12)

    def test_u0_identically_zero(self):
        rep = two_comp(0.5)
        assert not np.any(rep.state.u0)
        assert rep.classification == "2C"

    @pytest.mark.parametrize("M", [0.2, 0.5, 0.8])
    def test_stable_below_threshold(self, M):
        # u0 direction costs energy at q = 0
        assert u0_stability_gap(two_comp(M).state, PARAMS) > 0.0

    def test_ground_state_at_zero_q_is_two_component(self):
        assert ground(0.5, 0.0).state.distance(two_comp(0.5).state) < 1e-6


class TestMultipliers:
    def test_lsq_matches_pm_formula_on_2c(self):
        s = two_comp(0.5).state
        gp = gp_apply(s, PARAMS)
        a, b = lsq_multipliers(s, gp), report_multipliers(s, PARAMS, 0.5)
        assert a.mu == pytest.approx(b.mu, rel=1e-10)
        assert a.lam == pytest.approx(b.lam, rel=1e-10)

    def test_lambda_positive(self):
        assert ground(0.5, 1.0).multipliers.lam > 0


class TestSeeding:
    def test_seed_middle_keeps_constraints(self):
        s = two_comp(0.4).state
        t = seed_middle(s, 0.1)
        assert t.masses()[1] == pytest.approx(0.1, rel=1e-12)
        assert particle_number(t) == pytest.approx(1.0, abs=1e-12)
        assert magnetization(t) == pytest.approx(0.4, abs=1e-12)


class TestMultistart:
    def test_three_component_unique(self):
        best, disp, reps = solve_multistart(PARAMS.with_q(1.0), Constraints(0.5), SolveOptions(), SMALL, seeds=range(3))
        assert len(reps) == 3
        assert disp < 1e-6
        assert best.energy.total == min(r.energy.total for r in reps)


class TestContinuation:
    def test_sweep_with_error_entry(self):
        out = continuation(PARAMS, Constraints(0.5), SolveOptions(), SMALL, [(0.5, 0.5), (0.5, 1.0), (1.5, 1.0)])
        assert [r.classification for r in out[:2]] == ["3C", "3C"]
        assert isinstance(out[2], ValueError)
        assert out[1].energy.total > out[0].energy.total
