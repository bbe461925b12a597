import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spin1gs.energy import (
    DegenerateComponent,
    ModelParams,
    energy_parts,
    gp_apply,
    gp_residual,
    multipliers,
    robust_multipliers,
    s_quantity,
    total_energy,
)
from spin1gs.grid import build_grid
from spin1gs.redistribute import gradient_pairing
from spin1gs.state import Constraints, SpinorState, random_admissible

from conftest import ground, two_comp

G = build_grid(n=129, extent=8.0)

# independent SCF eigen-iteration (tests/oracles/scf.py) on the 257-point fixture
SCF_2C = {0.3: 1.3946545479297319, 0.5: 1.4228478014793646}
SCF_M1 = 1.5553912594365467
SCF_PURE_U0 = 1.3788085449045284


def _gaussian(grid):
    return grid.dirichlet(np.pi**-0.25 * np.exp(-0.5 * grid.axis**2))


class TestParams:
    @pytest.mark.parametrize("kw", [dict(beta_n=0.0), dict(beta_s=-1.0), dict(q=-0.1)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ModelParams(**kw)

    def test_with_q_keeps_rest(self):
        p = ModelParams(2.0, 0.3, 0.0, (1.5,)).with_q(4.0)
        assert (p.beta_n, p.beta_s, p.q, p.gamma) == (2.0, 0.3, 4.0, (1.5,))


class TestEnergyParts:
    def test_harmonic_gaussian(self):
        # pure u1 Gaussian: kin = pot = 1/2, int phi^4 = 1/sqrt(2 pi)
        g = build_grid(n=513, extent=8.0)
        z = np.zeros(g.shape)
        s = SpinorState(g, _gaussian(g), z, z)
        e = energy_parts(s, ModelParams(1.0, 0.5, 0.7))
        quartic = 1 / np.sqrt(2 * np.pi)
        assert e.kin == pytest.approx(0.5, rel=3e-4)
        assert e.pot == pytest.approx(0.5, rel=1e-10)
        assert e.n == pytest.approx(quartic, rel=1e-10)
        assert e.s == pytest.approx(0.5 * quartic, rel=1e-10)
        assert e.zee == pytest.approx(0.7, rel=1e-10)
        assert e.total == pytest.approx(e.kin + e.pot + e.n + e.s + e.zee)

    def test_kinetic_is_second_order(self):
        errs = []
        for n in (129, 257, 513):
            g = build_grid(n=n, extent=8.0)
            errs.append(abs(g.grad_sq(_gaussian(g)) - 0.5))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)

    def test_spin_term_vanishes_for_equal_pm(self):
        f = _gaussian(G) / np.sqrt(3)
        e = energy_parts(SpinorState(G, f, f, f), ModelParams())
        assert e.s == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.0, 1.0))
    def test_nonnegative_parts(self, seed, M):
        e = energy_parts(random_admissible(Constraints(M), G, seed), ModelParams(q=1.0))
        assert min(e.kin, e.pot, e.n, e.s, e.zee) >= 0.0


class TestGradient:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_pairing_matches_central_difference(self, seed):
        rng = np.random.default_rng(seed)
        p = ModelParams(q=0.8)
        s = random_admissible(Constraints(0.4), G, seed)
        v = tuple(G.dirichlet(rng.normal(size=G.shape)) for _ in range(3))
        eps = 1e-5

        def E(t):
            return total_energy(SpinorState.from_stack(G, s.stack() + t * np.stack(v)), p)

        fd = (E(eps) - E(-eps)) / (2 * eps)
        exact = gradient_pairing(s, v, p)
        assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)

    def test_gp_apply_is_zero_on_boundary(self):
        s = random_admissible(Constraints(0.5), G, 1)
        for r in gp_apply(s, ModelParams()):
            assert r[0] == r[-1] == 0.0


class TestMultipliers:
    def test_degenerate(self):
        s = random_admissible(Constraints(1.0), G, 0)
        with pytest.raises(DegenerateComponent):
            multipliers(s, ModelParams())

    def test_robust_matches_on_generic_states(self):
        s = random_admissible(Constraints(0.3), G, 4)
        p = ModelParams(q=0.5)
        assert robust_multipliers(s, p) == multipliers(s, p)

    def test_robust_uses_u0_when_pm_vanish(self):
        z = np.zeros(G.shape)
        s = SpinorState(G, z, _gaussian(G), z)
        m = robust_multipliers(s, ModelParams())
        assert gp_residual(s, ModelParams(), m) < 1.0
        assert m.lam == 0.0


class TestSQuantity:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 5.0), st.integers(0, 10**6))
    def test_zero_for_proportional_fields(self, c, seed):
        f = np.abs(np.random.default_rng(seed).normal(size=G.shape))
        for e in s_quantity(G, f, c * f):
            assert np.allclose(e, 0.0, atol=1e-20)

    def test_symmetric(self, rng):
        f, g = np.abs(rng.normal(size=(2,) + G.shape))
        for a, b in zip(s_quantity(G, f, g), s_quantity(G, g, f)):
            assert np.array_equal(a, b)


class TestOracle:
    """Solver energies against the independent SCF reference, frozen here."""

    @pytest.mark.parametrize("M", sorted(SCF_2C))
    def test_two_component(self, M):
        assert two_comp(M).energy.total == pytest.approx(SCF_2C[M], abs=1e-9)

    def test_fully_polarised(self):
        assert ground(1.0, 0.0).energy.total == pytest.approx(SCF_M1, abs=1e-9)

    def test_pure_u0(self):
        rep = ground(0.0, 0.5)
        assert rep.energy.total == pytest.approx(SCF_PURE_U0, abs=1e-9)
