import numpy as np
import pytest

from spin1gs.bifurcation import (
    BifurcationOptions,
    BracketError,
    classification_scan,
    find_qc,
    phase_curve,
)
from spin1gs.grid import build_grid

from conftest import PARAMS

# a coarser grid keeps these unit tests quick; the fixture runs in the acceptance suite
G = build_grid(n=129, extent=8.0)


@pytest.fixture(scope="module")
def point():
    return find_qc(0.5, PARAMS, grid=G)


class TestFindQc:
    def test_bracket(self, point):
        assert 0 < point.q_lo < point.q_hi
        assert point.width < BifurcationOptions().bracket_tol
        assert point.q_hi <= point.U + 1e-3

    def test_endpoint_classes(self, point):
        assert point.lo_report.classification == "2C"
        assert point.hi_report.classification == "3C"

    def test_contains_linear_threshold(self, point):
        # the transition is continuous: u0 appears where z^M turns unstable
        assert point.q_lo <= point.q_lin <= point.q_hi

    def test_bounds_ordered(self, point):
        assert point.q_lin < point.U <= point.U_uniform

    def test_u0_small_just_above(self, point):
        assert point.u0_mass_hi < 0.05

    def test_to_dict(self, point):
        d = point.to_dict()
        assert d["q_hi"] == point.q_hi and d["solves"] == point.solves
        assert "lo_report" not in d

    @pytest.mark.parametrize("M", [0.0, 1.0, -0.5])
    def test_endpoints_rejected(self, M):
        with pytest.raises(ValueError):
            find_qc(M, PARAMS, grid=G)

    def test_lower_seed_checked(self):
        # q_min above q_c: the lower seed is already 3C
        with pytest.raises(BracketError) as exc:
            find_qc(0.5, PARAMS, BifurcationOptions(q_min=0.5), G)
        assert exc.value.report.classification == "3C"

    @pytest.mark.parametrize("kw", [dict(bracket_tol=0.0), dict(q_min=0.0)])
    def test_bad_options(self, kw):
        with pytest.raises(ValueError):
            BifurcationOptions(**kw)


class TestScan:
    def test_monotone(self, point):
        qs = np.linspace(0.5 * point.q_lo, 2 * point.q_hi, 10)
        out = classification_scan(0.5, qs, PARAMS, grid=G)
        k = out.index("3C")
        assert set(out[:k]) == {"2C"} and set(out[k:]) == {"3C"}
        assert qs[k - 1] <= point.q_hi and qs[k] >= point.q_lo

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            classification_scan(0.5, [0.2, 0.1], PARAMS, grid=G)


class TestPhaseCurve:
    def test_collects_errors(self):
        curve = phase_curve([0.0, 0.8, 0.3], PARAMS, grid=G)
        assert [b.M for b in curve.points] == [0.3, 0.8]
        assert 0.0 in curve.errors
        assert curve.qbar_est == max(b.q_hi for b in curve.points)
        assert curve.qbar_est <= curve.U_max + 1e-3
        assert curve.points[0].q_hi < curve.points[1].q_hi

    def test_empty(self):
        curve = phase_curve([], PARAMS, grid=G)
        assert curve.points == [] and np.isnan(curve.qbar_est)
