from functools import lru_cache

import numpy as np
import pytest

from spin1gs.energy import ModelParams
from spin1gs.grid import GridSpec, build_grid
from spin1gs.solver import SolveOptions, solve_ground_state, solve_two_component
from spin1gs.state import Constraints

FIXTURE = GridSpec(dim=1, extent=8.0, n=257)
PARAMS = ModelParams(beta_n=1.0, beta_s=0.5)

ACCEPTANCE_LINES: dict[int, str] = {}


@lru_cache(maxsize=None)
def fixture_grid(n: int = FIXTURE.n):
    return build_grid(GridSpec(FIXTURE.dim, FIXTURE.extent, n))


@lru_cache(maxsize=None)
def ground(M: float, q: float, n: int = FIXTURE.n):
    return solve_ground_state(PARAMS.with_q(q), Constraints(M), SolveOptions(), fixture_grid(n))


@lru_cache(maxsize=None)
def two_comp(M: float, n: int = FIXTURE.n):
    return solve_two_component(PARAMS, Constraints(M), SolveOptions(), fixture_grid(n))


@pytest.fixture(scope="session")
def grid():
    return fixture_grid()


@pytest.fixture(scope="session")
def params():
    return PARAMS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
