"""Spinor states (u1, u0, u-1), the two constraint functionals and projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid


class InfeasibleConstraints(ValueError):
    """The requested (N, M) cannot be reached from the given state."""


@dataclass(frozen=True, eq=False)
class SpinorState:
    """Three nonnegative amplitudes on a common grid."""

    grid: Grid
    u1: np.ndarray
    u0: np.ndarray
    um1: np.ndarray

    def __post_init__(self):
        for name in ("u1", "u0", "um1"):
            object.__setattr__(self, name, self.grid.check(getattr(self, name)))

    @classmethod
    def from_stack(cls, grid: Grid, arr: np.ndarray) -> "SpinorState":
        return cls(grid, arr[0], arr[1], arr[2])

    @property
    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.u1, self.u0, self.um1

    def stack(self) -> np.ndarray:
        return np.stack(self.components)

    def swap(self) -> "SpinorState":
        """Exchange the roles of u1 and u-1 (maps M to -M)."""
        return SpinorState(self.grid, self.um1, self.u0, self.u1)

    def scaled(self, c1: float, c0: float | None = None, cm1: float | None = None) -> "SpinorState":
        c0 = c1 if c0 is None else c0
        cm1 = c1 if cm1 is None else cm1
        return SpinorState(self.grid, c1 * self.u1, c0 * self.u0, cm1 * self.um1)

    def masses(self) -> tuple[float, float, float]:
        g = self.grid
        return g.integrate(self.u1**2), g.integrate(self.u0**2), g.integrate(self.um1**2)

    def is_nonnegative(self) -> bool:
        return all(bool(np.all(u >= 0)) for u in self.components)

    def distance(self, other: "SpinorState") -> float:
        """L2 distance over all three components."""
        return float(np.sqrt(self.grid.integrate(np.sum((self.stack() - other.stack()) ** 2, axis=0))))


@dataclass(frozen=True)
class Constraints:
    M: float
    N: float = 1.0

    def __post_init__(self):
        if self.N != 1.0:
            raise ValueError("particle number is normalised to 1")
        if not 0.0 <= self.M <= 1.0:
            raise ValueError(f"magnetization must lie in [0, 1], got {self.M}")


def particle_number(s: SpinorState) -> float:
    return s.grid.integrate(s.u1**2 + s.u0**2 + s.um1**2)


def magnetization(s: SpinorState) -> float:
    return s.grid.integrate(s.u1**2 - s.um1**2)


def gaussian_profile(grid: Grid) -> np.ndarray:
    """exp(-|x|^2/2) on the grid, Dirichlet, with unit discrete L2 norm."""
    f = grid.dirichlet(np.exp(-0.5 * grid.radius**2))
    return f / np.sqrt(grid.integrate(f**2))


def gaussian_ansatz(c: Constraints, grid: Grid) -> SpinorState:
    f = gaussian_profile(grid)
    return SpinorState(grid, np.sqrt((1 + c.M) / 2) * f, np.zeros_like(f), np.sqrt((1 - c.M) / 2) * f)


def _bumps(grid: Grid, rng: np.random.Generator, count: int) -> np.ndarray:
    L = grid.extent
    f = grid.zeros()
    for _ in range(count):
        centre = rng.uniform(-L / 4, L / 4, size=grid.dim)
        width = rng.uniform(0.6, 1.6)
        amp = rng.uniform(0.2, 1.0)
        r2 = sum((x - c) ** 2 for x, c in zip(grid.coords, centre))
        f += amp * np.exp(-0.5 * r2 / width**2)
    return grid.dirichlet(f)


def random_admissible(c: Constraints, grid: Grid, seed: int = 0, bumps: int = 3) -> SpinorState:
    """Smooth positive random state with N = 1 and M = c.M.

    Each component is a superposition of Gaussian bumps; the component masses
    are drawn so that the constraints are met by rescaling alone.
    """
    rng = np.random.default_rng(seed)
    raw = [_bumps(grid, rng, bumps) for _ in range(3)]
    frac0 = rng.uniform(0.05, 0.6)
    m0 = frac0 * (1.0 - c.M)
    m1 = (1.0 - m0 + c.M) / 2
    mm1 = (1.0 - m0 - c.M) / 2
    out = []
    for f, m in zip(raw, (m1, m0, mm1)):
        if m <= 0.0:
            out.append(np.zeros_like(f))
        else:
            out.append(f * np.sqrt(m / grid.integrate(f**2)))
    return SpinorState(grid, *out)


def projection_factors(a1: float, a0: float, am1: float, M: float) -> tuple[float, float, float]:
    """Scalars (s1, s0, sm1) with s1^2 a1 + s0^2 a0 + sm1^2 am1 = 1,
    s1^2 a1 - sm1^2 am1 = M and s0^2 = s1 sm1.

    ``a_j`` are the current component masses.  Corners where u1 or u-1 has no
    mass use s0 to absorb whatever the other two cannot carry.
    """
    if M >= 1.0:
        if a1 <= 0.0:
            raise InfeasibleConstraints("M = 1 needs a nonzero u1")
        return 1.0 / np.sqrt(a1), 0.0, 0.0
    if a1 > 0.0 and am1 > 0.0:
        c = 0.5 * a0 / np.sqrt(a1 * am1)
        one_m = (1.0 - M) * (1.0 + M)
        cm2 = (c * M) ** 2
        r = np.sqrt(one_m + cm2)
        s = (1.0 + cm2) / (1.0 + c * r)  # s = s1^2 a1 + sm1^2 am1
        # s - M without cancellation as M -> 1
        diff = (1.0 - M) * one_m * (1.0 + cm2) / ((c * M + r) * (r + c * M * M) * (1.0 + c * r))
        s1 = np.sqrt(0.5 * (s + M) / a1)
        sm1 = np.sqrt(0.5 * diff / am1)
        return s1, np.sqrt(s1 * sm1), sm1
    # one of u1, u-1 is absent: it stays absent and u0 absorbs the remainder
    if M > 0.0 and a1 <= 0.0:
        raise InfeasibleConstraints("M > 0 needs a nonzero u1")
    s1 = np.sqrt(M / a1) if a1 > 0.0 else 0.0
    if a0 <= 0.0:
        raise InfeasibleConstraints("no component available to carry the remaining mass")
    return s1, np.sqrt((1.0 - M) / a0), 0.0


def project_constraints(s: SpinorState, c: Constraints) -> SpinorState:
    a1, a0, am1 = s.masses()
    if c.M >= 1.0:
        s = SpinorState(s.grid, s.u1, np.zeros_like(s.u0), np.zeros_like(s.um1))
        a0 = am1 = 0.0
    s1, s0, sm1 = projection_factors(a1, a0, am1, c.M)
    return s.scaled(s1, s0, sm1)


def reconstruct_phases() -> tuple[float, float, float]:
    """Constant phases (theta1, theta0, theta-1) with cos(theta1 - 2 theta0 + theta-1) = -1.

    Any amplitude triple minimising the reduced energy becomes a minimiser of
    the full complex functional once multiplied by these phases.
    """
    return 0.0, np.pi / 2, 0.0
