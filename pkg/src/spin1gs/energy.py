"""The reduced spin-1 energy, its GP operator, multipliers and S-quantities.

With edge-based forward differences the discrete energy

    E[u] = sum_edges |Du|^2 h^d + integrate(V|u|^2 + beta_n |u|^4
           + beta_s [2 u0^2 (u1 - u-1)^2 + (u1^2 - u-1^2)^2] + q (u1^2 + u-1^2))

has the exact discrete gradient ``2 * gp_apply`` with respect to the
``integrate`` inner product (for directions vanishing on the boundary).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .grid import Grid, trap_potential
from .state import SpinorState

FLOOR = 1e-30


@dataclass(frozen=True)
class ModelParams:
    beta_n: float = 1.0
    beta_s: float = 0.5
    q: float = 0.0
    gamma: tuple = (1.0,)

    def __post_init__(self):
        if not self.beta_n > 0:
            raise ValueError("beta_n must be positive (repulsive)")
        if not self.beta_s > 0:
            raise ValueError("beta_s must be positive (antiferromagnetic)")
        if not self.q >= 0:
            raise ValueError("q must be nonnegative")
        object.__setattr__(self, "gamma", tuple(float(g) for g in np.atleast_1d(self.gamma)))

    def with_q(self, q: float) -> "ModelParams":
        return ModelParams(self.beta_n, self.beta_s, q, self.gamma)

    def potential(self, grid: Grid) -> np.ndarray:
        return _potential(grid, self.gamma)


@lru_cache(maxsize=32)
def _potential(grid: Grid, gamma: tuple) -> np.ndarray:
    V = trap_potential(grid, "harmonic", gamma)
    V.setflags(write=False)
    return V


@dataclass(frozen=True)
class EnergyBreakdown:
    kin: float
    pot: float
    n: float
    s: float
    zee: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.kin + self.pot + self.n + self.s + self.zee)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Multipliers:
    mu: float
    lam: float


class DegenerateComponent(ValueError):
    """A component needed by the multiplier formula carries (almost) no mass."""


def energy_densities(s: SpinorState, p: ModelParams) -> dict[str, np.ndarray]:
    """Pointwise integrands of all parts except the kinetic one."""
    u1, u0, um1 = s.components
    rho = u1**2 + u0**2 + um1**2
    return {
        "pot": p.potential(s.grid) * rho,
        "n": p.beta_n * rho**2,
        "s": p.beta_s * (2 * u0**2 * (u1 - um1) ** 2 + (u1**2 - um1**2) ** 2),
        "zee": p.q * (u1**2 + um1**2),
    }


def energy_parts(s: SpinorState, p: ModelParams) -> EnergyBreakdown:
    g = s.grid
    dens = energy_densities(s, p)
    kin = sum(g.grad_sq(u) for u in s.components)
    return EnergyBreakdown(kin=kin, **{k: g.integrate(v) for k, v in dens.items()})


def total_energy(s: SpinorState, p: ModelParams) -> float:
    return energy_parts(s, p).total


def nonlinear_terms(u1, u0, um1, p: ModelParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Everything in the GP right-hand sides except -Lap + V."""
    rho = u1**2 + u0**2 + um1**2
    d = u1 - um1
    dd = u1**2 - um1**2
    bn = 2 * p.beta_n * rho
    n1 = bn * u1 + 2 * p.beta_s * (u0**2 * d + u1 * dd) + p.q * u1
    n0 = bn * u0 + 2 * p.beta_s * u0 * d**2
    nm1 = bn * um1 + 2 * p.beta_s * (-(u0**2) * d - um1 * dd) + p.q * um1
    return n1, n0, nm1


def gp_apply(s: SpinorState, p: ModelParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-hand sides of the GP system without the multiplier terms."""
    g = s.grid
    V = p.potential(g)
    nl = nonlinear_terms(*s.components, p)
    out = []
    for u, n in zip(s.components, nl):
        r = -g.laplacian(u) + V * u + n
        out.append(g.dirichlet(r))
    return tuple(out)


def component_rayleigh(s: SpinorState, p: ModelParams, gp=None) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """(F_1, F_0, F_-1) = integrate(u_j * gp_j) and the masses integrate(u_j^2)."""
    gp = gp_apply(s, p) if gp is None else gp
    F = tuple(s.grid.integrate(u * r) for u, r in zip(s.components, gp))
    return F, s.masses()


def multipliers(s: SpinorState, p: ModelParams, tol: float = 1e-12) -> Multipliers:
    """mu and lambda from (mu + j lambda) integrate(u_j^2) = F_j, j = +-1."""
    (F1, _, Fm1), (a1, _, am1) = component_rayleigh(s, p)
    if a1 < tol or am1 < tol:
        raise DegenerateComponent(f"component masses ({a1:.3g}, {am1:.3g}) below {tol:g}")
    r1, rm1 = F1 / a1, Fm1 / am1
    return Multipliers(mu=0.5 * (r1 + rm1), lam=0.5 * (r1 - rm1))


def robust_multipliers(s: SpinorState, p: ModelParams, gp=None, floor: float = 1e-300) -> Multipliers:
    """Multipliers that stay defined when some components vanish.

    Uses the +-1 formula when both carry mass, otherwise reads mu from u0 and
    mu + lambda from u1 as available.  An undetermined multiplier is set so
    that it does not enter any residual.
    """
    (F1, F0, Fm1), (a1, a0, am1) = component_rayleigh(s, p, gp)
    if a1 > floor and am1 > floor:
        r1, rm1 = F1 / a1, Fm1 / am1
        return Multipliers(0.5 * (r1 + rm1), 0.5 * (r1 - rm1))
    if a0 > floor:
        mu = F0 / a0
        lam = F1 / a1 - mu if a1 > floor else (mu - Fm1 / am1 if am1 > floor else 0.0)
        return Multipliers(mu, lam)
    if a1 > floor:
        return Multipliers(F1 / a1, 0.0)
    if am1 > floor:
        return Multipliers(Fm1 / am1, 0.0)
    return Multipliers(0.0, 0.0)


def gp_residual_fields(s: SpinorState, p: ModelParams, m: Multipliers, gp=None):
    gp = gp_apply(s, p) if gp is None else gp
    coeffs = (m.mu + m.lam, m.mu, m.mu - m.lam)
    return tuple(r - c * u for r, c, u in zip(gp, coeffs, s.components))


def gp_residual(s: SpinorState, p: ModelParams, m: Multipliers, gp=None) -> float:
    """Root-mean-square over the grid of the three GP residuals."""
    res = gp_residual_fields(s, p, m, gp)
    return float(np.sqrt(np.mean(sum(r**2 for r in res))))


def s_quantity(grid: Grid, f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, ...]:
    """S(f, g) = |f grad g - g grad f|^2 on the edge mesh (one array per axis)."""
    fm, gm = grid.edge_mean(f), grid.edge_mean(g)
    df, dg = grid.grad(f), grid.grad(g)
    return tuple((a * db - b * da) ** 2 for a, b, da, db in zip(fm, gm, df, dg))


def verify_lambda_identity(s: SpinorState, p: ModelParams, m: Multipliers) -> dict:
    """Both sides of lambda int(u1 u-1) = beta_s int (u1^2 - u-1^2)(u0^2 + 2 u1 u-1)."""
    g = s.grid
    u1, u0, um1 = s.components
    lhs = m.lam * g.integrate(u1 * um1)
    rhs = p.beta_s * g.integrate((u1**2 - um1**2) * (u0**2 + 2 * u1 * um1))
    gap = abs(lhs - rhs) / max(abs(lhs), abs(rhs), FLOOR)
    return {"lhs": lhs, "rhs": rhs, "gap": gap}
