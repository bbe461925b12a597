"""Pointwise mass redistribution and the one-parameter perturbation families.

A redistribution maps nonnegative fields f_j to g_i = sqrt(sum_j a_ij f_j^2)
with a column-stochastic nonnegative matrix (a_ij).  It keeps the total
density pointwise and cannot raise the discrete kinetic energy, since on
each edge the Euclidean norm of the vector (sqrt(a_ij) f_j)_j is 1-Lipschitz.

Every family below is a redistribution depending on a parameter delta >= 0.
All transforms are computed on squared amplitudes and rooted once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .energy import ModelParams, energy_parts, gp_apply
from .state import SpinorState

FAMILIES = ("incm", "right_shift", "twothree", "threetwo", "sec52", "sec63")
PARTS = ("kin", "pot", "n", "s", "zee", "total")
RICHARDSON_STEPS = (1e-4, 5e-5)


class InfeasibleDelta(ValueError):
    """delta is outside the range where all squared coefficients stay >= 0."""


@dataclass(frozen=True)
class RedistributionMatrix:
    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2:
            raise ValueError("redistribution matrix must be 2-D")
        if np.any(a < 0):
            raise ValueError("redistribution coefficients must be nonnegative")
        if not np.allclose(a.sum(axis=0), 1.0, rtol=0, atol=1e-12):
            raise ValueError("every column of a redistribution matrix must sum to 1")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape


def random_stochastic(m: int, n: int, rng: np.random.Generator) -> RedistributionMatrix:
    a = rng.random((m, n))
    return RedistributionMatrix(a / a.sum(axis=0))


def apply_redistribution(A: RedistributionMatrix, fs: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(fs) != A.shape[1]:
        raise ValueError(f"matrix takes {A.shape[1]} fields, got {len(fs)}")
    sq = []
    for f in fs:
        f = np.asarray(f, dtype=float)
        if np.any(f < 0):
            raise ValueError("redistribution needs nonnegative fields")
        sq.append(f * f)
    sq = np.stack(sq)
    g2 = np.tensordot(A.a, sq, axes=(1, 0))
    return list(np.sqrt(g2))


@dataclass(frozen=True)
class PerturbationFamily:
    name: str
    delta: float
    tau_or_sigma: float | None = None

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise ValueError(f"unknown family {self.name!r}; choose from {FAMILIES}")
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.uses_ratio:
            if self.tau_or_sigma is None or not self.tau_or_sigma > 0:
                raise ValueError(f"family {self.name} needs a positive tau/sigma")

    @property
    def uses_ratio(self) -> bool:
        return self.name in ("twothree", "sec52", "sec63")

    def with_delta(self, delta: float) -> "PerturbationFamily":
        return PerturbationFamily(self.name, delta, self.tau_or_sigma)

    def max_delta(self) -> float:
        """Largest delta keeping every coefficient nonnegative."""
        if self.name in ("incm", "right_shift"):
            return 1.0
        if self.name == "threetwo":
            return 0.5
        r = self.tau_or_sigma
        return min(1.0, 1.0 / r)

    def matrix(self) -> RedistributionMatrix:
        """Coefficients acting on (u1^2, u0^2, u-1^2)."""
        d, r = self.delta, self.tau_or_sigma
        if d > self.max_delta() * (1 + 1e-15):
            raise InfeasibleDelta(f"delta={d} exceeds {self.max_delta()} for {self.name}")
        if self.name == "incm":
            a = [[1 - d, 0, 0], [d, 1, d], [0, 0, 1 - d]]
        elif self.name == "right_shift":
            a = [[1, d, d], [0, 1 - d, 0], [0, 0, 1 - d]]
        elif self.name == "threetwo":
            a = [[1, d, 0], [0, 1 - 2 * d, 0], [0, d, 1]]
        elif self.name in ("twothree", "sec52"):
            a = [[1 - d, 0, 0], [d, 1, r * d], [0, 0, 1 - r * d]]
        else:  # sec63
            a = [[1 - d, 0, r * d], [0, 1, 0], [d, 0, 1 - r * d]]
        a = np.maximum(np.array(a, dtype=float), 0.0)
        return RedistributionMatrix(a)


def default_ratio(name: str, s: SpinorState, M: float | None = None) -> float | None:
    """tau = (1+M)/(1-M) for twothree, sigma = int u1^2 / int u-1^2 for sec52/sec63."""
    if name == "twothree":
        if M is None:
            a1, _, am1 = s.masses()
            return a1 / am1
        return (1 + M) / (1 - M)
    if name in ("sec52", "sec63"):
        a1, _, am1 = s.masses()
        return a1 / am1
    return None


def perturb(s: SpinorState, fam: PerturbationFamily) -> SpinorState:
    out = apply_redistribution(fam.matrix(), s.components)
    return SpinorState(s.grid, *out)


# -- directional derivatives ---------------------------------------------------


def _part(s: SpinorState, p: ModelParams, part: str) -> float:
    e = energy_parts(s, p)
    return e.total if part == "total" else getattr(e, part)


def finite_difference_derivative(s: SpinorState, fam: PerturbationFamily, part: str, p: ModelParams,
                                 steps: tuple[float, float] = RICHARDSON_STEPS) -> float:
    """One-sided quotient at 0+ with Richardson extrapolation over two steps."""
    d1, d2 = steps
    e0 = _part(s, p, part)
    q1 = (_part(perturb(s, fam.with_delta(d1)), p, part) - e0) / d1
    q2 = (_part(perturb(s, fam.with_delta(d2)), p, part) - e0) / d2
    r = d1 / d2
    return (r * q2 - q1) / (r - 1)


def _twothree_parts(s: SpinorState, tau: float, p: ModelParams) -> dict[str, float]:
    """Exact derivatives of the discrete energy parts along twothree at u0 = 0.

    With u0 = 0 the perturbed u0 is sqrt(delta) * rho, rho^2 = u1^2 + tau u-1^2,
    so every discrete part is affine in delta.
    """
    g = s.grid
    z1, _, zm = s.components
    rho = np.sqrt(z1**2 + tau * zm**2)
    kin = g.grad_sq(rho) - g.grad_sq(z1) - tau * g.grad_sq(zm)
    sp = 4 * p.beta_s * g.integrate(z1 * zm * (z1 - zm) * (tau * zm - z1))
    zee = -p.q * g.integrate(z1**2 + tau * zm**2)
    return {"kin": kin, "pot": 0.0, "n": 0.0, "s": sp, "zee": zee}


def _threetwo_parts(s: SpinorState, p: ModelParams) -> dict[str, float] | None:
    """Chain-rule derivatives along threetwo (u0^2 moved equally into u+-1).

    Returns None when u0 carries mass at a node where u1 or u-1 vanishes (the
    family is not differentiable there).
    """
    g = s.grid
    u1, u0, um1 = s.components
    need = u0 > 0
    if np.any(need & ((u1 <= 0) | (um1 <= 0))):
        return None
    safe1 = np.where(need, u1, 1.0)
    safem = np.where(need, um1, 1.0)
    v1 = np.where(need, u0**2 / (2 * safe1), 0.0)
    vm = np.where(need, u0**2 / (2 * safem), 0.0)
    kin = 0.0
    for u, v in ((u1, v1), (u0, -u0), (um1, vm)):
        kin += 2 * sum(float(np.sum(a * b)) for a, b in zip(g.grad(u), g.grad(v))) * g.cell
    d = u1 - um1
    ratio = np.where(need, u0**2 / (safe1 * safem), 0.0)
    sp = -2 * p.beta_s * g.integrate(u0**2 * d**2 * (2 + ratio))
    zee = 2 * p.q * g.integrate(u0**2)
    return {"kin": kin, "pot": 0.0, "n": 0.0, "s": sp, "zee": zee}


def directional_derivative(s: SpinorState, fam: PerturbationFamily, part: str, p: ModelParams) -> float:
    """d/d delta of one energy part at delta = 0+ along ``fam``.

    pot and n are exactly 0 for every family (|u|^2 is kept pointwise).
    twothree on states with u0 = 0 and threetwo use closed forms that are
    exact for the discrete energy; everything else uses Richardson-extrapolated
    one-sided quotients.
    """
    if part not in PARTS:
        raise ValueError(f"unknown energy part {part!r}; choose from {PARTS}")
    if part in ("pot", "n"):
        return 0.0
    parts = None
    if fam.name == "twothree" and not np.any(s.u0):
        parts = _twothree_parts(s, fam.tau_or_sigma, p)
    elif fam.name == "threetwo":
        parts = _threetwo_parts(s, p)
    if parts is None:
        return finite_difference_derivative(s, fam, part, p)
    if part == "total":
        return sum(parts.values())
    return parts[part]


def gradient_pairing(s: SpinorState, v: tuple[np.ndarray, ...], p: ModelParams) -> float:
    """Exact first variation <2 gp(u), v> of the discrete energy (v = 0 on the boundary)."""
    return 2.0 * sum(s.grid.integrate(g * w) for g, w in zip(gp_apply(s, p), v))
