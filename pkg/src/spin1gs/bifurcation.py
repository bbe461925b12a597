"""Bracketing the two-/three-component threshold q_c(M) and the phase curve.

For fixed M the ground state is two-component for q below q_c(M) and
three-component above it, so the classification is a step function of q and
bisection applies.  The bracket is seeded at a small q (expected 2C) and just
above the upper bound U(M) (expected 3C).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import upper_bound_U, uniform_U_bound, verify_two_component_inequality
from .energy import ModelParams
from .grid import Grid, build_grid
from .solver import SolveOptions, SolveReport, solve_ground_state, solve_two_component, u0_stability_gap
from .state import Constraints

log = logging.getLogger(__name__)


class BracketError(RuntimeError):
    """A bracket end did not have the expected classification."""

    def __init__(self, msg, q=None, report=None):
        super().__init__(msg)
        self.q = q
        self.report = report


class MonotonicityError(RuntimeError):
    """A three-component point was found below a two-component one."""


@dataclass(frozen=True)
class BifurcationOptions:
    bracket_tol: float = 1e-3
    q_min: float = 1e-3
    margin: float = 0.05
    near_seeds: int = 3
    near_factor: float = 8.0
    solve: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if not self.bracket_tol > 0:
            raise ValueError("bracket_tol must be positive")
        if not self.q_min > 0:
            raise ValueError("q_min must be positive")


@dataclass
class BifurcationPoint:
    M: float
    q_lo: float
    q_hi: float
    U: float
    qbar_contribution: float
    U_uniform: float = np.nan
    q_lin: float = np.nan
    u0_mass_hi: float = np.nan
    inequality_gap_hi: float = np.nan
    solves: int = 0
    lo_report: SolveReport | None = field(default=None, repr=False)
    hi_report: SolveReport | None = field(default=None, repr=False)

    @property
    def width(self) -> float:
        return self.q_hi - self.q_lo

    def to_dict(self) -> dict:
        keys = ("M", "q_lo", "q_hi", "U", "qbar_contribution", "U_uniform", "q_lin", "u0_mass_hi", "inequality_gap_hi", "solves")
        return {k: getattr(self, k) for k in keys}


@dataclass
class PhaseCurve:
    points: list
    errors: dict
    qbar_est: float
    U_max: float
    U_uniform_max: float


class _Classifier:
    """Ground-state classification at fixed M, reusing the nearest 3C state."""

    def __init__(self, M: float, p: ModelParams, opts: BifurcationOptions, grid: Grid):
        self.c = Constraints(M)
        self.p = p
        self.opts = opts
        self.grid = grid
        self.hi_state = None
        self.solves = 0

    def __call__(self, q: float, near: bool = False) -> SolveReport:
        o = self.opts.solve
        if near:
            o = replace(o, tol=o.tol / 4)
        cands = []
        if self.hi_state is not None:
            cands.append(replace(o, init="warm", warm=self.hi_state))
        else:
            cands.append(o)
        if near:
            cands.extend(replace(o, init="random", seed=k) for k in range(self.opts.near_seeds))
        reports = []
        for oo in cands:
            self.solves += 1
            reports.append(solve_ground_state(self.p.with_q(q), self.c, oo, self.grid))
        ok = [r for r in reports if r.converged] or reports
        best = min(ok, key=lambda r: r.energy.total)
        if best.classification == "3C":
            self.hi_state = best.state
        return best


def find_qc(M: float, p: ModelParams, opts: BifurcationOptions | None = None, grid: Grid | None = None) -> BifurcationPoint:
    if not 0.0 < M < 1.0:
        raise ValueError(f"threshold search needs 0 < M < 1, got {M}")
    opts = BifurcationOptions() if opts is None else opts
    if grid is None:
        grid = build_grid()
    c = Constraints(M)
    z = solve_two_component(p.with_q(0.0), c, opts.solve, grid)
    U = upper_bound_U(z.state, p, c)
    # u0 becomes linearly unstable on z once q exceeds this value
    q_lin = u0_stability_gap(z.state, p.with_q(0.0))
    classify = _Classifier(M, p, opts, grid)

    q_hi = max(U, opts.q_min) + opts.margin
    hi = classify(q_hi)
    if hi.classification != "3C":
        raise BracketError(f"upper seed q={q_hi:.6g} classified {hi.classification} at M={M}", q_hi, hi)
    q_lo = opts.q_min
    lo = classify(q_lo)
    if lo.classification != "2C":
        raise BracketError(f"lower seed q={q_lo:.6g} classified {lo.classification} at M={M}", q_lo, lo)

    while q_hi - q_lo >= opts.bracket_tol:
        mid = 0.5 * (q_lo + q_hi)
        near = q_hi - q_lo < opts.near_factor * opts.bracket_tol
        r = classify(mid, near=near)
        log.debug("M=%g q=%.6g -> %s (u0 mass %.3g)", M, mid, r.classification, r.u0_mass)
        if r.classification == "3C":
            q_hi, hi = mid, r
        else:
            q_lo, lo = mid, r

    ineq = verify_two_component_inequality(z.state, p.with_q(q_hi), c)
    return BifurcationPoint(
        M=M,
        q_lo=q_lo,
        q_hi=q_hi,
        U=U,
        qbar_contribution=q_hi,
        U_uniform=uniform_U_bound(z.state, p, c),
        q_lin=q_lin,
        u0_mass_hi=hi.u0_mass,
        inequality_gap_hi=ineq.lhs - ineq.rhs,
        solves=classify.solves + 1,
        lo_report=lo,
        hi_report=hi,
    )


def classification_scan(M: float, qs, p: ModelParams, opts: BifurcationOptions | None = None, grid: Grid | None = None,
                        strict: bool = True) -> list[str]:
    """Classify the ground state on an increasing q-grid.

    Each point is solved cold and from the previous 3C state; the lower
    energy wins.  With ``strict`` a 3C point followed by a 2C point raises
    MonotonicityError.
    """
    opts = BifurcationOptions() if opts is None else opts
    if grid is None:
        grid = build_grid()
    qs = np.asarray(qs, dtype=float)
    if np.any(np.diff(qs) <= 0):
        raise ValueError("q-grid must be strictly increasing")
    classify = _Classifier(M, p, opts, grid)
    out = [classify(float(q)).classification for q in qs]
    if strict:
        seen = False
        for q, k in zip(qs, out):
            seen = seen or k == "3C"
            if seen and k == "2C":
                raise MonotonicityError(f"2C at q={q:.6g} after a 3C point (M={M})")
    return out


def phase_curve(Ms, p: ModelParams, opts: BifurcationOptions | None = None, grid: Grid | None = None) -> PhaseCurve:
    points, errors = [], {}
    for M in Ms:
        try:
            points.append(find_qc(float(M), p, opts, grid))
        except (ValueError, RuntimeError) as exc:
            log.warning("M=%g failed: %s", M, exc)
            errors[float(M)] = str(exc)
    points.sort(key=lambda b: b.M)
    if points:
        qbar = max(b.q_hi for b in points)
        umax = max(b.U for b in points)
        uuni = max(b.U_uniform for b in points)
    else:
        qbar = umax = uuni = float("nan")
    return PhaseCurve(points, errors, qbar, umax, uuni)
