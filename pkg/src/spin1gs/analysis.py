"""Verifiers for the inequalities, identities and qualitative properties of
ground states, plus tail fits and the convexity counterexample.

Quotients by a component amplitude are evaluated on edges with the edge mean
as denominator, only over edges where that mean exceeds ``REL_CUTOFF`` times
the component's maximum; the largest |x| kept is reported as ``radius``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .energy import FLOOR, ModelParams, Multipliers, energy_parts, multipliers, s_quantity, verify_lambda_identity
from .grid import Grid, GridSpec, build_grid
from .state import Constraints, SpinorState

REL_CUTOFF = 1e-12


@dataclass(frozen=True)
class VerificationResult:
    name: str
    lhs: float
    rhs: float
    gap: float
    satisfied: bool
    tolerance: float
    relation: str = "=="
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name, lhs, rhs, relation, tol, **details) -> VerificationResult:
    """``tol`` is relative to max(|lhs|, |rhs|) for every relation."""
    scale = max(abs(lhs), abs(rhs), FLOOR)
    gap = abs(lhs - rhs) / scale
    if relation == "==":
        ok = gap <= tol
    elif relation == "<=":
        ok = lhs <= rhs + tol * scale
    elif relation == ">=":
        ok = lhs >= rhs - tol * scale
    else:
        raise ValueError(relation)
    return VerificationResult(name, float(lhs), float(rhs), float(gap), bool(ok), tol, relation, details)


@dataclass(frozen=True)
class DecayFit:
    component: int
    t: float
    prefactor: float
    window: tuple[float, float]
    r2: float

    @property
    def accepted(self) -> bool:
        return self.r2 > 0.99 and self.t > 0


# -- edge helpers ------------------------------------------------------------


def _edge_mask(grid: Grid, den: np.ndarray) -> tuple[np.ndarray, ...]:
    cut = REL_CUTOFF * float(np.max(den)) if np.max(den) > 0 else np.inf
    return tuple(m > cut for m in grid.edge_mean(den))


def _edge_radius(grid: Grid, masks) -> float:
    r = 0.0
    for m, rad in zip(masks, grid.edge_mean(grid.radius)):
        if np.any(m):
            r = max(r, float(np.max(rad[m])))
    return r


def _quotient_edges(grid: Grid, num: tuple[np.ndarray, ...], den: np.ndarray, masks) -> float:
    """sum over kept edges of num / mean(den)^2, times the cell volume."""
    tot = 0.0
    for a, m, dm in zip(num, masks, grid.edge_mean(den)):
        tot += float(np.sum(np.where(m, a / np.maximum(dm * dm, FLOOR), 0.0)))
    return tot * grid.cell


def _node_mask(den: np.ndarray) -> np.ndarray:
    return den > REL_CUTOFF * float(np.max(den)) if np.max(den) > 0 else np.zeros(den.shape, bool)


# -- two-component inequality and the upper bound -----------------------------


def _twothree_terms(z: SpinorState, p: ModelParams, M: float):
    g = z.grid
    z1, _, zm = z.components
    tau = (1 + M) / (1 - M)
    first = 4 * p.beta_s * g.integrate(z1 * zm * (z1 - zm) * (tau * zm - z1))
    S = s_quantity(g, z1, zm)
    den = tuple(a * a + tau * b * b for a, b in zip(g.edge_mean(z1), g.edge_mean(zm)))
    rho_mean_max = float(np.max(np.sqrt(z1**2 + tau * zm**2)))
    masks = tuple(np.sqrt(d) > REL_CUTOFF * rho_mean_max for d in den)
    sterm = sum(float(np.sum(np.where(m, tau * s / np.maximum(d, FLOOR), 0.0))) for s, d, m in zip(S, den, masks)) * g.cell
    return tau, first, sterm, _edge_radius(g, masks)


def _check_2c(z: SpinorState, c: Constraints):
    if np.any(z.u0):
        raise ValueError("expected a two-component state (u0 = 0)")
    if not 0.0 < c.M < 1.0:
        raise ValueError("needs 0 < M < 1")


def verify_two_component_inequality(z: SpinorState, p: ModelParams, c: Constraints, tol: float = 0.0) -> VerificationResult:
    """Necessary condition for z to be the ground state at (M, q):

        4 beta_s int z1 z-1 (z1 - z-1)(tau z-1 - z1) >= q (1+M) + int tau S(z1, z-1) / (z1^2 + tau z-1^2)

    with tau = (1+M)/(1-M).  Failure certifies that some three-component
    state has lower energy.
    """
    _check_2c(z, c)
    tau, first, sterm, radius = _twothree_terms(z, p, c.M)
    return _result("two_component_inequality", first, p.q * (1 + c.M) + sterm, ">=", tol, tau=tau, radius=radius)


def upper_bound_U(z: SpinorState, p: ModelParams, c: Constraints) -> float:
    """Largest q for which the two-component inequality can hold on z."""
    _check_2c(z, c)
    _, first, sterm, _ = _twothree_terms(z, p, c.M)
    return (first - sterm) / (1 + c.M)


def uniform_U_bound(z: SpinorState, p: ModelParams, c: Constraints) -> float:
    """2 beta_s (1+M) max(z1)^2, which dominates upper_bound_U."""
    return 2 * p.beta_s * (1 + c.M) * float(np.max(z.u1)) ** 2


# -- three-component identities ------------------------------------------------


def _threetwo_sides(u: SpinorState, p: ModelParams):
    g = u.grid
    u1, u0, um1 = u.components
    keep = _node_mask(u1) & _node_mask(um1)
    prod = np.where(keep, u1 * um1, 1.0)
    ratio = np.where(keep, u0**2 / np.maximum(prod, FLOOR), 0.0)
    first = p.beta_s * g.integrate(np.where(keep, u0**2 * (u1 - um1) ** 2 * (2 + ratio), 0.0))
    sterm = 0.0
    radius = np.inf
    for uj in (u1, um1):
        masks = _edge_mask(g, uj)
        sterm += 0.5 * _quotient_edges(g, s_quantity(g, uj, u0), uj, masks)
        radius = min(radius, _edge_radius(g, masks))
    return first, sterm, radius


def verify_threetwo(u: SpinorState, p: ModelParams, c: Constraints | None = None, tol: float = 1e-3) -> VerificationResult:
    """q int u0^2 against beta_s int u0^2 (u1-u-1)^2 (2 + u0^2/(u1 u-1)) + 1/2 int sum_j S(u_j, u0)/u_j^2.

    ``satisfied`` is the inequality lhs >= rhs (relative slack ``tol``); on
    three-component ground states the two sides agree and ``gap`` measures
    by how much they do not.
    """
    lhs = p.q * u.grid.integrate(u.u0**2)
    if not np.any(u.u0):
        return _result("threetwo", lhs, 0.0, ">=", tol, radius=0.0)
    first, sterm, radius = _threetwo_sides(u, p)
    return _result("threetwo", lhs, first + sterm, ">=", tol, radius=radius, s_term=sterm)


def f_functional(u: SpinorState, p: ModelParams, eps_2c: float = 1e-8) -> float:
    """Ratio of the threetwo right-hand side to int u0^2.

    On a three-component ground state at parameter q it equals q.
    """
    m0 = u.grid.integrate(u.u0**2)
    if m0 < eps_2c:
        raise ValueError(f"u0 mass {m0:.3g} too small for a three-component quotient")
    first, sterm, _ = _threetwo_sides(u, p)
    return (first + sterm) / m0


def _sigma(u: SpinorState) -> float:
    a1, _, am1 = u.masses()
    return a1 / am1


def verify_sec52_equality(u: SpinorState, p: ModelParams, c: Constraints, tol: float = 1e-2) -> VerificationResult:
    """Stationarity along the sigma-weighted transfer of u+-1 mass into u0:

        4 beta_s int u1 u-1 (u1-u-1)(sigma u-1 - u1) + 2 beta_s int u0^2 (u1-u-1)(sigma u-1 - u1)
          = q int (u1^2 + sigma u-1^2) + int [S(u0,u1) + sigma S(u0,u-1)] / u0^2

    with sigma = int u1^2 / int u-1^2.
    """
    if not 0.0 < c.M < 1.0:
        raise ValueError("needs 0 < M < 1")
    g = u.grid
    u1, u0, um1 = u.components
    if not np.any(u0):
        raise ValueError("u0 vanishes; use verify_two_component_inequality")
    sig = _sigma(u)
    lhs = 4 * p.beta_s * g.integrate(u1 * um1 * (u1 - um1) * (sig * um1 - u1))
    lhs += 2 * p.beta_s * g.integrate(u0**2 * (u1 - um1) * (sig * um1 - u1))
    masks = _edge_mask(g, u0)
    num = tuple(a + sig * b for a, b in zip(s_quantity(g, u0, u1), s_quantity(g, u0, um1)))
    rhs = p.q * g.integrate(u1**2 + sig * um1**2) + _quotient_edges(g, num, u0, masks)
    return _result("sec52_equality", lhs, rhs, "==", tol, sigma=sig, radius=_edge_radius(g, masks))


def completed_square_chain(grid: Grid, u1, u0, um1, sigma: float):
    """Edge-wise terms of

        [S(u0,u1) + sigma S(u0,u-1)] / u0^2
            = (u1^2 + sigma u-1^2) |f - (u1 Du1 + sigma u-1 Du-1)/(u1^2 + sigma u-1^2)|^2
              + sigma S(u1,u-1) / (u1^2 + sigma u-1^2),      f = Du0 / u0,

    with every amplitude replaced by its edge mean.  Returns (lhs, square,
    rhs) as tuples of per-axis edge arrays; lhs = square + rhs >= rhs.
    """
    m1, m0, mm = grid.edge_mean(u1), grid.edge_mean(u0), grid.edge_mean(um1)
    d1, d0, dm = grid.grad(u1), grid.grad(u0), grid.grad(um1)
    S01, S0m, S1m = s_quantity(grid, u0, u1), s_quantity(grid, u0, um1), s_quantity(grid, u1, um1)
    lhs, sq, rhs = [], [], []
    for ax in range(grid.dim):
        w = m1[ax] ** 2 + sigma * mm[ax] ** 2
        f = d0[ax] / m0[ax]
        centre = (m1[ax] * d1[ax] + sigma * mm[ax] * dm[ax]) / w
        lhs.append((S01[ax] + sigma * S0m[ax]) / m0[ax] ** 2)
        sq.append(w * (f - centre) ** 2)
        rhs.append(sigma * S1m[ax] / w)
    return tuple(lhs), tuple(sq), tuple(rhs)


# -- qualitative checks --------------------------------------------------------


def check_qualitative(u: SpinorState, p: ModelParams, c: Constraints, m: Multipliers | None = None,
                      order_tol: float = 1e-10, identity_tol: float = 1e-3) -> list[VerificationResult]:
    g = u.grid
    u1, u0, um1 = u.components
    inner = g.interior
    out = []
    diff = u1 - um1
    dmin = float(np.min(diff))
    out.append(VerificationResult("ordering", dmin, 0.0, 0.0, dmin >= -order_tol, order_tol, ">="))
    if c.M > 0.0:
        gmin = float(np.min(diff[inner]))
        out.append(VerificationResult("strict_interior_gap", gmin, 0.0, 0.0, gmin > 0.0, 0.0, ">"))
    if 0.0 < c.M < 1.0:
        if m is None:
            m = multipliers(u, p)
        out.append(VerificationResult("lambda_positive", m.lam, 0.0, 0.0, m.lam > 0.0, 0.0, ">"))
        pos = float(min(np.min(u1[inner]), np.min(um1[inner])))
        out.append(VerificationResult("pm_components_positive", pos, 0.0, 0.0, pos > 0.0, 0.0, ">"))
        ident = verify_lambda_identity(u, p, m)
        out.append(VerificationResult("lambda_identity", ident["lhs"], ident["rhs"], ident["gap"],
                                      ident["gap"] <= identity_tol, identity_tol, "=="))
    if c.M == 0.0 and p.q > 0.0:
        a1, _, am1 = u.masses()
        worst = max(a1, am1)
        out.append(VerificationResult("pm_collapse", worst, 1e-10, 0.0, worst < 1e-10, 1e-10, "<"))
    return out


# -- tails -------------------------------------------------------------------------


def decay_fit(u: SpinorState, component: int, window: tuple[float, float] = (4.0, 7.0), floor: float = 1e-14) -> DecayFit:
    """Least-squares fit of log u_j against |x| on the window.

    ``component`` is 1, 0 or -1.  The prefactor is the smallest constant
    with u_j <= prefactor * exp(-t |x|) on the window.
    """
    idx = {1: 0, 0: 1, -1: 2}[component]
    f = u.components[idx]
    r = u.grid.radius
    lo, hi = window
    if not 0 <= lo < hi <= u.grid.extent:
        raise ValueError(f"window {window} must lie inside [0, {u.grid.extent}]")
    sel = (r >= lo) & (r <= hi)
    if np.count_nonzero(sel) < 3:
        raise ValueError("decay window holds fewer than three nodes")
    vals = f[sel]
    if np.any(vals <= floor):
        raise ValueError(f"component {component} falls below {floor:g} inside the window")
    x = r[sel]
    fit = stats.linregress(x, np.log(vals))
    t = -fit.slope
    pref = float(np.max(vals * np.exp(t * x)))
    return DecayFit(component, float(t), pref, (lo, hi), float(fit.rvalue**2))


# -- convexity ---------------------------------------------------------------------


def _cos_bump(grid: Grid, centre: float, width: float) -> np.ndarray:
    d = np.abs(grid.coords[0] - centre)
    for x in grid.coords[1:]:
        d = np.maximum(d, np.abs(x))
    return np.where(d < width, np.cos(0.5 * np.pi * d / width) ** 2, 0.0)


def midpoint_defect(u: SpinorState, v: SpinorState, p: ModelParams) -> float:
    """E[u]/2 + E[v]/2 - E[w] with w_j = sqrt((u_j^2 + v_j^2)/2)."""
    w = SpinorState.from_stack(u.grid, np.sqrt(0.5 * (u.stack() ** 2 + v.stack() ** 2)))
    return 0.5 * (energy_parts(u, p).total + energy_parts(v, p).total) - energy_parts(w, p).total


def convexity_counterexample(grid: Grid, p: ModelParams | None = None, width: float = 1.5,
                             masses: tuple[float, float] = (0.6, 0.2)) -> dict:
    """Midpoint defect for u = (f, g, h) and v = (f, h, g) with disjoint bumps.

    ``masses`` gives int f^2 and int g^2 = int h^2 (they sum to 1 with the
    second counted twice).  Returns the defect and its closed form
    -beta_s (int g^4 + int h^4) / 4.
    """
    p = ModelParams() if p is None else p
    mf, mg = masses
    if not np.isclose(mf + 2 * mg, 1.0):
        raise ValueError("masses must satisfy int f^2 + 2 int g^2 = 1")
    sep = grid.extent / 2
    f, gb, hb = (_cos_bump(grid, cx, width) for cx in (0.0, -sep, sep))
    if np.any((f > 0) & (gb > 0)) or np.any((f > 0) & (hb > 0)) or np.any((gb > 0) & (hb > 0)):
        raise ValueError("bumps overlap; reduce width")
    if 2 * width > sep - grid.h or sep + width >= grid.extent:
        raise ValueError("bumps do not fit disjointly on the grid")

    def norm(b, m):
        return b * np.sqrt(m / grid.integrate(b * b)) if m > 0 else np.zeros_like(b)

    f, gb, hb = norm(f, mf), norm(gb, mg), norm(hb, mg)
    u = SpinorState(grid, f, gb, hb)
    v = SpinorState(grid, f, hb, gb)
    D = midpoint_defect(u, v, p)
    closed = -p.beta_s * (grid.integrate(gb**4) + grid.integrate(hb**4)) / 4
    return {"D": D, "closed_form": closed, "gap": abs(D - closed)}


# -- exploratory tail probe -------------------------------------------------------------


def probe_sec63(u: SpinorState, p: ModelParams, tail_window: tuple[float, float] = (4.0, 7.0)) -> dict:
    """Both sides of the mixed u1/u-1 transfer comparison, without a verdict.

        lhs = int sigma S(u1,u-1)/u1^2 + S(u-1,u1)/u-1^2
        rhs = 2 beta_s int (u1^2 - u-1^2)(sigma u-1^2 - u1^2)(u0^2/(u1 u-1) + 2)

    Also reports the share of each side coming from |x| >= tail_window[0] and
    the ratios u0/u-1, u-1/u1 at |x| = tail_window[1].
    """
    g = u.grid
    u1, u0, um1 = u.components
    sig = _sigma(u)
    m1, mm = _edge_mask(g, u1), _edge_mask(g, um1)
    S = s_quantity(g, u1, um1)
    e_r = g.edge_mean(g.radius)
    tail_e = tuple(r >= tail_window[0] for r in e_r)

    def lhs_on(sel):
        return (_quotient_edges(g, tuple(sig * s * t for s, t in zip(S, sel)), u1, m1)
                + _quotient_edges(g, tuple(s * t for s, t in zip(S, sel)), um1, mm))

    keep = _node_mask(u1) & _node_mask(um1)
    prod = np.where(keep, u1 * um1, 1.0)
    dens = np.where(keep, (u1**2 - um1**2) * (sig * um1**2 - u1**2) * (u0**2 / np.maximum(prod, FLOOR) + 2), 0.0)
    tail_n = g.radius >= tail_window[0]
    lhs = lhs_on(tuple(np.ones_like(t, dtype=float) for t in tail_e))
    lhs_tail = lhs_on(tuple(t.astype(float) for t in tail_e))
    rhs = 2 * p.beta_s * g.integrate(dens)
    rhs_tail = 2 * p.beta_s * g.integrate(np.where(tail_n, dens, 0.0))
    k = int(np.argmin(np.abs(g.radius - tail_window[1]).ravel()))
    at = np.unravel_index(k, g.shape)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "both_finite": bool(np.isfinite(lhs) and np.isfinite(rhs)),
        "sigma": sig,
        "lhs_tail_share": lhs_tail / lhs if lhs else 0.0,
        "rhs_tail_share": rhs_tail / rhs if rhs else 0.0,
        "u0_over_um1": float(u0[at] / max(um1[at], FLOOR)),
        "um1_over_u1": float(um1[at] / max(u1[at], FLOOR)),
        "radius": min(_edge_radius(g, m1), _edge_radius(g, mm)),
    }


# -- refinement ------------------------------------------------------------------


def refinement_check(spec: GridSpec, measure, factor_required: float = 2.0) -> dict:
    """Evaluate ``measure(grid)`` (a gap) at n and 2n - 1 points.

    Passes when the gap shrinks by at least ``factor_required``.
    """
    coarse = measure(build_grid(spec))
    fine = measure(build_grid(GridSpec(spec.dim, spec.extent, 2 * spec.n - 1)))
    ratio = coarse / max(fine, FLOOR)
    return {"coarse": coarse, "fine": fine, "ratio": ratio, "passed": ratio >= factor_required}
