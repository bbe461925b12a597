"""Ground-state solvers.

The workhorse is a stabilised semi-implicit normalised gradient flow: the
linear part -Lap + V + alpha is treated implicitly, the nonlinear terms
explicitly, and every step is followed by ``project_constraints``.  With
alpha at least the largest diagonal nonlinear coefficient the update maps
nonnegative states to nonnegative states.

Close to a critical point the flow is finished off by Newton iterations on
the GP system augmented with the two constraints.  Newton is only used
strictly inside 0 < M < 1, where both multipliers are determined.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import (
    EnergyBreakdown,
    ModelParams,
    Multipliers,
    component_rayleigh,
    energy_parts,
    gp_apply,
    gp_residual,
    multipliers,
    nonlinear_terms,
)
from .grid import Grid
from .state import (
    Constraints,
    InfeasibleConstraints,
    SpinorState,
    gaussian_ansatz,
    project_constraints,
    random_admissible,
)

log = logging.getLogger(__name__)

EPS_2C = 1e-8


class NotConverged(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class SolveOptions:
    dt: float = 1e-2
    tol: float = 1e-9
    max_iter: int = 20000
    init: str = "gaussian"  # "gaussian", "random" or "warm"
    seed: int = 0
    warm: SpinorState | None = None
    dt_max: float = 20.0
    dt_growth: float = 1.5
    newton: bool = True
    newton_switch: float = 1e-3
    seed_u0: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.init not in ("gaussian", "random", "warm"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "warm" and self.warm is None:
            raise ValueError("warm init needs a state")


@dataclass
class SolveReport:
    state: SpinorState
    energy: EnergyBreakdown
    multipliers: Multipliers
    residual: float
    iterations: int
    classification: str
    u0_mass: float
    converged: bool = True
    newton_steps: int = 0
    M: float = 0.0
    q: float = 0.0
    energy_trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "q": self.q,
            "classification": self.classification,
            "u0_mass": self.u0_mass,
            "residual": self.residual,
            "iterations": self.iterations,
            "newton_steps": self.newton_steps,
            "converged": self.converged,
            "energy": self.energy.to_dict(),
            "multipliers": {"mu": self.multipliers.mu, "lambda": self.multipliers.lam},
        }


# -- multipliers and residuals used inside the solver ---------------------


def lsq_multipliers(s: SpinorState, gp) -> Multipliers:
    """(mu, lambda) minimising the summed squared GP residual.

    Coincides with the +-1 formula on two-component states and stays defined
    when components vanish.
    """
    u = s.components
    G = [float(np.vdot(a, b)) for a, b in zip(u, gp)]
    a = [float(np.vdot(x, x)) for x in u]
    A = np.array([[a[0] + a[1] + a[2], a[0] - a[2]], [a[0] - a[2], a[0] + a[2]]])
    b = np.array([G[0] + G[1] + G[2], G[0] - G[2]])
    sol = np.linalg.lstsq(A, b, rcond=1e-14)[0]
    return Multipliers(float(sol[0]), float(sol[1]))


def report_multipliers(s: SpinorState, p: ModelParams, M: float, gp=None) -> Multipliers:
    if 0.0 < M < 1.0:
        try:
            return multipliers(s, p)
        except ValueError:
            pass
    return lsq_multipliers(s, gp_apply(s, p) if gp is None else gp)


def classify(u0_mass: float) -> str:
    return "2C" if u0_mass < EPS_2C else "3C"


# -- flow --------------------------------------------------------------------


class _Implicit:
    """Factorised (1/dt + alpha - Lap + V) on interior nodes."""

    def __init__(self, grid: Grid, V: np.ndarray):
        self.grid = grid
        m = grid.n - 2
        d1 = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / grid.h**2
        eye = sp.identity(m)
        L = sp.csr_matrix((m**grid.dim, m**grid.dim))
        for ax in range(grid.dim):
            mats = [eye] * grid.dim
            mats[ax] = d1
            term = mats[0]
            for mm in mats[1:]:
                term = sp.kron(term, mm)
            L = L + term
        self.inner = (slice(1, -1),) * grid.dim
        self.A = (L + sp.diags(V[self.inner].ravel())).tocsc()
        self.key = None
        self.m = m

    def solve(self, rhs: np.ndarray, shift: float) -> np.ndarray:
        """Solve (shift + A) x = rhs for a stack of interior fields."""
        if self.key != shift:
            if self.grid.dim == 1:
                A = self.A
                self.band = np.zeros((3, self.m))
                self.band[0, 1:] = A.diagonal(1)
                self.band[1] = A.diagonal() + shift
                self.band[2, :-1] = A.diagonal(-1)
            else:
                n = self.A.shape[0]
                self.lu = spla.splu((self.A + shift * sp.identity(n, format="csc")).tocsc())
            self.key = shift
        k = rhs.shape[0]
        flat = rhs.reshape(k, -1).T
        if self.grid.dim == 1:
            x = scipy.linalg.solve_banded((1, 1), self.band, flat, check_finite=False)
        else:
            x = self.lu.solve(np.ascontiguousarray(flat))
        return x.T.reshape(rhs.shape)


def _stabiliser(u1, u0, um1, p: ModelParams) -> float:
    """Bound on the pointwise Hessian of the nonlinear energy density.

    Dominates the diagonal coefficients of the nonlinear terms too, which is
    what keeps the semi-implicit update sign preserving.
    """
    rho = u1**2 + u0**2 + um1**2
    bn, bs = p.beta_n, p.beta_s
    d = u1 - um1
    row1 = (np.abs(2 * bn * rho + 4 * bn * u1**2 + 2 * bs * (u0**2 + 3 * u1**2 - um1**2) + p.q)
            + np.abs(4 * bn * u1 * u0 + 4 * bs * u0 * d) + np.abs(4 * bn * u1 * um1 - 2 * bs * (u0**2 + 2 * u1 * um1)))
    row0 = (np.abs(4 * bn * u1 * u0 + 4 * bs * u0 * d) + np.abs(2 * bn * rho + 4 * bn * u0**2 + 2 * bs * d**2)
            + np.abs(4 * bn * u0 * um1 - 4 * bs * u0 * d))
    rowm1 = (np.abs(4 * bn * u1 * um1 - 2 * bs * (u0**2 + 2 * u1 * um1)) + np.abs(4 * bn * u0 * um1 - 4 * bs * u0 * d)
             + np.abs(2 * bn * rho + 4 * bn * um1**2 + 2 * bs * (u0**2 + 3 * um1**2 - u1**2) + p.q))
    return float(max(row1.max(), row0.max(), rowm1.max()))


def seed_middle(s: SpinorState, fraction: float) -> SpinorState:
    """Move roughly ``fraction`` of the mass into u0 without changing N or M.

    Uses u1^2 -> (1-d) u1^2, u-1^2 -> (1 - tau d) u-1^2, u0^2 += d (u1^2 + tau u-1^2)
    with tau = int u1^2 / int u-1^2.
    """
    a1, _, am1 = s.masses()
    if a1 <= 0 or am1 <= 0:
        return s
    tau = a1 / am1
    d = min(fraction / (2 * a1), 1.0, 1.0 / tau)
    u1, u0, um1 = s.components
    return SpinorState(
        s.grid,
        np.sqrt(1 - d) * u1,
        np.sqrt(u0**2 + d * (u1**2 + tau * um1**2)),
        np.sqrt(max(1 - tau * d, 0.0)) * um1,
    )


def initial_state(grid: Grid, c: Constraints, o: SolveOptions, two_component: bool) -> SpinorState:
    if o.init == "warm":
        s = o.warm
        if s.grid != grid:
            raise ValueError("warm state lives on a different grid")
        try:
            s = project_constraints(s, c)
        except InfeasibleConstraints:
            log.info("warm state infeasible for M=%g, restarting from gaussian", c.M)
            s = gaussian_ansatz(c, grid)
    elif o.init == "random":
        s = random_admissible(c, grid, o.seed)
    else:
        s = gaussian_ansatz(c, grid)
    if two_component:
        s = SpinorState(grid, s.u1, np.zeros_like(s.u0), s.um1)
        if c.M < 1.0 and s.masses()[2] <= 0.0:
            s = gaussian_ansatz(c, grid)
        return project_constraints(s, c)
    if 0.0 < c.M < 1.0 and s.masses()[1] < EPS_2C and o.seed_u0 > 0:
        s = seed_middle(s, o.seed_u0)
    elif c.M == 0.0 and s.masses()[1] < EPS_2C and o.seed_u0 > 0:
        s = SpinorState(grid, s.u1, grid.dirichlet(np.exp(-0.5 * grid.radius**2)) * 1e-2, s.um1)
    return project_constraints(s, c)


def _flow(s: SpinorState, p: ModelParams, c: Constraints, o: SolveOptions, two_component: bool):
    grid = s.grid
    V = p.potential(grid)
    imp = _Implicit(grid, V)
    inner = imp.inner
    dt = o.dt
    u = s.stack()
    E = energy_parts(s, p).total
    trace = [E]
    alpha = None
    it = 0
    newton_steps = 0
    next_newton = 0
    cooldown = 50
    newton_ok = o.newton and 0.0 < c.M < 1.0
    converged = False
    res = np.inf
    while it < o.max_iter:
        it += 1
        amax = _stabiliser(u[0], u[1], u[2], p)
        if alpha is None or amax > alpha:
            alpha = 1.1 * amax + 1e-12
        accepted = False
        nl = np.stack(nonlinear_terms(u[0], u[1], u[2], p))
        m = lsq_multipliers(s, gp_apply(s, p))
        kap = np.array([m.mu + m.lam, m.mu, m.mu - m.lam]).reshape((3,) + (1,) * grid.dim)
        force = kap * u - nl
        for _ in range(31):
            rhs = (1.0 / dt + alpha) * u + force
            rhs = rhs[(slice(None),) + inner]
            new = np.zeros_like(u)
            new[(slice(None),) + inner] = imp.solve(rhs, 1.0 / dt + alpha)
            np.maximum(new, 0.0, out=new)
            if two_component:
                new[1] = 0.0
            cand = project_constraints(SpinorState.from_stack(grid, new), c)
            E_new = energy_parts(cand, p).total
            if E_new <= E + 1e-13 * abs(E):
                accepted = True
                break
            dt *= 0.5
        if not accepted:
            log.debug("flow stalled after %d halvings at iteration %d", 30, it)
            break
        dE = E - E_new
        u = cand.stack()
        E = E_new
        trace.append(E)
        s = cand
        gp = gp_apply(s, p)
        m = report_multipliers(s, p, c.M, gp)
        res = gp_residual(s, p, m, gp)
        if dE < o.tol * dt and res < 10 * o.tol:
            converged = True
            break
        if newton_ok and res < o.newton_switch and it >= next_newton:
            polished, k = _try_newton(s, p, c, o, two_component, E)
            newton_steps += k
            if polished is not None:
                s, E = polished
                u = s.stack()
                trace.append(E)
                converged = True
                break
            next_newton = it + cooldown
            cooldown *= 2
        dt = min(dt * o.dt_growth, o.dt_max)
        log.debug("it %d dt %.3g E %.16g res %.3g", it, dt, E, res)
    return s, it, newton_steps, converged, trace


# -- Newton polish -----------------------------------------------------------


def _newton_system(s: SpinorState, p: ModelParams, c: Constraints, mu: float, lam: float, comps):
    """Residual vector and sparse Jacobian of the augmented GP system."""
    grid = s.grid
    inner = (slice(1, -1),) * grid.dim
    imp_A = _laplace_plus_v(grid, p)
    u1, u0, um1 = (x[inner].ravel() for x in s.components)
    w = grid.cell
    rho = u1**2 + u0**2 + um1**2
    bn, bs = p.beta_n, p.beta_s
    d = u1 - um1
    J = {
        (0, 0): 2 * bn * rho + 4 * bn * u1**2 + 2 * bs * (u0**2 + 3 * u1**2 - um1**2) + p.q - (mu + lam),
        (0, 1): 4 * bn * u1 * u0 + 4 * bs * u0 * d,
        (0, 2): 4 * bn * u1 * um1 - 2 * bs * (u0**2 + 2 * u1 * um1),
        (1, 1): 2 * bn * rho + 4 * bn * u0**2 + 2 * bs * d**2 - mu,
        (1, 2): 4 * bn * u0 * um1 - 4 * bs * u0 * d,
        (2, 2): 2 * bn * rho + 4 * bn * um1**2 + 2 * bs * (u0**2 + 3 * um1**2 - u1**2) + p.q - (mu - lam),
    }
    gp = [x[inner].ravel() for x in gp_apply(s, p)]
    uu = (u1, u0, um1)
    kap = (mu + lam, mu, mu - lam)
    jsgn = (1.0, 0.0, -1.0)
    F = [gp[j] - kap[j] * uu[j] for j in comps]
    blocks = []
    for a in comps:
        row = []
        for b in comps:
            key = (min(a, b), max(a, b))
            diag = sp.diags(J[key])
            row.append(imp_A + diag if a == b else diag)
        row.append(sp.csc_matrix(-uu[a].reshape(-1, 1)))
        row.append(sp.csc_matrix(-jsgn[a] * uu[a].reshape(-1, 1)))
        blocks.append(row)
    # constraint rows scaled by 1/(2w)
    blocks.append([sp.csr_matrix(uu[a].reshape(1, -1)) for a in comps] + [None, None])
    blocks.append([sp.csr_matrix(jsgn[a] * uu[a].reshape(1, -1)) for a in comps] + [None, None])
    Jm = sp.bmat(blocks, format="csc")
    N = w * sum(float(np.sum(uu[a] ** 2)) for a in comps)
    Mg = w * sum(jsgn[a] * float(np.sum(uu[a] ** 2)) for a in comps)
    F.append(np.array([(N - 1.0) / (2 * w), (Mg - c.M) / (2 * w)]))
    return np.concatenate(F), Jm


_LAP_CACHE: dict = {}


def _laplace_plus_v(grid: Grid, p: ModelParams):
    key = (grid.spec, p.gamma)
    if key not in _LAP_CACHE:
        _LAP_CACHE.clear()
        _LAP_CACHE[key] = _Implicit(grid, p.potential(grid)).A
    return _LAP_CACHE[key]


def _try_newton(s, p, c, o, two_component, E_flow, max_steps: int = 30):
    """Plain Newton on the augmented system, started from a flow iterate.

    Returns ((state, energy), steps) on success and (None, steps) otherwise.
    No line search: the first steps typically raise the residual while the
    slow mode is corrected.
    """
    grid = s.grid
    inner = (slice(1, -1),) * grid.dim
    comps = (0, 2) if two_component else (0, 1, 2)
    m = report_multipliers(s, p, c.M)
    mu, lam = m.mu, m.lam
    cur = s
    F, Jm = _newton_system(cur, p, c, mu, lam, comps)
    fn0 = fn = np.linalg.norm(F) / np.sqrt(F.size)
    size = (grid.n - 2) ** grid.dim
    steps = 0
    for steps in range(1, max_steps + 1):
        dx = spla.spsolve(Jm, -F)
        if not np.all(np.isfinite(dx)):
            return None, steps
        u = cur.stack().copy()
        for i, a in enumerate(comps):
            u[a][inner] += dx[i * size:(i + 1) * size].reshape((grid.n - 2,) * grid.dim)
        mu += dx[-2]
        lam += dx[-1]
        cur = SpinorState.from_stack(grid, u)
        F, Jm = _newton_system(cur, p, c, mu, lam, comps)
        fn = np.linalg.norm(F) / np.sqrt(F.size)
        if not np.isfinite(fn) or fn > 1e3 * max(fn0, 1e-6):
            return None, steps
        if fn < 0.1 * o.tol:
            break
    arr = cur.stack()
    # the energy only sees u0 through u0^2, so a one-signed u0 may be flipped
    if float(np.max(arr[1])) <= 0.0:
        arr[1] = -arr[1]
    scale = float(np.max(np.abs(arr)))
    if float(np.min(arr)) < -1e-9 * scale:
        log.debug("newton produced a sign change (min %.3g)", float(np.min(arr)))
        return None, steps
    arr = np.maximum(arr, 0.0)
    cur = project_constraints(SpinorState.from_stack(grid, arr), c)
    gp = gp_apply(cur, p)
    res = gp_residual(cur, p, report_multipliers(cur, p, c.M, gp), gp)
    if res >= 10 * o.tol:
        return None, steps
    E_new = energy_parts(cur, p).total
    if E_new > E_flow + 1e-10 * max(1.0, abs(E_flow)):
        return None, steps
    if not two_component and cur.masses()[1] < EPS_2C and u0_stability_gap(cur, p) < 0:
        log.debug("newton landed on an unstable two-component state")
        return None, steps
    return (cur, E_new), steps


def u0_stability_gap(s: SpinorState, p: ModelParams) -> float:
    """Lowest eigenvalue of (-Lap + V + 2 beta_n |u|^2 + 2 beta_s (u1 - u-1)^2) minus mu.

    For a two-component state this is the second variation of the energy when
    a little mass is moved into u0 with N and M held fixed; negative means the
    state is not a local minimiser.
    """
    grid = s.grid
    inner = (slice(1, -1),) * grid.dim
    u1, _, um1 = s.components
    pot = 2 * p.beta_n * (u1**2 + um1**2) + 2 * p.beta_s * (u1 - um1) ** 2
    A = _laplace_plus_v(grid, p)
    diag = A.diagonal() + pot[inner].ravel()
    if grid.dim == 1:
        ev = scipy.linalg.eigh_tridiagonal(diag, A.diagonal(1), select="i", select_range=(0, 0), eigvals_only=True)[0]
    else:
        H = A + sp.diags(pot[inner].ravel())
        ev = spla.eigsh(H, k=1, sigma=0, which="LM", return_eigenvectors=False)[0]
    (F1, _, Fm1), (a1, _, am1) = component_rayleigh(s, p)
    mu = 0.5 * (F1 / a1 + Fm1 / am1)
    return float(ev - mu)


# -- public API ----------------------------------------------------------------


def _report(s, p, c, it, newton_steps, converged, trace) -> SolveReport:
    gp = gp_apply(s, p)
    m = report_multipliers(s, p, c.M, gp)
    res = gp_residual(s, p, m, gp)
    u0m = s.masses()[1]
    return SolveReport(
        state=s,
        energy=energy_parts(s, p),
        multipliers=m,
        residual=res,
        iterations=it,
        classification=classify(u0m),
        u0_mass=u0m,
        converged=converged,
        newton_steps=newton_steps,
        M=c.M,
        q=p.q,
        energy_trace=trace,
    )


def solve_ground_state(p: ModelParams, c: Constraints, o: SolveOptions, grid: Grid) -> SolveReport:
    s = initial_state(grid, c, o, two_component=False)
    s, it, nsteps, conv, trace = _flow(s, p, c, o, two_component=False)
    rep = _report(s, p, c, it, nsteps, conv, trace)
    if not conv:
        log.warning("no convergence at M=%g q=%g after %d iterations (residual %.3g)", c.M, p.q, it, rep.residual)
    return rep


def solve_two_component(p: ModelParams, c: Constraints, o: SolveOptions, grid: Grid) -> SolveReport:
    """Minimise over states with u0 = 0.

    The Zeeman energy is the constant q on that class, so the flow runs at
    q = 0 and the result is re-evaluated at the requested q.
    """
    p0 = p.with_q(0.0)
    s = initial_state(grid, c, o, two_component=True)
    s, it, nsteps, conv, trace = _flow(s, p0, c, o, two_component=True)
    rep = _report(s, p, c, it, nsteps, conv, trace)
    return rep


def solve_multistart(p: ModelParams, c: Constraints, o: SolveOptions, grid: Grid, seeds: Iterable[int] = range(5), extra: Iterable[SolveReport] = ()):
    """Lowest-energy report over random seeds (plus any given candidates) and
    the largest pairwise L2 distance among the converged states."""
    reports = [solve_ground_state(p, c, replace(o, init="random", seed=k), grid) for k in seeds]
    reports.extend(extra)
    best = min(reports, key=lambda r: r.energy.total)
    disp = 0.0
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            disp = max(disp, reports[i].state.distance(reports[j].state))
    return best, disp, reports


def continuation(p: ModelParams, c: Constraints, o: SolveOptions, grid: Grid, sweep) -> list:
    """Solve along a list of (M, q), warm-starting each point from the last.

    Entries that raise are returned as the exception instance.
    """
    out = []
    prev = None
    for M, q in sweep:
        try:
            cc = Constraints(M)
            pp = p.with_q(q)
            oo = o if prev is None else replace(o, init="warm", warm=prev.state)
            rep = solve_ground_state(pp, cc, oo, grid)
            prev = rep
            out.append(rep)
        except (ValueError, RuntimeError) as exc:
            out.append(exc)
    return out
