"""Command-line entry points.

Configuration is a TOML file whose keys are flattened to dotted names
(``grid.n``, ``model.q`` ...), overridden by repeated ``--set key=value``.

Exit codes: 0 success, 2 configuration error, 3 solver did not converge,
4 a required verification failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import analysis, io
from .bifurcation import BifurcationOptions, phase_curve
from .energy import ModelParams, gp_apply, gp_residual
from .grid import GridSpec, build_grid
from .solver import EPS_2C, SolveOptions, report_multipliers, solve_ground_state, solve_two_component
from .state import Constraints, InfeasibleConstraints, SpinorState, project_constraints, random_admissible

log = logging.getLogger("spin1gs")

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_VERIFY = 0, 2, 3, 4

DEFAULTS = {
    "grid.dim": 1,
    "grid.extent": 8.0,
    "grid.n": 257,
    "trap.gamma": [1.0],
    "model.beta_n": 1.0,
    "model.beta_s": 0.5,
    "model.q": 0.0,
    "constraint.M": 0.5,
    "solver.dt": 1e-2,
    "solver.tol": 1e-9,
    "solver.max_iter": 20000,
    "solver.seed": 0,
    "solver.init": "gaussian",
    "bifurcation.bracket_tol": 1e-3,
    "output.dir": "out",
    "output.formats": ["json", "csv"],
}

SCAN_MS = [0.0, 0.25, 0.5, 0.75, 1.0]
SCAN_QS = [0.0, 0.5, 1.0, 2.0]


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------------


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path: str | None, sets: list[str] = (), out: str | None = None, seed: int | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg.update(_check_keys(_flatten(data)))
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg.update(_check_keys({k.strip(): _parse_value(v.strip())}))
    if out is not None:
        cfg["output.dir"] = out
    if seed is not None:
        cfg["solver.seed"] = seed
    if isinstance(cfg["trap.gamma"], (int, float)):
        cfg["trap.gamma"] = [cfg["trap.gamma"]]
    validate(cfg)
    return cfg


def _check_keys(d: dict) -> dict:
    unknown = sorted(set(d) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return d


def validate(cfg: dict) -> None:
    """Construct every domain object once so bad values fail before compute."""
    try:
        spec = GridSpec(int(cfg["grid.dim"]), float(cfg["grid.extent"]), int(cfg["grid.n"]))
        gamma = [float(g) for g in cfg["trap.gamma"]]
        if len(gamma) not in (1, spec.dim) or min(gamma) <= 0:
            raise ValueError("trap.gamma needs 1 or dim positive entries")
        model_params(cfg)
        Constraints(float(cfg["constraint.M"]))
        solve_options(cfg)
        BifurcationOptions(bracket_tol=float(cfg["bifurcation.bracket_tol"]))
        fmts = set(cfg["output.formats"])
        if not fmts <= {"json", "csv"}:
            raise ValueError(f"output.formats must be a subset of json, csv; got {sorted(fmts)}")
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def model_params(cfg: dict) -> ModelParams:
    return ModelParams(float(cfg["model.beta_n"]), float(cfg["model.beta_s"]), float(cfg["model.q"]),
                       tuple(float(g) for g in cfg["trap.gamma"]))


def solve_options(cfg: dict) -> SolveOptions:
    return SolveOptions(dt=float(cfg["solver.dt"]), tol=float(cfg["solver.tol"]), max_iter=int(cfg["solver.max_iter"]),
                        seed=int(cfg["solver.seed"]), init=str(cfg["solver.init"]))


def grid_of(cfg: dict):
    return build_grid(GridSpec(int(cfg["grid.dim"]), float(cfg["grid.extent"]), int(cfg["grid.n"])))


# -- output -----------------------------------------------------------------------


class Emitter:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.dir = Path(cfg["output.dir"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = io.config_hash(cfg)
        self.formats = set(cfg["output.formats"])

    def json(self, name: str, payload):
        if "json" not in self.formats:
            return
        if isinstance(payload, dict):
            payload = {"config_hash": self.hash, **payload}
        io.write_json(self.dir / name, payload)

    def state(self, name: str, s: SpinorState):
        if "csv" in self.formats:
            io.write_state(self.dir / name, s)

    def csv(self, name: str, header, rows, grid):
        if "csv" in self.formats:
            comment = io.grid_comment(grid) + f" config_hash={self.hash}"
            io.write_csv(self.dir / name, header, rows, comment)


# -- commands -----------------------------------------------------------------------


def _emit_solve(cfg, rep, em: Emitter) -> int:
    em.json("report.json", {"config": cfg, "report": rep.to_dict()})
    em.json("energy.json", rep.energy.to_dict())
    em.state("state.csv", rep.state)
    if not rep.converged:
        log.error("solver did not converge (residual %.3g after %d iterations)", rep.residual, rep.iterations)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_solve(cfg: dict, args) -> int:
    grid = grid_of(cfg)
    rep = solve_ground_state(model_params(cfg), Constraints(float(cfg["constraint.M"])), solve_options(cfg), grid)
    log.info("M=%g q=%g: %s, E=%.12g", rep.M, rep.q, rep.classification, rep.energy.total)
    return _emit_solve(cfg, rep, Emitter(cfg))


def cmd_solve2c(cfg: dict, args) -> int:
    grid = grid_of(cfg)
    rep = solve_two_component(model_params(cfg), Constraints(float(cfg["constraint.M"])), solve_options(cfg), grid)
    return _emit_solve(cfg, rep, Emitter(cfg))


def run_verifiers(s: SpinorState, p: ModelParams, c: Constraints) -> list[dict]:
    """All verifiers applicable to the state's regime.

    Each entry is a VerificationResult dict with a ``required`` flag, or a
    ``skipped`` entry carrying the reason.
    """
    out = []

    def add(res, required=True):
        d = res.to_dict()
        d["required"] = required
        out.append(d)

    def skip(name, reason):
        log.info("skipping %s: %s", name, reason)
        out.append({"name": name, "skipped": reason, "required": False})

    mult = report_multipliers(s, p, c.M)
    for r in analysis.check_qualitative(s, p, c, mult if 0.0 < c.M < 1.0 else None):
        add(r)
    gp = gp_apply(s, p)
    out.append({"name": "gp_residual", "value": gp_residual(s, p, mult, gp), "required": False})
    u0_mass = s.masses()[1]
    three = u0_mass >= EPS_2C
    if three:
        r = analysis.verify_threetwo(s, p, c)
        add(r)
        add(analysis._result("threetwo_equality", r.lhs, r.rhs, "==", 1e-3, **r.details))
        F = analysis.f_functional(s, p)
        add(analysis._result("f_functional", F, p.q, "==", 1e-3))
        if 0.0 < c.M < 1.0:
            add(analysis.verify_sec52_equality(s, p, c))
            probe = analysis.probe_sec63(s, p)
            out.append({"name": "sec63_probe", "required": False, **probe})
        else:
            skip("sec52_equality", "needs 0 < M < 1")
    else:
        skip("threetwo", "u0 vanishes (two-component state)")
        skip("f_functional", f"u0 mass {u0_mass:.3g} below {EPS_2C:g}")
        if 0.0 < c.M < 1.0 and not np.any(s.u0):
            add(analysis.verify_two_component_inequality(s, p, c), required=False)
    try:
        fit = analysis.decay_fit(s, 1)
        out.append({"name": "decay_u1", "required": False, "t": fit.t, "prefactor": fit.prefactor,
                    "r2": fit.r2, "window": list(fit.window), "accepted": fit.accepted})
    except ValueError as exc:
        skip("decay_u1", str(exc))
    return out


def cmd_verify(cfg: dict, args) -> int:
    try:
        s = io.read_state(args.state, grid_of(cfg))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read state: {exc}") from exc
    p, c = model_params(cfg), Constraints(float(cfg["constraint.M"]))
    results = run_verifiers(s, p, c)
    em = Emitter(cfg)
    if "json" in em.formats:
        io.write_json(em.dir / "verification.json", results)
    failed = [r for r in results if r.get("required") and not r.get("satisfied", True)]
    for r in failed:
        log.error("check failed: %s (lhs=%.6g rhs=%.6g gap=%.3g)", r["name"], r["lhs"], r["rhs"], r["gap"])
    return EXIT_VERIFY if failed else EXIT_OK


def _float_list(text: str | None, default) -> list[float]:
    if text is None:
        return list(default)
    items = [t for t in text.replace(" ", "").split(",") if t]
    try:
        return [float(t) for t in items]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def cmd_curve(cfg: dict, args) -> int:
    Ms = _float_list(args.ms, [])
    if not Ms:
        raise ConfigError("curve needs a nonempty --ms list")
    grid = grid_of(cfg)
    opts = BifurcationOptions(bracket_tol=float(cfg["bifurcation.bracket_tol"]), solve=solve_options(cfg))
    curve = phase_curve(Ms, model_params(cfg), opts, grid)
    em = Emitter(cfg)
    em.csv("curve.csv", ["M", "q_lo", "q_hi", "U"], [(b.M, b.q_lo, b.q_hi, b.U) for b in curve.points], grid)
    em.json("summary.json", {
        "qbar_est": curve.qbar_est,
        "U_max": curve.U_max,
        "U_uniform_max": curve.U_uniform_max,
        "points": [b.to_dict() for b in curve.points],
        "errors": {io.fmt(k): v for k, v in curve.errors.items()},
    })
    return EXIT_OK if curve.points else EXIT_NOCONV


def eg_surface(Ms, qs, p: ModelParams, o: SolveOptions, grid) -> np.ndarray:
    """Ground energies on an (M, q) grid; each entry is the lower of the full
    solve and the two-component state (whose energy is affine in q)."""
    E = np.empty((len(Ms), len(qs)))
    for i, M in enumerate(Ms):
        c = Constraints(M)
        e2c = solve_two_component(p.with_q(0.0), c, o, grid).energy.total
        for j, q in enumerate(qs):
            rep = solve_ground_state(p.with_q(q), c, o, grid)
            E[i, j] = min(rep.energy.total, e2c + q)
    return E


def eg_checks(Ms, qs, E: np.ndarray, slack: float = 1e-10) -> dict:
    Ms, qs = np.asarray(Ms), np.asarray(qs)
    dM = np.diff(E, axis=0)
    dq = np.diff(E, axis=1)
    lip = float(np.max(np.abs(dq) / np.diff(qs)[None, :])) if len(qs) > 1 else 0.0
    checks = {
        "monotone_M": bool(np.all(dM >= -slack)),
        "monotone_q": bool(np.all(dq >= -slack)),
        "lipschitz_q": lip,
        "lipschitz_ok": lip <= 1 + 1e-8,
    }
    if 0.0 in Ms:
        row = E[list(Ms).index(0.0)][qs > 0]
        spread = float(np.ptp(row)) if row.size else 0.0
        checks["eg0_spread"] = spread
        checks["eg0_constant"] = spread <= 1e-8
    return checks


def cmd_scan_eg(cfg: dict, args) -> int:
    Ms = _float_list(args.ms, SCAN_MS)
    qs = _float_list(args.qs, SCAN_QS)
    if not Ms or not qs:
        raise ConfigError("scan-eg needs nonempty M and q lists")
    if any(np.diff(Ms) <= 0) or any(np.diff(qs) <= 0):
        raise ConfigError("M and q lists must be strictly increasing")
    for M in Ms:
        Constraints(M)
    grid = grid_of(cfg)
    E = eg_surface(Ms, qs, model_params(cfg), solve_options(cfg), grid)
    checks = eg_checks(Ms, qs, E)
    em = Emitter(cfg)
    em.csv("eg.csv", ["M", "q", "E_g"], [(M, q, E[i, j]) for i, M in enumerate(Ms) for j, q in enumerate(qs)], grid)
    em.json("eg_summary.json", {"Ms": Ms, "qs": qs, "E_g": E.tolist(), "checks": checks})
    ok = checks["monotone_M"] and checks["monotone_q"] and checks["lipschitz_ok"] and checks.get("eg0_constant", True)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_counterexample(cfg: dict, args) -> int:
    grid = grid_of(cfg)
    p = model_params(cfg)
    res = analysis.convexity_counterexample(grid, p)
    rng_seed = int(cfg["solver.seed"])
    worst = np.inf
    for k in range(args.pairs):
        M = np.random.default_rng([rng_seed, k]).uniform(0.0, 0.95)
        c = Constraints(M)
        u, v = (random_admissible(c, grid, seed=1000 * rng_seed + 2 * k + j) for j in (0, 1))
        u = SpinorState(grid, u.u1, np.zeros_like(u.u0), u.um1)
        v = SpinorState(grid, v.u1, np.zeros_like(v.u0), v.um1)
        try:
            u, v = project_constraints(u, c), project_constraints(v, c)
        except InfeasibleConstraints:
            continue
        worst = min(worst, analysis.midpoint_defect(u, v, p))
    payload = {**res, "two_component_min_defect": worst, "pairs": args.pairs}
    Emitter(cfg).json("counterexample.json", payload)
    ok = res["D"] < 0 and res["gap"] <= 1e-10 and worst >= -1e-10
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "solve": cmd_solve,
    "solve2c": cmd_solve2c,
    "verify": cmd_verify,
    "curve": cmd_curve,
    "scan-eg": cmd_scan_eg,
    "counterexample": cmd_counterexample,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides solver.seed)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="spin1gs", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="three-component ground state")
    sub.add_parser("solve2c", parents=[common], help="two-component (u0 = 0) minimiser")
    v = sub.add_parser("verify", parents=[common], help="run the verifiers on a saved state")
    v.add_argument("state", help="state CSV written by solve")
    cu = sub.add_parser("curve", parents=[common], help="threshold q_c(M) for a list of M")
    cu.add_argument("--ms", default=None, help="comma separated magnetisations in (0, 1)")
    sc = sub.add_parser("scan-eg", parents=[common], help="ground energy surface with monotonicity checks")
    sc.add_argument("--ms", default=None, help="comma separated M values")
    sc.add_argument("--qs", default=None, help="comma separated q values")
    ce = sub.add_parser("counterexample", parents=[common], help="midpoint-convexity defect demo")
    ce.add_argument("--pairs", type=int, default=50, help="random two-component pairs to test")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set, args.out, args.seed)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
