"""Command-line entry point orchestrating the full pipeline.

Subcommands: validate, linearize, stagesets, terminal, prune, solve,
simulate, grid, repro. Exit codes: 0 success, 1 validation or assumption
failure, 2 solver failure, 3 I/O, schema, or catalog-consistency error.
Errors are mirrored as one-line JSON on stderr for machine consumption.
"""
import argparse
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .closedloop import sample_grid, simulate
from .errors import CatalogMismatchError, SchemaError, ToolkitError
from .linearize import build_linearization, compute_output_vector
from .model import load_system, validate_assumption1
from .scenario import (FeasibleCatalog, Scenario, catalog_hash, decode,
                       filter_for_state, prune_catalog)
from .solver import SolverConfig, assemble, solve
from .stagesets import build_stage_sets
from .terminal import build_terminal, verify_terminal_axioms
from .linearize import u_of_v

PAPER_DEFS = {"b0": 0.1, "c": (5.0, -1.0), "q_diag": 0.05, "horizon": 15}


def _fmt(x):
    return format(float(x), ".17g")


def _parse_vec(text):
    return np.array([float(t) for t in text.split(",")], dtype=float)


@dataclass
class RunConfig:
    """Everything a pipeline run needs, mirroring the common CLI flags."""

    system: str
    horizon: int = 15
    q_diag: float = 0.05
    rho: float = None          # None: 0.1 b0^2 / beta^2
    b0: float = 0.1
    c: np.ndarray = None       # None: solve for beta_target
    beta_target: float = 1.0
    a: np.ndarray = None       # None: characteristic polynomial
    eps_g: float = 1e-9
    feas_tol: float = 1e-7
    kkt_tol: float = 1e-8
    terminal_kind: str = "auto"
    catalog: str = None
    out: str = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise SchemaError("horizon must be >= 1")
        for name in ("eps_g", "feas_tol", "kkt_tol"):
            if getattr(self, name) <= 0:
                raise SchemaError(f"{name} must be positive")
        if self.q_diag < 0:
            raise SchemaError("state weight must be PSD")


def config_from_args(args):
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("NMPC_THREADS", "0")) or (os.cpu_count() or 1)
    return RunConfig(
        system=args.system,
        horizon=getattr(args, "horizon", 15),
        q_diag=args.q,
        rho=args.rho,
        b0=args.b0,
        c=_parse_vec(args.c) if args.c else None,
        beta_target=args.beta_target,
        a=None if args.a == "charpoly" else _parse_vec(args.a),
        eps_g=args.eps_g,
        feas_tol=args.feas_tol,
        kkt_tol=args.kkt_tol,
        terminal_kind=args.terminal,
        catalog=getattr(args, "catalog", None),
        out=getattr(args, "out", None),
        seed=args.seed,
        threads=threads,
    )


@dataclass
class Pipeline:
    spec: object
    lin: object
    zsets: list
    terminal: object
    Q: np.ndarray
    rho: float
    solver_cfg: SolverConfig
    cfg: RunConfig


def build_pipeline(cfg, need_terminal=True):
    spec = load_system(cfg.system)
    c = cfg.c
    if c is None:
        c = compute_output_vector(spec.A, spec.b, cfg.beta_target)
    lin = build_linearization(spec, c, b0=cfg.b0, a=cfg.a)
    zsets = build_stage_sets(spec, lin, seed=cfg.seed)
    Q = cfg.q_diag * np.eye(spec.n)
    rho = cfg.rho if cfg.rho is not None else 0.1 * cfg.b0 ** 2 / lin.beta ** 2
    solver_cfg = SolverConfig(feas_tol=cfg.feas_tol, kkt_tol=cfg.kkt_tol)
    term = None
    if need_terminal:
        term = build_terminal(spec, lin, zsets, Q, rho,
                              kind=cfg.terminal_kind, seed=cfg.seed)
    return Pipeline(spec=spec, lin=lin, zsets=zsets, terminal=term, Q=Q,
                    rho=rho, solver_cfg=solver_cfg, cfg=cfg)


def _emit(text, path=None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump_json(obj, path=None):
    _emit(json.dumps(obj, sort_keys=True, indent=1) + "\n", path)


def _load_catalog_checked(pipe):
    path = pipe.cfg.catalog
    if not path:
        raise SchemaError("a catalog file is required (--catalog)")
    catalog = FeasibleCatalog.load(path)
    expect = catalog_hash(pipe.spec, pipe.lin, pipe.terminal,
                          pipe.solver_cfg.feas_tol)
    if catalog.content_hash != expect:
        raise CatalogMismatchError(
            "catalog was pruned against different data "
            f"(stored {catalog.content_hash}, expected {expect})")
    if catalog.N < pipe.cfg.horizon:
        raise SchemaError(
            f"catalog horizon {catalog.N} is shorter than requested "
            f"{pipe.cfg.horizon}")
    return catalog


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args):
    cfg = config_from_args(args)
    spec = load_system(cfg.system)
    report = validate_assumption1(spec, n_samples=args.samples, seed=cfg.seed)
    print(report.summary())
    return 0 if report.ok else 1


def cmd_linearize(args):
    cfg = config_from_args(args)
    pipe = build_pipeline(cfg, need_terminal=False)
    _dump_json(pipe.lin.to_dict(), cfg.out)
    return 0


def cmd_stagesets(args):
    cfg = config_from_args(args)
    pipe = build_pipeline(cfg, need_terminal=False)
    lines = []
    n = pipe.spec.n
    header = ",".join(["i"] + [f"x{k + 1}" for k in range(n)]
                      + ["u_i_lo", "u_i_hi"])
    for zs in pipe.zsets:
        lines.append(f"# Z_{zs.index} class={zs.kind} "
                     f"sign={zs.sign_beta_g:+d}")
    lines.append(header)
    for zs in pipe.zsets:
        lo, hi = zs.region.bounding_box()
        axes = [np.linspace(lo[k], hi[k], args.resolution) for k in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        for x in np.column_stack([m.ravel() for m in mesh]):
            if not zs.region.contains(x, 1e-9):
                continue
            blo, bhi = zs.bound_interval(x)
            lines.append(",".join([str(zs.index)] + [_fmt(v) for v in x]
                                  + [_fmt(blo), _fmt(bhi)]))
    _emit("\n".join(lines) + "\n", cfg.out)
    return 0


def cmd_terminal(args):
    cfg = config_from_args(args)
    pipe = build_pipeline(cfg)
    term = pipe.terminal
    out = {"P": term.P.tolist(), "kappa": term.kappa.tolist(),
           "kind": term.kind}
    if term.kind == "polytope":
        out["C"] = term.tset.C.tolist()
        out["d"] = term.tset.d.tolist()
    else:
        out["shape"] = term.tset.P_shape.tolist()
        out["level"] = term.tset.level
    if args.check_axioms:
        rep = verify_terminal_axioms(term, pipe.zsets, pipe.Q, pipe.rho,
                                     n_samples=args.samples, seed=cfg.seed)
        out["axioms"] = rep.to_dict()
    _dump_json(out, cfg.out)
    return 0


def _default_catalog_path(cfg):
    stem = os.path.splitext(os.path.basename(cfg.system))[0]
    return cfg.catalog or f"{stem}.catalog.json"


def cmd_prune(args):
    cfg = config_from_args(args)
    pipe = build_pipeline(cfg)
    path = _default_catalog_path(cfg)
    start_levels = None
    if args.resume and os.path.exists(path):
        stored = FeasibleCatalog.load(path)
        expect = catalog_hash(pipe.spec, pipe.lin, pipe.terminal,
                              pipe.solver_cfg.feas_tol)
        if stored.content_hash != expect:
            raise CatalogMismatchError(
                "refusing to resume: stored catalog was pruned against "
                f"different data (stored {stored.content_hash}, "
                f"expected {expect})")
        start_levels = stored.levels
    catalog = prune_catalog(
        pipe.spec, pipe.lin, pipe.zsets, pipe.terminal, cfg.horizon,
        solver_cfg=pipe.solver_cfg, n_workers=cfg.threads,
        start_levels=start_levels,
        progress=lambda lvl, cnt: print(f"level {lvl}: {cnt} feasible",
                                        file=sys.stderr))
    catalog.save(path)
    print(f"catalog with {catalog.count()} feasible scenarios at horizon "
          f"{catalog.N} written to {path}")
    return 0


def _solution_dict(pipe, x, sol):
    out = {"j": sol.scenario_j, "status": sol.status,
           "class": sol.prog_class, "nonconvex": sol.nonconvex_flag}
    if sol.optimal:
        v_seq = [float(v) for v in sol.v_seq]
        u_seq = [u_of_v(pipe.lin, pipe.spec, xs, v)
                 for xs, v in zip(sol.x_traj[:-1], v_seq)]
        out.update({"V": sol.V, "v_seq": v_seq, "u_seq": u_seq,
                    "kkt_residual": sol.kkt_residual})
    else:
        out["phase1_violation"] = sol.phase1_violation
    return out


def cmd_solve(args):
    cfg = config_from_args(args)
    pipe = build_pipeline(cfg)
    catalog = _load_catalog_checked(pipe)
    x = _parse_vec(args.x0)
    if args.scenario is not None:
        coeffs = decode(args.scenario, catalog.s, cfg.horizon)
        cands = [Scenario(coeffs, catalog.s)]
    else:
        cands = filter_for_state(catalog, pipe.spec, x,
                                 horizon=cfg.horizon)
    results = []
    for sc in cands:
        prog = assemble(sc, x, pipe.spec, pipe.lin, pipe.zsets,
                        pipe.terminal, pipe.Q, pipe.rho)
        results.append(_solution_dict(pipe, x, solve(prog, pipe.solver_cfg)))
    _dump_json(results if args.all_feasible else results[0], cfg.out)
    optimal = [r for r in results if r["status"] == "Optimal"]
    return 0 if optimal else 2


def cmd_simulate(args):
    cfg = config_from_args(args)
    pipe = build_pipeline(cfg)
    catalog = _load_catalog_checked(pipe)
    traj = simulate(_parse_vec(args.x0), args.steps, catalog, pipe.spec,
                    pipe.lin, pipe.zsets, pipe.terminal, pipe.Q, pipe.rho,
                    cfg=pipe.solver_cfg)
    _emit(traj.to_csv(), cfg.out)
    return 0


def cmd_grid(args):
    cfg = config_from_args(args)
    pipe = build_pipeline(cfg)
    catalog = _load_catalog_checked(pipe)
    table = sample_grid(args.resolution, catalog, pipe.spec, pipe.lin,
                        pipe.zsets, pipe.terminal, pipe.Q, pipe.rho,
                        cfg=pipe.solver_cfg, n_workers=cfg.threads,
                        keep_per_scenario=args.per_scenario)
    _emit(table.to_csv(), cfg.out)
    return 0


# reported reference values for the shipped example systems
_REPRO_REFERENCE = {
    "beta": 0.024,
    "b_hat": (0.0416667, 0.2083333),
    "rho": 1.7361,
    "counts": {"ex1": 1, "ex2": 31, "ex3": 217},
}


def _packaged_system(name):
    ref = resources.files("convexnmpc").joinpath(f"data/{name}.json")
    return str(ref)


def cmd_repro(args):
    name = args.example
    system = args.system or _packaged_system(name)
    cfg = RunConfig(system=system, horizon=args.horizon,
                    q_diag=PAPER_DEFS["q_diag"], b0=PAPER_DEFS["b0"],
                    c=np.array(PAPER_DEFS["c"]), threads=args.threads or 1)
    pipe = build_pipeline(cfg)
    rows = []

    def row(name, computed, reference, marker):
        rows.append((name, computed, reference, marker))

    lin = pipe.lin
    row("beta", _fmt(lin.beta), "0.024",
        "PASS" if abs(lin.beta - _REPRO_REFERENCE["beta"]) <= 1e-12 else "FAIL")
    bh_ok = np.all(np.abs(lin.b_hat - np.array(_REPRO_REFERENCE["b_hat"]))
                   <= 1e-6)
    row("b_hat", "(" + ", ".join(_fmt(v) for v in lin.b_hat) + ")",
        "(0.0416667, 0.2083333)", "PASS" if bh_ok else "FAIL")
    row("A_hat = A", _fmt(float(np.max(np.abs(lin.A_hat - pipe.spec.A)))),
        "0 (1e-10)",
        "PASS" if np.max(np.abs(lin.A_hat - pipe.spec.A)) <= 1e-10 else "FAIL")
    row("alpha", _fmt(float(np.max(np.abs(lin.alpha)))), "0 (1e-10)",
        "PASS" if np.max(np.abs(lin.alpha)) <= 1e-10 else "FAIL")
    row("rho", _fmt(pipe.rho), "1.7361",
        "PASS" if abs(pipe.rho - _REPRO_REFERENCE["rho"]) <= 1e-3 else "FAIL")

    catalog = prune_catalog(pipe.spec, pipe.lin, pipe.zsets, pipe.terminal,
                            cfg.horizon, solver_cfg=pipe.solver_cfg,
                            n_workers=cfg.threads)
    count = catalog.count()
    ref_count = _REPRO_REFERENCE["counts"][name]
    if cfg.horizon != PAPER_DEFS["horizon"]:
        marker = "N-A"
    elif name == "ex1":
        marker = "PASS" if count == 1 else "FAIL"
    elif name == "ex2":
        marker = ("PASS" if count == ref_count
                  else "INFO" if 25 <= count <= 40 else "FAIL")
    else:
        # the shipped gain surface is a stand-in; the reference count is not
        # reproducible from the available definitions
        marker = "N-A"
    row("feasible scenarios", str(count), str(ref_count), marker)

    w0 = max(len(r[0]) for r in rows + [("quantity",)])
    w1 = max(len(r[1]) for r in rows + [(None, "computed")])
    w2 = max(len(r[2]) for r in rows + [(None, None, "reference")])
    print(f"{'quantity':<{w0}}  {'computed':>{w1}}  {'reference':>{w2}}  mark")
    for r in rows:
        print(f"{r[0]:<{w0}}  {r[1]:>{w1}}  {r[2]:>{w2}}  {r[3]}")
    if args.catalog:
        catalog.save(args.catalog)
        print(f"catalog written to {args.catalog}")
    return 0 if all(r[3] != "FAIL" for r in rows) else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p, horizon=True):
    p.add_argument("system", help="system description JSON file")
    p.add_argument("--c", default=None,
                   help="output vector, comma-separated (default: solved "
                        "from --beta-target)")
    p.add_argument("--beta-target", type=float, default=1.0)
    p.add_argument("--b0", type=float, default=PAPER_DEFS["b0"])
    p.add_argument("--a", default="charpoly",
                   help="feedback coefficients, comma-separated or 'charpoly'")
    p.add_argument("--q", type=float, default=PAPER_DEFS["q_diag"],
                   help="state weight Q = q*I")
    p.add_argument("--rho", type=float, default=None,
                   help="input weight (default 0.1 b0^2/beta^2)")
    p.add_argument("--eps-g", type=float, default=1e-9)
    p.add_argument("--feas-tol", type=float, default=1e-7)
    p.add_argument("--kkt-tol", type=float, default=1e-8)
    p.add_argument("--terminal", choices=("auto", "polytope", "ellipsoid"),
                   default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: NMPC_THREADS or all cores)")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    if horizon:
        p.add_argument("--horizon", type=int, default=PAPER_DEFS["horizon"])


def make_parser():
    parser = argparse.ArgumentParser(
        prog="convexnmpc",
        description="Convex scenario reformulation of NMPC for input-affine "
                    "systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the system-class assumptions")
    _add_common(p, horizon=False)
    p.add_argument("--samples", type=int, default=256)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("linearize", help="print the exact linearization")
    _add_common(p, horizon=False)
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("stagesets", help="emit stage-set classes and bounds")
    _add_common(p, horizon=False)
    p.add_argument("--resolution", type=int, default=11)
    p.set_defaults(func=cmd_stagesets)

    p = sub.add_parser("terminal", help="compute terminal ingredients")
    _add_common(p, horizon=False)
    p.add_argument("--check-axioms", action="store_true")
    p.add_argument("--samples", type=int, default=2000)
    p.set_defaults(func=cmd_terminal)

    p = sub.add_parser("prune", help="offline scenario-tree pruning")
    _add_common(p)
    p.add_argument("--catalog", default=None)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("solve", help="solve the subproblems at one state")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--catalog", default=None)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--scenario", type=int, default=None)
    group.add_argument("--all-feasible", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="closed-loop run of the true plant")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--catalog", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="sample the state space to CSV")
    _add_common(p)
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--per-scenario", action="store_true")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("repro",
                       help="run a shipped example and compare to the "
                            "reference values")
    p.add_argument("example", choices=("ex1", "ex2", "ex3"))
    p.add_argument("--system", default=None,
                   help="override the packaged system file")
    p.add_argument("--horizon", type=int, default=PAPER_DEFS["horizon"])
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--catalog", default=None,
                   help="also save the pruned catalog")
    p.set_defaults(func=cmd_repro)

    return parser


def run(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}),
              file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "IO", "message": str(exc)}),
              file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(json.dumps({"error": "SCHEMA", "message": str(exc)}),
              file=sys.stderr)
        return 3


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
