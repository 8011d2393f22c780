"""Online evaluation: scenario sweep per state, receding-horizon simulation,
and state-space grids for plotting.

The simulator always propagates the true nonlinear plant; the linear
prediction model lives only inside the optimal control problems. Ties
between equally optimal scenarios are broken toward the smallest index so
results are independent of solve order.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleStateError
from .linearize import u_of_v
from .model import dynamics_step
from .scenario import filter_for_state
from .solver import SolverConfig, assemble, solve

TIE_TOL = 1e-9


@dataclass
class MpcStepResult:
    u: float
    v: float
    j_star: int
    V: float
    n_scenarios_solved: int
    per_scenario: list = None


def _fmt(x):
    return format(float(x), ".17g")


@dataclass
class Trajectory:
    x: np.ndarray       # (steps+1, n) visited states
    u: np.ndarray       # (steps,) applied inputs
    v: np.ndarray       # (steps,) artificial inputs
    V: np.ndarray       # (steps,) optimal values
    j_star: np.ndarray  # (steps,) chosen scenarios

    @property
    def steps(self):
        return self.u.shape[0]

    def to_csv(self):
        n = self.x.shape[1]
        header = ",".join(["k"] + [f"x{i + 1}" for i in range(n)]
                          + ["u", "v", "V", "j_star"])
        lines = [header]
        for k in range(self.steps):
            cells = [str(k)] + [_fmt(c) for c in self.x[k]]
            cells += [_fmt(self.u[k]), _fmt(self.v[k]), _fmt(self.V[k]),
                      str(int(self.j_star[k]))]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


@dataclass
class GridTable:
    points: np.ndarray    # (m, n)
    feasible: np.ndarray  # (m,) 0/1
    u_star: np.ndarray    # (m,) nan when infeasible
    V_star: np.ndarray
    j_star: np.ndarray    # 0 when infeasible
    per_scenario: dict = field(default_factory=dict)

    def to_csv(self):
        n = self.points.shape[1]
        header = ",".join([f"x{i + 1}" for i in range(n)]
                          + ["feasible", "u_star", "V_star", "j_star"])
        extra = sorted(self.per_scenario)
        if extra:
            header += "," + ",".join(f"feas_j{j}" for j in extra)
        lines = [header]
        for m in range(self.points.shape[0]):
            cells = [_fmt(c) for c in self.points[m]]
            cells.append(str(int(self.feasible[m])))
            cells += [_fmt(self.u_star[m]), _fmt(self.V_star[m]),
                      str(int(self.j_star[m]))]
            cells += [str(int(self.per_scenario[j][m])) for j in extra]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def evaluate_ocp(x, catalog, spec, lin, zsets, terminal, Q, rho,
                 cfg=None, tol=1e-8, keep_per_scenario=False):
    """Solve every candidate scenario at state x and pick the best.

    Candidates are the catalog scenarios whose first region contains x. The
    reported input is recovered through the linearizing feedback, falling
    back to u = 0 where the input gain vanishes.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float)
    candidates = filter_for_state(catalog, spec, x, tol)
    best = None
    per = [] if keep_per_scenario else None
    n_solved = 0
    for sc in candidates:
        prog = assemble(sc, x, spec, lin, zsets, terminal, Q, rho)
        sol = solve(prog, cfg)
        n_solved += 1
        if keep_per_scenario:
            per.append((sc.j, sol.status, sol.V))
        if not sol.optimal:
            continue
        if best is None or sol.V < best[1].V - TIE_TOL:
            best = (sc, sol)
        # ties (within TIE_TOL) keep the earlier, smaller-j candidate
    if best is None:
        raise InfeasibleStateError(
            "no candidate scenario is feasible at the query state",
            details_x=x.tolist())
    sc, sol = best
    v0 = float(sol.v_seq[0])
    return MpcStepResult(u=u_of_v(lin, spec, x, v0), v=v0, j_star=sc.j,
                         V=sol.V, n_scenarios_solved=n_solved,
                         per_scenario=per)


def simulate(x0, steps, catalog, spec, lin, zsets, terminal, Q, rho,
             cfg=None, tol=1e-8):
    """Receding-horizon run of the true plant from x0.

    Raises InfeasibleStateError (with the step index and the partial
    trajectory attached) if some visited state has no feasible scenario.
    """
    x = np.asarray(x0, dtype=float)
    xs = [x.copy()]
    us, vs, Vs, js = [], [], [], []
    for k in range(steps):
        try:
            step = evaluate_ocp(x, catalog, spec, lin, zsets, terminal,
                                Q, rho, cfg=cfg, tol=tol)
        except InfeasibleStateError as exc:
            exc.step = k
            exc.partial = Trajectory(x=np.array(xs), u=np.array(us),
                                     v=np.array(vs), V=np.array(Vs),
                                     j_star=np.array(js, dtype=int))
            raise
        x = dynamics_step(spec, x, step.u)
        xs.append(x.copy())
        us.append(step.u)
        vs.append(step.v)
        Vs.append(step.V)
        js.append(step.j_star)
    return Trajectory(x=np.array(xs), u=np.array(us), v=np.array(vs),
                      V=np.array(Vs), j_star=np.array(js, dtype=int))


_GRID_WORKER = {}


def _grid_init(args):
    _GRID_WORKER["args"] = args


def _grid_eval(point):
    args = _GRID_WORKER["args"]
    return _grid_point(point, *args)


def _grid_point(point, catalog, spec, lin, zsets, terminal, Q, rho, cfg,
                tol, keep_per_scenario):
    if not spec.in_state_set(point, tol):
        return (0, np.nan, np.nan, 0, [])
    try:
        step = evaluate_ocp(point, catalog, spec, lin, zsets, terminal, Q,
                            rho, cfg=cfg, tol=tol,
                            keep_per_scenario=keep_per_scenario)
    except InfeasibleStateError:
        return (0, np.nan, np.nan, 0, [])
    per = [(j, status) for j, status, _ in step.per_scenario or []]
    return (1, step.u, step.V, step.j_star, per)


def sample_grid(resolution, catalog, spec, lin, zsets, terminal, Q, rho,
                cfg=None, tol=1e-8, n_workers=1, keep_per_scenario=False):
    """Uniform grid over the bounding box of the state set.

    Infeasible points are recorded with sentinel values (feasible=0,
    u=V=nan, j=0) rather than skipped, so per-scenario feasible sets can be
    reconstructed from the table.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    cfg = cfg or SolverConfig()
    lo, hi = spec.bounding_box()
    axes = [np.linspace(lo[i], hi[i], resolution) for i in range(spec.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])

    args = (catalog, spec, lin, zsets, terminal, Q, rho, cfg, tol,
            keep_per_scenario)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers,
                                 initializer=_grid_init,
                                 initargs=(args,)) as pool:
            rows = list(pool.map(_grid_eval, points, chunksize=8))
    else:
        rows = [_grid_point(p, *args) for p in points]

    feasible = np.array([r[0] for r in rows], dtype=int)
    u_star = np.array([r[1] for r in rows])
    V_star = np.array([r[2] for r in rows])
    j_star = np.array([r[3] for r in rows], dtype=int)
    per_scenario = {}
    if keep_per_scenario:
        all_j = sorted({j for r in rows for j, _ in r[4]})
        for j in all_j:
            per_scenario[j] = np.zeros(len(rows), dtype=int)
        for m, r in enumerate(rows):
            for j, status in r[4]:
                if status == "Optimal":
                    per_scenario[j][m] = 1
    return GridTable(points=points, feasible=feasible, u_star=u_star,
                     V_star=V_star, j_star=j_star, per_scenario=per_scenario)
