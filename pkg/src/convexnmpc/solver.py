"""Per-scenario convex programs in condensed form and a barrier solver.

Predicted states are eliminated through the linear prediction map, leaving
the artificial inputs (plus the initial state, when it is left free for
feasibility probing) as the only decision variables. One log-barrier
interior-point method covers all constraint classes; the QP/QCQP/NLP tag
is reporting metadata, not a solver dispatch.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import nnls

from .errors import HorizonMismatchError, NoConvergenceError
from .geometry import Ellipsoid, Polytope
from .stagesets import (AffineCon, QuadCon, SmoothCon,
                        TangentExtendedSinusoid)


# ---------------------------------------------------------------------------
# condensed prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictionOperators:
    """Linear map from the decision vector to the stacked predicted states.

    states(z) = S z + offset, stacked as (N+1) blocks of length n. The
    decision vector is (v_0..v_{N-1}) and, when the initial state is free,
    the appended x0 block.
    """

    N: int
    n: int
    S: np.ndarray
    offset: np.ndarray
    x0: np.ndarray  # None when free
    free_x0: bool

    @property
    def n_vars(self):
        return self.S.shape[1]

    def state_rows(self, k):
        """Rows of (S, offset) giving x_hat(k)."""
        sl = slice(k * self.n, (k + 1) * self.n)
        return self.S[sl], self.offset[sl]

    def step_map(self, k):
        """Map z -> (x_hat(k), v_k) as (M, m)."""
        Sx, ox = self.state_rows(k)
        M = np.zeros((self.n + 1, self.n_vars))
        M[: self.n] = Sx
        M[self.n, k] = 1.0
        m = np.concatenate([ox, [0.0]])
        return M, m

    def terminal_map(self):
        return self.state_rows(self.N)

    def states(self, z):
        return (self.S @ z + self.offset).reshape(self.N + 1, self.n)


def condense(lin, N, x0=None):
    """Prediction operators for horizon N.

    x0=None leaves the initial state free: its components are appended to
    the decision vector and the offset vanishes.
    """
    if N < 1:
        raise ValueError("horizon must be >= 1")
    n = lin.A_hat.shape[0]
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(lin.A_hat @ powers[-1])
    impulse = [lin.b_hat.copy()]  # A^i b for i = 0..N-1
    for _ in range(N - 1):
        impulse.append(lin.A_hat @ impulse[-1])

    Gamma = np.zeros(((N + 1) * n, N))
    for k in range(1, N + 1):
        for i in range(k):
            Gamma[k * n:(k + 1) * n, i] = impulse[k - 1 - i]
    Phi = np.vstack(powers)

    if x0 is None:
        S = np.hstack([Gamma, Phi])
        offset = np.zeros((N + 1) * n)
        return PredictionOperators(N=N, n=n, S=S, offset=offset, x0=None,
                                   free_x0=True)
    x0 = np.asarray(x0, dtype=float)
    return PredictionOperators(N=N, n=n, S=Gamma, offset=Phi @ x0, x0=x0,
                               free_x0=False)


# ---------------------------------------------------------------------------
# composed constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComposedSmoothCon:
    """Smooth stage constraint pushed through the prediction map."""

    fieldref: object
    g_coef: float
    Mx: np.ndarray
    mx: np.ndarray
    lin_row: np.ndarray
    lin_const: float
    kind = "smooth"

    def _x(self, z):
        return self.Mx @ z + self.mx

    def value(self, z):
        return float(self.g_coef * self.fieldref.value(self._x(z))
                     + self.lin_row @ z + self.lin_const)

    def value_batch(self, Z):
        X = Z @ self.Mx.T + self.mx
        return (self.g_coef * np.asarray(self.fieldref.value(X))
                + Z @ self.lin_row + self.lin_const)

    def grad(self, z):
        return (self.g_coef * (self.Mx.T @ self.fieldref.grad(self._x(z)))
                + self.lin_row)

    def hess(self, z):
        return self.g_coef * (self.Mx.T @ self.fieldref.hess(self._x(z)) @ self.Mx)

    def inner_hess_min_eig(self, z):
        H = self.g_coef * self.fieldref.hess(self._x(z))
        return float(np.min(np.linalg.eigvalsh(H))) if H.size else 0.0


def _compose_affine(con, M, m):
    row = con.row @ M
    return row, con.offset - float(con.row @ m)


def _compose_quad(con, M, m):
    H = M.T @ con.H @ M
    w = M.T @ (con.H @ m + con.w)
    c0 = float(0.5 * m @ con.H @ m + con.w @ m + con.c0)
    return QuadCon(0.5 * (H + H.T), w, c0)


def _compose_smooth(con, M, m):
    n = M.shape[0] - 1
    return ComposedSmoothCon(fieldref=con.field, g_coef=con.g_coef,
                             Mx=M[:n], mx=m[:n], lin_row=con.lin @ M,
                             lin_const=float(con.lin @ m + con.const))


# ---------------------------------------------------------------------------
# program container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexProgram:
    """Condensed scenario subproblem.

    Objective value is z'Hz + f.z + c0 (H symmetric PSD under the stage-cost
    conventions). Affine rows are stacked as A z <= b; the remaining
    constraints keep their oracles.
    """

    n_vars: int
    H: np.ndarray
    f: np.ndarray
    c0: float
    A_mat: np.ndarray
    b_vec: np.ndarray
    nonlin: tuple
    prog_class: str
    coeffs: tuple
    scenario_j: int
    ops: PredictionOperators
    pre_violation: float
    z0_hint: np.ndarray
    nonconvex_data: bool

    @property
    def n_constraints(self):
        return self.A_mat.shape[0] + len(self.nonlin)

    def objective_value(self, z):
        return float(z @ self.H @ z + self.f @ z + self.c0)

    def objective_grad(self, z):
        return 2.0 * (self.H @ z) + self.f

    def constraint_values(self, z):
        vals = list(self.A_mat @ z - self.b_vec)
        vals.extend(con.value(z) for con in self.nonlin)
        return np.array(vals)


def _scenario_coeffs(scenario):
    coeffs = tuple(scenario.coeffs) if hasattr(scenario, "coeffs") else tuple(scenario)
    if not coeffs:
        raise ValueError("empty scenario")
    return coeffs


def assemble(scenario, x0, spec, lin, zsets, terminal, Q, rho, horizon=None):
    """Build the condensed convex program for one constraint scenario.

    x0=None leaves the initial state free (used by the offline pruning);
    otherwise the program is parameterized by the fixed initial state.
    """
    coeffs = _scenario_coeffs(scenario)
    N = len(coeffs)
    if horizon is not None and horizon != N:
        raise HorizonMismatchError(
            f"scenario length {N} does not match requested horizon {horizon}")
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    rho = float(rho)
    ops = condense(lin, N, x0)
    d = ops.n_vars
    n = ops.n

    H = np.zeros((d, d))
    f = np.zeros(d)
    c0 = 0.0
    for k in range(N):
        Sx, ox = ops.state_rows(k)
        QS = Q @ Sx
        H += Sx.T @ QS
        f += 2.0 * (ox @ QS)
        c0 += float(ox @ Q @ ox)
        H[k, k] += rho
    SN, oN = ops.terminal_map()
    PS = terminal.P @ SN
    H += SN.T @ PS
    f += 2.0 * (oN @ PS)
    c0 += float(oN @ terminal.P @ oN)
    H = 0.5 * (H + H.T)

    rows, offs, nonlin = [], [], []
    nonconvex = False
    for k, eps in enumerate(coeffs):
        zs = zsets[eps - 1]
        M, m = ops.step_map(k)
        lift_rows = zs.lifted_C @ M
        lift_off = zs.lifted_d - zs.lifted_C @ m
        rows.append(lift_rows)
        offs.append(lift_off)
        for con in zs.constraints:
            if isinstance(con, AffineCon):
                r, o = _compose_affine(con, M, m)
                rows.append(r[None, :])
                offs.append(np.array([o]))
            elif isinstance(con, QuadCon):
                composed = _compose_quad(con, M, m)
                if np.min(np.linalg.eigvalsh(con.H)) < -1e-8:
                    nonconvex = True
                nonlin.append(composed)
            elif isinstance(con, SmoothCon):
                nonlin.append(_compose_smooth(con, M, m))
            else:
                raise TypeError(f"unknown constraint type {type(con).__name__}")

    if isinstance(terminal.tset, Polytope):
        rows.append(terminal.tset.C @ SN)
        offs.append(terminal.tset.d - terminal.tset.C @ oN)
    elif isinstance(terminal.tset, Ellipsoid):
        Ps = terminal.tset.P_shape
        Hq = 2.0 * (SN.T @ Ps @ SN)
        wq = 2.0 * (SN.T @ Ps @ oN)
        cq = float(oN @ Ps @ oN) - terminal.tset.level
        nonlin.append(QuadCon(0.5 * (Hq + Hq.T), wq, cq))
    else:
        raise TypeError("terminal set must be a Polytope or an Ellipsoid")

    A_mat = np.vstack(rows)
    b_vec = np.concatenate(offs)

    # Rows without any decision-variable dependence (fixed-x0 region rows at
    # k = 0) are checked once and removed; they cannot steer the solver.
    norms = np.max(np.abs(A_mat), axis=1)
    constant = norms < 1e-13
    pre_violation = float(np.max(-b_vec[constant])) if np.any(constant) else -np.inf
    A_mat, b_vec = A_mat[~constant], b_vec[~constant]

    kinds = {con.kind for con in nonlin}
    prog_class = ("NLP" if "smooth" in kinds
                  else "QCQP" if "quadratic" in kinds else "QP")

    # hint: terminal-controller rollout, which is strictly feasible for any
    # state well inside the feasible set and then skips phase-I outright
    z0 = np.zeros(d)
    if ops.free_x0:
        center, _ = zsets[coeffs[0] - 1].region.chebyshev_center()
        if center is not None:
            z0[N:] = center
        x_roll = z0[N:].copy()
    else:
        x_roll = ops.x0.copy()
    for k in range(N):
        z0[k] = float(terminal.kappa @ x_roll)
        x_roll = lin.A_hat @ x_roll + lin.b_hat * z0[k]

    j = 1 + sum((e - 1) * len(zsets) ** k for k, e in enumerate(coeffs))
    return ConvexProgram(n_vars=d, H=H, f=f, c0=c0, A_mat=A_mat, b_vec=b_vec,
                         nonlin=tuple(nonlin), prog_class=prog_class,
                         coeffs=coeffs, scenario_j=j, ops=ops,
                         pre_violation=pre_violation, z0_hint=z0,
                         nonconvex_data=nonconvex)


# ---------------------------------------------------------------------------
# interior-point solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-7
    kkt_tol: float = 1e-8
    max_newton: int = 500
    mu0: float = 10.0
    mu_shrink: float = 10.0
    gap_target: float = 1e-9
    armijo_slope: float = 0.01
    backtrack: float = 0.5
    inner_tol: float = 1e-18
    strict_margin: float = 1e-9


@dataclass
class Solution:
    status: str
    V: float
    v_seq: np.ndarray
    x_traj: np.ndarray
    kkt_residual: float
    phase1_violation: float
    scenario_j: int
    prog_class: str
    nonconvex_flag: bool
    n_newton: int
    max_constraint: float
    degenerate: bool = False
    x0_free_value: np.ndarray = None
    stage_values: tuple = ()

    @property
    def optimal(self):
        return self.status == "Optimal"


class _IterBudget(Exception):
    pass


class _Work:
    """Newton budget and honesty flags shared between phases."""

    def __init__(self, prog, cfg):
        self.prog = prog
        self.cfg = cfg
        self.steps = 0
        self.nonconvex = prog.nonconvex_data

    def spend(self):
        self.steps += 1
        if self.steps > self.cfg.max_newton:
            raise _IterBudget


class _SinusoidGroup:
    """Stacked tangent-extended sinusoid constraints.

    Every member reads scale*cos(q.z + r) (linearly continued outside
    [lo, hi]) + lin.z + c <= 0. Stacking collapses the per-constraint
    Python loop inside the Newton iterations into a few matrix products;
    the curvature term is rank-one per member with weight curv >= 0.
    """

    def __init__(self, cons, d, aug):
        m = len(cons)
        width = d + 1 if aug else d
        self.Qm = np.zeros((m, width))
        self.r = np.empty(m)
        self.Lin = np.zeros((m, width))
        self.lc = np.empty(m)
        self.scale = np.empty(m)
        self.lo = np.empty(m)
        self.hi = np.empty(m)
        for i, con in enumerate(cons):
            f = con.fieldref
            self.Qm[i, :d] = f.freq * (con.Mx.T @ f.dir)
            self.r[i] = f.freq * (f.dir @ con.mx) + f.phase
            self.Lin[i, :d] = con.lin_row
            self.lc[i] = con.lin_const
            self.scale[i] = con.g_coef * f.scale
            self.lo[i] = f.th_lo
            self.hi[i] = f.th_hi
        if aug:
            self.Lin[:, d] = -1.0

    def __len__(self):
        return self.r.shape[0]

    def pieces(self, z):
        th = self.Qm @ z + self.r
        thc = np.clip(th, self.lo, self.hi)
        cos_c = np.cos(thc)
        vals = (self.scale * (cos_c - np.sin(thc) * (th - thc))
                + self.Lin @ z + self.lc)
        dphi = -self.scale * np.sin(thc)
        curv = np.where((th < self.lo) | (th > self.hi), 0.0,
                        -self.scale * cos_c)
        return vals, dphi, curv

    def values(self, z):
        th = self.Qm @ z + self.r
        thc = np.clip(th, self.lo, self.hi)
        return (self.scale * (np.cos(thc) - np.sin(thc) * (th - thc))
                + self.Lin @ z + self.lc)


class _AugCon:
    """A scalar constraint lifted to (z, t)-space as f(z) - t <= 0."""

    __slots__ = ("con", "d")

    def __init__(self, con, d):
        self.con = con
        self.d = d

    def value(self, zt):
        return self.con.value(zt[:-1]) - zt[-1]

    def grad(self, zt):
        g = np.empty(self.d + 1)
        g[:-1] = self.con.grad(zt[:-1])
        g[-1] = -1.0
        return g

    def hess(self, zt):
        Hm = np.zeros((self.d + 1, self.d + 1))
        Hm[:-1, :-1] = self.con.hess(zt[:-1])
        return Hm


class _Workset:
    """One program's constraints prepared for fast barrier iterations."""

    def __init__(self, prog, aug=False):
        d = prog.n_vars
        self.aug = aug
        self.width = d + 1 if aug else d
        if prog.A_mat.size:
            self.A = (np.hstack([prog.A_mat,
                                 -np.ones((prog.A_mat.shape[0], 1))])
                      if aug else prog.A_mat)
        else:
            self.A = np.zeros((0, self.width))
        self.b = prog.b_vec
        grp_idx = {id(c) for c in prog.nonlin
                   if isinstance(c, ComposedSmoothCon)
                   and isinstance(c.fieldref, TangentExtendedSinusoid)}
        grp = [c for c in prog.nonlin if id(c) in grp_idx]
        oth = [c for c in prog.nonlin if id(c) not in grp_idx]
        self.group = _SinusoidGroup(grp, d, aug) if grp else None
        self.others = tuple(_AugCon(c, d) for c in oth) if aug else tuple(oth)
        self.n_cons = prog.n_constraints

    def slack_values(self, z, relax):
        """Feasibility margins (positive inside) of all constraint blocks."""
        s_aff = ((self.b + relax) - self.A @ z if self.A.size
                 else np.empty(0))
        s_grp = (relax - self.group.values(z) if self.group is not None
                 else np.empty(0))
        s_oth = np.array([relax - c.value(z) for c in self.others])
        return s_aff, s_grp, s_oth

    def watch_curvature(self, work, z):
        """Flag honest nonconvexity seen at an iterate (the sinusoid group
        is convex by construction and needs no check)."""
        if work.nonconvex:
            return
        for con in self.others:
            base = con.con if isinstance(con, _AugCon) else con
            if isinstance(base, QuadCon):
                eig = float(np.min(np.linalg.eigvalsh(base.H)))
            elif isinstance(base, ComposedSmoothCon):
                eig = base.inner_hess_min_eig(z[:-1] if self.aug else z)
            else:
                continue
            if eig < -1e-8:
                work.nonconvex = True
                return


def _newton_solve(Hm, g):
    try:
        c, low = cho_factor(Hm, check_finite=False)
        return cho_solve((c, low), -g, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        pass
    # saddle-free modified Newton: flip negative curvature so the step is
    # always a descent direction even where iterates see nonconvex territory
    w, V = np.linalg.eigh(0.5 * (Hm + Hm.T))
    scale = max(float(np.max(np.abs(w))), 1.0)
    w = np.maximum(np.abs(w), 1e-12 * scale)
    return -V @ ((V.T @ g) / w)


def _barrier_stage(work, ws, z, mu, f0, relax, stop_when=None,
                   inner_tol=None):
    """Newton iterations at fixed barrier weight mu over a workset.

    f0 = (value, grad, hess) callables for the smooth objective part. relax
    shifts every constraint by a nonnegative slack. Returns the iterate.
    stop_when, if given, aborts the stage early once the predicate on the
    iterate holds (used by phase-I as soon as strict feasibility shows).
    """
    cfg = work.cfg
    if inner_tol is None:
        inner_tol = cfg.inner_tol
    A = ws.A
    b = ws.b + relax

    def barrier_value(zz, parts):
        total = f0[0](zz)
        for s in parts:
            if s.size:
                if np.min(s) <= 0:
                    return np.inf
                total -= mu * float(np.sum(np.log(s)))
        return total

    prev_decrement = np.inf
    while True:
        grad = f0[1](z)
        hess = f0[2](z).copy()
        s_aff = b - A @ z if A.size else np.empty(0)
        if s_aff.size:
            inv = 1.0 / s_aff
            grad = grad + A.T @ (mu * inv)
            hess += (A.T * (mu * inv ** 2)) @ A
        if ws.group is not None:
            gvals, dphi, curv = ws.group.pieces(z)
            s_grp = relax - gvals
            G = dphi[:, None] * ws.group.Qm + ws.group.Lin
            grad = grad + G.T @ (mu / s_grp)
            hess += (G.T * (mu / s_grp ** 2)) @ G
            hess += (ws.group.Qm.T * (mu * curv / s_grp)) @ ws.group.Qm
        else:
            s_grp = np.empty(0)
        s_oth = np.empty(len(ws.others))
        for i, con in enumerate(ws.others):
            s = relax - con.value(z)
            s_oth[i] = s
            gcon = con.grad(z)
            grad = grad + (mu / s) * gcon
            hess += mu * (np.outer(gcon, gcon) / (s * s) + con.hess(z) / s)

        step = _newton_solve(hess, grad)
        decrement = float(-grad @ step)
        if decrement <= 2.0 * inner_tol:
            return z
        # rounding floor: stiff barrier directions stop making progress long
        # before the decrement test; bail out once contraction stalls
        if decrement < 1e-12 and decrement > 0.3 * prev_decrement:
            return z
        prev_decrement = decrement
        work.spend()
        base = barrier_value(z, (s_aff, s_grp, s_oth))
        t = 1.0
        for _ in range(80):
            z_new = z + t * step
            val = barrier_value(z_new, ws.slack_values(z_new, relax))
            if val <= base + cfg.armijo_slope * t * float(grad @ step):
                break
            t *= cfg.backtrack
        else:
            return z
        z = z_new
        ws.watch_curvature(work, z)
        if stop_when is not None and stop_when(z):
            return z


def _mu_schedule(cfg, n_cons):
    mus = []
    mu = cfg.mu0
    while True:
        mus.append(mu)
        if mu * max(n_cons, 1) <= cfg.gap_target:
            break
        mu /= cfg.mu_shrink
        if mu < 1e-300:
            break
    return mus


def _kkt_residual(prog, z, mu_last, relax, cfg):
    """Certified KKT residual: stationarity with nonnegative multipliers,
    duality-gap bound, and primal violation.

    The barrier multipliers mu/s certify stationarity away from the
    boundary; for boundary-hugging solutions a nonnegative least-squares
    refinement over the near-active constraints gives a tighter certificate.
    """
    g0 = prog.objective_grad(z)
    vals = []
    grads = []
    if prog.A_mat.size:
        s_aff = (prog.b_vec + relax) - prog.A_mat @ z
        vals.extend(-s_aff)
        grads.extend(prog.A_mat)
    for con in prog.nonlin:
        vals.append(con.value(z) - relax)
        grads.append(con.grad(z))
    vals = np.array(vals)
    violation = float(np.max(vals, initial=0.0)) + relax
    gap = mu_last * max(prog.n_constraints, 1)
    if not len(grads):
        return max(float(np.max(np.abs(g0))), gap, violation)

    J = np.vstack(grads)
    s = np.maximum(-vals, 1e-300)
    stat_barrier = float(np.max(np.abs(g0 + J.T @ (mu_last / s))))
    stationarity = stat_barrier
    if stat_barrier > 0.5 * cfg.kkt_tol:
        active = s <= 1e-5 * (1.0 + np.abs(vals))
        if np.any(active):
            lam, _ = nnls(J[active].T, -g0)
            stat_ls = float(np.max(np.abs(g0 + J[active].T @ lam)))
            stationarity = min(stationarity, stat_ls)
    return max(stationarity, gap, violation)


def phase1(prog, cfg, work=None):
    """Minimize the worst constraint violation t over (z, t).

    Returns (z, t_final, certified) where certified means the slack was
    driven to a near-optimal value (not just early-exited on strict
    feasibility).
    """
    work = work or _Work(prog, cfg)
    d = prog.n_vars
    z = prog.z0_hint.copy()
    viol0 = float(np.max(prog.constraint_values(z))) if prog.n_constraints else -1.0
    t0 = viol0 + 1.0

    ws = _Workset(prog, aug=True)
    obj_grad = np.zeros(d + 1)
    obj_grad[-1] = 1.0
    zero_hess = np.zeros((d + 1, d + 1))
    f0 = (lambda zt: float(zt[-1]),
          lambda zt: obj_grad,
          lambda zt: zero_hess)

    zt = np.concatenate([z, [t0]])
    done = False
    m = max(prog.n_constraints, 1)
    for mu in _mu_schedule(cfg, prog.n_constraints):
        zt = _barrier_stage(work, ws, zt, mu, f0, relax=0.0,
                            stop_when=lambda p: p[-1] < -cfg.strict_margin,
                            inner_tol=1e-11)
        if zt[-1] < -cfg.strict_margin:
            done = True
            break
        if zt[-1] - mu * m > cfg.feas_tol:
            # central-path certificate: t* >= t_mu - m*mu > feas_tol
            break
    z = zt[:-1]
    t_true = float(np.max(prog.constraint_values(z))) if prog.n_constraints else -1.0
    return z, min(t_true, float(zt[-1])) if done else t_true, not done


def solve_feasibility(prog, cfg=SolverConfig()):
    """Phase-I only: decide feasibility against cfg.feas_tol.

    Returns (feasible, slack). Raises NoConvergenceError when the Newton
    budget runs out before a decision, so callers never confuse an undecided
    probe with a certified infeasibility.
    """
    if prog.pre_violation > cfg.feas_tol:
        return False, prog.pre_violation
    if prog.n_constraints == 0:
        return True, -1.0
    vals0 = prog.constraint_values(prog.z0_hint)
    if float(np.max(vals0)) < -1e-6:
        return True, float(np.max(vals0))
    work = _Work(prog, cfg)
    try:
        _, t_star, _ = phase1(prog, cfg, work)
    except _IterBudget:
        raise NoConvergenceError(
            f"feasibility probe exhausted {cfg.max_newton} Newton steps")
    return t_star <= cfg.feas_tol, t_star


def solve(prog, cfg=SolverConfig()):
    """Phase-I feasibility then phase-II barrier minimization.

    Infeasibility is certified by the optimized phase-I slack exceeding the
    feasibility tolerance; an exhausted Newton budget is reported as
    IterLimit, never as infeasibility.
    """
    work = _Work(prog, cfg)
    nan = float("nan")

    def finish(status, z=None, kkt=nan, p1=nan, degenerate=False):
        if z is None:
            V, v_seq, x_traj, maxc, x0v = nan, None, None, nan, None
        else:
            V = prog.objective_value(z)
            v_seq = z[: prog.ops.N].copy()
            x_traj = prog.ops.states(z)
            vals = prog.constraint_values(z)
            maxc = float(np.max(vals)) if vals.size else 0.0
            x0v = z[prog.ops.N:].copy() if prog.ops.free_x0 else None
        return Solution(status=status, V=V, v_seq=v_seq, x_traj=x_traj,
                        kkt_residual=kkt, phase1_violation=p1,
                        scenario_j=prog.scenario_j, prog_class=prog.prog_class,
                        nonconvex_flag=work.nonconvex, n_newton=work.steps,
                        max_constraint=maxc, degenerate=degenerate,
                        x0_free_value=x0v)

    if prog.pre_violation > cfg.feas_tol:
        return finish("Infeasible", p1=prog.pre_violation)

    # a strictly feasible hint skips phase-I entirely
    vals0 = (prog.constraint_values(prog.z0_hint)
             if prog.n_constraints else np.array([-1.0]))
    if float(np.max(vals0)) < -1e-6:
        z, t_star = prog.z0_hint.copy(), float(np.max(vals0))
    else:
        try:
            z, t_star, _ = phase1(prog, cfg, work)
        except _IterBudget:
            return finish("IterLimit")
        if t_star > cfg.feas_tol:
            return finish("Infeasible", p1=t_star)

    degenerate = t_star > -cfg.strict_margin
    relax = (max(t_star, 0.0) + 1e-9) if degenerate else 0.0

    ws = _Workset(prog)
    H2 = 2.0 * prog.H
    f0 = (prog.objective_value,
          prog.objective_grad,
          lambda zz: H2)
    schedule = _mu_schedule(cfg, prog.n_constraints)
    stage_values = []
    try:
        for stage, mu in enumerate(schedule):
            last = stage == len(schedule) - 1
            z = _barrier_stage(work, ws, z, mu, f0, relax=relax,
                               inner_tol=None if last else 1e-11)
            stage_values.append(prog.objective_value(z))
    except _IterBudget:
        return finish("IterLimit", z=z, p1=t_star, degenerate=degenerate)

    kkt = _kkt_residual(prog, z, schedule[-1], relax, cfg)
    out = finish("Optimal", z=z, kkt=kkt, p1=t_star, degenerate=degenerate)
    out.stage_values = tuple(stage_values)
    return out
