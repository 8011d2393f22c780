"""Shared oracles and builders for the test suite.

Everything here is deliberately independent of the solver path it checks:
grid search for optima, finite differences for derivatives, direct
enumeration for scenario pruning.
"""
import itertools

import numpy as np

import convexnmpc as cn


def toy_spec(A, b, g=None, box=1.0, sign=1, u=(-1.0, 1.0)):
    """Single-region system over a symmetric box, defaulting to unit gain."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if g is None:
        g = cn.Affine(np.zeros(n), 1.0)
    C = np.vstack([np.eye(n), -np.eye(n)])
    d = box * np.ones(2 * n)
    return cn.SystemSpec(A=A, b=np.asarray(b, dtype=float), g=g,
                         regions=((cn.Polytope(C, d), sign),),
                         u_lo=u[0], u_hi=u[1])


def finite_diff_grad(f, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        out[i] = (f(z + e) - f(z - e)) / (2 * h)
    return out


def finite_diff_hess(f, z, h=1e-4):
    z = np.asarray(z, dtype=float)
    n = len(z)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            H[i, j] = (f(z + ei + ej) - f(z + ei - ej)
                       - f(z - ei + ej) + f(z - ei - ej)) / (4 * h * h)
    return H


def grid_minimize(prog, lo, hi, step, feas_tol=1e-7):
    """Feasibility-screened brute-force minimum over a uniform v-grid.

    Returns (V, z) or (inf, None) when no grid point passes the screen.
    Chunked and vectorized so the 1e-3-step two-variable case stays fast.
    """
    n_vars = prog.n_vars
    axes = [np.arange(lo, hi + 0.5 * step, step) for _ in range(n_vars)]
    if n_vars == 1:
        cand = axes[0][:, None]
        return _grid_scan(prog, cand, feas_tol)
    best_v, best_z = np.inf, None
    chunk = max(1, int(2e6 / max(len(axes[1]), 1)))
    rest = np.array(list(itertools.product(*axes[1:])))
    for start in range(0, len(axes[0]), chunk):
        block0 = axes[0][start:start + chunk]
        cand = np.column_stack([
            np.repeat(block0, len(rest)),
            np.tile(rest, (len(block0), 1)).reshape(-1, n_vars - 1),
        ])
        v, z = _grid_scan(prog, cand, feas_tol)
        if v < best_v:
            best_v, best_z = v, z
    return best_v, best_z


def _grid_scan(prog, cand, feas_tol):
    ok = np.ones(len(cand), dtype=bool)
    if prog.A_mat.size:
        ok &= np.max(cand @ prog.A_mat.T - prog.b_vec, axis=1) <= feas_tol
    for con in prog.nonlin:
        if not ok.any():
            break
        idx = np.where(ok)[0]
        vals = con.value_batch(cand[idx])
        ok[idx[vals > feas_tol]] = False
    if not ok.any():
        return np.inf, None
    pts = cand[ok]
    obj = (np.einsum("ij,jk,ik->i", pts, prog.H, pts) + pts @ prog.f
           + prog.c0)
    k = int(np.argmin(obj))
    return float(obj[k]), pts[k]


def brute_force_level(spec, lin, zsets, terminal, horizon, cfg=None):
    """Directly probe every coefficient sequence of the given length."""
    cfg = cfg or cn.SolverConfig()
    s = spec.n_regions
    out = []
    for coeffs in itertools.product(range(1, s + 1), repeat=horizon):
        prog = cn.assemble(coeffs, None, spec, lin, zsets, terminal,
                           Q=np.eye(spec.n), rho=1.0)
        feasible, _ = cn.solve_feasibility(prog, cfg)
        if feasible:
            out.append(coeffs)
    out.sort(key=lambda c: cn.encode(c, s))
    return out


def random_instance(rng, kind):
    """Small random system + costs with a valid curvature/sign structure."""
    n = int(rng.integers(1, 4))
    while True:
        A = rng.uniform(-1.0, 1.0, (n, n))
        b = rng.uniform(-1.0, 1.0, n)
        if cn.model.controllability_rank(A, b) == n:
            break
    box = 1.0
    if kind == "affine":
        w = rng.uniform(-0.3, 0.3, n)
        d = float(rng.uniform(0.8, 2.0)) * float(rng.choice([-1.0, 1.0]))
        g = cn.Affine(w, d)
        sign = 1 if d > 0 else -1
    elif kind == "quadratic":
        M = rng.uniform(-0.4, 0.4, (n, n))
        H = M @ M.T                      # PSD
        sign = int(rng.choice([1, -1]))
        # concave needs H <= 0 with g >= 0; convex needs H >= 0 with g <= 0
        Hs = -H if sign > 0 else H
        d = float(rng.uniform(1.5, 3.0)) * sign
        g = cn.Quadratic(Hs, np.zeros(n), d)
    else:  # sinusoid, concave and positive on the box
        direction = rng.uniform(-1.0, 1.0, n)
        direction /= max(np.linalg.norm(direction), 1e-9)
        freq = float(rng.uniform(0.2, 0.9)) / (box * np.sqrt(n))
        g = cn.Sinusoid(float(rng.uniform(1.0, 3.0)), freq, direction, 0.0)
        sign = 1
    u = (-float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)))
    spec = toy_spec(A, b, g=g, box=box, sign=sign, u=u)
    lin = cn.build_linearization(
        spec, cn.compute_output_vector(A, b, 1.0), b0=1.0)
    zsets = cn.build_stage_sets(spec, lin)
    Q = float(rng.uniform(0.2, 2.0)) * np.eye(n)
    rho = float(rng.uniform(0.3, 2.0))
    terminal = cn.build_terminal(spec, lin, zsets, Q, rho, kind="ellipsoid")
    return spec, lin, zsets, terminal, Q, rho
