"""Scenario indexing, tree pruning, and per-state filtering.

A scenario assigns one stage set per prediction step. Scenarios are indexed
by the base-s expansion j = 1 + sum_k (eps_k - 1) s^k. Offline pruning walks
horizons 1..N, keeping only coefficient sequences whose subproblem admits
some initial state; extending a sequence prepends a fresh first step, so an
infeasible tail can never become feasible again and the catalog is closed
under suffixes.
"""
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergenceError, OutOfRangeError
from .geometry import Ellipsoid, Polytope
from .model import region_membership, system_to_dict
from .solver import SolverConfig, assemble, solve_feasibility


def encode(coeffs, s):
    """Scenario index of a coefficient sequence (entries in 1..s)."""
    j = 1
    power = 1
    for eps in coeffs:
        if not 1 <= eps <= s:
            raise OutOfRangeError(f"coefficient {eps} outside 1..{s}")
        j += (eps - 1) * power
        power *= s
    return j


def decode(j, s, N):
    """Coefficient sequence of scenario j over horizon N."""
    if not 1 <= j <= s ** N:
        raise OutOfRangeError(f"scenario index {j} outside 1..{s}^{N}")
    rem = j - 1
    coeffs = []
    for _ in range(N):
        coeffs.append(rem % s + 1)
        rem //= s
    return tuple(coeffs)


@dataclass(frozen=True)
class Scenario:
    coeffs: tuple
    s: int

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(e) for e in self.coeffs))

    @property
    def j(self):
        return encode(self.coeffs, self.s)

    @property
    def N(self):
        return len(self.coeffs)


def catalog_hash(spec, lin, terminal, feas_tol, eps_g=1e-9):
    """Content hash binding a catalog to the data it was pruned against."""
    tset = terminal.tset
    if isinstance(tset, Polytope):
        tdata = {"kind": "polytope", "C": tset.C.tolist(), "d": tset.d.tolist()}
    elif isinstance(tset, Ellipsoid):
        tdata = {"kind": "ellipsoid", "P": tset.P_shape.tolist(),
                 "level": tset.level}
    else:
        raise TypeError("unknown terminal set type")
    payload = {
        "system": system_to_dict(spec),
        "lin": lin.to_dict(),
        "terminal": tdata,
        "feas_tol": feas_tol,
        "eps_g": eps_g,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class FeasibleCatalog:
    """Per-horizon feasible coefficient sequences plus provenance metadata."""

    s: int
    N: int
    levels: dict
    feas_tol: float
    terminal_kind: str
    content_hash: str
    meta: dict = field(default_factory=dict)

    def sequences(self, horizon=None):
        horizon = self.N if horizon is None else horizon
        return self.levels[horizon]

    def scenarios(self, horizon=None):
        return [Scenario(c, self.s) for c in self.sequences(horizon)]

    def count(self, horizon=None):
        return len(self.sequences(horizon))

    def suffix_closed(self):
        """Check the defining closure: dropping the first step of any stored
        sequence lands on a stored shorter sequence."""
        for ln, seqs in self.levels.items():
            if ln == 1:
                continue
            below = set(self.levels.get(ln - 1, ()))
            if any(seq[1:] not in below for seq in seqs):
                return False
        return True

    def to_dict(self):
        return {
            "s": self.s,
            "N": self.N,
            "tol": self.feas_tol,
            "terminal_kind": self.terminal_kind,
            "hash": self.content_hash,
            "meta": self.meta,
            "levels": {str(k): [list(seq) for seq in v]
                       for k, v in sorted(self.levels.items())},
        }

    @classmethod
    def from_dict(cls, obj):
        levels = {int(k): tuple(tuple(int(e) for e in seq) for seq in v)
                  for k, v in obj["levels"].items()}
        return cls(s=int(obj["s"]), N=int(obj["N"]), levels=levels,
                   feas_tol=float(obj["tol"]),
                   terminal_kind=obj["terminal_kind"],
                   content_hash=obj["hash"], meta=obj.get("meta", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# module-level worker state so candidate checks pickle cheaply
_WORKER = {}


def _worker_init(spec, lin, zsets, terminal, cfg):
    _WORKER["args"] = (spec, lin, zsets, terminal, cfg)


def _check_candidate(coeffs):
    spec, lin, zsets, terminal, cfg = _WORKER["args"]
    return coeffs, _candidate_feasible(coeffs, spec, lin, zsets, terminal, cfg)


def _candidate_feasible(coeffs, spec, lin, zsets, terminal, cfg):
    prog = assemble(coeffs, None, spec, lin, zsets, terminal,
                    Q=np.eye(spec.n), rho=1.0)
    try:
        feasible, _ = solve_feasibility(prog, cfg)
    except NoConvergenceError as exc:
        exc.details["sequence"] = list(coeffs)
        raise
    return feasible


def prune_catalog(spec, lin, zsets, terminal, N, solver_cfg=None,
                  n_workers=1, start_levels=None, progress=None):
    """Iterative-deepening scenario pruning up to horizon N.

    Level 1 keeps every region whose stage set can reach the terminal set in
    one step from some free initial state. Each further level prepends every
    region index to each survivor and re-probes feasibility with the initial
    state free over the new first region. start_levels resumes from a
    previously computed catalog prefix.
    """
    if N < 1:
        raise ValueError("horizon must be >= 1")
    cfg = solver_cfg or SolverConfig()
    s = spec.n_regions
    levels = dict(start_levels or {})

    def check_all(cands):
        if n_workers > 1 and len(cands) > 1:
            with ProcessPoolExecutor(
                    max_workers=n_workers, initializer=_worker_init,
                    initargs=(spec, lin, zsets, terminal, cfg)) as pool:
                results = dict(pool.map(_check_candidate, cands, chunksize=4))
            return [c for c in cands if results[c]]
        return [c for c in cands
                if _candidate_feasible(c, spec, lin, zsets, terminal, cfg)]

    start = max(levels) + 1 if levels else 1
    for level in range(start, N + 1):
        if level == 1:
            cands = [(i,) for i in range(1, s + 1)]
        else:
            cands = [(i,) + tail for tail in levels[level - 1]
                     for i in range(1, s + 1)]
        survivors = check_all(cands)
        survivors.sort(key=lambda c: encode(c, s))
        levels[level] = tuple(survivors)
        if progress is not None:
            progress(level, len(survivors))

    return FeasibleCatalog(
        s=s, N=N, levels=levels, feas_tol=cfg.feas_tol,
        terminal_kind="polytope" if isinstance(terminal.tset, Polytope)
        else "ellipsoid",
        content_hash=catalog_hash(spec, lin, terminal, cfg.feas_tol),
        meta={"n_workers": int(n_workers)},
    )


def filter_for_state(catalog, spec, x, tol=1e-8, horizon=None):
    """Scenarios whose first region contains x, ascending by index."""
    members = region_membership(spec, x, tol)
    if not members:
        return []
    out = [Scenario(c, catalog.s) for c in catalog.sequences(horizon)
           if c[0] in members]
    out.sort(key=lambda sc: sc.j)
    return out
