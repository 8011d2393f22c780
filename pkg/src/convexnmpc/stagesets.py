"""Convex stage sets in (x, v)-space, one per state region.

Each set couples region membership with the state-dependent interval that
b0 v - alpha.x must lie in. On a region where beta*g >= 0 the interval is
[beta g(x) u_lo, beta g(x) u_hi]; on a region where beta*g <= 0 the bounds
swap. Under the curvature assumptions both defining inequalities are convex.

Constraints are exposed as (value, gradient, Hessian) oracles in the joint
variable z = (x, v). Piecewise-affine gains are expanded into one affine row
per relevant affine piece, so those stage sets are purely polyhedral and the
downstream subproblems become QPs.
"""
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, SignAmbiguousError
from .geometry import Polytope
from .linearize import v_of_u
from .model import (EPS_G, Affine, PwaField, Quadratic, Sinusoid,
                    region_membership)

DEFAULT_MEMBERSHIP_TOL = 1e-8


# ---------------------------------------------------------------------------
# constraint oracles (value <= 0 convention)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineCon:
    """row.z - offset <= 0"""

    row: np.ndarray
    offset: float
    kind = "affine"

    def value(self, z):
        return float(self.row @ z - self.offset)

    def value_batch(self, Z):
        return Z @ self.row - self.offset

    def grad(self, z):
        return self.row.copy()

    def hess(self, z):
        m = self.row.shape[0]
        return np.zeros((m, m))


@dataclass(frozen=True)
class QuadCon:
    """0.5 z'Hz + w.z + c0 <= 0"""

    H: np.ndarray
    w: np.ndarray
    c0: float
    kind = "quadratic"

    def value(self, z):
        return float(0.5 * z @ self.H @ z + self.w @ z + self.c0)

    def value_batch(self, Z):
        return (0.5 * np.einsum("ij,jk,ik->i", Z, self.H, Z)
                + Z @ self.w + self.c0)

    def grad(self, z):
        return self.H @ z + self.w

    def hess(self, z):
        return self.H


@dataclass(frozen=True)
class SmoothCon:
    """g_coef * g(z_x) + lin.z + const <= 0 for a smooth scalar field g."""

    field: object
    g_coef: float
    lin: np.ndarray
    const: float
    kind = "smooth"

    def value(self, z):
        x = z[:-1]
        return float(self.g_coef * self.field.value(x) + self.lin @ z + self.const)

    def value_batch(self, Z):
        return (self.g_coef * np.asarray(self.field.value(Z[:, :-1]))
                + Z @ self.lin + self.const)

    def grad(self, z):
        x = z[:-1]
        out = self.lin.copy()
        out[:-1] += self.g_coef * self.field.grad(x)
        return out

    def hess(self, z):
        x = z[:-1]
        m = z.shape[0]
        H = np.zeros((m, m))
        H[:-1, :-1] = self.g_coef * self.field.hess(x)
        return H


@dataclass(frozen=True)
class TangentExtendedSinusoid:
    """scale * cos(freq * dir.x + phase), tangent-extended outside a band.

    On theta in [th_lo, th_hi] this equals the scaled sinusoid exactly; the
    linear continuation beyond the band keeps the function convex on all of
    R^n (the band is where the scaled cosine is convex). Stage constraints
    built from this agree with the true ones on the region, so the feasible
    set is untouched, while phase-I iterates that stray outside the band see
    a convex landscape and cannot stall in spurious local minima.
    """

    scale: float
    freq: float
    dir: np.ndarray
    phase: float
    th_lo: float
    th_hi: float

    def _theta(self, x):
        return self.freq * (np.asarray(x, dtype=float) @ self.dir) + self.phase

    def _branch(self, th):
        lo, hi = self.th_lo, self.th_hi
        th_c = np.clip(th, lo, hi)
        val = self.scale * np.cos(th_c)
        slope = -self.scale * np.sin(th_c)
        return val + slope * (th - th_c), slope, np.where(
            (th < lo) | (th > hi), 0.0, -self.scale * np.cos(th_c))

    def value(self, x):
        val, _, _ = self._branch(self._theta(x))
        return val

    def grad(self, x):
        _, slope, _ = self._branch(self._theta(x))
        return float(slope) * self.freq * self.dir

    def hess(self, x):
        _, _, curv = self._branch(self._theta(x))
        return float(curv) * self.freq ** 2 * np.outer(self.dir, self.dir)


def _banded_sinusoid(field, coef, region):
    """Convex surrogate of coef * field over the region's phase band."""
    lo = -region.support(-field.freq * field.dir)
    hi = region.support(field.freq * field.dir)
    return TangentExtendedSinusoid(scale=coef * field.amp, freq=field.freq,
                                   dir=field.dir, phase=field.phase,
                                   th_lo=lo + field.phase,
                                   th_hi=hi + field.phase)


def _gain_bound_constraint(field, g_coef, alpha, b0, upper, region=None):
    """One side of the interval condition as a constraint oracle in (x, v).

    lower side: g_coef*g(x) - (b0 v - alpha.x) <= 0
    upper side: (b0 v - alpha.x) - g_coef*g(x) <= 0
    """
    n = alpha.shape[0]
    lin = np.zeros(n + 1)
    if upper:
        lin[:n] = -alpha
        lin[n] = b0
        coef = -g_coef
    else:
        lin[:n] = alpha
        lin[n] = -b0
        coef = g_coef
    if isinstance(field, Affine):
        row = lin.copy()
        row[:n] += coef * field.w
        return AffineCon(row, -coef * field.d)
    if isinstance(field, Quadratic):
        H = np.zeros((n + 1, n + 1))
        H[:n, :n] = coef * field.H
        w = lin.copy()
        w[:n] += coef * field.w
        return QuadCon(H, w, coef * field.d)
    if isinstance(field, Sinusoid) and region is not None:
        return SmoothCon(_banded_sinusoid(field, coef, region), 1.0, lin, 0.0)
    return SmoothCon(field, coef, lin, 0.0)


def _pwa_bound_rows(field, region, g_coef, alpha, b0, upper):
    """Affine rows for a PWA gain, one per piece meeting the region.

    Only pieces whose intersection with the region is full-dimensional
    contribute; a concave (or convex) PWA gain equals the min (max) of those
    pieces' affine extensions on the region, which turns each interval side
    into a finite set of affine rows.
    """
    rows = []
    for piece_region, w, d in field.pieces:
        inter = region.intersect(piece_region)
        _, r = inter.chebyshev_center()
        if r <= 1e-9:
            continue
        rows.append(_gain_bound_constraint(Affine(w, d), g_coef, alpha, b0, upper))
    if not rows:
        raise PreconditionError("no pwa piece overlaps the region interior")
    return rows


@dataclass(frozen=True)
class StageSet:
    """Convex stage constraint for one region.

    Attributes
    ----------
    index : 1-based region index.
    region : state polytope X_i.
    sign_beta_g : +1 if beta*g >= 0 on the region, else -1.
    constraints : interval-side oracles in z = (x, v).
    kind : 'affine' | 'quadratic' | 'smooth' (worst constraint class).
    lifted_C, lifted_d : region rows lifted to (x, v)-space.
    """

    index: int
    region: Polytope
    sign_beta_g: int
    constraints: tuple
    kind: str
    lifted_C: np.ndarray
    lifted_d: np.ndarray
    beta: float
    b0: float
    alpha: np.ndarray
    u_lo: float
    u_hi: float
    gain_field: object

    def all_values(self, x, v):
        z = np.concatenate([np.asarray(x, dtype=float), [float(v)]])
        vals = [con.value(z) for con in self.constraints]
        vals.extend(self.lifted_C @ z - self.lifted_d)
        return np.array(vals)

    def contains(self, x, v, tol=DEFAULT_MEMBERSHIP_TOL):
        return bool(np.max(self.all_values(x, v)) <= tol)

    def v_interval(self, x):
        """Range of admissible v at state x (empty-width at gain zeros)."""
        x = np.asarray(x, dtype=float)
        gx = float(self.gain_field.value(x))
        ends = np.array([self.beta * gx * self.u_lo, self.beta * gx * self.u_hi])
        shift = float(self.alpha @ x)
        return (float(ends.min() + shift) / self.b0,
                float(ends.max() + shift) / self.b0)

    def bound_interval(self, x):
        """Interval that b0 v - alpha.x must lie in at state x."""
        x = np.asarray(x, dtype=float)
        gx = float(self.gain_field.value(x))
        ends = np.array([self.beta * gx * self.u_lo, self.beta * gx * self.u_hi])
        return float(ends.min()), float(ends.max())


def _check_sign(spec, lin, idx, region, expected_sign, n_samples, seed):
    pts = region.sample(n_samples, seed=seed + 97 * idx)
    vals = lin.beta * np.array([float(spec.g.value(p)) for p in pts])
    has_pos = bool(np.any(vals > EPS_G))
    has_neg = bool(np.any(vals < -EPS_G))
    if has_pos and has_neg:
        raise SignAmbiguousError(
            f"beta*g changes sign strictly inside region {idx}", region=idx)
    observed = 1 if has_pos else (-1 if has_neg else expected_sign)
    if observed != expected_sign:
        raise SignAmbiguousError(
            f"beta*g has sign {observed:+d} on region {idx} but the declared "
            f"sign implies {expected_sign:+d}", region=idx)


def build_stage_sets(spec, lin, n_sign_samples=256, seed=0):
    """One stage set per region, with the interval orientation fixed by the
    sign of beta*g there. Raises SignAmbiguousError when sampling finds a
    strict sign change inside a region (assumption violation)."""
    n = spec.n
    beta_sign = 1 if lin.beta > 0 else -1
    sets = []
    for idx, (region, sigma) in enumerate(spec.regions, start=1):
        sign_beta_g = sigma * beta_sign
        _check_sign(spec, lin, idx, region, sign_beta_g, n_sign_samples, seed)
        lo_mult = spec.u_lo if sign_beta_g > 0 else spec.u_hi
        hi_mult = spec.u_hi if sign_beta_g > 0 else spec.u_lo
        if isinstance(spec.g, PwaField):
            cons = tuple(
                _pwa_bound_rows(spec.g, region, lin.beta * lo_mult,
                                lin.alpha, lin.b0, upper=False)
                + _pwa_bound_rows(spec.g, region, lin.beta * hi_mult,
                                  lin.alpha, lin.b0, upper=True))
        else:
            cons = (
                _gain_bound_constraint(spec.g, lin.beta * lo_mult, lin.alpha,
                                       lin.b0, upper=False, region=region),
                _gain_bound_constraint(spec.g, lin.beta * hi_mult, lin.alpha,
                                       lin.b0, upper=True, region=region),
            )
        kinds = {con.kind for con in cons}
        kind = ("smooth" if "smooth" in kinds
                else "quadratic" if "quadratic" in kinds else "affine")
        lifted_C = np.hstack([region.C, np.zeros((region.n_rows, 1))])
        sets.append(StageSet(index=idx, region=region, sign_beta_g=sign_beta_g,
                             constraints=cons, kind=kind, lifted_C=lifted_C,
                             lifted_d=region.d.copy(), beta=lin.beta,
                             b0=lin.b0, alpha=lin.alpha, u_lo=spec.u_lo,
                             u_hi=spec.u_hi, gain_field=spec.g))
    return sets


def stage_membership(zsets, x, v, tol=DEFAULT_MEMBERSHIP_TOL):
    """Indices of all stage sets containing (x, v) within tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return {zs.index for zs in zsets if zs.contains(x, v, tol)}


def lemma1_forward(spec, lin, x, u, tol=DEFAULT_MEMBERSHIP_TOL):
    """Map an admissible (x, u) to its (x, v) image.

    The image is guaranteed to belong to at least one stage set; exposed for
    diagnostics and property testing.
    """
    x = np.asarray(x, dtype=float)
    if not region_membership(spec, x, tol):
        raise PreconditionError("state lies outside the constraint set")
    if not (spec.u_lo - tol <= float(u) <= spec.u_hi + tol):
        raise PreconditionError("input lies outside the admissible interval")
    return x, v_of_u(lin, spec, x, u)


def in_union_direct(spec, lin, x, v, tol=DEFAULT_MEMBERSHIP_TOL):
    """Two-branch definition of the joint constraint set, evaluated directly.

    Used as the independent reference for the decomposed membership test:
    where the gain is nonzero, Psi(x, v) must be an admissible input; on the
    gain's zero set, v is pinned to alpha.x / b0.
    """
    x = np.asarray(x, dtype=float)
    if not region_membership(spec, x, tol):
        return False
    gx = float(spec.g.value(x))
    if abs(gx) > EPS_G:
        u = (lin.b0 * float(v) - lin.alpha @ x) / (lin.beta * gx)
        # tolerance consistent with the decomposed inequalities, which are
        # expressed in b0*v - alpha.x units
        slack = tol / abs(lin.beta * gx)
        return spec.u_lo - slack <= u <= spec.u_hi + slack
    return abs(lin.b0 * float(v) - lin.alpha @ x) <= tol
