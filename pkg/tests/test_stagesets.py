import numpy as np
import pytest

import convexnmpc as cn
from helpers import finite_diff_grad, finite_diff_hess, toy_spec


class TestBuild:
    def test_ex2_signs_and_kinds(self, ex2):
        zsets = ex2["zsets"]
        assert len(zsets) == 3
        assert [z.sign_beta_g for z in zsets] == [1, -1, -1]
        assert all(z.kind == "smooth" for z in zsets)

    def test_ex1_quadratic_class(self, ex1):
        assert [z.kind for z in ex1["zsets"]] == ["quadratic"]
        assert ex1["zsets"][0].sign_beta_g == -1

    def test_ex3_affine_class(self, ex3):
        assert all(z.kind == "affine" for z in ex3["zsets"])
        # the center pyramid spans four affine pieces: four rows per side
        assert len(ex3["zsets"][0].constraints) == 8
        assert all(len(z.constraints) == 2 for z in ex3["zsets"][1:])

    def test_constant_gain_reduces_to_affine_interval(self):
        spec = toy_spec(np.array([[0.9, 0.1], [0.0, 0.8]]), [0.1, 0.2],
                        u=(-1.5, 2.0))
        lin = cn.build_linearization(
            spec, cn.compute_output_vector(spec.A, spec.b, 1.0), b0=1.0)
        zsets = cn.build_stage_sets(spec, lin)
        z1 = zsets[0]
        assert z1.kind == "affine"
        # with g = 1, beta = b0 = 1, alpha = 0: u_lo <= v <= u_hi
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.uniform(-1, 1, 2)
            v = rng.uniform(-3, 3)
            assert z1.contains(x, v, 1e-9) == (spec.u_lo - 1e-9 <= v
                                               <= spec.u_hi + 1e-9)

    def test_sign_ambiguous_region_rejected(self):
        # positive gain at the center, negative at the box corners
        g = cn.Quadratic(-np.eye(2), np.zeros(2), 0.5)
        spec = toy_spec(np.array([[0.9, 0.1], [0.0, 0.8]]), [0.1, 0.2],
                        g=g, sign=1)
        lin = cn.build_linearization(
            spec, cn.compute_output_vector(spec.A, spec.b, 1.0), b0=1.0)
        with pytest.raises(cn.SignAmbiguousError):
            cn.build_stage_sets(spec, lin)


class TestMembership:
    def test_tight_upper_bound(self, ex2):
        # at the origin the admissible band is 0.1*v in [-0.192, 0.192]
        assert cn.stage_membership(ex2["zsets"], [0.0, 0.0], 1.92) == {1}

    def test_outside_band(self, ex2):
        assert cn.stage_membership(ex2["zsets"], [0.0, 0.0], 2.5) == set()

    def test_vanishing_gain_pins_v(self, ex2):
        x = np.array([2.0 / 3.0, -2.0 / 3.0])  # shared facet, g = 0
        assert cn.stage_membership(ex2["zsets"], x, 0.0) == {1, 3}
        assert cn.stage_membership(ex2["zsets"], x, 0.5) == set()

    def test_interval_ends(self, ex2):
        z1 = ex2["zsets"][0]
        lo, hi = z1.bound_interval(np.zeros(2))
        assert abs(lo + 0.192) < 1e-12 and abs(hi - 0.192) < 1e-12


class TestOracles:
    @pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
    def test_derivatives_match_finite_differences(self, name, request):
        data = request.getfixturevalue(name)
        rng = np.random.default_rng(3)
        for zs in data["zsets"]:
            for con in zs.constraints:
                for _ in range(17):
                    z = np.concatenate([rng.uniform(-1.5, 1.5, 2),
                                        rng.uniform(-2, 2, 1)])
                    g_fd = finite_diff_grad(con.value, z)
                    scale = max(1.0, np.max(np.abs(g_fd)))
                    assert np.max(np.abs(con.grad(z) - g_fd)) / scale < 1e-5
                    H_fd = finite_diff_hess(con.value, z)
                    assert np.max(np.abs(con.hess(z) - H_fd)) < 1e-4

    def test_banded_surrogate_matches_inside_region(self, ex2):
        # tangent-extended constraints agree with the raw sinusoid bounds on
        # their own region, so the stage sets are unchanged
        spec, lin = ex2["spec"], ex2["lin"]
        rng = np.random.default_rng(5)
        for zs in ex2["zsets"]:
            pts = zs.region.sample(100, seed=9)
            for x in pts:
                gx = float(spec.g.value(x))
                lo, hi = zs.bound_interval(x)
                for v in rng.uniform(-3, 3, 3):
                    word = lin.b0 * v - lin.alpha @ x
                    direct = max(lo - word, word - hi)
                    oracle = max(con.value(np.concatenate([x, [v]]))
                                 for con in zs.constraints)
                    assert abs(direct - oracle) < 1e-9

    def test_surrogate_convex_everywhere(self, ex2):
        rng = np.random.default_rng(11)
        for zs in ex2["zsets"]:
            for con in zs.constraints:
                for _ in range(100):
                    z = np.concatenate([rng.uniform(-4, 4, 2),
                                        rng.uniform(-4, 4, 1)])
                    eigs = np.linalg.eigvalsh(con.hess(z))
                    assert eigs.min() > -1e-12


class TestUnionEquivalence:
    @pytest.mark.parametrize("name", ["ex2", "ex3"])
    def test_decomposition_matches_direct_definition(self, name, request):
        data = request.getfixturevalue(name)
        spec, lin, zsets = data["spec"], data["lin"], data["zsets"]
        rng = np.random.default_rng(17)
        tol = 1e-8
        mismatches = 0
        for _ in range(10_000):
            x = rng.uniform(-2.2, 2.2, 2)
            v = rng.uniform(-4, 4)
            in_sets = bool(cn.stage_membership(zsets, x, v, tol))
            in_union = cn.in_union_direct(spec, lin, x, v, tol)
            if in_sets != in_union:
                # only boundary-tolerance discrepancies are allowed: the
                # point must be within 10*tol of both verdicts
                resid = min(abs(con.value(np.concatenate([x, [v]])))
                            for zs in zsets for con in zs.constraints)
                assert resid <= 10 * tol
                mismatches += 1
        assert mismatches <= 20

    @pytest.mark.parametrize("name", ["ex2", "ex3"])
    def test_each_stage_set_is_convex(self, name, request):
        data = request.getfixturevalue(name)
        zsets = data["zsets"]
        rng = np.random.default_rng(23)
        for zs in zsets:
            members = []
            tries = 0
            while len(members) < 2_000 and tries < 200_000:
                tries += 1
                x = rng.uniform(-2.2, 2.2, 2)
                v = rng.uniform(-4, 4)
                if zs.contains(x, v, 0.0):
                    members.append(np.concatenate([x, [v]]))
            pairs = min(1_000, len(members) // 2)
            for k in range(pairs):
                mid = 0.5 * (members[2 * k] + members[2 * k + 1])
                assert zs.contains(mid[:2], mid[2], 1e-9)


class TestLemmaForward:
    def test_forward_membership_never_empty(self, ex2):
        spec, lin, zsets = ex2["spec"], ex2["lin"], ex2["zsets"]
        rng = np.random.default_rng(31)
        done = 0
        while done < 1000:
            x = rng.uniform(-2, 2, 2)
            if not cn.region_membership(spec, x, 0.0):
                continue
            u = rng.uniform(spec.u_lo, spec.u_hi)
            xf, v = cn.lemma1_forward(spec, lin, x, u)
            assert cn.stage_membership(zsets, xf, v, 1e-8)
            done += 1

    def test_round_trip_recovers_input(self, ex2):
        spec, lin = ex2["spec"], ex2["lin"]
        rng = np.random.default_rng(37)
        done = 0
        while done < 500:
            x = rng.uniform(-2, 2, 2)
            if not cn.region_membership(spec, x, 0.0):
                continue
            u = rng.uniform(spec.u_lo, spec.u_hi)
            _, v = cn.lemma1_forward(spec, lin, x, u)
            u_back = cn.u_of_v(lin, spec, x, v)
            if abs(float(spec.g.value(x))) > cn.EPS_G:
                assert abs(u_back - u) <= 1e-10 * max(1.0, abs(u))
            else:
                assert u_back == 0.0
            done += 1

    def test_facet_state_any_input(self, ex2):
        spec, lin, zsets = ex2["spec"], ex2["lin"], ex2["zsets"]
        x = np.array([2.0 / 3.0, -2.0 / 3.0])
        for u in (-2.0, 0.0, 1.3):
            xf, v = cn.lemma1_forward(spec, lin, x, u)
            assert abs(v - lin.alpha @ x / lin.b0) < 1e-12
            assert cn.stage_membership(zsets, xf, v, 1e-8)

    def test_preconditions_enforced(self, ex2):
        with pytest.raises(cn.PreconditionError):
            cn.lemma1_forward(ex2["spec"], ex2["lin"], [5.0, 5.0], 0.0)
        with pytest.raises(cn.PreconditionError):
            cn.lemma1_forward(ex2["spec"], ex2["lin"], [0.0, 0.0], 7.0)


def test_pulled_back_stage_cost_positive_definite(ex2):
    """The quadratic stage cost in (x, v) stays positive definite when pulled
    back through the input map to (x, u)."""
    spec, lin = ex2["spec"], ex2["lin"]
    Q, rho = ex2["Q"], ex2["rho"]

    def pulled_back(x, u):
        v = cn.v_of_u(lin, spec, x, u)
        return float(x @ Q @ x) + rho * v * v

    # zero exactly at the origin pair
    assert pulled_back(np.zeros(2), 0.0) == 0.0
    # nonzero input at the origin is visible because the gain is nonzero there
    assert pulled_back(np.zeros(2), 0.3) > 0.0
    rng = np.random.default_rng(41)
    for _ in range(10_000):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-2, 2)
        assert pulled_back(x, u) > 0.0
