import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_equilibrium_count, nullcline_equilibria
from plaquedyn.equilibria import (
    EQUILIBRIUM_CSV_HEADER,
    NotAnEquilibriumError,
    StabilityClass,
    classify,
    classify_jacobian,
    e1_equilibrium,
    eigenvalues,
    equilibrium_csv_rows,
    quadratic_coeffs,
    solve_E2,
    theorem2_conditions,
)
from plaquedyn.model_core import ModelParams, jacobian_reduced, rhs_reduced

bd_params = st.builds(ModelParams, b=st.floats(0.02, 3.0), d=st.floats(0.2, 6.0),
                      e=st.floats(0.5, 5.0))


def by_branch(p):
    return {q.branch: q for q in solve_E2(p)}


class TestQuadratic:
    def test_baseline_coefficients(self, baseline):
        A, B, C = quadratic_coeffs(baseline)
        assert A == pytest.approx(0.024, rel=1e-13)
        assert B == pytest.approx(-0.454, rel=1e-13)
        assert C == pytest.approx(0.05, rel=1e-13)

    def test_baseline_roots_against_nullcline_oracle(self, baseline):
        eqs = by_branch(baseline)
        oracle = sorted(nullcline_equilibria(baseline), key=lambda r: r[1])
        assert eqs["E2-"].M == pytest.approx(oracle[0][1], rel=1e-9)
        assert eqs["E2+"].M == pytest.approx(oracle[1][1], rel=1e-9)
        assert eqs["E2-"].m == pytest.approx(oracle[0][0], rel=1e-9)
        assert eqs["E2+"].m == pytest.approx(oracle[1][0], rel=1e-9)

    def test_baseline_frozen_values(self, baseline):
        eqs = by_branch(baseline)
        assert eqs["E2+"].M == pytest.approx(18.805885746, rel=1e-9)
        assert eqs["E2-"].M == pytest.approx(0.110780920476, rel=1e-9)

    @given(bd_params)
    @settings(max_examples=200)
    def test_physical_roots_are_equilibria(self, p):
        for q in solve_E2(p):
            if q.physical:
                dm, dM = rhs_reduced(q.point, p)
                scale = max(1.0, q.m, q.M)
                assert max(abs(dm), abs(dM)) < 1e-10 * scale

    @given(bd_params)
    def test_roots_satisfy_quadratic(self, p):
        quad = quadratic_coeffs(p)
        for q in solve_E2(p):
            assert abs(quad(q.M)) <= 1e-10 * max(1.0, abs(quad.A) * q.M ** 2, abs(quad.B * q.M), abs(quad.C))

    def test_quadratic_residual_over_random_draws(self):
        rng = np.random.default_rng(1000)
        checked = 0
        while checked < 1000:
            p = ModelParams(b=rng.uniform(0.01, 3), d=rng.uniform(0.1, 6), e=rng.uniform(0.1, 6),
                            a=rng.uniform(0.5, 2), f=rng.uniform(0.5, 2))
            quad = quadratic_coeffs(p)
            assert quad.A > 0 and quad.C > 0
            if quad.discriminant <= 0:
                continue
            for q in solve_E2(p):
                assert abs(quad(q.M)) < 1e-10
            checked += 1

    def test_root_count_against_grid_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            p = ModelParams(b=rng.uniform(0.02, 3), d=rng.uniform(0.2, 6), e=rng.uniform(0.5, 5))
            inside = [q for q in solve_E2(p) if q.physical and 0 < q.m <= 25 and 0 < q.M <= 25]
            assert grid_equilibrium_count(p) == len(inside)

    def test_no_roots_below_fold(self, baseline):
        assert solve_E2(baseline.with_(b=0.02)) == []

    def test_plus_branch_is_the_larger_root(self, baseline):
        eqs = by_branch(baseline)
        assert eqs["E2+"].M > eqs["E2-"].M


class TestClassification:
    def test_baseline_branches(self, baseline):
        eqs = by_branch(baseline)
        assert eqs["E2+"].stability is StabilityClass.UNSTABLE_FOCUS
        assert eqs["E2-"].stability is StabilityClass.SADDLE

    def test_above_hopf_upper_branch_is_stable(self, baseline):
        assert by_branch(baseline.with_(b=0.3))["E2+"].stability is StabilityClass.STABLE_FOCUS

    @pytest.mark.parametrize("trace,det,expected", [
        (-1.0, -2.0, StabilityClass.SADDLE),
        (-1.0, 2.0, StabilityClass.STABLE_FOCUS),
        (-3.0, 2.0, StabilityClass.STABLE_NODE),
        (1.0, 2.0, StabilityClass.UNSTABLE_FOCUS),
        (3.0, 2.0, StabilityClass.UNSTABLE_NODE),
        (0.0, 2.0, StabilityClass.NON_HYPERBOLIC),
        (-1.0, 0.0, StabilityClass.NON_HYPERBOLIC),
    ])
    def test_trace_det_plane(self, trace, det, expected):
        assert classify_jacobian(trace, det) is expected

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_eigenvalues_match_numpy(self, tr, det):
        lam = eigenvalues(tr, det)
        assert sum(lam) == pytest.approx(tr, abs=1e-9)
        assert (lam[0] * lam[1]).real == pytest.approx(det, abs=1e-9)
        ref = np.sort_complex(np.roots([1.0, -tr, det]).astype(complex))
        assert np.allclose(np.sort_complex(np.array(lam)), ref, atol=1e-6)

    def test_classify_rejects_non_equilibrium(self, baseline):
        with pytest.raises(NotAnEquilibriumError):
            classify((1.0, 1.0), baseline)

    def test_classify_agrees_with_solver(self, baseline):
        for q in solve_E2(baseline):
            assert classify(q.point, baseline) is q.stability

    def test_e1_eigenvalues_match_jacobian(self, baseline):
        q = e1_equilibrium(5.0, baseline)
        J = jacobian_reduced(q.point, baseline)
        assert sorted(np.linalg.eigvals(J.as_array()).real) == pytest.approx(
            sorted(v.real for v in q.eigenvalues), abs=1e-15)
        assert q.stability is StabilityClass.NON_HYPERBOLIC

    def test_e1_requires_nonnegative_level(self, baseline):
        with pytest.raises(ValueError):
            e1_equilibrium(-1.0, baseline)


class TestSufficientStabilityConditions:
    @given(bd_params)
    @settings(max_examples=200)
    def test_conditions_imply_stability(self, p):
        for q in solve_E2(p):
            if not q.physical:
                continue
            try:
                c1, c2 = theorem2_conditions(q.point, p)
            except NotAnEquilibriumError:
                continue
            J = jacobian_reduced(q.point, p)
            assert c1 == (J.psi11 < 0) or abs(J.psi11) < 1e-12
            assert c2 == (J.psi21 > 0) or abs(J.psi21) < 1e-12
            if c1 and c2:
                assert q.stability.is_stable

    def test_unstable_focus_fails_conditions(self, baseline):
        q = by_branch(baseline)["E2+"]
        assert not all(theorem2_conditions(q.point, baseline))

    def test_rejects_non_equilibrium(self, baseline):
        with pytest.raises(NotAnEquilibriumError):
            theorem2_conditions((2.0, 2.0), baseline)


def test_csv_rows(baseline):
    rows = equilibrium_csv_rows(solve_E2(baseline))
    assert len(rows) == 2 and all(len(r) == len(EQUILIBRIUM_CSV_HEADER) for r in rows)
    assert rows[0][0] == "E2+" and rows[0][-2] == "UnstableFocus" and rows[0][-1] == 1


def test_nonphysical_roots_flagged():
    # small b: both roots of the quadratic are negative
    p = ModelParams(b=0.01)
    eqs = solve_E2(p)
    assert eqs and not any(q.physical for q in eqs)
    assert all(math.isfinite(q.m) for q in eqs)
