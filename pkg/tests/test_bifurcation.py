import math

import numpy as np
import pytest

from oracles import symbolic_l1
from plaquedyn.bifurcation import (
    LYAPUNOV_NOISE_FLOOR,
    NONEXISTENT,
    BifurcationPoint,
    Kind,
    codim2_curves,
    continue_branch,
    criticality,
    detect_fold,
    detect_hopf,
    detect_neutral_saddle,
    first_lyapunov,
    lyapunov_coefficient,
    stability_map_2d,
)
from plaquedyn.equilibria import NotAnEquilibriumError, classify, quadratic_coeffs, solve_E2
from plaquedyn.model_core import ModelParams, jacobian_entries


@pytest.fixture(scope="module")
def hopf():
    return detect_hopf(ModelParams(), (0.05, 1.5))


class TestFold:
    def test_location(self, baseline):
        pt = detect_fold(baseline, (0.01, 0.1))
        assert pt.kind is Kind.FOLD and 0.030 <= pt.b <= 0.031

    def test_roots_coincide(self, baseline):
        pt = detect_fold(baseline, (0.01, 0.1))
        A, B, C = quadratic_coeffs(baseline.with_(b=pt.b))
        assert math.sqrt(max(B * B - 4 * A * C, 0.0)) / A < 1e-5

    def test_agrees_with_existence_boundary(self, baseline):
        """The fold is where the two physical equilibria appear."""
        pt = detect_fold(baseline, (0.01, 0.1))

        def two_physical(b):
            return sum(q.physical for q in solve_E2(baseline.with_(b=b))) == 2

        lo, hi = 0.02, 0.05
        assert not two_physical(lo) and two_physical(hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if two_physical(mid) else (mid, hi)
        assert abs(hi - pt.b) < 1e-6
        eqs = solve_E2(baseline.with_(b=hi))
        assert abs(eqs[0].m - eqs[1].m) < 1e-2

    def test_survives_below_codim2_region(self, baseline):
        pt = detect_fold(baseline.with_(d=0.2), (0.01, 20.0))
        assert pt is not None and pt.d == 0.2

    def test_not_found_without_sign_change(self, baseline):
        assert detect_fold(baseline, (0.01, 0.02)) is None

    def test_other_parameter(self, baseline):
        pt = detect_fold(baseline.with_(b=0.030594134088605646), (1.0, 5.0), param="d")
        assert pt.value == pytest.approx(3.0, abs=1e-6)


class TestHopf:
    def test_location_and_certificate(self, hopf, baseline):
        assert hopf.kind is Kind.HOPF
        assert 0.229 <= hopf.b <= 0.233
        J = jacobian_entries(*hopf.state, baseline.with_(b=hopf.b))
        assert abs(J.trace) < 1e-8 and J.det > 1e-10

    def test_eigenvalues_on_imaginary_axis(self, hopf, baseline):
        q = next(q for q in solve_E2(baseline.with_(b=hopf.b)) if q.branch == "E2+")
        assert abs(q.eigenvalues[0].real) < 1e-8 and q.eigenvalues[0].imag > 0

    def test_subcritical(self, hopf):
        assert hopf.lyapunov > 0
        assert criticality(hopf.lyapunov) == "subcritical"

    def test_absent_below_codim2_region(self, baseline):
        assert detect_hopf(baseline.with_(d=0.2), (0.01, 1.5)) is None


class TestNeutralSaddle:
    def test_location(self, baseline):
        pt = detect_neutral_saddle(baseline, (0.05, 1.5))
        assert pt.kind is Kind.NEUTRAL_SADDLE and not pt.is_bifurcation
        assert pt.b == pytest.approx(0.43656, abs=0.005)

    def test_opposite_real_eigenvalues(self, baseline):
        pt = detect_neutral_saddle(baseline, (0.05, 1.5))
        J = jacobian_entries(*pt.state, baseline.with_(b=pt.b))
        assert J.det < 0
        lam = np.linalg.eigvals(J.as_array())
        assert np.all(lam.imag == 0)
        assert abs(lam[0] + lam[1]) < 1e-6 * abs(lam[0])

    def test_absent_below_codim2_region(self, baseline):
        assert detect_neutral_saddle(baseline.with_(d=0.2), (0.01, 1.5)) is None


class TestLyapunov:
    def test_normal_forms(self):
        def cubic(sign):
            def f(x):
                r2 = x[0] ** 2 + x[1] ** 2
                return np.array([-x[1] + sign * x[0] * r2, x[0] + sign * x[1] * r2])
            return f

        # with unit-length eigenvector q, x = 2 Re(z q) gives |x|^2 = 2|z|^2,
        # so a cubic coefficient s in x becomes 2s in the complex normal form
        sup, om = lyapunov_coefficient(cubic(-1.0), (0.0, 0.0))
        sub, _ = lyapunov_coefficient(cubic(+1.0), (0.0, 0.0))
        assert om == pytest.approx(1.0)
        assert sup == pytest.approx(-2.0, rel=1e-6)
        assert sub == pytest.approx(2.0, rel=1e-6)

    def test_matches_symbolic_tensors(self, hopf, baseline):
        ref, om = symbolic_l1(baseline.with_(b=hopf.b), *hopf.state)
        assert hopf.lyapunov == pytest.approx(ref, rel=1e-5)
        # scaled by the Hopf frequency this is the value continuation tools report
        assert hopf.lyapunov * om == pytest.approx(3.7483e-6, rel=1e-3)

    def test_first_lyapunov_recomputes(self, hopf, baseline):
        assert first_lyapunov(baseline, hopf) == pytest.approx(hopf.lyapunov, rel=1e-12)

    def test_requires_hopf_point(self, baseline):
        ns = detect_neutral_saddle(baseline, (0.05, 1.5))
        with pytest.raises(ValueError):
            first_lyapunov(baseline, ns)

    def test_real_eigenvalues_rejected(self):
        with pytest.raises(ValueError):
            lyapunov_coefficient(lambda x: -x, (0.0, 0.0))

    @pytest.mark.parametrize("value,label", [
        (1e-4, "subcritical"), (-1e-4, "supercritical"), (0.5 * LYAPUNOV_NOISE_FLOOR, "indeterminate"),
        (None, "indeterminate"),
    ])
    def test_criticality(self, value, label):
        assert criticality(value) == label


class TestBranch:
    def test_two_tracks_throughout(self, baseline):
        br = continue_branch(baseline, (0.05, 1.5), 120)
        assert not br.empty
        assert all(br.labels[0]) and all(br.labels[1])
        assert np.all(np.diff(br.values) > 0)

    def test_empty_below_fold(self, baseline):
        br = continue_branch(baseline, (0.01, 0.02), 10)
        assert br.empty and not list(br.rows())

    def test_pointwise_consistency(self, baseline):
        br = continue_branch(baseline, (0.05, 1.5), 30)
        i = int(np.argmin(np.abs(br.values - 0.2)))
        eqs = {q.branch: q for q in solve_E2(baseline.with_(b=br.values[i]))}
        for k in range(2):
            q = eqs[br.labels[k][i]]
            assert tuple(br.points[k, i]) == tuple(q.point)
            assert br.classes[k][i] == q.stability.value

    def test_entries_are_equilibria(self, baseline):
        br = continue_branch(baseline, (0.05, 1.5), 40)
        for v, _label, m, M, *_ in br.rows():
            assert classify((m, M), baseline.with_(b=v))

    def test_tracks_continuous(self, baseline):
        br = continue_branch(baseline, (0.05, 1.5), 200)
        for k in range(2):
            steps = np.linalg.norm(np.diff(br.points[k], axis=0), axis=1)
            assert np.max(steps) < 2.0

    def test_requires_two_samples(self, baseline):
        with pytest.raises(ValueError):
            continue_branch(baseline, (0.05, 1.5), 1)


class TestStabilityMap:
    @pytest.fixture(scope="class")
    @staticmethod
    def smap():
        return stability_map_2d(ModelParams(), (0.01, 2.0), (0.1, 6.0), 24, 20)

    def test_shape(self, smap):
        assert smap.class_p.shape == (20, 24) and len(list(smap.rows())) == 480

    def test_cells_match_classify(self, smap):
        checked = 0
        for (b, d, cp, cn) in smap.rows():
            p = ModelParams(b=b, d=d)
            for q in solve_E2(p):
                if not q.physical:
                    continue
                try:
                    cls = classify(q.point, p)
                except NotAnEquilibriumError:
                    continue
                assert cls.value == (cp if q.branch == "E2+" else cn)
                checked += 1
        assert checked > 100

    def test_no_real_roots_means_nonexistent(self, smap):
        for (b, d, cp, cn) in smap.rows():
            if quadratic_coeffs(ModelParams(b=b, d=d)).discriminant < 0:
                assert cp == cn == NONEXISTENT

    def test_large_b_and_d_lower_branch_is_saddle(self, smap):
        assert smap.class_n[-1, -1] == "Saddle"

    def test_row_at_low_d(self):
        smap = stability_map_2d(ModelParams(), (0.01, 3.0), (0.9, 0.9), 60, 1)
        row = list(smap.class_p[0])
        assert row[-1] in ("StableFocus", "StableNode")
        assert NONEXISTENT in row[:20]

    def test_parallel_matches_serial(self):
        a = stability_map_2d(ModelParams(), (0.01, 1.0), (0.5, 4.0), 6, 5, workers=1)
        b = stability_map_2d(ModelParams(), (0.01, 1.0), (0.5, 4.0), 6, 5, workers=2)
        assert list(a.rows()) == list(b.rows())


class TestCodim2:
    @pytest.fixture(scope="class")
    @staticmethod
    def e5():
        return codim2_curves(ModelParams(), 5.0)

    @pytest.fixture(scope="class")
    @staticmethod
    def e1():
        return codim2_curves(ModelParams(), 1.0)

    def test_bt_points(self, e1, e5):
        (bt1,) = [pt for pt in e1.points if pt.kind is Kind.BOGDANOV_TAKENS]
        (bt5,) = [pt for pt in e5.points if pt.kind is Kind.BOGDANOV_TAKENS]
        assert abs(bt1.b - 0.42) <= 0.02 and abs(bt1.d - 0.543) <= 0.02
        assert abs(bt5.b - 0.6489) <= 0.02 and abs(bt5.d - 1.063) <= 0.05

    def test_single_generalized_hopf(self, e5):
        gh = [pt for pt in e5.points if pt.kind is Kind.GENERALIZED_HOPF]
        assert len(gh) == 1
        assert abs(gh[0].lyapunov) < 1e-8
        l1 = e5.hopf_curve[:, 2]
        assert np.count_nonzero(np.diff(np.sign(l1)) != 0) == 1

    def test_no_generalized_hopf_for_e1(self, e1):
        assert not [pt for pt in e1.points if pt.kind is Kind.GENERALIZED_HOPF]

    def test_hopf_curve_certificates(self, e5):
        for b, d, _ in e5.hopf_curve:
            p = ModelParams(b=b, d=d, e=5.0)
            q = next(q for q in solve_E2(p) if q.branch == "E2+")
            J = jacobian_entries(q.m, q.M, p)
            assert abs(J.trace) < 1e-8 and J.det > 1e-10

    def test_fold_curve_zero_discriminant(self, e1):
        for b, d in e1.fold_curve:
            A, B, C = quadratic_coeffs(ModelParams(b=b, d=d))
            assert abs(B * B - 4 * A * C) < 1e-8 * B * B
            assert math.sqrt(max(B * B - 4 * A * C, 0.0)) / A < 1e-5

    def test_bt_tangency(self, e1):
        (bt,) = [pt for pt in e1.points if pt.kind is Kind.BOGDANOV_TAKENS]
        d = bt.d + 1e-3
        fold = detect_fold(ModelParams(d=d), (0.01, 3.0))
        hopf = detect_hopf(ModelParams(d=d), (0.01, 3.0))
        assert hopf is not None and hopf.kind is Kind.HOPF
        assert abs(hopf.b - fold.b) < 1e-2

    def test_bt_double_zero(self, e1):
        (bt,) = [pt for pt in e1.points if pt.kind is Kind.BOGDANOV_TAKENS]
        J = jacobian_entries(*bt.state, ModelParams(b=bt.b, d=bt.d))
        assert abs(J.trace) < 1e-8 and abs(J.det) < 1e-8


def test_point_defaults():
    pt = BifurcationPoint(Kind.HOPF, 0.2)
    assert pt.d is None and pt.is_bifurcation
