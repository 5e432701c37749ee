import numpy as np
import pytest

from branchlab.asymptotics import (
    basic_lemma_constants,
    conditioned_row,
    conditioned_transition,
    critical_decay,
    critical_decay_ratio,
    decay_classification,
    invariant_measure,
    k_function,
    local_limit,
    scaled_transition_row,
    schroeder_check,
    yaglom_gf,
)
from branchlab.offspring import LinearFractionalLaw, OffspringLaw
from branchlab.series import SeriesEngine


class TestBasicLemma:
    def test_sub_constants(self, sub_law, sub_engine):
        c = basic_lemma_constants(sub_law, sub_engine)
        assert c.q == 1.0
        assert c.beta == pytest.approx(0.75, abs=1e-15)
        assert c.delta1 == pytest.approx(8.0 / 3.0, abs=1e-9)
        assert c.delta2 == pytest.approx(4.9566, abs=1e-3)
        assert c.a_of_s(0.0) == pytest.approx(0.38549704342650865, abs=1e-10)
        assert c.delta_of_s(0.0) == pytest.approx(3.1881072348127644, abs=1e-9)
        br = c.a_bracket(0.0)
        assert br.lo <= c.a_of_s(0.0) <= br.hi

    def test_super_constants(self, super_law, super_engine):
        c = basic_lemma_constants(super_law, super_engine)
        assert c.q == pytest.approx(0.5, abs=5e-16)
        assert c.delta1 == pytest.approx(16.0 / 3.0, abs=1e-9)
        assert c.delta2 == pytest.approx(9.91313727579, abs=1e-6)
        assert c.a_of_s(0.0) == pytest.approx(0.19274852171325427, abs=1e-10)
        br = c.a_bracket(0.0)
        assert br.lo == pytest.approx(0.1437490309, abs=1e-8)
        assert br.hi == pytest.approx(0.2142857143, abs=1e-8)
        assert br.lo <= c.a_of_s(0.0) <= br.hi


class TestKFunction:
    def test_product_value_sub(self, sub_law, sub_engine):
        r = k_function(sub_law, sub_engine, s=0.0)
        assert r.product_limit == pytest.approx(0.10439011771622694, abs=1e-9)

    def test_closed_form_documented_failure(self, sub_law, sub_engine):
        # the exp(-delta * A) shortcut does not reproduce the product;
        # both disagree by far more than any numerical tolerance
        r = k_function(sub_law, sub_engine, s=0.0)
        assert r.closed_form == pytest.approx(0.29258328636046527, abs=1e-9)
        assert abs(r.closed_form - r.product_limit) > 0.05

    def test_bracket_super_documented_failure(self, super_law, super_engine):
        r = k_function(super_law, super_engine, s=0.0)
        assert r.product_limit == pytest.approx(0.10439011771622343, abs=1e-9)
        assert not (r.bracket.lo <= r.product_limit <= r.bracket.hi)


class TestCriticalDecay:
    @pytest.mark.parametrize("s", [0.0, 0.5])
    def test_ratio_near_one(self, critical_law, critical_engine, s):
        ratio = critical_decay_ratio(critical_law, critical_engine, s, 200)
        assert 0.9 < ratio < 1.1

    def test_lf_exact(self):
        lf = LinearFractionalLaw(0.25, 0.5)
        eng = SeriesEngine(lf, order=64)
        ratio = critical_decay_ratio(lf, eng, 0.0, 50)
        assert ratio == pytest.approx(1.0, abs=1e-9)

    def test_decay_formula_positive(self, critical_law):
        v = critical_decay(critical_law, 0.5, 100)
        assert 0.0 < v < 0.5


class TestLocalLimit:
    def test_values_in_bracket(self, critical_law, critical_engine):
        r = local_limit(critical_law, critical_engine, n_list=(200, 400))
        assert r.values[200] == pytest.approx(10.40859918, abs=1e-6)
        assert r.values[400] == pytest.approx(10.76466181, abs=1e-6)
        for v in r.values.values():
            assert r.bracket.lo <= v <= r.bracket.hi

    def test_p11_at_zero(self, critical_law, critical_engine):
        r = local_limit(critical_law, critical_engine, n_list=(200,))
        assert r.p11_at_zero == 1

    def test_lf_critical(self):
        lf = LinearFractionalLaw(0.25, 0.5)
        eng = SeriesEngine(lf, order=64)
        r = local_limit(lf, eng, n_list=(60,))
        # n^2 P_11(n) = (n/(n+1))^2 -> 1, bracket [1/(b2) * p1 ... ] wide
        v = r.values[60]
        assert r.bracket.lo <= v <= r.bracket.hi
        assert v == pytest.approx(1.0, abs=0.05)


class TestInvariantMeasure:
    @pytest.mark.parametrize("fixture", ["sub", "super"])
    def test_noncritical(self, fixture, request):
        law = request.getfixturevalue(fixture + "_law")
        eng = request.getfixturevalue(fixture + "_engine")
        m = invariant_measure(law, eng)
        assert m.mu[0] == 0.0
        assert m.mu[1] == pytest.approx(1.0, abs=1e-12)
        # invariance: beta * mu_j = sum_i mu_i P_ij(1)
        j_top = 12
        rows = eng.one_step_rows(len(m.mu) - 1, j_max=j_top)
        beta = eng.beta
        for j in range(1, j_top + 1):
            lhs = beta * m.mu[j]
            rhs = sum(m.mu[i] * rows[i][j] for i in range(1, len(m.mu)))
            assert abs(lhs - rhs) < 1e-6
        assert m.nu.sum() == pytest.approx(1.0, abs=1e-9)
        assert m.v_gf(1.0) == pytest.approx(1.0, abs=1e-9)
        assert m.m_at_q == pytest.approx(m.a0 / m.k0, rel=1e-9)

    def test_critical_invariance_rate(self, critical_law, critical_engine):
        # the Richardson estimate converges like 1/n; check the level and
        # that doubling n at least halves the residual
        m200 = invariant_measure(critical_law, critical_engine, n_critical=200)
        m400 = invariant_measure(critical_law, critical_engine, n_critical=400)

        def resid(m):
            j_top = 12
            rows = critical_engine.one_step_rows(len(m.mu) - 1, j_max=j_top)
            worst = 0.0
            for j in range(1, j_top + 1):
                rhs = sum(m.mu[i] * rows[i][j] for i in range(1, len(m.mu)))
                worst = max(worst, abs(m.mu[j] - rhs) / max(m.mu[j], 1.0))
            return worst

        r200, r400 = resid(m200), resid(m400)
        assert r200 < 0.01
        assert r400 < 0.5 * r200

    def test_critical_partial_sum_slope(self, critical_law, critical_engine):
        m = invariant_measure(critical_law, critical_engine, n_critical=200)
        csum = np.cumsum(m.mu)
        slope = (csum[40] - csum[20]) / 20.0
        # bracket [p0/B, p0/(p1 B)] = [1, 2] for the bundled critical law
        assert 1.0 <= slope <= 2.0
        assert m.mu[10] == pytest.approx(1.382, abs=5e-3)

    def test_p1_zero_rejected(self):
        law = OffspringLaw([0.5, 0.0, 0.5])
        with pytest.raises(ValueError):
            invariant_measure(law)


class TestConditioned:
    def test_scaled_row_i2(self, super_law, super_engine):
        n = 8
        fn = super_engine.fn_coeffs(n)
        sq = np.convolve(fn, fn)
        bn = super_engine.beta**n
        w = scaled_transition_row(super_law, super_engine, n, i=2, j_max=10)
        for j in range(1, 11):
            assert w[j] == pytest.approx(sq[j] / bn, rel=1e-10)
        assert w[0] == 0.0

    def test_row_direct_small_n(self, super_law, super_engine):
        n = 10
        row = conditioned_row(super_law, super_engine, n, i=1, j_max=10)
        fn = super_engine.fn_coeffs(n)
        q = super_engine.q
        denom = q - fn[0]
        for j in range(1, 11):
            want = q**j * fn[j] / denom
            assert row[j] == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("fixture", ["sub", "super"])
    def test_row_converges_to_nu(self, fixture, request):
        law = request.getfixturevalue(fixture + "_law")
        eng = request.getfixturevalue(fixture + "_engine")
        m = invariant_measure(law, eng)
        row = conditioned_row(law, eng, 200, i=1, j_max=len(m.nu) - 1)
        gap = np.max(np.abs(row[: len(m.nu)] - m.nu))
        assert gap < 1e-6
        assert row.sum() == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("fixture", ["sub", "super"])
    def test_row_mean(self, fixture, request):
        law = request.getfixturevalue(fixture + "_law")
        eng = request.getfixturevalue(fixture + "_engine")
        row = conditioned_row(law, eng, 200, i=1, j_max=140)
        mean = float(np.arange(len(row)) @ row)
        assert mean == pytest.approx(2.5940536172697914, abs=1e-6)

    def test_shape_independent_of_i(self, super_law, super_engine):
        rows = conditioned_transition(
            super_law, super_engine, n=200, i_max=3, j_max=64
        )
        # far past mixing the starting state is forgotten entirely
        assert np.max(np.abs(rows[2] - rows[3])) < 1e-12
        assert np.all(rows[0] == 0.0)

    def test_yaglom_gf_endpoints(self, sub_law, sub_engine):
        assert yaglom_gf(sub_law, sub_engine, 50, 0.0) == pytest.approx(
            0.0, abs=1e-12
        )
        assert yaglom_gf(sub_law, sub_engine, 50, 1.0) == pytest.approx(
            1.0, abs=1e-9
        )


class TestCriticalConditionedScale:
    def test_nv_documented_failure(self, critical_law, critical_engine):
        # the n*V_n(s) normalisation settles near 3.13, not 4
        v1 = 400 * yaglom_gf(critical_law, critical_engine, 400, 0.5, i=1)
        assert v1 == pytest.approx(3.1348788517526316, abs=1e-9)
        assert abs(v1 - 4.0) / 4.0 > 0.1

    def test_nv_i_independent(self, critical_law, critical_engine):
        v1 = 400 * yaglom_gf(critical_law, critical_engine, 400, 0.5, i=1)
        v3 = 400 * yaglom_gf(critical_law, critical_engine, 400, 0.5, i=3)
        assert abs(v1 - v3) / v1 < 0.02


class TestDecayClassification:
    def test_regimes(self, sub_law, critical_law, super_law):
        ds = decay_classification(sub_law)
        dc = decay_classification(critical_law)
        dp = decay_classification(super_law)
        assert ds.regime == "subcritical"
        assert dc.regime == "critical"
        assert dp.regime == "supercritical"
        assert dc.polynomial
        assert not ds.polynomial
        assert ds.rate == pytest.approx(abs(np.log(0.75)), rel=1e-12)
        assert dp.rate == pytest.approx(abs(np.log(0.75)), rel=1e-10)


class TestSchroeder:
    @pytest.mark.parametrize("fixture", ["sub", "super"])
    def test_functional_equations(self, fixture, request):
        law = request.getfixturevalue(fixture + "_law")
        rep = schroeder_check(law)
        assert rep.max_v_residual < 1e-9
        assert rep.max_a_residual < 1e-9

    def test_super_v_at_p0_over_q(self, super_law, super_engine):
        # 1 - V(p0/q) = beta for the bundled supercritical law
        m = invariant_measure(super_law, super_engine)
        assert 1.0 - m.v_gf(0.5) == pytest.approx(0.75, abs=1e-9)
