import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchlab.offspring import (
    LinearFractionalLaw,
    OffspringLaw,
    model_constants,
)


class TestValidation:
    def test_too_short(self):
        with pytest.raises(ValueError):
            OffspringLaw([0.5, 0.5])

    def test_bad_sum(self):
        with pytest.raises(ValueError):
            OffspringLaw([0.3, 0.3, 0.3])

    def test_negative_mass(self):
        with pytest.raises(ValueError):
            OffspringLaw([0.5, 0.7, -0.2])

    def test_zero_p0(self):
        with pytest.raises(ValueError):
            OffspringLaw([0.0, 0.5, 0.5])

    def test_degenerate_p0_p1(self):
        # p0 + p1 = 1 leaves no branching at all
        with pytest.raises(ValueError):
            OffspringLaw([0.4, 0.6, 0.0])


class TestGeneratingFunction:
    def test_gf_at_one(self, critical_law):
        assert critical_law.gf(1.0) == pytest.approx(1.0, abs=1e-15)

    def test_gf_quarter_critical(self, critical_law):
        # 0.25 + 0.5*0.25 + 0.25*0.0625
        assert critical_law.gf(0.25) == pytest.approx(0.390625, abs=1e-15)

    def test_second_derivative_critical(self, critical_law):
        assert critical_law.gf_deriv(1.0, order=2) == pytest.approx(0.5, abs=1e-14)

    def test_first_derivative_super(self, super_law):
        # 0.25 + 2*0.5*0.5
        assert super_law.gf_deriv(0.5) == pytest.approx(0.75, abs=1e-14)

    def test_trailing_zeros_trimmed(self):
        law = OffspringLaw([0.25, 0.5, 0.25, 0.0, 0.0])
        assert law.degree == 2
        assert law.pmf.shape == (3,)

    def test_taylor_matches_derivatives(self, sub_law):
        x0 = 0.3
        coeffs = sub_law.taylor_at(x0)
        for m, c in enumerate(coeffs):
            want = sub_law.gf_deriv(x0, order=m) / math.factorial(m)
            assert c == pytest.approx(want, abs=1e-13)

    def test_mean(self, sub_law, critical_law, super_law):
        assert sub_law.mean == pytest.approx(0.75, abs=1e-15)
        assert critical_law.mean == pytest.approx(1.0, abs=1e-15)
        assert super_law.mean == pytest.approx(1.25, abs=1e-15)


class TestExtinction:
    def test_subcritical(self, sub_law):
        assert sub_law.extinction_prob == 1.0

    def test_critical(self, critical_law):
        assert critical_law.extinction_prob == 1.0

    def test_supercritical(self, super_law):
        assert abs(super_law.extinction_prob - 0.5) < 5e-16

    def test_fixed_point(self, super_law):
        q = super_law.extinction_prob
        assert super_law.gf(q) == pytest.approx(q, abs=1e-15)


class TestModelConstants:
    def test_sub(self, sub_law):
        c = model_constants(sub_law)
        assert c.q == 1.0
        assert c.beta == pytest.approx(0.75, abs=1e-15)
        assert c.alpha == pytest.approx(5.0 / 3.0, rel=1e-13)
        assert c.gamma == pytest.approx(8.0 / 3.0, rel=1e-13)
        assert c.psi == pytest.approx(40.0, rel=1e-12)
        assert not c.is_critical

    def test_critical(self, critical_law):
        c = model_constants(critical_law)
        assert c.q == 1.0
        assert c.beta == pytest.approx(1.0, abs=1e-15)
        assert c.b2 == pytest.approx(0.25, abs=1e-15)
        assert c.alpha == pytest.approx(1.5, rel=1e-13)
        assert c.gamma is None
        assert c.is_critical

    def test_super(self, super_law):
        c = model_constants(super_law)
        assert c.q == pytest.approx(0.5, abs=5e-16)
        assert c.beta == pytest.approx(0.75, rel=1e-13)
        assert not c.is_critical

    def test_beta_equals_mean_when_q_is_one(self, sub_law, critical_law):
        for law in (sub_law, critical_law):
            c = model_constants(law)
            assert c.beta == pytest.approx(law.mean, abs=1e-14)


class TestConjugate:
    def test_super_conjugate_is_sub(self, super_law, sub_law):
        dual = super_law.conjugate()
        assert np.allclose(dual.pmf, sub_law.pmf, atol=1e-15)

    def test_sub_conjugate_is_self(self, sub_law):
        assert sub_law.conjugate() is sub_law

    def test_dual_mean_is_decay_rate(self, super_law):
        c = model_constants(super_law)
        assert super_law.conjugate().mean == pytest.approx(c.beta, rel=1e-13)


class TestLinearFractional:
    def test_validation(self):
        with pytest.raises(ValueError):
            LinearFractionalLaw(0.0, 0.5)
        with pytest.raises(ValueError):
            LinearFractionalLaw(0.6, 0.5)

    def test_critical_instance(self):
        lf = LinearFractionalLaw(0.25, 0.5)
        assert lf.is_critical
        assert lf.mean_exact == pytest.approx(1.0, abs=1e-15)
        assert lf.b2_exact == pytest.approx(1.0, rel=1e-14)

    def test_critical_iterates_at_zero(self):
        lf = LinearFractionalLaw(0.25, 0.5)
        for n in range(1, 30):
            assert lf.iterate_gf(n, 0.0) == pytest.approx(n / (n + 1.0), abs=1e-14)

    def test_iterate_identity(self):
        lf = LinearFractionalLaw(0.2, 0.5)
        assert lf.iterate_gf(0, 0.37) == pytest.approx(0.37, abs=1e-15)


@st.composite
def small_laws(draw):
    k = draw(st.integers(min_value=2, max_value=6))
    w = draw(
        st.lists(
            st.floats(min_value=0.01, max_value=1.0),
            min_size=k + 1,
            max_size=k + 1,
        )
    )
    arr = np.asarray(w)
    return OffspringLaw(arr / arr.sum())


class TestProperties:
    @settings(deadline=None, max_examples=50)
    @given(small_laws())
    def test_gf_monotone_convex(self, law):
        s = np.linspace(0.0, 1.0, 41)
        vals = np.array([law.gf(x) for x in s])
        d1 = np.array([law.gf_deriv(x) for x in s])
        d2 = np.array([law.gf_deriv(x, order=2) for x in s])
        assert np.all(np.diff(vals) >= -1e-15)
        assert np.all(d1 >= -1e-15)
        assert np.all(d2 >= -1e-15)

    @settings(deadline=None, max_examples=50)
    @given(small_laws())
    def test_extinction_prob_consistent(self, law):
        q = law.extinction_prob
        assert 0.0 < q <= 1.0
        assert law.gf(q) == pytest.approx(q, abs=1e-10)
        c = model_constants(law)
        assert c.beta <= 1.0 + 1e-12
        if law.mean <= 1.0:
            assert q == 1.0
        else:
            assert q < 1.0
