"""Closed-form stability machinery against independent high-precision oracles.

The frozen reference numbers were produced with 50-digit arithmetic by
solving the characteristic system directly (root-finding on the coupled
real/imaginary crossing equations and implicit differentiation for the
crossing speed), i.e. through a different route than the closed forms
under test.
"""
import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoondyn import (
    UncertainBeta,
    characteristic_derivative,
    characteristic_value,
    equilibrium_coefficients,
    find_crossing,
    frequency_comparison,
    hopf_point,
    is_locally_stable,
    non_oscillation_check,
    polish_root,
    robust_stability_bound,
    stability_chart,
    string_gain_squared,
    string_gain_sup,
    string_stability_report,
    track_root,
    transversality_slope,
)
from conftest import reference_platoon

betas = st.floats(min_value=0.1, max_value=5.0)
gammas = st.floats(min_value=0.0, max_value=0.99)

# (beta_star, gamma) -> (omega0, tau_cr), 50-digit root-finding
CROSSING_ORACLES = {
    (1.0, 0.0): (1.0, 1.5707963267948966),
    (1.0, 0.5): (1.1547005383792515, 0.90689968211710893),
    (1.0, 0.9): (2.2941573387056177, 0.19659802934472465),
    (2.0, 0.3): (2.0965696734438366, 0.60389296326116862),
}

# (beta_star, gamma) -> d Re(lambda) / d tau at the crossing, via the
# implicit derivative of the characteristic function
SLOPE_ORACLES = {
    (1.0, 0.0): 0.28840043914200094,
    (1.0, 0.5): 0.36317118844406611,
    (1.0, 0.9): 1.3381477430870028,
    (2.0, 0.3): 1.2354487051844018,
}


class TestHopfPoint:
    @pytest.mark.parametrize("pair,expected", sorted(CROSSING_ORACLES.items()))
    def test_matches_high_precision_crossings(self, pair, expected):
        hp = hopf_point(*pair)
        assert hp.omega0 == pytest.approx(expected[0], rel=1e-14)
        assert hp.tau_cr == pytest.approx(expected[1], rel=1e-14)

    def test_feedback_free_critical_delay_is_pi_over_two_beta(self):
        for beta in (0.1, 0.5, 1.0, 2.0, 4.7):
            hp = hopf_point(beta, 0.0)
            assert hp.tau_cr == pytest.approx(math.pi / (2.0 * beta), rel=1e-15)
            assert hp.omega0 == pytest.approx(beta, rel=1e-15)

    @pytest.mark.parametrize("beta,gamma", [(0.0, 0.0), (-1.0, 0.0),
                                            (1.0, -0.1), (1.0, 1.0)])
    def test_rejects_out_of_domain_parameters(self, beta, gamma):
        with pytest.raises(ValueError):
            hopf_point(beta, gamma)

    @given(beta=betas, gamma=gammas)
    @settings(max_examples=200, deadline=None)
    def test_crossing_nulls_the_characteristic_function(self, beta, gamma):
        hp = hopf_point(beta, gamma)
        residual = abs(characteristic_value(1j * hp.omega0, hp.tau_cr, beta, gamma))
        assert residual <= 1e-12 * (1.0 + hp.omega0 + beta)

    @given(beta=betas, gamma=gammas, k=st.floats(min_value=0.5, max_value=4.0))
    @settings(max_examples=100, deadline=None)
    def test_gain_scaling_invariance(self, beta, gamma, k):
        a, b = hopf_point(beta, gamma), hopf_point(k * beta, gamma)
        assert b.omega0 == pytest.approx(k * a.omega0, rel=1e-12)
        assert b.tau_cr == pytest.approx(a.tau_cr / k, rel=1e-12)

    @given(beta=betas, g1=gammas, g2=gammas)
    @settings(max_examples=150, deadline=None)
    def test_feedback_shrinks_the_stable_delay_range(self, beta, g1, g2):
        lo, hi = sorted((g1, g2))
        if hi - lo < 1e-9:
            return
        assert hopf_point(beta, hi).tau_cr < hopf_point(beta, lo).tau_cr

    def test_frequency_is_omega_over_two_pi(self):
        hp = hopf_point(1.3, 0.4)
        assert hp.f0 == pytest.approx(hp.omega0 / (2.0 * math.pi), rel=1e-15)


class TestTransversality:
    @pytest.mark.parametrize("pair,expected", sorted(SLOPE_ORACLES.items()))
    def test_matches_implicit_derivative_oracles(self, pair, expected):
        assert transversality_slope(*pair) == pytest.approx(expected, rel=1e-13)

    @given(beta=betas, gamma=gammas)
    @settings(max_examples=200, deadline=None)
    def test_crossing_speed_is_positive(self, beta, gamma):
        assert transversality_slope(beta, gamma) > 0.0

    def test_finite_difference_cross_check(self):
        for beta, gamma in [(0.7, 0.0), (1.0, 0.5), (2.5, 0.8), (0.3, 0.25)]:
            hp = hopf_point(beta, gamma)
            eps = 1e-6 * hp.tau_cr
            lo = polish_root(beta, gamma, hp.tau_cr - eps, 1j * hp.omega0)
            hi = polish_root(beta, gamma, hp.tau_cr + eps, 1j * hp.omega0)
            fd = (hi.lam.real - lo.lam.real) / (2.0 * eps)
            assert fd == pytest.approx(transversality_slope(beta, gamma), rel=1e-4)


class TestRootMachinery:
    def test_polish_converges_with_small_residual(self):
        root = polish_root(1.0, 0.5, 0.8, 0.1 + 1.1j)
        assert root.residual <= 1e-10
        assert abs(characteristic_value(root.lam, 0.8, 1.0, 0.5)) <= 1e-10

    def test_polish_rejects_nonpositive_delay(self):
        with pytest.raises(ValueError):
            polish_root(1.0, 0.0, 0.0, 1j)

    def test_derivative_matches_finite_difference(self):
        lam, tau, beta, gamma = 0.2 + 1.3j, 0.9, 1.1, 0.4
        e = 1e-7
        fd = (characteristic_value(lam + e, tau, beta, gamma)
              - characteristic_value(lam - e, tau, beta, gamma)) / (2 * e)
        assert characteristic_derivative(lam, tau, beta, gamma) == pytest.approx(fd, rel=1e-6)

    def test_track_root_crosses_the_axis_once(self):
        beta, gamma = 1.0, 0.5
        hp = hopf_point(beta, gamma)
        seed = polish_root(beta, gamma, hp.tau_cr, 1j * hp.omega0)
        branch = track_root(beta, gamma, (0.5 * hp.tau_cr, 1.5 * hp.tau_cr), seed)
        taus = np.array([r.tau for r in branch])
        reals = np.array([r.lam.real for r in branch])
        assert np.all(np.diff(taus) >= 0)
        assert taus[0] <= 0.5 * hp.tau_cr + 1e-9 and taus[-1] >= 1.5 * hp.tau_cr - 1e-9
        # stable below the critical delay, unstable above, single sign change
        sign = np.sign(reals[np.abs(reals) > 1e-12])
        flips = np.sum(np.diff(sign) != 0)
        assert flips == 1
        assert reals[0] < 0 < reals[-1]

    def test_track_root_rejects_far_ranges_and_bad_seeds(self):
        beta, gamma = 1.0, 0.0
        hp = hopf_point(beta, gamma)
        seed = polish_root(beta, gamma, hp.tau_cr, 1j * hp.omega0)
        with pytest.raises(ValueError):
            track_root(beta, gamma, (0.5 * hp.tau_cr, 5.0 * hp.tau_cr), seed)
        with pytest.raises(ValueError):
            track_root(beta, gamma, (2.0 * hp.tau_cr, 3.0 * hp.tau_cr), seed)

    def test_find_crossing_agrees_with_closed_form(self):
        for beta in (0.2, 1.0, 3.0):
            for gamma in (0.0, 0.3, 0.7, 0.95):
                hp = hopf_point(beta, gamma)
                got = find_crossing(beta, gamma)
                assert got.tau == pytest.approx(hp.tau_cr, rel=1e-10)
                assert got.omega == pytest.approx(hp.omega0, rel=1e-10)


class TestStabilityChart:
    def test_rows_and_monotonicity(self):
        grid = np.linspace(1e-6, 1 - 1e-6, 101)
        rows = stability_chart(grid, beta_star=1.0)
        assert rows.shape == (101, 3)
        np.testing.assert_array_equal(rows[:, 0], grid)
        np.testing.assert_allclose(rows[:, 2], 1.0 * rows[:, 1], rtol=0)
        assert np.all(np.diff(rows[:, 2]) < 0)
        assert rows[0, 2] < math.pi / 2
        assert rows[-1, 2] > 0

    def test_product_is_gain_free(self):
        grid = np.linspace(0.05, 0.95, 10)
        a = stability_chart(grid, beta_star=1.0)
        b = stability_chart(grid, beta_star=3.7)
        np.testing.assert_allclose(a[:, 2], b[:, 2] / 1.0, rtol=1e-12)
        np.testing.assert_allclose(b[:, 1], a[:, 1] / 3.7, rtol=1e-12)


class TestLocalStabilityReport:
    def test_margins_and_verdicts(self):
        config = reference_platoon(gamma2=0.5, tau2=1.05)
        report = is_locally_stable(config)
        assert len(report.vehicles) == 4
        v2 = report.vehicles[1]
        assert v2.tau_cr == pytest.approx(1.0, rel=1e-12)
        assert v2.margin == pytest.approx(-0.05, abs=1e-12)
        assert not v2.stable
        assert not report.all_stable
        for other in (report.vehicles[0], report.vehicles[2], report.vehicles[3]):
            assert other.stable and other.margin > 0

    def test_boundary_delay_is_flagged(self):
        config = reference_platoon(gamma2=0.5, tau2=1.0)
        v2 = is_locally_stable(config).vehicles[1]
        assert v2.on_boundary
        assert not v2.stable


class TestNonOscillation:
    def test_threshold_dichotomy_without_feedback(self):
        inv_e = 1.0 / math.e
        below = non_oscillation_check(1.0, inv_e - 1e-12, 0.0)
        assert not below.oscillatory
        assert below.product == pytest.approx(inv_e, rel=1e-9)
        above = non_oscillation_check(1.0, inv_e + 1e-12, 0.0)
        assert above.oscillatory
        assert above.threshold == inv_e
        assert below.non_oscillatory

    def test_boundary_counts_as_non_oscillatory(self):
        verdict = non_oscillation_check(2.0, 0.5 / math.e, 0.0)
        assert not verdict.oscillatory

    def test_any_feedback_forces_oscillation(self):
        verdict = non_oscillation_check(1.0, 1e-6, 0.3)
        assert verdict.oscillatory
        assert "feedback" in verdict.reason


class TestStringStability:
    # 50-digit evaluations of the documented closed-form denominator
    # (see the ``string_gain_squared`` docstring for the expression)
    GAIN_ORACLES = [
        ((1.0, 0.8, 0.2, 0.5, 0.7), 1.0529956856044938),
        ((0.5, 1.0, 0.3, 0.4, 1.1), 0.12262819387891337),
        ((1.0, 1.0, 0.0, 1.0, 1.5707963267948966), 3.0692881359652303),
        ((1.0, 1.0, 0.0, 0.4, 1.0), 0.81889128784270031),
    ]

    @pytest.mark.parametrize("args,expected", GAIN_ORACLES)
    def test_gain_matches_high_precision_samples(self, args, expected):
        assert string_gain_squared(*args) == pytest.approx(expected, rel=1e-13)

    def test_gain_vectorizes_over_frequency(self):
        ws = np.array([0.3, 0.7, 1.4])
        got = string_gain_squared(1.0, 0.8, 0.2, 0.5, ws)
        ref = [string_gain_squared(1.0, 0.8, 0.2, 0.5, float(w)) for w in ws]
        np.testing.assert_allclose(got, ref, rtol=1e-15)

    def test_zero_frequency_gain_is_the_squared_gain_ratio(self):
        assert string_gain_squared(0.6, 1.5, 0.3, 0.7, 0.0) == pytest.approx(
            (0.6 / 1.5) ** 2, rel=1e-15)

    def test_feedback_free_gain_matches_the_transfer_modulus(self):
        # with gamma = 0 the closed form must equal |H(j w)|^2 computed
        # directly from the complex transfer function
        beta_prev, beta, tau = 0.9, 1.2, 0.6
        for w in (0.2, 0.9, 1.7, 3.3):
            den = 1j * w + beta * cmath.exp(-1j * w * tau)
            direct = abs(beta_prev * cmath.exp(-1j * w * tau) / den) ** 2
            assert string_gain_squared(beta_prev, beta, 0.0, tau, w) == pytest.approx(
                direct, rel=1e-12)

    def test_critical_delay_is_resonant(self):
        hp = hopf_point(1.0, 0.0)
        sup, arg, resonant = string_gain_sup(1.0, 1.0, 0.0, hp.tau_cr, n_points=4001)
        assert resonant or sup > 1e4

    @given(gamma=st.floats(min_value=0.0, max_value=0.9),
           tau=st.floats(min_value=0.05, max_value=2.0),
           frac=st.floats(min_value=0.05, max_value=1.0),
           ratio=st.floats(min_value=0.05, max_value=1.0))
    @settings(max_examples=60, deadline=None)
    def test_sufficient_condition_caps_the_numeric_gain(self, gamma, tau, frac, ratio):
        beta = frac * (1.0 - gamma) ** 2 / (2.0 * tau)
        if beta < 1e-6:
            return
        beta_prev = ratio * beta
        sup, _, resonant = string_gain_sup(beta_prev, beta, gamma, tau)
        assert not resonant
        assert sup <= 1.0 + 1e-9

    def test_report_on_a_compliant_platoon(self):
        from platoondyn import LeaderProfile, ModelExponents, PlatoonConfig, VehicleParams
        config = PlatoonConfig(
            vehicles=tuple(VehicleParams(alpha=a, tau=0.5, gamma=0.2)
                           for a in (0.2, 0.25, 0.3, 0.35)),
            exponents=ModelExponents(m=0.0, l=0.0),
            leader=LeaderProfile.settled(1.0),
        )
        report = string_stability_report(config)
        assert report.necessary_ok and report.sufficient_ok and report.numeric_ok
        assert report.conflicts == ()
        assert len(report.pair_gains) == 3
        assert all(g.sup_gain_sq <= 1.0 + 1e-9 for g in report.pair_gains)

    def test_report_flags_descending_gains(self):
        config = reference_platoon(gamma2=0.5, tau2=0.9)
        report = string_stability_report(config)
        # beta_star drops from follower 2 to follower 3, so the ordering
        # test must fail; sufficient implies necessary
        assert not report.necessary_ok
        assert not report.sufficient_ok


class TestRobustBound:
    def test_matches_reference_value(self):
        bound = robust_stability_bound(0.6, UncertainBeta(1.0, 1.25))
        assert bound == pytest.approx(1.0053096491487338, rel=1e-14)

    def test_interval_must_be_positive_and_ordered(self):
        with pytest.raises(ValueError):
            UncertainBeta(0.0, 1.0)
        with pytest.raises(ValueError):
            UncertainBeta(2.0, 1.0)

    @given(beta=betas, gamma=gammas, width=st.floats(min_value=0.0, max_value=2.0))
    @settings(max_examples=200, deadline=None)
    def test_bound_guarantees_stability_across_the_interval(self, beta, gamma, width):
        interval = UncertainBeta(beta, beta + width)
        bound = robust_stability_bound(gamma, interval)
        # the exact critical delay is decreasing in the gain, so checking
        # the upper end covers the whole interval
        assert bound >= hopf_point(interval.upper, gamma).tau_cr * (1.0 - 1e-12)

    def test_bound_decreases_with_feedback_weight(self):
        interval = UncertainBeta(0.8, 1.3)
        vals = [robust_stability_bound(g, interval) for g in np.linspace(0.0, 0.95, 40)]
        assert all(b > a for a, b in zip(vals[1:], vals[:-1]))


class TestFrequencyComparison:
    def test_matches_reference_value(self):
        cmp = frequency_comparison(1.0, 0.9)
        assert cmp.f0 == pytest.approx(0.36512648068554663, rel=1e-14)
        assert cmp.f0_feedback_free == pytest.approx(1.0 / (2 * math.pi), rel=1e-15)

    def test_feedback_free_ratio_is_one(self):
        assert frequency_comparison(2.3, 0.0).ratio == pytest.approx(1.0, rel=1e-15)

    @given(beta=betas, gamma=st.floats(min_value=1e-6, max_value=0.99))
    @settings(max_examples=100, deadline=None)
    def test_feedback_raises_the_onset_frequency(self, beta, gamma):
        assert frequency_comparison(beta, gamma).ratio > 1.0
