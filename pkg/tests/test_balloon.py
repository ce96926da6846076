"""Tests for the hyperelastic balloon model.

The closed forms are checked against independent numerical routes: adaptive
quadrature of the raw equilibrium integrand for pressure, the nested
sigma_z construction for axial force, and a hand-derived neo-Hookean
specialisation.  Coupled-balloon roots are checked against dense scans.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from magcath.balloon import (
    BalloonSpec,
    InflationState,
    RmseSplit,
    anchoring_pressure,
    axial_force,
    axial_force_quadrature,
    coupled_pressure,
    coupled_pressure_derivative,
    delta_p,
    delta_p_quadrature,
    equilibrium_residual,
    inflation_state,
    lambda_ex_of,
    outer_radius_at,
    rmse_split,
    safe_range,
    stability_screen,
    stretch_at_pressure,
    two_balloon_equilibria,
)

YEOH_DEFAULT = (1.2e5, 2.4e4, 4.6e2)


@pytest.fixture
def spec() -> BalloonSpec:
    return BalloonSpec(
        inner_radius=5e-4, outer_radius=7e-4, height=4e-3, yeoh=YEOH_DEFAULT
    )


def neo_hookean_delta_p(c1: float, lam_in: float, lam_ex: float) -> float:
    """Independent closed form for the C2 = C3 = 0 specialisation.

    Derived by direct integration of 2 C1 (lambda^2 + 1)/lambda^3:
    delta_p = C1 [2 ln(lam_in/lam_ex) + 1/lam_ex^2 - 1/lam_in^2].
    """
    return c1 * (2.0 * math.log(lam_in / lam_ex) + 1.0 / lam_ex**2 - 1.0 / lam_in**2)


class TestKinematics:
    def test_undeformed_identity(self, spec):
        assert lambda_ex_of(spec, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_reference_point_volume_conservation(self, spec):
        # r_out^2 = R_out^2 - R_in^2 + (2 R_in)^2, arithmetic done separately
        expected = math.sqrt((0.49 + 3 * 0.25) / 0.49)
        assert lambda_ex_of(spec, 2.0) == pytest.approx(expected, rel=1e-12)

    def test_outer_stretch_below_inner(self, spec):
        for lam in np.linspace(1.01, 5.0, 40):
            assert 1.0 < lambda_ex_of(spec, lam) < lam

    def test_strictly_increasing(self, spec):
        lams = np.linspace(1.0, 6.0, 80)
        vals = [lambda_ex_of(spec, l) for l in lams]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_thin_wall_limit(self, spec):
        # deformed radii converge at large inflation (the wall thins to a
        # membrane); the stretch ratio itself tends to R_in/R_out instead
        r_out = outer_radius_at(spec, 100.0)
        r_in = 100.0 * spec.inner_radius
        assert r_out / r_in > 0.99
        assert lambda_ex_of(spec, 100.0) / 100.0 == pytest.approx(
            spec.inner_radius / spec.outer_radius, rel=1e-4
        )

    def test_deformed_outer_radius(self, spec):
        assert outer_radius_at(spec, 1.0) == pytest.approx(spec.outer_radius)


class TestPressure:
    def test_zero_at_rest(self, spec):
        assert delta_p(spec, 1.0) == 0.0
        assert delta_p_quadrature(spec, 1.0) == 0.0

    def test_continuous_at_one(self, spec):
        assert abs(delta_p(spec, 1.0 + 1e-10)) < 1e-3

    def test_closed_form_vs_quadrature_reference_points(self, spec):
        for lam in (1.5, 2.0, 3.0):
            closed = delta_p(spec, lam)
            oracle = delta_p_quadrature(spec, lam)
            assert closed == pytest.approx(oracle, rel=1e-6)

    def test_closed_form_vs_quadrature_random_yeoh(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            yeoh = (
                rng.uniform(1e4, 5e5),
                rng.uniform(-5e4, 1e5),
                rng.uniform(-5e2, 5e3),
            )
            s = BalloonSpec(5e-4, 7e-4, 4e-3, yeoh)
            lam = rng.uniform(1.0 + 1e-3, 5.0)
            closed = delta_p(s, lam)
            oracle = delta_p_quadrature(s, lam)
            assert closed == pytest.approx(oracle, rel=1e-6, abs=1e-8)

    def test_neo_hookean_reduction(self):
        s = BalloonSpec(5e-4, 7e-4, 4e-3, (2.0e5, 0.0, 0.0))
        rng = np.random.default_rng(3)
        for _ in range(20):
            lam = rng.uniform(1.001, 5.0)
            lam_ex = lambda_ex_of(s, lam)
            assert delta_p(s, lam) == pytest.approx(
                neo_hookean_delta_p(2.0e5, lam, lam_ex), rel=1e-8
            )
            assert delta_p_quadrature(s, lam) == pytest.approx(
                neo_hookean_delta_p(2.0e5, lam, lam_ex), rel=1e-8
            )

    def test_positive_when_inflated(self, spec):
        for lam in np.linspace(1.05, 4.0, 30):
            assert delta_p(spec, lam) > 0.0

    def test_domain_guard(self, spec):
        with pytest.raises(ValueError):
            delta_p(spec, 0.99)


class TestAxialForce:
    def test_rest_state_pure_external_load(self, spec):
        p_ex = 3.0e3
        expected = -p_ex * math.pi * spec.outer_radius**2
        assert axial_force(spec, 1.0, p_ex=p_ex) == pytest.approx(expected, rel=1e-12)
        assert axial_force_quadrature(spec, 1.0, p_ex=p_ex) == pytest.approx(
            expected, rel=1e-12
        )

    def test_closed_form_vs_nested_quadrature(self, spec):
        oracle = axial_force_quadrature(spec, 2.0)
        assert axial_force(spec, 2.0) == pytest.approx(oracle, rel=1e-5)

    def test_random_yeoh_with_external_pressure(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            yeoh = (
                rng.uniform(1e4, 5e5),
                rng.uniform(-2e4, 1e5),
                rng.uniform(0.0, 5e3),
            )
            s = BalloonSpec(5e-4, 7e-4, 4e-3, yeoh)
            lam = rng.uniform(1.05, 4.0)
            p_ex = rng.uniform(0.0, 2e4)
            closed = axial_force(s, lam, p_ex=p_ex)
            oracle = axial_force_quadrature(s, lam, p_ex=p_ex)
            assert closed == pytest.approx(oracle, rel=1e-5, abs=1e-10)

    def test_continuous_in_stretch(self, spec):
        lams = np.linspace(1.0, 3.0, 60)
        vals = np.array([axial_force(spec, l) for l in lams])
        assert np.all(np.isfinite(vals))
        assert np.max(np.abs(np.diff(vals))) < 0.2 * (np.max(np.abs(vals)) + 1.0)

    def test_off_equilibrium_pressure_term(self, spec):
        lam = 1.8
        base = axial_force(spec, lam)
        p_eq = delta_p(spec, lam)
        bumped = axial_force(spec, lam, p_in=p_eq + 1.0e3)
        r_in = lam * spec.inner_radius
        assert bumped - base == pytest.approx(-1.0e3 * math.pi * r_in**2, rel=1e-9)


class TestInflationState:
    def test_bundle_consistency(self, spec):
        st = inflation_state(spec, 2.0)
        assert st.lambda_ex == pytest.approx(lambda_ex_of(spec, 2.0))
        assert st.delta_p == pytest.approx(delta_p(spec, 2.0))
        assert st.f_ex == pytest.approx(axial_force(spec, 2.0))

    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            InflationState(lambda_in=1.5, lambda_ex=1.7, delta_p=0.0, f_ex=0.0)


class TestStability:
    def test_slender_design_margin(self, spec):
        # R_out/L = 0.1 -> margin 1 - 0.1 pi
        s = BalloonSpec(5e-4, 7e-4, 7e-3, YEOH_DEFAULT)
        report = stability_screen(s, lambda_z=1.0, mode_n=1)
        assert report.axisymmetric_margin == pytest.approx(
            1.0 - math.pi * 7e-4 / 7e-3, rel=1e-12
        )
        assert report.axisymmetric_ok

    def test_critical_boundary_exact_zero(self):
        r_out = 7e-4
        s = BalloonSpec(5e-4, r_out, math.pi * r_out, YEOH_DEFAULT)
        report = stability_screen(s, lambda_z=1.0, mode_n=1)
        assert report.axisymmetric_margin == 0.0
        assert not report.axisymmetric_ok

    def test_margin_decreases_with_mode(self, spec):
        margins = [
            stability_screen(spec, mode_n=n).axisymmetric_margin for n in (1, 2, 3, 4)
        ]
        assert all(b < a for a, b in zip(margins, margins[1:]))

    def test_critical_mode_counts_stable_modes(self):
        s = BalloonSpec(5e-4, 7e-4, 7e-3, YEOH_DEFAULT)  # L/(pi R_out) ~ 3.18
        report = stability_screen(s)
        assert report.critical_mode == 3
        assert stability_screen(s, mode_n=3).axisymmetric_ok
        assert not stability_screen(s, mode_n=4).axisymmetric_ok

    def test_fixed_axial_stretch_enforced(self, spec):
        with pytest.raises(ValueError):
            stability_screen(spec, lambda_z=1.2)

    def test_admissible_set_margins_finite(self, spec):
        report = stability_screen(spec)
        assert math.isfinite(report.prismatic_margin)
        assert math.isfinite(report.asymmetric_margin)
        assert report.prismatic_ok and report.asymmetric_ok

    def test_reproducible(self, spec):
        assert stability_screen(spec) == stability_screen(spec)


class TestTwoBalloon:
    def test_symmetric_residual_exact_zero(self):
        for lam in np.linspace(1.1, 5.0, 17):
            assert equilibrium_residual(lam, lam, 40.0) == 0.0

    def test_residual_antisymmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a, b = rng.uniform(1.01, 5.0, size=2)
            assert equilibrium_residual(a, b, 40.0) == -equilibrium_residual(b, a, 40.0)

    def test_bifurcation_onset_vs_dense_scan(self, spec):
        report = two_balloon_equilibria(spec, spec, coupling=40.0)
        assert report.lambda_star is not None
        # dense-scan oracle for the pressure maximum
        lams = np.linspace(1.0, 6.0, 100_000)
        pressures = (1.0 / lams - 1.0 / lams**2) * (1.0 + lams**2 / 40.0)
        i = int(np.argmax(pressures))
        assert abs(report.p_cr - pressures[i]) < 1e-6
        assert abs(report.lambda_star - lams[i]) < 1e-4  # limited by scan pitch
        # stationarity to root-finder precision
        assert abs(coupled_pressure_derivative(report.lambda_star, 40.0)) < 1e-10

    def test_asymmetric_partner_below_onset(self, spec):
        report = two_balloon_equilibria(spec, spec, coupling=40.0)
        assert report.asymmetric, "expected snap-through branches for K > 27"
        for la, lb in report.asymmetric:
            assert lb < report.lambda_star < la
            assert abs(equilibrium_residual(la, lb, 40.0)) < 1e-10

    def test_single_partner_just_above_onset(self, spec):
        report = two_balloon_equilibria(spec, spec, coupling=40.0)
        la = report.lambda_star * 1.001
        target = coupled_pressure(la, 40.0)
        # unique partner on the rising branch
        lams = np.linspace(1.0 + 1e-9, report.lambda_star, 50_000)
        vals = (1.0 / lams - 1.0 / lams**2) * (1.0 + lams**2 / 40.0) - target
        crossings = int(np.count_nonzero(np.diff(np.sign(vals)) != 0))
        assert crossings == 1

    def test_no_branches_below_critical_coupling(self, spec):
        report = two_balloon_equilibria(spec, spec, coupling=20.0)
        assert report.lambda_star is None
        assert report.p_cr is None
        assert report.asymmetric == ()

    def test_coupling_validated(self, spec):
        with pytest.raises(ValueError):
            two_balloon_equilibria(spec, spec, coupling=0.0)


class TestSafeRange:
    def test_monotone_curve_uses_window_edge(self, spec):
        result = safe_range(spec, safety_factor=2.0, lambda_window=(1.0, 2.5))
        assert result.lambda_at_p_max == pytest.approx(2.5)
        assert result.p_max_safe == pytest.approx(delta_p(spec, 2.5) / 2.0, rel=1e-9)

    def test_burst_ceiling_governs(self):
        s = BalloonSpec(
            5e-4, 7e-4, 4e-3, YEOH_DEFAULT,
            burst_pressure_mean=8.0e4, burst_pressure_sd=2.0e3,
        )
        result = safe_range(s, safety_factor=1.5, lambda_window=(1.0, 2.5))
        assert delta_p(s, 2.5) > 7.4e4  # the curve alone would allow more
        assert result.p_max_safe == pytest.approx(7.4e4 / 1.5, rel=1e-12)
        # reported stretch sits where the governing pressure is reached
        assert delta_p(s, result.lambda_at_p_max) == pytest.approx(7.4e4, rel=1e-6)

    def test_interior_limit_point_found(self):
        softening = BalloonSpec(5e-4, 7e-4, 4e-3, (1.0e5, -2.5e4, 8.0e2))
        result = safe_range(softening, safety_factor=1.0, lambda_window=(1.0, 4.0))
        # dense-scan oracle
        lams = np.linspace(1.0, 4.0, 200_000)
        vals = np.array([delta_p(softening, l) for l in lams])
        i = int(np.argmax(vals))
        assert 1.0 < result.lambda_at_p_max < 4.0
        assert result.p_max_safe == pytest.approx(vals[i], rel=1e-6)
        assert abs(result.lambda_at_p_max - lams[i]) < 1e-3

    def test_missing_everything_raises(self, spec):
        with pytest.raises(ValueError):
            safe_range(spec, safety_factor=1.0, lambda_window=(2.0, 2.0))


class TestAnchoring:
    def test_no_contact_below_clearance(self, spec):
        assert anchoring_pressure(spec, duct_radius=9e-4, p_in=10.0) == 0.0

    def test_transmits_excess_pressure(self, spec):
        duct = 9e-4
        lam_c = math.sqrt(duct**2 - spec.outer_radius**2 + spec.inner_radius**2) / (
            spec.inner_radius
        )
        wall_drop = delta_p(spec, lam_c)
        p_in = wall_drop + 5.0e3
        assert anchoring_pressure(spec, duct, p_in) == pytest.approx(5.0e3, rel=1e-9)

    def test_duct_must_clear_balloon(self, spec):
        with pytest.raises(ValueError):
            anchoring_pressure(spec, duct_radius=spec.outer_radius, p_in=1e4)


class TestBenchComparison:
    def test_stretch_at_pressure_round_trip(self, spec):
        for lam in (1.2, 1.8, 2.4):
            p = delta_p(spec, lam)
            assert stretch_at_pressure(spec, p) == pytest.approx(lam, rel=1e-8)

    def test_rmse_split_bins(self):
        pressures = [2e3, 5e3, 2e4, 5e4]
        model = [1.0, 2.0, 3.0, 4.0]
        measured = [1.1, 1.9, 3.3, 3.8]
        result = rmse_split(pressures, model, measured)
        assert result.below == pytest.approx(math.sqrt((0.01 + 0.01) / 2.0))
        assert result.above == pytest.approx(math.sqrt((0.09 + 0.04) / 2.0))

    def test_empty_bin_is_nan(self):
        result = rmse_split([1e3], [1.0], [1.0])
        assert math.isnan(result.above)
        assert result.below == 0.0


class TestSpecValidation:
    def test_wall_ordering(self):
        with pytest.raises(ValueError):
            BalloonSpec(7e-4, 5e-4, 4e-3, YEOH_DEFAULT)

    def test_c1_positive(self):
        with pytest.raises(ValueError):
            BalloonSpec(5e-4, 7e-4, 4e-3, (0.0, 1e4, 0.0))

    def test_wall_regime_flag_as_adopted(self):
        chunky = BalloonSpec(5e-4, 7e-4, 4e-3, YEOH_DEFAULT)
        assert chunky.diameter_to_thickness == pytest.approx(7.0)
        assert not chunky.thick_wall_flagged
        sliver = BalloonSpec(6.5e-4, 7e-4, 4e-3, YEOH_DEFAULT)
        assert sliver.thick_wall_flagged
