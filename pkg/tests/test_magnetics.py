"""Tests for the dipole actuation model.

Reference values are frozen from independent hand evaluation of the dipole
expression; consistency checks (divergence, decay, inverse round trips,
beam-theory cross-integration) guard the structure of the model rather than
single numbers.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from magcath.magnetics import (
    MU_0,
    CatheterParams,
    DipoleSource,
    FieldTask,
    GridSpec,
    InfeasibleFieldError,
    dipole_field,
    feasible_workspace,
    field_for_deflection,
    field_magnitude_bounds,
    inverse_pose,
    max_deflection,
    shell_radii,
    tip_torque,
    unit,
    vec3,
    workspace_monte_carlo,
)

# Equivalent moment of the reference N52 cylinder (100 mm dia x 100 mm,
# B_r = 1.45 T): m = B_r V / mu0.
REF_MOMENT = 1.45 * math.pi * 0.05**2 * 0.1 / MU_0


@pytest.fixture
def epm() -> DipoleSource:
    return DipoleSource(
        position=vec3(0.0, 0.0, 0.0),
        moment_direction=vec3(0.0, 0.0, 1.0),
        moment_magnitude=REF_MOMENT,
    )


@pytest.fixture
def catheter() -> CatheterParams:
    return CatheterParams(
        length=0.08, radius=7.35e-4, youngs_modulus=1.2e6, remanence=0.10
    )


class TestDipoleField:
    def test_reference_moment_magnitude(self):
        # 1.45 T cylinder, pi * 0.05^2 * 0.1 m^3 volume.
        assert REF_MOMENT == pytest.approx(906.2, rel=5e-4)

    def test_on_axis_field_18cm(self, epm):
        b = dipole_field(epm, vec3(0.0, 0.0, 0.18))
        expected = MU_0 * REF_MOMENT / (2.0 * math.pi * 0.18**3)
        np.testing.assert_allclose(b, [0.0, 0.0, expected], rtol=1e-12, atol=1e-18)
        assert expected == pytest.approx(3.11e-2, rel=1e-2)

    def test_equatorial_field_is_half_and_reversed(self, epm):
        b = dipole_field(epm, vec3(0.18, 0.0, 0.0))
        expected = -MU_0 * REF_MOMENT / (4.0 * math.pi * 0.18**3)
        np.testing.assert_allclose(b, [0.0, 0.0, expected], rtol=1e-12, atol=1e-18)
        assert expected == pytest.approx(-1.555e-2, rel=1e-2)

    def test_on_axis_to_equatorial_ratio(self, epm):
        on_axis = dipole_field(epm, vec3(0.0, 0.0, 0.2))
        equatorial = dipole_field(epm, vec3(0.2, 0.0, 0.0))
        assert np.linalg.norm(on_axis) / np.linalg.norm(equatorial) == pytest.approx(
            2.0, rel=1e-12
        )

    def test_inverse_cube_decay(self, epm):
        rng = np.random.default_rng(7)
        for _ in range(20):
            direction = unit(rng.normal(size=3))
            d = rng.uniform(0.05, 0.5)
            near = np.linalg.norm(dipole_field(epm, d * direction))
            far = np.linalg.norm(dipole_field(epm, 2.0 * d * direction))
            assert near / far == pytest.approx(8.0, rel=1e-12)

    def test_divergence_free(self, epm):
        rng = np.random.default_rng(11)
        h = 1e-6
        for _ in range(50):
            p = rng.uniform(-0.3, 0.3, size=3)
            if np.linalg.norm(p) < 0.05:
                continue
            div = 0.0
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                div += (dipole_field(epm, p + e)[i] - dipole_field(epm, p - e)[i]) / (
                    2.0 * h
                )
            b_mag = np.linalg.norm(dipole_field(epm, p))
            assert abs(div) < 1e-6 * b_mag / h

    def test_linear_in_moment(self, epm):
        doubled = DipoleSource(epm.position, epm.moment_direction, 2.0 * epm.moment_magnitude)
        p = vec3(0.1, 0.05, 0.12)
        np.testing.assert_allclose(
            dipole_field(doubled, p), 2.0 * dipole_field(epm, p), rtol=1e-14
        )

    def test_coincident_point_raises(self, epm):
        with pytest.raises(ValueError):
            dipole_field(epm, vec3(0.0, 0.0, 1e-12))

    def test_magnitude_bounds_bracket_samples(self, epm):
        rng = np.random.default_rng(3)
        for _ in range(30):
            p = unit(rng.normal(size=3)) * 0.2
            lo, hi = field_magnitude_bounds(epm.moment_magnitude, 0.2)
            mag = np.linalg.norm(dipole_field(epm, p))
            assert lo * (1 - 1e-12) <= mag <= hi * (1 + 1e-12)


class TestInversePose:
    def test_round_trip_many_targets(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            b_des = rng.normal(size=3)
            b_des *= rng.uniform(5e-3, 5e-2) / np.linalg.norm(b_des)
            target = rng.uniform(-0.1, 0.1, size=3)
            heading = unit(rng.normal(size=3))
            pose = inverse_pose(b_des, REF_MOMENT, target=target, heading=heading)
            b_back = dipole_field(pose, target)
            # magnitude within 1e-9 relative
            assert np.linalg.norm(b_back) == pytest.approx(
                np.linalg.norm(b_des), rel=1e-9
            )
            # direction within 1e-9 rad (atan2 form is exact near zero angle,
            # unlike acos which floors at sqrt(eps))
            u, v = unit(b_back), unit(b_des)
            angle = math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v))
            assert angle < 1e-9

    def test_default_heading_is_overhead(self):
        pose = inverse_pose(vec3(0.0, 0.0, 2e-2), REF_MOMENT)
        assert pose.position[2] > 0.0
        assert pose.position[0] == pytest.approx(0.0, abs=1e-15)
        # on-axis request: moment aligned with the field
        np.testing.assert_allclose(pose.moment_direction, [0, 0, 1], atol=1e-12)

    def test_on_axis_standoff_matches_closed_form(self):
        b_mag = 2e-2
        pose = inverse_pose(vec3(0.0, 0.0, b_mag), REF_MOMENT)
        expected_d = (MU_0 * REF_MOMENT / (2.0 * math.pi * b_mag)) ** (1.0 / 3.0)
        assert np.linalg.norm(pose.position) == pytest.approx(expected_d, rel=1e-12)

    def test_perpendicular_request_flips_moment(self):
        # field orthogonal to the heading: the moment anti-aligns with it
        pose = inverse_pose(vec3(1e-2, 0.0, 0.0), REF_MOMENT)
        np.testing.assert_allclose(pose.moment_direction, [-1.0, 0.0, 0.0], atol=1e-12)

    def test_standoff_interval_enforced(self):
        with pytest.raises(InfeasibleFieldError):
            inverse_pose(vec3(0.0, 0.0, 5.0), REF_MOMENT, standoff=(0.12, 0.30))
        with pytest.raises(InfeasibleFieldError):
            inverse_pose(vec3(0.0, 0.0, 1e-9), REF_MOMENT, standoff=(0.12, 0.30))
        # a mid-range request passes
        inverse_pose(vec3(0.0, 0.0, 2e-2), REF_MOMENT, standoff=(0.12, 0.30))

    def test_zero_field_rejected(self):
        with pytest.raises(ValueError):
            inverse_pose(vec3(0.0, 0.0, 0.0), REF_MOMENT)


class TestCatheterLoads:
    def test_torque_decays_linearly_to_zero(self, catheter):
        b = 0.02
        taus = [tip_torque(catheter, b, x) for x in np.linspace(0.0, catheter.length, 9)]
        assert taus[-1] == 0.0
        diffs = np.diff(taus)
        np.testing.assert_allclose(diffs, diffs[0], rtol=1e-9)
        assert diffs[0] < 0.0

    def test_torque_scale_is_submillinewton_metre(self, catheter):
        # |B_r| |B| r^2 L / mu0 at 20 mT: small desk-scale torque
        tau0 = tip_torque(catheter, 0.02, 0.0)
        expected = 0.10 * 0.02 * 7.35e-4**2 * 0.08 / MU_0
        assert tau0 == pytest.approx(expected, rel=1e-12)
        assert tau0 < 1e-2  # N m

    def test_arclength_domain_checked(self, catheter):
        with pytest.raises(ValueError):
            tip_torque(catheter, 0.02, -1e-6)
        with pytest.raises(ValueError):
            tip_torque(catheter, 0.02, catheter.length + 1e-6)

    def test_deflection_consistent_with_beam_integration(self, catheter):
        """Cross-check delta against int tau(x) (L-x) dx / (E I)."""
        b = 0.015
        ei = catheter.youngs_modulus * catheter.second_moment
        integral, _ = quad(
            lambda x: tip_torque(catheter, b, x) * (catheter.length - x),
            0.0,
            catheter.length,
        )
        assert max_deflection(catheter, b) == pytest.approx(integral / ei, rel=1e-6)

    def test_deflection_inverse_round_trip(self, catheter):
        rng = np.random.default_rng(5)
        for _ in range(50):
            b = rng.uniform(1e-4, 5e-2)
            assert field_for_deflection(catheter, max_deflection(catheter, b)) == (
                pytest.approx(b, rel=1e-12)
            )

    def test_slenderness_guard(self):
        with pytest.raises(ValueError):
            CatheterParams(length=0.005, radius=1e-3, youngs_modulus=1e6, remanence=0.1)


class TestWorkspace:
    def test_shell_radii_closed_form(self):
        task = FieldTask(b_min=5e-3, b_max=4.4e-2)
        r_in, r_out = shell_radii(REF_MOMENT, task)
        assert r_in == pytest.approx(
            (MU_0 * REF_MOMENT / (4.0 * math.pi * 4.4e-2)) ** (1 / 3), rel=1e-12
        )
        assert r_out == pytest.approx(
            (MU_0 * REF_MOMENT / (2.0 * math.pi * 5e-3)) ** (1 / 3), rel=1e-12
        )
        assert r_in < r_out

    def test_monte_carlo_matches_analytic(self):
        task = FieldTask(b_min=5e-3, b_max=4.4e-2)
        report = feasible_workspace(REF_MOMENT, task, GridSpec(resolution=64))
        mc = workspace_monte_carlo(
            REF_MOMENT, task, n_samples=1_000_000, rng=np.random.default_rng(123)
        )
        assert mc == pytest.approx(report.volume, rel=2e-2)

    def test_grid_volume_tracks_analytic(self):
        task = FieldTask(b_min=5e-3, b_max=4.4e-2)
        report = feasible_workspace(REF_MOMENT, task, GridSpec(resolution=96))
        assert report.grid_volume == pytest.approx(report.volume, rel=2e-2)

    def test_single_magnitude_window_still_a_shell(self):
        # Orientation sweeps |B| across a factor of exactly 2 at fixed
        # distance, so even a zero-width magnitude window is reachable over
        # a finite distance band (ratio 2^(1/3)).
        b = 2e-2
        task = FieldTask(b_min=b, b_max=b)
        report = feasible_workspace(REF_MOMENT, task, GridSpec(resolution=64))
        assert report.outer_radius / report.inner_radius == pytest.approx(
            2.0 ** (1.0 / 3.0), rel=1e-12
        )
        assert report.volume > 0.0 and not report.empty
        assert report.grid_volume == pytest.approx(report.volume, rel=5e-2)

    def test_inverted_window_rejected(self):
        with pytest.raises(ValueError):
            FieldTask(b_min=3e-2, b_max=2e-2)

    def test_stronger_magnet_grows_workspace(self):
        task = FieldTask(b_min=5e-3, b_max=4.4e-2)
        small = feasible_workspace(REF_MOMENT, task).volume
        big = feasible_workspace(2.0 * REF_MOMENT, task).volume
        assert big == pytest.approx(2.0 * small, rel=1e-12)  # volume scales with m

    def test_coarse_grid_rejected(self):
        with pytest.raises(ValueError):
            GridSpec(resolution=4)
