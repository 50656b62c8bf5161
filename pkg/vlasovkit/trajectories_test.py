import math

import numpy as np
import pytest

from vlasovkit.catalog import minkowski_efield
from vlasovkit.errors import ChartExitError, NonFiniteDerivativeError, NonFiniteStateError, ReparamDegenerateError
from vlasovkit.geometry import ChartBounds
from vlasovkit.phase_space import BundleScalar, PhasePoint
from vlasovkit.trajectories import (
    chordal_resample, curve_distance, indicator_drift, integrate, integrate_batch, integrate_leaf,
    leaf_distance, nonmetricity_along, null_labtime_defect, reparameterize, solve_reparameterization,
    trajectory_match, transform_rate,
)
from vlasovkit.vlasov import (
    VlasovField, bivector_from_field, geodesic_field, indicator_coordinate, indicator_hyperboloid,
    indicator_labtime, lorentz_field, transform_to_domain,
)


def hyperbolic_motion(a, tau):
    """Closed-form constant-force path started at rest from the origin."""
    x = np.array([math.sinh(a * tau) / a, (math.cosh(a * tau) - 1.0) / a, 0.0, 0.0])
    v = np.array([math.cosh(a * tau), math.sinh(a * tau), 0.0, 0.0])
    return x, v


class TestIntegrate:
    """Fixed-step RK4 prolongations"""

    def test_straight_line(self, flat):
        u0 = PhasePoint(np.zeros(4), [1.0, 0.5, 0.0, 0.0])
        prol = integrate(geodesic_field(flat), u0, (0.0, 1.0), 100)
        assert prol.node_count == 101
        expected = prol.params[:, None] * np.array([1.0, 0.5, 0.0, 0.0])
        np.testing.assert_allclose(prol.positions, expected, rtol=0.0, atol=1e-12)
        assert prol.satisfies_prolongation_property()

    def test_hyperbolic_motion(self, efield, at_rest):
        prol = integrate(lorentz_field(efield), at_rest, (0.0, 1.0), 1000)
        x, v = hyperbolic_motion(0.1, 1.0)
        np.testing.assert_allclose(prol.positions[-1], x, rtol=0.0, atol=1e-8)
        np.testing.assert_allclose(prol.velocities[-1], v, rtol=0.0, atol=1e-8)

    def test_fourth_order_convergence(self, at_rest):
        W = lorentz_field(minkowski_efield(field_strength=1.0))
        x, v = hyperbolic_motion(1.0, 2.0)
        exact = np.concatenate([x, v])
        errors = []
        for steps in (40, 80):
            prol = integrate(W, at_rest, (0.0, 2.0), steps)
            errors.append(np.linalg.norm(np.concatenate([prol.positions[-1], prol.velocities[-1]]) - exact))
        assert 14.0 <= errors[0] / errors[1] <= 18.0

    def test_accelerations_are_field_values(self, efield, efield_samples):
        W = lorentz_field(efield)
        prol = integrate(W, efield_samples[0], (0.0, 0.5), 50)
        for i in (0, 25, 50):
            np.testing.assert_allclose(prol.accelerations[i], W(prol.point(i)), rtol=1e-14)

    def test_chart_exit_truncates(self, flat):
        small = flat.with_options(bounds=ChartBounds.box(4, 1.0))
        u0 = PhasePoint(np.zeros(4), [1.0, 0.5, 0.0, 0.0])
        prol = integrate(geodesic_field(small), u0, (0.0, 5.0), 50)
        assert prol.truncated
        assert prol.exit_reason is not None
        assert prol.node_count < 51
        assert all(small.bounds.contains(x) for x in prol.positions)
        assert not np.any(np.isnan(prol.accelerations))

    def test_chart_exit_raises_on_request(self, flat):
        small = flat.with_options(bounds=ChartBounds.box(4, 1.0))
        u0 = PhasePoint(np.zeros(4), [1.0, 0.5, 0.0, 0.0])
        with pytest.raises(ChartExitError) as info:
            integrate(geodesic_field(small), u0, (0.0, 5.0), 50, on_exit="raise")
        assert info.value.prolongation.truncated

    @staticmethod
    def failing_on_call(model, failing_call):
        calls = []

        def phi(u):
            calls.append(u)
            if len(calls) == failing_call:
                raise NonFiniteDerivativeError("field undefined here")
            return np.zeros(u.dim)

        return VlasovField(phi, "fails-once", model)

    def test_field_failure_at_a_node_drops_it(self, flat):
        # call 9 is the first stage of the third step, evaluated at node 2
        W = self.failing_on_call(flat, 9)
        prol = integrate(W, PhasePoint(np.zeros(4), [1.0, 0.2, 0.0, 0.0]), (0.0, 1.0), 10)
        assert prol.truncated
        assert prol.exit_reason.startswith("NON_FINITE_DERIVATIVE")
        assert prol.node_count == 2
        assert np.all(np.isfinite(prol.accelerations))

    def test_field_failure_inside_a_step_keeps_the_node(self, flat):
        W = self.failing_on_call(flat, 10)
        prol = integrate(W, PhasePoint(np.zeros(4), [1.0, 0.2, 0.0, 0.0]), (0.0, 1.0), 10)
        assert prol.node_count == 3
        assert np.all(np.isfinite(prol.accelerations))

    def test_field_failure_at_the_start_raises(self, flat):
        with pytest.raises(NonFiniteDerivativeError):
            integrate(self.failing_on_call(flat, 1), PhasePoint(np.zeros(4), [1.0, 0.0, 0.0, 0.0]), (0.0, 1.0), 4)

    def test_non_finite_state(self):
        W = VlasovField(lambda u: np.full(2, np.inf), "blow-up")
        with pytest.raises(NonFiniteStateError):
            integrate(W, PhasePoint([0.0, 0.0], [1.0, 0.0]), (0.0, 1.0), 10)

    def test_batch_keeps_order(self, efield, efield_samples):
        W = lorentz_field(efield)
        starts = list(efield_samples[:8])
        batch = integrate_batch(W, starts, (0.0, 0.5), 50, workers=4)
        for u0, prol in zip(starts, batch):
            single = integrate(W, u0, (0.0, 0.5), 50)
            np.testing.assert_array_equal(prol.positions, single.positions)


class TestMassShell:
    """Indicator drift along prolongations"""

    def test_levi_civita_conserves_mass_shell(self, efield, efield_samples):
        F_H = indicator_hyperboloid(efield)
        W = lorentz_field(efield)
        for u in efield_samples[:5]:
            u0 = u.scaled(1.0 / F_H.level_scale(u))
            drift = indicator_drift(integrate(W, u0, (0.0, 1.0), 1000), F_H)
            assert abs(drift.values[0] - 1.0) < 1e-12
            assert drift.max_deviation < 1e-8

    def test_nonmetric_drift_rate(self, nonmetric):
        u0 = PhasePoint(np.zeros(4), [1.5, 0.2, -0.1, 0.3])
        prol = integrate(geodesic_field(nonmetric), u0, (0.0, 1.0), 1000)
        drift = indicator_drift(prol, indicator_hyperboloid(nonmetric))
        q = nonmetricity_along(nonmetric, prol)
        assert np.max(np.abs(q)) > 1e-2
        np.testing.assert_allclose(-drift.rates, q, rtol=0.0, atol=1e-5)

    def test_coordinate_indicator_constant_on_flat_geodesic(self, flat):
        u0 = PhasePoint(np.zeros(4), [1.3, 0.2, 0.1, -0.4])
        drift = indicator_drift(integrate(geodesic_field(flat), u0, (0.0, 1.0), 100), indicator_coordinate())
        assert drift.max_deviation < 1e-12


class TestReparameterize:
    """Projectively related fields trace the same curves"""

    def test_zero_rate_is_identity(self, efield, efield_samples):
        prol = integrate(lorentz_field(efield), efield_samples[0], (0.0, 1.0), 200)
        zero = BundleScalar(lambda u: 0.0, 1, "zero")
        same = reparameterize(prol, zero)
        np.testing.assert_allclose(same.params, prol.params, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(same.positions, prol.positions, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(same.velocities, prol.velocities, rtol=0.0, atol=1e-12)

    def test_constant_rate_closed_form(self, flat):
        u0 = PhasePoint(np.zeros(4), [1.5, 0.3, 0.0, 0.0])
        root = indicator_hyperboloid(flat).root
        c0 = root(u0)
        prol = integrate(geodesic_field(flat), u0, (0.0, 1.0), 1000)
        s, w = solve_reparameterization(prol.params, np.full(prol.node_count, c0))
        np.testing.assert_allclose(s, (1.0 - np.exp(-c0 * prol.params)) / c0, rtol=0.0, atol=1e-8)
        np.testing.assert_allclose(w, np.exp(-c0 * prol.params), rtol=0.0, atol=1e-8)

    def test_matches_shifted_field(self, flat):
        u0 = PhasePoint(np.zeros(4), [1.5, 0.3, 0.0, 0.0])
        W = geodesic_field(flat)
        root = indicator_hyperboloid(flat).root
        reparam = reparameterize(integrate(W, u0, (0.0, 1.0), 1000), root)
        shifted = integrate(W.plus_radial(root), u0, (reparam.params[0], reparam.params[-1]), 1000)
        np.testing.assert_allclose(reparam.positions, shifted.positions, rtol=0.0, atol=1e-6)

    def test_degenerate_rate(self):
        with pytest.raises(ReparamDegenerateError):
            solve_reparameterization(np.array([0.0, 1.0]), np.array([0.0, 100.0]))


class TestTrajectoryMatch:
    """Base curves of W and its domain transform coincide as point sets"""

    @pytest.mark.parametrize("indicator", ["hyperboloid", "labtime", "coordinate"])
    def test_lorentz_in_constant_field(self, efield, efield_samples, indicator):
        F = {
            "hyperboloid": indicator_hyperboloid(efield),
            "labtime": indicator_labtime(efield),
            "coordinate": indicator_coordinate(efield),
        }[indicator]
        for u in efield_samples[:3]:
            u0 = u.scaled(1.0 / F.level_scale(u))
            report = trajectory_match(lorentz_field(efield), F, u0, (0.0, 1.0), 1000)
            assert report.passed, report.to_dict()

    def test_rate_sign(self, efield, efield_samples):
        W = lorentz_field(efield)
        F = indicator_labtime(efield)
        u = efield_samples[0]
        shifted = W.plus_radial(transform_rate(W, F))
        np.testing.assert_allclose(shifted(u), transform_to_domain(W, F)(u), rtol=1e-13, atol=1e-15)

    def test_distance_detects_different_curves(self):
        t = np.linspace(0.0, 1.0, 101)
        a = np.column_stack([t, t])
        b = np.column_stack([t, t + 1e-3])
        assert curve_distance(chordal_resample(a, 201), chordal_resample(a, 301)) < 1e-12
        assert curve_distance(a, b) > 5e-4


class TestNullLabtime:
    """Null lines parameterised by a nonlinear lab time"""

    @pytest.fixture(scope="class")
    def report(self, wavy_labtime):
        return null_labtime_defect(wavy_labtime, PhasePoint([0.0, 0.0], [1.0, 1.0]))

    def test_coordinate_time_is_geodesic(self, report):
        assert report.comparison_max_residual < 1e-10

    def test_nonlinear_labtime_residual(self, report):
        assert report.max_residual > 1e-3
        assert report.max_oracle_mismatch < 1e-5

    def test_residual_is_not_discretisation_error(self, wavy_labtime, report):
        finer = null_labtime_defect(wavy_labtime, PhasePoint([0.0, 0.0], [1.0, 1.0]), steps=4000)
        assert finer.max_residual == pytest.approx(report.max_residual, rel=1e-4)


class TestLeaves:
    """Surfaces swept by rescaled prolongations"""

    T_GRID = np.linspace(0.0, 1.0, 201)
    LAM_GRID = np.linspace(0.5, 2.0, 7)

    def test_unit_row_is_prolongation(self, efield, efield_samples):
        psi = bivector_from_field(lorentz_field(efield))
        leaf = integrate_leaf(psi, efield_samples[0], self.T_GRID, self.LAM_GRID)
        row = int(np.argmin(np.abs(self.LAM_GRID - 1.0)))
        np.testing.assert_array_equal(leaf.velocities[:, row], leaf.prolongation.velocities)
        np.testing.assert_array_equal(leaf.positions[:, row], leaf.prolongation.positions)

    def test_tangent_to_bivector(self, efield, efield_samples):
        psi = bivector_from_field(lorentz_field(efield))
        leaf = integrate_leaf(psi, efield_samples[1], self.T_GRID, self.LAM_GRID)
        assert leaf.tangency_ratio() < 1e-5

    def test_lambda_lines_are_rays(self, efield, efield_samples):
        psi = bivector_from_field(lorentz_field(efield))
        leaf = integrate_leaf(psi, efield_samples[2], self.T_GRID, self.LAM_GRID)
        v = leaf.velocities[100]
        for j, lam in enumerate(self.LAM_GRID):
            np.testing.assert_allclose(v[j], lam * leaf.prolongation.velocities[100], rtol=1e-15)

    def test_equivalent_representative_same_leaf(self, efield, efield_samples):
        W = lorentz_field(efield)
        F = indicator_labtime(efield)
        u0 = efield_samples[3]
        span = reparameterize(integrate(W, u0, (0.0, 1.0), 200), transform_rate(W, F)).params[-1]
        a = integrate_leaf(bivector_from_field(W), u0, self.T_GRID, self.LAM_GRID)
        b = integrate_leaf(bivector_from_field(transform_to_domain(W, F)), u0,
                           np.linspace(0.0, span, 201), self.LAM_GRID)
        assert leaf_distance(a, b) < 1e-5
        assert leaf_distance(a, a) < 1e-12
