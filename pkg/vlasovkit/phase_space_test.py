import numpy as np
import pytest

from vlasovkit.conftest import SEED, timelike_box
from vlasovkit.errors import ChartDomainError, NonTimelikeError, NotTimeOrientableError, SlitBundleError
from vlasovkit.geometry import coordinate_scalar, metric_at
from vlasovkit.phase_space import (
    Bundle, BundleScalar, PhaseBox, PhasePoint, causal_indicator, check_homogeneity,
    in_bundle, lift_scalar, linear_combination, pullback_scalar, radial_derivative, sample_bundle,
    scalar_lift,
)
from vlasovkit.vlasov import indicator_hyperboloid


class TestPhasePoint:
    """Points of the slit bundle"""

    def test_zero_velocity_rejected(self):
        with pytest.raises(SlitBundleError):
            PhasePoint(np.zeros(4), np.zeros(4))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            PhasePoint(np.zeros(4), np.ones(3))

    def test_scaling_keeps_position(self, at_rest):
        scaled = at_rest.scaled(-2.0)
        np.testing.assert_array_equal(scaled.x, at_rest.x)
        np.testing.assert_array_equal(scaled.v, [-2.0, 0.0, 0.0, 0.0])

    def test_state_round_trip(self):
        u = PhasePoint([0.1, 0.2, 0.3, 0.4], [1.5, 0.1, -0.2, 0.3])
        back = PhasePoint.from_state(u.state())
        np.testing.assert_array_equal(back.x, u.x)
        np.testing.assert_array_equal(back.v, u.v)


class TestCausalIndicator:
    """Future/past gate on the timelike bundle"""

    def test_future_and_past(self, flat, at_rest):
        assert causal_indicator(flat, at_rest) == 1
        assert causal_indicator(flat, at_rest.scaled(-1.0)) == -1

    def test_all_vectors_not_orientable(self, flat, at_rest):
        with pytest.raises(NotTimeOrientableError):
            causal_indicator(flat, at_rest, Bundle.ALL)

    def test_spacelike_rejected(self, flat):
        with pytest.raises(NonTimelikeError):
            causal_indicator(flat, PhasePoint(np.zeros(4), [0.5, 1.0, 0.0, 0.0]))

    def test_membership(self, flat):
        null = PhasePoint(np.zeros(4), [1.0, 1.0, 0.0, 0.0])
        assert in_bundle(flat, null, Bundle.NULL)
        assert not in_bundle(flat, null, Bundle.TIMELIKE)
        assert in_bundle(flat, null, Bundle.ALL)


class TestBundleScalars:
    """Lifts, pullbacks and the radial field"""

    def test_lift_of_coordinate_time(self, flat_samples):
        t_dot = lift_scalar(coordinate_scalar(4, 0, "t"))
        for u in flat_samples[:10]:
            assert t_dot(u) == u.v[0]
        assert check_homogeneity(t_dot, 1, flat_samples, include_reflection=True).passed

    def test_scalar_lift_on_wavy_labtime(self, wavy_labtime):
        u = PhasePoint([0.3, 0.7], [1.4, 0.6])
        expected = 1.4 + 0.2 * np.cos(0.7) * 0.6
        assert scalar_lift(wavy_labtime.labtime, u) == pytest.approx(expected, rel=1e-8)

    def test_pullback_is_degree_zero(self, flat_samples):
        h = pullback_scalar(coordinate_scalar(4, 2, "y"))
        report = check_homogeneity(h, 0, flat_samples)
        assert report.passed
        assert report.max_rel_error == 0.0

    def test_radial_derivative_is_euler_operator(self, black_hole, schwarzschild_samples):
        f_h = indicator_hyperboloid(black_hole).scalar
        for u in schwarzschild_samples[:20]:
            assert radial_derivative(f_h, u) == pytest.approx(2.0 * f_h(u), rel=1e-8)

    def test_wrong_degree_detected(self, flat, flat_samples):
        f_h = indicator_hyperboloid(flat).scalar
        assert check_homogeneity(f_h, 2, flat_samples, include_reflection=True).passed
        report = check_homogeneity(f_h, 1, flat_samples)
        assert not report.passed
        assert report.worst_scale in (0.5, 2.0)

    def test_mixed_degree_combination_fails(self, flat, flat_samples):
        t_dot = lift_scalar(coordinate_scalar(4, 0, "t"))
        f_h = indicator_hyperboloid(flat).scalar
        mixed = linear_combination([(1.0, t_dot), (1.0, f_h)])
        assert not check_homogeneity(mixed, 1, flat_samples).passed
        assert not check_homogeneity(mixed, 2, flat_samples).passed

    def test_exact_gradients_match_differences(self, wavy_labtime):
        exact = lift_scalar(wavy_labtime.labtime)
        numeric = BundleScalar(exact.evaluate, 1, "s_dot_fd")
        u = PhasePoint([0.3, 0.7], [1.4, 0.6])
        np.testing.assert_allclose(numeric.grad_x(u), exact.grad_x(u), atol=1e-8)
        np.testing.assert_allclose(numeric.grad_v(u), exact.grad_v(u), atol=1e-8)


class TestSampling:
    """Seeded quasi-random sampling of the bundle"""

    def test_count_and_membership(self, flat, flat_samples):
        assert len(flat_samples) == 100
        assert flat_samples.seed == SEED
        assert flat_samples.drawn >= 100
        assert all(in_bundle(flat, u, Bundle.TIMELIKE) for u in flat_samples)

    def test_reproducible(self, flat):
        a = sample_bundle(flat, Bundle.TIMELIKE, timelike_box(), 20, 11)
        b = sample_bundle(flat, Bundle.TIMELIKE, timelike_box(), 20, 11)
        for p, q in zip(a, b):
            np.testing.assert_array_equal(p.x, q.x)
            np.testing.assert_array_equal(p.v, q.v)

    def test_null_samples_on_cone(self, black_hole):
        box = PhaseBox([0.0, 8.0, 1.0, 0.0], [1.0, 12.0, 2.0, 1.0],
                       [1.0, -0.3, -0.02, -0.02], [2.0, 0.3, 0.02, 0.02])
        samples = sample_bundle(black_hole, Bundle.NULL, box, 30, SEED)
        for u in samples:
            norm = u.v @ metric_at(black_hole, u.x) @ u.v
            assert abs(norm) < 1e-9
            assert u.v[0] > 0

    def test_empty_intersection_raises(self, flat):
        box = PhaseBox(-np.ones(4), np.ones(4), [0.0, 1.0, 1.0, 1.0], [0.1, 2.0, 2.0, 2.0])
        with pytest.raises(ChartDomainError):
            sample_bundle(flat, Bundle.TIMELIKE, box, 10, SEED, max_draws=4)
