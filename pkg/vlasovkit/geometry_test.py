import math

import numpy as np
import pytest

from vlasovkit.catalog import (
    MODEL_BUILDERS, build_model, minkowski, minkowski_2d_labtime, schwarzschild,
)
from vlasovkit.errors import (
    ChartDomainError, ConfigError, NonFiniteDerivativeError, SingularMetricError,
)
from vlasovkit.geometry import (
    ExplicitConnection, SpacetimeModel, check_model_invariants, christoffel_at,
    future_time_component, inverse_metric_at, levi_civita_at, metric_at, metric_derivatives_at,
    nonmetricity_at,
)

R10 = np.array([0.0, 10.0, 1.2, 0.3])


def random_points(model, count=100, seed=7):
    rng = np.random.default_rng(seed)
    lo = np.maximum(model.bounds.lower, -5.0)
    hi = np.minimum(model.bounds.upper, 5.0)
    if model.name == "schwarzschild":
        lo[1], hi[1] = 3.0, 30.0
    return [rng.uniform(lo, hi) for _ in range(count)]


class TestMetric:
    """Metric evaluation and chart handling"""

    def test_minkowski_origin(self, flat):
        np.testing.assert_array_equal(metric_at(flat, np.zeros(4)), np.diag([-1.0, 1.0, 1.0, 1.0]))

    def test_minkowski_is_constant(self, flat):
        ref = metric_at(flat, np.zeros(4))
        for x in random_points(flat, 10):
            np.testing.assert_array_equal(metric_at(flat, x), ref)

    def test_schwarzschild_gtt(self, black_hole):
        assert metric_at(black_hole, R10)[0, 0] == pytest.approx(-0.8, abs=1e-15)

    def test_outside_chart_raises(self, black_hole):
        with pytest.raises(ChartDomainError):
            metric_at(black_hole, np.array([0.0, 1.0, 1.0, 0.0]))

    def test_wrong_dimension_raises(self, flat):
        with pytest.raises(ChartDomainError):
            metric_at(flat, np.zeros(3))


class TestInverseMetric:
    """Inverse metric and conditioning"""

    def test_minkowski_self_inverse(self, flat):
        np.testing.assert_allclose(inverse_metric_at(flat, np.zeros(4)), np.diag([-1.0, 1.0, 1.0, 1.0]))

    def test_schwarzschild_gtt_upper(self, black_hole):
        assert inverse_metric_at(black_hole, R10)[0, 0] == pytest.approx(-1.25, abs=1e-12)

    def test_perturbed_metric_product_is_identity(self):
        rng = np.random.default_rng(3)
        bump = rng.normal(scale=0.05, size=(4, 4))
        g = np.diag([-1.0, 1.0, 1.0, 1.0]) + 0.5 * (bump + bump.T)
        model = SpacetimeModel("perturbed", 4, lambda x: g.copy())
        product = inverse_metric_at(model, np.zeros(4)) @ g
        np.testing.assert_allclose(product, np.eye(4), atol=1e-12)

    def test_singular_metric_raises(self):
        model = SpacetimeModel("degenerate", 2, lambda x: np.array([[-1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(SingularMetricError):
            inverse_metric_at(model, np.zeros(2))


class TestMetricDerivatives:
    def test_minkowski_is_constant(self, flat):
        assert np.max(np.abs(metric_derivatives_at(flat, np.array([0.3, -1.0, 2.0, 0.5])))) < 1e-9

    def test_differences_match_closed_form(self, black_hole):
        exact = metric_derivatives_at(schwarzschild(1.0, exact_derivatives=True), R10)
        numeric = metric_derivatives_at(black_hole, R10)
        assert exact.shape == (4, 4, 4)
        assert exact[1, 0, 0] == pytest.approx(-0.02)
        np.testing.assert_allclose(numeric, exact, atol=1e-7)


class TestChristoffel:
    """Connection coefficients"""

    def test_minkowski_vanishes(self, flat):
        for x in random_points(flat, 5):
            assert np.max(np.abs(christoffel_at(flat, x))) < 1e-12

    def test_schwarzschild_gamma_t_tr(self, black_hole):
        gamma = christoffel_at(black_hole, R10)
        assert gamma[0, 0, 1] == pytest.approx(1.0 / 80.0, abs=1e-6)
        assert gamma[0, 1, 0] == gamma[0, 0, 1]

    def test_schwarzschild_gamma_r_tt(self, black_hole):
        gamma = christoffel_at(black_hole, R10)
        assert gamma[1, 0, 0] == pytest.approx(0.01 * 0.8, abs=1e-6)

    def test_symmetric_exactly(self, black_hole):
        for x in random_points(black_hole, 10):
            gamma = christoffel_at(black_hole, x)
            assert np.max(np.abs(gamma - np.transpose(gamma, (0, 2, 1)))) == 0.0

    def test_explicit_connection_passthrough(self, black_hole):
        coefficients = levi_civita_at(black_hole, R10) + 1e-3
        model = black_hole.with_options(connection=ExplicitConnection(lambda x: coefficients))
        assert christoffel_at(model, R10) is coefficients

    def test_stencil_leaving_chart(self):
        model = schwarzschild(1.0).with_options(fd_step=0.01)
        with pytest.raises(NonFiniteDerivativeError):
            christoffel_at(model, np.array([0.0, 2.005, 1.2, 0.0]))

    def test_second_order_convergence(self):
        """Halving the FD step quarters the error against closed-form derivatives"""
        exact = christoffel_at(schwarzschild(1.0, exact_derivatives=True), R10)
        errors = []
        for h in (0.4, 0.2):
            approx = christoffel_at(schwarzschild(1.0).with_options(fd_step=h), R10)
            errors.append(np.max(np.abs(approx - exact)))
        assert 3.5 <= errors[0] / errors[1] <= 4.5


class TestNonmetricity:
    """Q = covariant derivative of the metric"""

    def test_levi_civita_is_compatible(self, black_hole):
        h = 1e-6 * 30.0
        for x in random_points(black_hole, 100):
            assert np.max(np.abs(nonmetricity_at(black_hole, x))) < 10 * h * h

    def test_diagonal_bump_q000(self, nonmetric):
        q = nonmetricity_at(nonmetric, np.zeros(4))
        assert q[0, 0, 0] == pytest.approx(0.2, abs=1e-10)
        assert q[1, 1, 1] == pytest.approx(-0.2, abs=1e-10)

    def test_symmetric_in_last_pair(self, nonmetric, black_hole):
        for model in (nonmetric, black_hole):
            q = nonmetricity_at(model, random_points(model, 1)[0])
            assert np.max(np.abs(q - np.transpose(q, (0, 2, 1)))) == 0.0


class TestCatalog:
    """Built-in models"""

    @pytest.mark.parametrize("name", sorted(MODEL_BUILDERS))
    def test_invariants_hold(self, name):
        model = build_model(name)
        report = check_model_invariants(model, random_points(model, 100))
        assert report.passed, report.failures
        assert report.max_metric_asymmetry == 0.0

    def test_two_dimensional_minkowski(self):
        model = minkowski(2)
        np.testing.assert_array_equal(metric_at(model, np.zeros(2)), np.diag([-1.0, 1.0]))

    def test_labtime_gradient(self):
        model = minkowski_2d_labtime(0.2)
        x = np.array([0.3, 0.7])
        np.testing.assert_allclose(model.labtime.grad(x), [1.0, 0.2 * math.cos(0.7)])

    def test_unknown_model(self):
        with pytest.raises(ConfigError):
            build_model("kerr")


class TestTimeComponent:
    """Solving g(v, v) = -level for v^0"""

    def test_unit_hyperboloid(self, flat):
        spatial = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 4.0]])
        v0 = future_time_component(metric_at(flat, np.zeros(4)), spatial, 1.0)
        np.testing.assert_allclose(v0, [1.0, math.sqrt(26.0)])

    def test_null_cone(self, flat):
        v0 = future_time_component(metric_at(flat, np.zeros(4)), np.array([[0.6, 0.8, 0.0]]), 0.0)
        assert v0[0] == pytest.approx(1.0)
