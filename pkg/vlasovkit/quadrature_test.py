import math

import numpy as np
import pytest

from vlasovkit.quadrature import box_rule, composite_rule, interval_rule


class TestGaussLegendre:

    def test_polynomial_exactness(self):
        x, w = interval_rule(-1.0, 2.0, 4)
        # degree 7 is the highest a 4-node rule integrates exactly
        assert float(np.sum(w * x ** 7)) == pytest.approx((2.0 ** 8 - 1.0) / 8.0, rel=1e-14)

    def test_box_volume_and_shape(self):
        points, weights = box_rule([0.0, -1.0, 2.0], [1.0, 1.0, 2.5], 5)
        assert points.shape == (125, 3)
        assert float(np.sum(weights)) == pytest.approx(1.0, rel=1e-14)

    def test_box_separable_integrand(self):
        points, weights = box_rule([0.0, 0.0], [math.pi, 1.0], 16)
        value = float(np.sum(weights * np.sin(points[:, 0]) * np.exp(points[:, 1])))
        assert value == pytest.approx(2.0 * (math.e - 1.0), rel=1e-12)

    def test_composite_handles_kink(self):
        x, w = composite_rule([-1.0, 0.0, 1.0], 3)
        assert float(np.sum(w * np.abs(x))) == pytest.approx(1.0, rel=1e-14)
