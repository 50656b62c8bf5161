"""Built-in spacetime models, looked up by name from scenario files."""

import math
from typing import Callable, Dict

import numpy as np

from vlasovkit.errors import ConfigError
from vlasovkit.geometry import (
    ChartBounds, ExplicitConnection, ScalarField, SpacetimeModel, coordinate_scalar,
)


def _flat_metric(dim: int) -> np.ndarray:
    eta = np.eye(dim)
    eta[0, 0] = -1.0
    return eta


def _tilted_labtime(dim: int, tilt: float) -> ScalarField:
    """t = x^0 + tilt * x^1."""
    if tilt == 0.0:
        return coordinate_scalar(dim, 0, "t")
    grad = np.zeros(dim)
    grad[0], grad[1] = 1.0, tilt
    return ScalarField(
        value=lambda x: float(x[0] + tilt * x[1]),
        gradient=lambda x: grad.copy(),
        hessian=lambda x: np.zeros((dim, dim)),
        name="t",
    )


def minkowski(dim: int = 4, labtime_tilt: float = 0.0) -> SpacetimeModel:
    eta = _flat_metric(dim)
    return SpacetimeModel(
        name=f"minkowski-{dim}d",
        dim=dim,
        metric=lambda x: eta.copy(),
        labtime=_tilted_labtime(dim, labtime_tilt),
        metric_derivative=lambda x: np.zeros((dim, dim, dim)),
        parameters={"dim": dim, "labtime_tilt": labtime_tilt},
    )


def minkowski_efield(field_strength: float = 0.1, charge_to_mass: float = 1.0,
                     dim: int = 4) -> SpacetimeModel:
    """Constant electric field E0 along x^1: F_10 = E0 = -F_01."""
    eta = _flat_metric(dim)
    faraday = np.zeros((dim, dim))
    faraday[1, 0] = field_strength
    faraday[0, 1] = -field_strength
    return SpacetimeModel(
        name="minkowski-efield",
        dim=dim,
        metric=lambda x: eta.copy(),
        faraday=lambda x: faraday.copy(),
        charge_to_mass=charge_to_mass,
        labtime=coordinate_scalar(dim, 0, "t"),
        metric_derivative=lambda x: np.zeros((dim, dim, dim)),
        parameters={"field_strength": field_strength, "charge_to_mass": charge_to_mass, "dim": dim},
    )


def minkowski_nonmetric(epsilon: float = 0.1, dim: int = 4) -> SpacetimeModel:
    """Flat metric with Gamma^m_{mm} = epsilon for every m; non-metricity 2*epsilon scale."""
    eta = _flat_metric(dim)
    gamma = np.zeros((dim, dim, dim))
    for m in range(dim):
        gamma[m, m, m] = epsilon
    return SpacetimeModel(
        name="minkowski-nonmetric",
        dim=dim,
        metric=lambda x: eta.copy(),
        connection=ExplicitConnection(lambda x: gamma, label=f"diagonal-bump({epsilon})"),
        labtime=coordinate_scalar(dim, 0, "t"),
        metric_derivative=lambda x: np.zeros((dim, dim, dim)),
        parameters={"epsilon": epsilon, "dim": dim},
    )


def minkowski_2d_labtime(amplitude: float = 0.2) -> SpacetimeModel:
    """2D Minkowski with lab time s(t, x) = t + amplitude * sin(x)."""
    eta = _flat_metric(2)
    labtime = ScalarField(
        value=lambda x: float(x[0] + amplitude * math.sin(x[1])),
        gradient=lambda x: np.array([1.0, amplitude * math.cos(x[1])]),
        hessian=lambda x: np.array([[0.0, 0.0], [0.0, -amplitude * math.sin(x[1])]]),
        name="s",
    )
    return SpacetimeModel(
        name="minkowski-2d-labtime",
        dim=2,
        metric=lambda x: eta.copy(),
        labtime=labtime,
        metric_derivative=lambda x: np.zeros((2, 2, 2)),
        parameters={"amplitude": amplitude},
    )


def schwarzschild(mass: float = 1.0, exact_derivatives: bool = False) -> SpacetimeModel:
    """Schwarzschild coordinates (t, r, theta, phi), exterior chart."""

    def metric(x):
        r, theta = x[1], x[2]
        lapse = 1.0 - 2.0 * mass / r
        return np.diag([-lapse, 1.0 / lapse, r * r, (r * math.sin(theta)) ** 2])

    def metric_derivative(x):
        r, theta = x[1], x[2]
        lapse = 1.0 - 2.0 * mass / r
        d = np.zeros((4, 4, 4))
        d[1, 0, 0] = -2.0 * mass / r ** 2
        d[1, 1, 1] = -(2.0 * mass / r ** 2) / lapse ** 2
        d[1, 2, 2] = 2.0 * r
        d[1, 3, 3] = 2.0 * r * math.sin(theta) ** 2
        d[2, 3, 3] = 2.0 * r * r * math.sin(theta) * math.cos(theta)
        return d

    eps = 1e-6
    bounds = ChartBounds(
        lower=np.array([-1e6, 2.0 * mass * (1.0 + 1e-3), eps, -1e6]),
        upper=np.array([1e6, 1e6, math.pi - eps, 1e6]),
    )
    return SpacetimeModel(
        name="schwarzschild",
        dim=4,
        metric=metric,
        labtime=coordinate_scalar(4, 0, "t"),
        bounds=bounds,
        metric_derivative=metric_derivative if exact_derivatives else None,
        parameters={"mass": mass, "exact_derivatives": exact_derivatives},
    )


MODEL_BUILDERS: Dict[str, Callable[..., SpacetimeModel]] = {
    "minkowski": minkowski,
    "minkowski-efield": minkowski_efield,
    "minkowski-nonmetric": minkowski_nonmetric,
    "minkowski-2d-labtime": minkowski_2d_labtime,
    "schwarzschild": schwarzschild,
}


def build_model(name: str, **params) -> SpacetimeModel:
    builder = MODEL_BUILDERS.get(name)
    if builder is None:
        raise ConfigError(f"unknown model '{name}'; known: {sorted(MODEL_BUILDERS)}", field="model.name")
    try:
        return builder(**params)
    except TypeError as e:
        raise ConfigError(f"bad parameters for model '{name}': {e}", field="model.params")
