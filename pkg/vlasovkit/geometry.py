"""Spacetime background: charts, metric, connections, Faraday tensor, lab time.

All functions are pure in the model; models are frozen dataclasses so they
can be shared freely between worker threads.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from vlasovkit.differences import DEFAULT_FD_SCALE, central_gradient, scaled_step
from vlasovkit.errors import ChartDomainError, QuadratureDomainError, SingularMetricError

logger = logging.getLogger(__name__)

MAX_METRIC_CONDITION = 1e12

Point = np.ndarray
MatrixField = Callable[[Point], np.ndarray]


@dataclass(frozen=True)
class ChartBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'lower', np.asarray(self.lower, dtype=float))
        object.__setattr__(self, 'upper', np.asarray(self.upper, dtype=float))

    @classmethod
    def box(cls, dim: int, half_width: float = 1e6) -> "ChartBounds":
        return cls(np.full(dim, -half_width), np.full(dim, half_width))

    def contains(self, x: Point) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class ScalarField:
    """A base scalar h(x) with optional exact gradient and Hessian.

    Missing derivatives fall back to central differences.
    """
    value: Callable[[Point], float]
    gradient: Optional[Callable[[Point], np.ndarray]] = None
    hessian: Optional[Callable[[Point], np.ndarray]] = None
    name: str = "h"
    fd_scale: float = DEFAULT_FD_SCALE

    def at(self, x: Point) -> float:
        return float(self.value(np.asarray(x, dtype=float)))

    def grad(self, x: Point) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return central_gradient(self.value, x, scaled_step(x, self.fd_scale))

    def hess(self, x: Point) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.hessian is not None:
            return np.asarray(self.hessian(x), dtype=float)
        h = central_gradient(self.grad, x, scaled_step(x, self.fd_scale ** 0.5 * 1e-2))
        return 0.5 * (h + h.T)


def coordinate_scalar(dim: int, index: int = 0, name: str = None) -> ScalarField:
    """The coordinate function x^index with exact derivatives."""
    unit = np.zeros(dim)
    unit[index] = 1.0
    return ScalarField(
        value=lambda x: float(x[index]),
        gradient=lambda x: unit.copy(),
        hessian=lambda x: np.zeros((dim, dim)),
        name=name or f"x{index}",
    )


@dataclass(frozen=True)
class LeviCivita:
    """Connection derived from the metric."""
    label: str = "levi-civita"


@dataclass(frozen=True)
class ExplicitConnection:
    """User-supplied coefficients x -> Gamma^mu_{nu rho} (may be non-metric)."""
    coefficients: Callable[[Point], np.ndarray]
    label: str = "explicit"


Connection = Union[LeviCivita, ExplicitConnection]


@dataclass(frozen=True)
class SpacetimeModel:
    name: str
    dim: int
    metric: MatrixField
    faraday: Optional[MatrixField] = None
    charge_to_mass: float = 0.0
    connection: Connection = field(default_factory=LeviCivita)
    labtime: Optional[ScalarField] = None
    orientation: Optional[ScalarField] = None
    bounds: Optional[ChartBounds] = None
    metric_derivative: Optional[Callable[[Point], np.ndarray]] = None
    fd_step: Optional[float] = None
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"spacetime dimension must be >= 2, got {self.dim}")
        if self.bounds is None:
            object.__setattr__(self, 'bounds', ChartBounds.box(self.dim))
        if self.orientation is None:
            object.__setattr__(self, 'orientation', coordinate_scalar(self.dim, 0, "t_orient"))

    def with_options(self, **changes) -> "SpacetimeModel":
        from dataclasses import replace
        return replace(self, **changes)


def check_chart(model: SpacetimeModel, x: Point) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ChartDomainError(f"expected a point with {model.dim} coordinates, got shape {x.shape}",
                               {"model": model.name})
    if not model.bounds.contains(x):
        raise ChartDomainError(f"point outside the chart of '{model.name}'",
                               {"model": model.name, "x": x})
    return x


def metric_at(model: SpacetimeModel, x: Point) -> np.ndarray:
    x = check_chart(model, x)
    g = np.asarray(model.metric(x), dtype=float)
    if g.shape != (model.dim, model.dim):
        raise ChartDomainError(f"metric of '{model.name}' returned shape {g.shape}", {"x": x})
    return g


def inverse_metric_at(model: SpacetimeModel, x: Point) -> np.ndarray:
    g = metric_at(model, x)
    condition = np.linalg.cond(g)
    if not np.isfinite(condition) or condition > MAX_METRIC_CONDITION:
        raise SingularMetricError(f"metric of '{model.name}' is ill conditioned ({condition:.3g})",
                                  {"x": x, "condition": condition})
    g_inv = np.linalg.inv(g)
    return 0.5 * (g_inv + g_inv.T)


def faraday_at(model: SpacetimeModel, x: Point) -> np.ndarray:
    x = check_chart(model, x)
    if model.faraday is None:
        return np.zeros((model.dim, model.dim))
    return np.asarray(model.faraday(x), dtype=float)


def fd_step_for(model: SpacetimeModel, x: Point) -> float:
    if model.fd_step is not None:
        return float(model.fd_step)
    return scaled_step(np.asarray(x, dtype=float))


def metric_derivatives_at(model: SpacetimeModel, x: Point) -> np.ndarray:
    """dg[l, m, n] = d_l g_{mn}."""
    x = check_chart(model, x)
    if model.metric_derivative is not None:
        return np.asarray(model.metric_derivative(x), dtype=float)
    return central_gradient(lambda y: np.asarray(model.metric(y), dtype=float), x,
                            fd_step_for(model, x), inside=model.bounds.contains)


def levi_civita_at(model: SpacetimeModel, x: Point) -> np.ndarray:
    dg = metric_derivatives_at(model, x)
    g_inv = inverse_metric_at(model, x)
    # lowered[s, n, r] = 1/2 (d_n g_sr + d_r g_sn - d_s g_nr)
    lowered = 0.5 * (np.transpose(dg, (1, 0, 2)) + np.transpose(dg, (1, 2, 0)) - dg)
    gamma = np.einsum('ms,snr->mnr', g_inv, lowered)
    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))


def christoffel_at(model: SpacetimeModel, x: Point) -> np.ndarray:
    """Gamma[m, n, r] = Gamma^m_{nr} of the model's connection."""
    if isinstance(model.connection, ExplicitConnection):
        x = check_chart(model, x)
        return np.asarray(model.connection.coefficients(x))
    return levi_civita_at(model, x)


def nonmetricity_at(model: SpacetimeModel, x: Point) -> np.ndarray:
    """Q[l, m, n] = d_l g_mn - Gamma^r_{lm} g_rn - Gamma^r_{ln} g_mr."""
    dg = metric_derivatives_at(model, x)
    g = metric_at(model, x)
    gamma = christoffel_at(model, x)
    q = dg - np.einsum('rlm,rn->lmn', gamma, g) - np.einsum('rln,mr->lmn', gamma, g)
    return 0.5 * (q + np.transpose(q, (0, 2, 1)))


def contract_nonmetricity(q: np.ndarray, v: np.ndarray) -> float:
    """Q(v, v, v)."""
    return float(np.einsum('lmn,l,m,n->', q, v, v, v))


def quadratic_form(model: SpacetimeModel, x: Point, v: np.ndarray) -> float:
    """g_x(v, v)."""
    g = metric_at(model, x)
    return float(v @ g @ v)


def future_time_component(g: np.ndarray, spatial: np.ndarray, level: float) -> np.ndarray:
    """Solve g(v, v) = -level for v^0 > 0 given the spatial components.

    ``spatial`` has shape (N, n-1); returns shape (N,). level = 1 is the unit
    hyperboloid, level = 0 the future null cone.
    """
    spatial = np.atleast_2d(np.asarray(spatial, dtype=float))
    a = g[0, 0]
    b = 2.0 * spatial @ g[0, 1:]
    c = np.einsum('ni,ij,nj->n', spatial, g[1:, 1:], spatial) + level
    if a >= 0:
        raise QuadratureDomainError("g_00 must be negative to solve for a future time component",
                                    {"g00": a})
    disc = b * b - 4.0 * a * c
    if np.any(disc < 0):
        raise QuadratureDomainError("no real time component for some spatial velocities",
                                    {"min_discriminant": float(disc.min())})
    root = (-b - np.sqrt(disc)) / (2.0 * a)
    if np.any(root <= 0):
        raise QuadratureDomainError("time component is not future pointing for some velocities",
                                    {"min_root": float(root.min())})
    return root


@dataclass
class ModelInvariantReport:
    model: str
    points_checked: int
    max_metric_asymmetry: float = 0.0
    signature_failures: int = 0
    max_faraday_asymmetry: float = 0.0
    min_labtime_gradient: Optional[float] = None
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def check_model_invariants(model: SpacetimeModel, points: List[Point]) -> ModelInvariantReport:
    report = ModelInvariantReport(model=model.name, points_checked=len(points))
    for x in points:
        g = metric_at(model, x)
        asym = float(np.max(np.abs(g - g.T)))
        report.max_metric_asymmetry = max(report.max_metric_asymmetry, asym)
        if int(np.sum(np.linalg.eigvalsh(0.5 * (g + g.T)) < 0)) != 1:
            report.signature_failures += 1
        f = faraday_at(model, x)
        report.max_faraday_asymmetry = max(report.max_faraday_asymmetry, float(np.max(np.abs(f + f.T))))
        if model.labtime is not None:
            norm = float(np.max(np.abs(model.labtime.grad(x))))
            current = report.min_labtime_gradient
            report.min_labtime_gradient = norm if current is None else min(current, norm)

    if report.max_metric_asymmetry != 0.0:
        report.failures.append(f"metric asymmetry {report.max_metric_asymmetry:.3g}")
    if report.signature_failures:
        report.failures.append(f"{report.signature_failures} points without Lorentzian signature")
    if report.max_faraday_asymmetry != 0.0:
        report.failures.append(f"Faraday symmetric part {report.max_faraday_asymmetry:.3g}")
    if report.min_labtime_gradient is not None and report.min_labtime_gradient == 0.0:
        report.failures.append("lab-time gradient vanishes")
    if report.failures:
        logger.warning(f"Model '{model.name}' invariant failures: {report.failures}")
    return report
