"""Vlasov fields, kinematic indicators, domain transformation and bivectors.

A Vlasov field is stored by its vertical coefficients phi^mu(x, v); the
horizontal part v^mu d_x^mu is implied. A bivector R ^ W is stored by one
representative field.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from vlasovkit.errors import MissingLabTimeError, NonTimelikeError, QuadratureDomainError, SignError
from vlasovkit.geometry import (
    SpacetimeModel, christoffel_at, faraday_at, future_time_component, inverse_metric_at,
    metric_at, metric_derivatives_at,
)
from vlasovkit.phase_space import (
    TIMELIKE_EPSILON, BundleScalar, PhasePoint, causal_indicator, check_homogeneity,
    homogeneity_error, lift_scalar, radial_derivative,
)

logger = logging.getLogger(__name__)

BRACKET_TOLERANCE = 1e-6
COMPATIBILITY_TOLERANCE = 1e-8
PARALLEL_TOLERANCE = 1e-9
K_HOMOGENEITY_TOLERANCE = 1e-8
WEDGE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class VlasovField:
    phi: Callable[[PhasePoint], np.ndarray]
    label: str
    model: Optional[SpacetimeModel] = None

    def __call__(self, u: PhasePoint) -> np.ndarray:
        return np.asarray(self.phi(u), dtype=float)

    def vector(self, u: PhasePoint) -> np.ndarray:
        """Full 2n components (v, phi)."""
        return np.concatenate([u.v, self(u)])

    def plus_radial(self, k: Callable[[PhasePoint], float], label: str = None) -> "VlasovField":
        """W + k R for a 1-homogeneous k."""
        return VlasovField(lambda u: self(u) + k(u) * u.v, label or f"{self.label}+kR", self.model)


@dataclass(frozen=True)
class KinematicIndicator:
    """A k-homogeneous non-vanishing scalar F with level a.

    ``solve_time`` returns the future time component v^0 with F = level for
    a batch of spatial velocities, ``batch`` evaluates F on a (N, n) velocity
    array and ``batch_dv0`` gives dF/dv^0 on the same array.
    """
    scalar: BundleScalar
    degree: int
    level: float = 1.0
    root: Optional[BundleScalar] = None
    model: Optional[SpacetimeModel] = None
    solve_time: Optional[Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = None
    batch: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    batch_dv0: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.degree == 0:
            raise ValueError("kinematic indicators need a nonzero degree")
        if self.level <= 0:
            raise ValueError(f"indicator level must be positive, got {self.level}")

    @property
    def name(self) -> str:
        return self.scalar.name

    def __call__(self, u: PhasePoint) -> float:
        return self.scalar(u)

    def at_level(self, level: float) -> "KinematicIndicator":
        from dataclasses import replace
        return replace(self, level=level)

    def level_scale(self, u: PhasePoint) -> float:
        """rho(u) = (F(u)/a)^(1/k), so u/rho lies on the level set."""
        value = self(u)
        ratio = value / self.level
        if self.degree % 2 == 0:
            if self.model is not None and causal_indicator(self.model, u) != 1:
                raise SignError(f"{self.name}: even-degree scaling needs a future-pointing sample",
                                {"x": u.x, "v": u.v})
            if ratio <= 0:
                raise SignError(f"{self.name} = {value:.3g} has the wrong sign for level {self.level}",
                                {"x": u.x, "v": u.v})
            return ratio ** (1.0 / self.degree)
        return math.copysign(abs(ratio) ** (1.0 / self.degree), ratio)

    def values(self, x: np.ndarray, V: np.ndarray) -> np.ndarray:
        if self.batch is not None:
            return np.asarray(self.batch(x, V), dtype=float)
        return np.array([self(PhasePoint(x, v)) for v in V])


def geodesic_field(model: SpacetimeModel) -> VlasovField:
    def phi(u: PhasePoint) -> np.ndarray:
        gamma = christoffel_at(model, u.x)
        return -np.einsum('mnr,n,r->m', gamma, u.v, u.v)
    return VlasovField(phi, f"geodesic[{model.name}]", model)


def lorentz_field(model: SpacetimeModel, epsilon: float = TIMELIKE_EPSILON) -> VlasovField:
    """(q/m) sigma sqrt(F_H) g^{mu nu} F_{nu rho} v^rho - Gamma^mu_{nu rho} v^nu v^rho."""
    qm = model.charge_to_mass

    def phi(u: PhasePoint) -> np.ndarray:
        g = metric_at(model, u.x)
        norm = float(u.v @ g @ u.v)
        if norm >= -epsilon:
            raise NonTimelikeError(f"Lorentz force needs a timelike velocity (g(v,v) = {norm:.3g})",
                                   {"x": u.x, "v": u.v})
        sigma = causal_indicator(model, u, epsilon=epsilon)
        force = qm * sigma * math.sqrt(-norm) * (inverse_metric_at(model, u.x) @ faraday_at(model, u.x) @ u.v)
        gamma = christoffel_at(model, u.x)
        return force - np.einsum('mnr,n,r->m', gamma, u.v, u.v)
    return VlasovField(phi, f"lorentz[{model.name}]", model)


def _hyperboloid_base_gradient(model: SpacetimeModel, u: PhasePoint) -> np.ndarray:
    return -np.einsum('lmn,m,n->l', metric_derivatives_at(model, u.x), u.v, u.v)


def indicator_hyperboloid(model: SpacetimeModel, level: float = 1.0) -> KinematicIndicator:
    """F_H = -g(v, v), degree 2; ``root`` is the 1-homogeneous sigma sqrt(F_H)."""

    def value(u: PhasePoint) -> float:
        return -float(u.v @ metric_at(model, u.x) @ u.v)

    f_h = BundleScalar(
        evaluate=value,
        declared_degree=2,
        name="F_H",
        base_gradient=lambda u: _hyperboloid_base_gradient(model, u),
        fiber_gradient=lambda u: -2.0 * (metric_at(model, u.x) @ u.v),
    )

    def root_value(u: PhasePoint) -> float:
        return causal_indicator(model, u) * math.sqrt(value(u))

    def root_scale(u: PhasePoint) -> float:
        return causal_indicator(model, u) / (2.0 * math.sqrt(value(u)))

    root = BundleScalar(
        evaluate=root_value,
        declared_degree=1,
        name="sigma_sqrt_F_H",
        base_gradient=lambda u: root_scale(u) * _hyperboloid_base_gradient(model, u),
        fiber_gradient=lambda u: root_scale(u) * (-2.0 * (metric_at(model, u.x) @ u.v)),
    )

    def batch(x, V):
        return -np.einsum('ni,ij,nj->n', V, metric_at(model, x), V)

    def batch_dv0(x, V):
        return -2.0 * (V @ metric_at(model, x))[:, 0]

    def solve_time(x, spatial, lvl):
        return future_time_component(metric_at(model, x), spatial, lvl)

    return KinematicIndicator(f_h, 2, level, root=root, model=model,
                              solve_time=solve_time, batch=batch, batch_dv0=batch_dv0)


def proper_speed_scalar(model: SpacetimeModel) -> BundleScalar:
    return indicator_hyperboloid(model).root


def indicator_labtime(model: SpacetimeModel, level: float = 1.0) -> KinematicIndicator:
    """F = t-dot for the model's lab time, degree 1."""
    if model.labtime is None:
        raise MissingLabTimeError(f"model '{model.name}' has no lab time registered", {"model": model.name})
    labtime = model.labtime
    scalar = lift_scalar(labtime)
    scalar = BundleScalar(scalar.evaluate, 1, f"{labtime.name}_dot",
                          scalar.base_gradient, scalar.fiber_gradient)

    def batch(x, V):
        return V @ labtime.grad(x)

    def batch_dv0(x, V):
        return np.full(len(V), labtime.grad(x)[0])

    def solve_time(x, spatial, lvl):
        grad = labtime.grad(x)
        if grad[0] <= 0:
            raise QuadratureDomainError("lab time must increase along x^0 to solve for v^0", {"x": x})
        spatial = np.atleast_2d(spatial)
        return (lvl - spatial @ grad[1:]) / grad[0]

    return KinematicIndicator(scalar, 1, level, model=model,
                              solve_time=solve_time, batch=batch, batch_dv0=batch_dv0)


def indicator_coordinate(model: Optional[SpacetimeModel] = None, level: float = 1.0) -> KinematicIndicator:
    """F_crd = sum_mu (v^mu)^2, degree 2."""
    scalar = BundleScalar(
        evaluate=lambda u: float(u.v @ u.v),
        declared_degree=2,
        name="F_crd",
        base_gradient=lambda u: np.zeros(u.dim),
        fiber_gradient=lambda u: 2.0 * u.v,
    )

    def solve_time(x, spatial, lvl):
        spatial = np.atleast_2d(spatial)
        rest = lvl - np.sum(spatial ** 2, axis=1)
        if np.any(rest <= 0):
            raise QuadratureDomainError("spatial velocities exceed the coordinate sphere", {"level": lvl})
        return np.sqrt(rest)

    return KinematicIndicator(scalar, 2, level, model=model, solve_time=solve_time,
                              batch=lambda x, V: np.sum(V ** 2, axis=1),
                              batch_dv0=lambda x, V: 2.0 * V[:, 0])


def apply_field(W: VlasovField, G: BundleScalar, u: PhasePoint) -> float:
    """W<G> = v . d_x G + phi . d_v G."""
    inside = W.model.bounds.contains if W.model is not None else None
    return float(u.v @ G.grad_x(u, inside=inside) + W(u) @ G.grad_v(u))


def radial_action(G: BundleScalar, u: PhasePoint) -> float:
    """R<G> = v . d_v G from the fiber gradient."""
    return float(u.v @ G.grad_v(u))


def transform_to_domain(W: VlasovField, F: KinematicIndicator) -> VlasovField:
    """W - (W<F> / (k F)) R, the field adapted to the level sets of F."""
    k = F.degree

    def phi(u: PhasePoint) -> np.ndarray:
        return W(u) - (apply_field(W, F.scalar, u) / (k * F(u))) * u.v
    return VlasovField(phi, f"{W.label}|{F.name}", W.model)


@dataclass
class DefectReport:
    name: str
    max_defect: float
    sample_count: int
    tolerance: float
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.sample_count > 0 and self.max_defect < self.tolerance

    def to_dict(self) -> dict:
        return {"name": self.name, "max_defect": self.max_defect, "samples": self.sample_count,
                "tolerance": self.tolerance, "passed": self.passed, **self.details}


def compatibility_defect(W: VlasovField, F: KinematicIndicator, samples: Sequence[PhasePoint],
                         tolerance: float = COMPATIBILITY_TOLERANCE) -> DefectReport:
    worst = 0.0
    for u in samples:
        worst = max(worst, abs(apply_field(W, F.scalar, u)) / max(1.0, abs(F(u))))
    return DefectReport(f"compatibility[{W.label} vs {F.name}]", worst, len(samples), tolerance)


def radial_quadraticity(W: VlasovField, samples: Sequence[PhasePoint], tolerance: float = 1e-9):
    report = check_homogeneity(W, 2, samples, tolerance=tolerance)
    report.name = f"quadraticity[{W.label}]"
    return report


def bracket_defect(W: VlasovField, samples: Sequence[PhasePoint],
                   tolerance: float = BRACKET_TOLERANCE) -> DefectReport:
    """max |R<phi> - 2 phi| / max(1, |phi|), the coordinate form of [R, W] = W."""
    worst_rel, worst_abs = 0.0, 0.0
    for u in samples:
        phi = W(u)
        defect = float(np.max(np.abs(radial_derivative(W, u) - 2.0 * phi)))
        worst_abs = max(worst_abs, defect)
        worst_rel = max(worst_rel, defect / max(1.0, float(np.max(np.abs(phi)))))
    return DefectReport(f"bracket[{W.label}]", worst_rel, len(samples), tolerance,
                        {"max_abs_defect": worst_abs})


@dataclass(frozen=True)
class VlasovBivector:
    representative: VlasovField

    @property
    def label(self) -> str:
        return f"R^{self.representative.label}"


def bivector_from_field(W: VlasovField) -> VlasovBivector:
    return VlasovBivector(W)


def bivector_action(psi: VlasovBivector, F: BundleScalar, G: BundleScalar, u: PhasePoint) -> float:
    """Psi<F, G> = R<F> W<G> - W<F> R<G>."""
    W = psi.representative
    return radial_action(F, u) * apply_field(W, G, u) - apply_field(W, F, u) * radial_action(G, u)


def _velocity_components(dim: int) -> List[BundleScalar]:
    comps = []
    for mu in range(dim):
        unit = np.zeros(dim)
        unit[mu] = 1.0
        comps.append(BundleScalar(lambda u, m=mu: float(u.v[m]), 1, f"v{mu}",
                                  lambda u: np.zeros(u.dim), lambda u, e=unit: e))
    return comps


def field_from_bivector(psi: VlasovBivector, F: KinematicIndicator) -> VlasovField:
    """W_F^mu = Psi<F, v^mu> / (k F), the representative compatible with F."""
    W = psi.representative
    k = F.degree

    def phi(u: PhasePoint) -> np.ndarray:
        denom = k * F(u)
        w_f = apply_field(W, F.scalar, u)
        r_f = radial_action(F.scalar, u)
        # Psi<F, v^mu> with R<v^mu> = v^mu and W<v^mu> = phi^mu
        return (r_f * W(u) - w_f * u.v) / denom
    return VlasovField(phi, f"W_{F.name}[{W.label}]", W.model)


def coordinate_based_field(psi: VlasovBivector) -> VlasovField:
    return field_from_bivector(psi, indicator_coordinate(psi.representative.model))


def radially_cubic_defect(psi: VlasovBivector, samples: Sequence[PhasePoint],
                          tolerance: float = 1e-9) -> DefectReport:
    """Psi<v^a, v^b> must scale as lambda^3 along fiber rays."""
    W = psi.representative

    def pairing(u: PhasePoint) -> np.ndarray:
        phi = W(u)
        return np.outer(u.v, phi) - np.outer(phi, u.v)

    worst, scale = homogeneity_error(pairing, 3, samples)
    return DefectReport(f"radially-cubic[{psi.label}]", worst, len(samples), tolerance,
                        {"worst_scale": scale})


@dataclass
class EquivalenceReport:
    k_values: List[float]
    max_residual: float
    max_k_homogeneity_error: float
    sample_count: int
    parallel_pass: bool
    k_homogeneity_pass: bool

    @property
    def passed(self) -> bool:
        return self.sample_count > 0 and self.parallel_pass and self.k_homogeneity_pass

    def to_dict(self) -> dict:
        return {"passed": self.passed, "max_residual": self.max_residual,
                "max_k_homogeneity_error": self.max_k_homogeneity_error,
                "parallel_pass": self.parallel_pass, "k_homogeneity_pass": self.k_homogeneity_pass,
                "samples": self.sample_count}


def _parallel_coefficient(W1: VlasovField, W2: VlasovField, u: PhasePoint):
    phi1, phi2 = W1(u), W2(u)
    diff = phi2 - phi1
    k = float(diff @ u.v) / float(u.v @ u.v)
    residual = float(np.max(np.abs(diff - k * u.v)))
    # relative to the larger field
    scale = max(float(np.max(np.abs(phi1))), float(np.max(np.abs(phi2))), np.finfo(float).tiny)
    return k, residual / scale


def projectively_equivalent(W1: VlasovField, W2: VlasovField, samples: Sequence[PhasePoint],
                            tolerance: float = PARALLEL_TOLERANCE,
                            k_tolerance: float = K_HOMOGENEITY_TOLERANCE) -> EquivalenceReport:
    """Solve phi2 - phi1 = k v by least squares and test k for 1-homogeneity."""
    k_values, worst_residual, worst_k = [], 0.0, 0.0
    for u in samples:
        k, residual = _parallel_coefficient(W1, W2, u)
        k_values.append(k)
        worst_residual = max(worst_residual, residual)
        for lam in (0.5, 2.0):
            k_scaled, _ = _parallel_coefficient(W1, W2, u.scaled(lam))
            err = abs(k_scaled - lam * k)
            if err > 0.0:
                worst_k = max(worst_k, err / max(abs(lam * k), 1e-12))
    return EquivalenceReport(
        k_values=k_values,
        max_residual=worst_residual,
        max_k_homogeneity_error=worst_k,
        sample_count=len(samples),
        parallel_pass=worst_residual < tolerance,
        k_homogeneity_pass=worst_k < k_tolerance,
    )


def bivectors_equal(psi1: VlasovBivector, psi2: VlasovBivector, samples: Sequence[PhasePoint]) -> bool:
    return projectively_equivalent(psi1.representative, psi2.representative, samples).passed


def wedge(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.outer(X, Y) - np.outer(Y, X)


def wedge_pair_equal(X1: np.ndarray, X2: np.ndarray, Y1: np.ndarray, Y2: np.ndarray,
                     tolerance: float = WEDGE_TOLERANCE) -> bool:
    wx, wy = wedge(X1, X2), wedge(Y1, Y2)
    scale = max(1.0, float(np.max(np.abs(wx))))
    return bool(np.max(np.abs(wx - wy)) <= tolerance * scale)


@dataclass
class IndicatorReport:
    name: str
    homogeneity: Any
    min_abs_value: float
    sample_count: int

    @property
    def passed(self) -> bool:
        return self.homogeneity.passed and self.min_abs_value > 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "homogeneity": self.homogeneity.to_dict(),
                "min_abs_value": self.min_abs_value, "passed": self.passed}


def validate_indicator(F: KinematicIndicator, samples: Sequence[PhasePoint]) -> IndicatorReport:
    values = [abs(F(u)) for u in samples]
    return IndicatorReport(F.name, check_homogeneity(F.scalar, F.degree, samples),
                           min(values) if values else 0.0, len(samples))


FIELD_BUILDERS = {
    "geodesic": geodesic_field,
    "lorentz": lorentz_field,
}

INDICATOR_BUILDERS = {
    "hyperboloid": indicator_hyperboloid,
    "labtime": indicator_labtime,
    "coordinate": indicator_coordinate,
}
