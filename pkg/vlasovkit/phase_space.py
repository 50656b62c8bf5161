"""The conic bundle U: phase points, bundle scalars, the radial field, sampling."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from vlasovkit.differences import DEFAULT_FD_SCALE, central_gradient, scaled_step
from vlasovkit.errors import (
    ChartDomainError, NonFiniteDerivativeError, NonTimelikeError, NotTimeOrientableError,
    QuadratureDomainError, SlitBundleError,
)
from vlasovkit.geometry import ScalarField, SpacetimeModel, future_time_component, metric_at

logger = logging.getLogger(__name__)

TIMELIKE_EPSILON = 1e-10
HOMOGENEITY_TOLERANCE = 1e-9
HOMOGENEITY_SCALES = (0.5, 2.0)


class Bundle(str, Enum):
    TIMELIKE = "timelike"
    ALL = "all"
    NULL = "null"


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise ValueError(f"x and v must be equal-length vectors, got {x.shape} and {v.shape}")
        if not np.any(v != 0.0):
            raise SlitBundleError("velocity must be nonzero on the slit bundle", {"x": x})
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'v', v)

    @property
    def dim(self) -> int:
        return self.x.size

    def scaled(self, lam: float) -> "PhasePoint":
        return PhasePoint(self.x, lam * self.v)

    def with_velocity(self, v: np.ndarray) -> "PhasePoint":
        return PhasePoint(self.x, v)

    def with_position(self, x: np.ndarray) -> "PhasePoint":
        return PhasePoint(x, self.v)

    def state(self) -> np.ndarray:
        return np.concatenate([self.x, self.v])

    @classmethod
    def from_state(cls, state: np.ndarray) -> "PhasePoint":
        n = state.size // 2
        return cls(state[:n], state[n:])


def fiber_step(v: np.ndarray, scale: float = DEFAULT_FD_SCALE) -> float:
    return scaled_step(v, scale)


@dataclass(frozen=True)
class BundleScalar:
    """A scalar field G on U, optionally with a declared homogeneity degree.

    ``base_gradient`` and ``fiber_gradient`` are exact partials (in x at fixed
    v, and in v at fixed x); without them the partials come from central
    differences.
    """
    evaluate: Callable[[PhasePoint], float]
    declared_degree: Optional[int] = None
    name: str = "G"
    base_gradient: Optional[Callable[[PhasePoint], np.ndarray]] = None
    fiber_gradient: Optional[Callable[[PhasePoint], np.ndarray]] = None
    fd_scale: float = DEFAULT_FD_SCALE

    def __call__(self, u: PhasePoint) -> float:
        return float(self.evaluate(u))

    def grad_x(self, u: PhasePoint, inside: Optional[Callable[[np.ndarray], bool]] = None) -> np.ndarray:
        if self.base_gradient is not None:
            return np.asarray(self.base_gradient(u), dtype=float)
        return central_gradient(lambda y: self.evaluate(PhasePoint(y, u.v)), u.x,
                                scaled_step(u.x, self.fd_scale), inside=inside)

    def grad_v(self, u: PhasePoint) -> np.ndarray:
        if self.fiber_gradient is not None:
            return np.asarray(self.fiber_gradient(u), dtype=float)
        return central_gradient(lambda w: self.evaluate(PhasePoint(u.x, w)), u.v,
                                fiber_step(u.v, self.fd_scale))


def linear_combination(terms: Sequence[Tuple[float, BundleScalar]], name: str = "combination") -> BundleScalar:
    terms = list(terms)
    return BundleScalar(evaluate=lambda u: sum(c * g(u) for c, g in terms), name=name)


def scalar_lift(h: ScalarField, u: PhasePoint) -> float:
    """h-dot at u: v^mu d_mu h(x)."""
    return float(u.v @ h.grad(u.x))


def lift_scalar(h: ScalarField) -> BundleScalar:
    return BundleScalar(
        evaluate=lambda u: scalar_lift(h, u),
        declared_degree=1,
        name=f"{h.name}_dot",
        base_gradient=lambda u: h.hess(u.x) @ u.v,
        fiber_gradient=lambda u: h.grad(u.x),
    )


def pullback_scalar(h: ScalarField) -> BundleScalar:
    return BundleScalar(
        evaluate=lambda u: h.at(u.x),
        declared_degree=0,
        name=f"pi*{h.name}",
        base_gradient=lambda u: h.grad(u.x),
        fiber_gradient=lambda u: np.zeros(u.dim),
    )


def radial_derivative(G: Callable[[PhasePoint], object], u: PhasePoint,
                      scale: float = DEFAULT_FD_SCALE):
    """R<G>(u) by a central difference along the fiber ray through u.

    Works for scalar and array valued G.
    """
    eps = fiber_step(u.v, scale) / float(np.max(np.abs(u.v)))
    forward = np.asarray(G(u.scaled(1.0 + eps)), dtype=float)
    backward = np.asarray(G(u.scaled(1.0 - eps)), dtype=float)
    result = (forward - backward) / (2.0 * eps)
    if not np.all(np.isfinite(result)):
        raise NonFiniteDerivativeError("radial derivative is not finite", {"x": u.x, "v": u.v})
    return float(result) if result.ndim == 0 else result


def in_bundle(model: SpacetimeModel, u: PhasePoint, bundle: Bundle = Bundle.TIMELIKE,
              epsilon: float = TIMELIKE_EPSILON, null_tolerance: float = 1e-9) -> bool:
    if not model.bounds.contains(u.x):
        return False
    if bundle == Bundle.ALL:
        return True
    norm = float(u.v @ metric_at(model, u.x) @ u.v)
    if bundle == Bundle.TIMELIKE:
        return norm < -epsilon
    return abs(norm) <= null_tolerance * max(1.0, float(np.max(np.abs(u.v)))) ** 2


def causal_indicator(model: SpacetimeModel, u: PhasePoint, bundle: Bundle = Bundle.TIMELIKE,
                     epsilon: float = TIMELIKE_EPSILON) -> int:
    if bundle == Bundle.ALL:
        raise NotTimeOrientableError("the all-vectors bundle admits no causal indicator",
                                     {"model": model.name})
    norm = float(u.v @ metric_at(model, u.x) @ u.v)
    if bundle == Bundle.TIMELIKE and norm >= -epsilon:
        raise NonTimelikeError(f"velocity is not timelike (g(v,v) = {norm:.3g})",
                               {"x": u.x, "v": u.v})
    return 1 if float(u.v @ model.orientation.grad(u.x)) > 0 else -1


@dataclass
class HomogeneityReport:
    name: str
    degree: int
    sample_count: int
    max_rel_error: float
    worst_scale: Optional[float]
    tolerance: float = HOMOGENEITY_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.sample_count > 0 and self.max_rel_error < self.tolerance

    def to_dict(self) -> dict:
        return {"name": self.name, "degree": self.degree, "samples": self.sample_count,
                "max_rel_error": self.max_rel_error, "worst_scale": self.worst_scale,
                "tolerance": self.tolerance, "passed": self.passed}


def homogeneity_error(func: Callable[[PhasePoint], object], k: int, samples: Sequence[PhasePoint],
                      scales: Sequence[float] = HOMOGENEITY_SCALES) -> Tuple[float, Optional[float]]:
    """Largest |G(lam u) - lam^k G(u)| / |lam^k G(u)| over samples and scales."""
    worst, worst_scale = 0.0, None
    for u in samples:
        base = np.asarray(func(u), dtype=float)
        for lam in scales:
            expected = lam ** k * base
            got = np.asarray(func(u.scaled(lam)), dtype=float)
            diff = float(np.linalg.norm(got - expected))
            denom = float(np.linalg.norm(expected))
            if diff == 0.0:
                continue
            rel = diff / max(denom, np.finfo(float).tiny)
            if rel > worst:
                worst, worst_scale = rel, lam
    return worst, worst_scale


def check_homogeneity(G: Callable[[PhasePoint], object], k: int, samples: Sequence[PhasePoint],
                      include_reflection: bool = False,
                      tolerance: float = HOMOGENEITY_TOLERANCE) -> HomogeneityReport:
    scales = HOMOGENEITY_SCALES + ((-1.0,) if include_reflection else ())
    worst, worst_scale = homogeneity_error(G, k, samples, scales)
    report = HomogeneityReport(name=getattr(G, 'name', getattr(G, 'label', 'G')), degree=k,
                               sample_count=len(samples), max_rel_error=worst,
                               worst_scale=worst_scale, tolerance=tolerance)
    if not report.passed:
        logger.debug(f"Homogeneity degree {k} failed for {report.name}: {worst:.3g} at scale {worst_scale}")
    return report


@dataclass(frozen=True)
class PhaseBox:
    x_lower: np.ndarray
    x_upper: np.ndarray
    v_lower: np.ndarray
    v_upper: np.ndarray

    def __post_init__(self):
        for name in ('x_lower', 'x_upper', 'v_lower', 'v_upper'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def dim(self) -> int:
        return self.x_lower.size


@dataclass
class SampleSet:
    points: List[PhasePoint]
    seed: int
    bundle: Bundle
    requested: int
    drawn: int = 0
    box: Optional[PhaseBox] = field(default=None, repr=False)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]


def sample_bundle(model: SpacetimeModel, bundle: Bundle, box: PhaseBox, count: int,
                  seed: int, max_draws: int = 64) -> SampleSet:
    """Scrambled-Halton points in ``box`` intersected with the bundle.

    For the null bundle the time component of each draw is replaced by its
    future null root so draws land on the cone exactly.
    """
    n = box.dim
    engine = qmc.Halton(d=2 * n, scramble=True, seed=seed)
    lower = np.concatenate([box.x_lower, box.v_lower])
    upper = np.concatenate([box.x_upper, box.v_upper])
    points: List[PhasePoint] = []
    drawn = 0
    batch = max(count, 16)
    while len(points) < count and drawn < max_draws * count:
        raw = qmc.scale(engine.random(batch), lower, upper)
        drawn += batch
        for row in raw:
            x, v = row[:n], row[n:]
            if not model.bounds.contains(x) or not np.any(v != 0.0):
                continue
            if bundle == Bundle.NULL:
                v = v.copy()
                try:
                    v[0] = future_time_component(metric_at(model, x), v[1:][None, :], 0.0)[0]
                except QuadratureDomainError:
                    continue
            u = PhasePoint(x, v)
            if in_bundle(model, u, bundle):
                points.append(u)
                if len(points) == count:
                    break
    if len(points) < count:
        raise ChartDomainError(f"only {len(points)} of {count} samples fell inside the {bundle.value} bundle",
                               {"model": model.name, "seed": seed})
    return SampleSet(points=points, seed=seed, bundle=bundle, requested=count, drawn=drawn, box=box)
