"""Particle densities: weighted ensembles on U+, analytic densities on a domain.

The measure of an analytic density f on the level set {F = a} is

    dmu = f sqrt(-det g) k a / |dF/dv^0| d^{n-1}v

in the spatial velocity components. On the unit hyperboloid this is the
usual f sqrt(-det g) / |v_0| d^3v.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from vlasovkit.errors import (
    DegenerateDensityError, KineticError, QuadratureDomainError, SignError,
)
from vlasovkit.geometry import SpacetimeModel, metric_at
from vlasovkit.phase_space import PhasePoint, causal_indicator, in_bundle
from vlasovkit.quadrature import box_rule
from vlasovkit.trajectories import integrate_batch
from vlasovkit.vlasov import KinematicIndicator, VlasovField, compatibility_defect

logger = logging.getLogger(__name__)

ON_SHELL_TOLERANCE = 1e-9
ADVECTED_SHELL_TOLERANCE = 1e-7
BOUND_NODES = 24
BOUND_MARGIN = 1.1
MAX_BOUND_RESTARTS = 8

DensityMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DomainTag:
    indicator: Optional[KinematicIndicator] = None

    @property
    def on_domain(self) -> bool:
        return self.indicator is not None

    @property
    def label(self) -> str:
        if self.indicator is None:
            return "on_U"
        return f"on_E({self.indicator.name},{self.indicator.level:g})"


ON_U = DomainTag()


@dataclass
class ParticleEnsemble:
    model: SpacetimeModel
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    tag: DomainTag = ON_U
    seed: Optional[int] = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if not (len(self.positions) == len(self.velocities) == len(self.weights)):
            raise ValueError("positions, velocities and weights must have equal length")
        if np.any(self.weights < 0):
            raise ValueError("particle weights must be nonnegative")

    def __len__(self):
        return len(self.weights)

    @property
    def samples(self) -> List[PhasePoint]:
        return [PhasePoint(x, v) for x, v in zip(self.positions, self.velocities)]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


@dataclass
class EnsembleCheck:
    sample_count: int
    outside_bundle: int = 0
    past_pointing: int = 0
    max_shell_error: float = 0.0
    tolerance: float = ON_SHELL_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.outside_bundle == 0 and self.past_pointing == 0 and self.max_shell_error < self.tolerance

    def to_dict(self) -> dict:
        return {"samples": self.sample_count, "outside_bundle": self.outside_bundle,
                "past_pointing": self.past_pointing, "max_shell_error": self.max_shell_error,
                "passed": self.passed}


def check_ensemble(ens: ParticleEnsemble, tolerance: float = ON_SHELL_TOLERANCE) -> EnsembleCheck:
    report = EnsembleCheck(len(ens), tolerance=tolerance)
    F = ens.tag.indicator
    for u in ens.samples:
        if not in_bundle(ens.model, u):
            report.outside_bundle += 1
            continue
        if causal_indicator(ens.model, u) != 1:
            report.past_pointing += 1
        if F is not None:
            report.max_shell_error = max(report.max_shell_error, abs(F(u) - F.level))
    return report


def project_to_domain(ens: ParticleEnsemble, F: KinematicIndicator, level: Optional[float] = None) -> ParticleEnsemble:
    """Slide every sample along its ray onto {F = a}; weights are unchanged."""
    if level is not None:
        F = F.at_level(level)
    scales = np.array([F.level_scale(u) for u in ens.samples])
    if np.any(scales <= 0):
        bad = int(np.argmin(scales))
        raise SignError(f"{F.name} has the wrong sign on sample {bad} for an odd-degree projection",
                        {"index": bad})
    return ParticleEnsemble(ens.model, ens.positions.copy(), ens.velocities / scales[:, None],
                            ens.weights, DomainTag(F), ens.seed)


@dataclass
class DroppedSample:
    index: int
    weight: float
    reason: str


@dataclass
class AdvectionResult:
    ensemble: ParticleEnsemble
    dropped: List[DroppedSample] = field(default_factory=list)
    max_drift: Optional[float] = None
    tag_retained: bool = False

    @property
    def dropped_weight(self) -> float:
        return float(sum(d.weight for d in self.dropped))

    def to_dict(self) -> dict:
        return {"retained": len(self.ensemble), "dropped": len(self.dropped),
                "dropped_weight": self.dropped_weight, "total_weight": self.ensemble.total_weight,
                "max_drift": self.max_drift, "tag": self.ensemble.tag.label,
                "tag_retained": self.tag_retained}


def advect(ens: ParticleEnsemble, W: VlasovField, dt: float, steps: int, workers: int = 4,
           drift_tolerance: float = ADVECTED_SHELL_TOLERANCE) -> AdvectionResult:
    """Move every sample along its characteristic for parameter length dt."""
    samples = ens.samples
    results = integrate_batch(W, samples, (0.0, dt), steps, workers=workers, return_exceptions=True)
    keep, dropped = [], []
    for i, prol in enumerate(results):
        if isinstance(prol, KineticError):
            dropped.append(DroppedSample(i, float(ens.weights[i]), prol.error_code))
        elif prol.truncated:
            dropped.append(DroppedSample(i, float(ens.weights[i]), prol.exit_reason or "truncated"))
        else:
            keep.append(i)
    for d in dropped:
        logger.warning(f"Dropped sample {d.index} (weight {d.weight:.6g}): {d.reason}")

    positions = np.array([results[i].positions[-1] for i in keep]).reshape(-1, ens.positions.shape[1])
    velocities = np.array([results[i].velocities[-1] for i in keep]).reshape(-1, ens.positions.shape[1])
    moved = ParticleEnsemble(ens.model, positions, velocities, ens.weights[keep], ON_U, ens.seed)

    F = ens.tag.indicator
    if F is None:
        return AdvectionResult(moved, dropped)

    compatible = compatibility_defect(W, F, samples).passed
    drift = max((abs(F(u) - F.level) for u in moved.samples), default=0.0)
    retained = compatible and drift <= drift_tolerance
    if retained:
        moved.tag = ens.tag
    else:
        logger.warning(f"Ensemble left {ens.tag.label} under {W.label}: drift {drift:.3g}, retagged on_U")
    return AdvectionResult(moved, dropped, drift, retained)


@dataclass(frozen=True)
class VelocityRegion:
    """Box in the spatial velocity components v^1..v^{n-1}."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'lower', np.asarray(self.lower, dtype=float))
        object.__setattr__(self, 'upper', np.asarray(self.upper, dtype=float))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, spatial: np.ndarray) -> np.ndarray:
        spatial = np.atleast_2d(spatial)
        return np.all((spatial >= self.lower) & (spatial <= self.upper), axis=1)

    def outline(self, per_axis: int = 9) -> np.ndarray:
        """Evenly spaced points on every face, corners and face centres included."""
        d = self.lower.size
        if d == 1:
            return np.array([[self.lower[0]], [self.upper[0]]])
        points = []
        for axis in range(d):
            axes = [np.linspace(lo, hi, per_axis) for lo, hi in
                    zip(np.delete(self.lower, axis), np.delete(self.upper, axis))]
            face = np.column_stack([g.ravel() for g in np.meshgrid(*axes, indexing='ij')])
            for value in (self.lower[axis], self.upper[axis]):
                points.append(np.insert(face, axis, value, axis=1))
        return np.vstack(points)

    @classmethod
    def centered(cls, center: Sequence[float], half_width: float) -> "VelocityRegion":
        center = np.asarray(center, dtype=float)
        return cls(center - half_width, center + half_width)


@dataclass(frozen=True)
class AnalyticDensity:
    """f on the level set of ``domain``; f(x, V) is vectorised over V of shape (N, n)."""
    f: DensityMap
    domain: KinematicIndicator
    region: VelocityRegion
    model: SpacetimeModel
    name: str = "f"
    scale: float = 1.0

    def values(self, x: np.ndarray, V: np.ndarray) -> np.ndarray:
        out = self.scale * np.asarray(self.f(np.asarray(x, dtype=float), np.atleast_2d(V)), dtype=float)
        if np.any(out < 0):
            raise DegenerateDensityError(f"density '{self.name}' is negative on its region", {"x": x})
        return out

    def lifted(self, u: PhasePoint) -> float:
        """The 0-homogeneous pullback of f to U+."""
        on_shell = u.scaled(1.0 / self.domain.level_scale(u))
        return float(self.values(u.x, on_shell.v[None, :])[0])

    def home_scales(self, x: np.ndarray, V: np.ndarray) -> np.ndarray:
        """s = (F/a)^(1/k) per row, so V/s lies on the home domain; nan where F/a <= 0."""
        ratio = self.domain.values(x, V) / self.domain.level
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(ratio > 0, np.abs(ratio) ** (1.0 / self.domain.degree), np.nan)

    def lifted_values(self, x: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Batch form of ``lifted``; zero where the ray misses the velocity region."""
        V = np.atleast_2d(V)
        s = self.home_scales(x, V)
        ok = np.isfinite(s)
        home = V / np.where(ok, s, 1.0)[:, None]
        inside = ok & self.region.contains(home[:, 1:])
        out = np.zeros(len(V))
        if np.any(inside):
            out[inside] = self.values(x, home[inside])
        return out

    def carried_to(self, domain: KinematicIndicator, x: np.ndarray, degree: float = 0.0) -> "AnalyticDensity":
        """This density moved along rays onto the level set of ``domain`` at x.

        The carried f is lifted_f * s^(degree - n - 1): the s^-n turns the
        slice volume form into the ray-invariant one, and the remaining 1/s
        evaluates the velocity factor of the current at the home point. Its
        current on the slice equals the home current when degree is 0.
        The region is the bounding box of the ray image of the home region.
        """
        x = np.asarray(x, dtype=float)
        n = self.model.dim
        outline = self.velocities_on_domain(x, self.region.outline())
        values = domain.values(x, outline)
        if np.any(values <= 0):
            raise SignError(f"{domain.name} must be positive on the rays of '{self.name}'", {"x": x})
        image = (domain.level / values)[:, None] ** (1.0 / domain.degree) * outline[:, 1:]
        region = VelocityRegion(image.min(axis=0), image.max(axis=0))
        power = degree - n - 1

        def f(y, V):
            s = self.home_scales(y, V)
            return self.lifted_values(y, V) * np.where(np.isfinite(s), s, 1.0) ** power

        return AnalyticDensity(f, domain, region, self.model, f"{self.name}@{domain.name}")

    def with_scale(self, scale: float) -> "AnalyticDensity":
        return replace(self, scale=scale)

    def velocities_on_domain(self, x: np.ndarray, spatial: np.ndarray) -> np.ndarray:
        spatial = np.atleast_2d(spatial)
        v0 = self.domain.solve_time(x, spatial, self.domain.level)
        return np.column_stack([v0, spatial])

    def measure_density(self, x: np.ndarray, V: np.ndarray) -> np.ndarray:
        """f sqrt(-det g) k a / |dF/dv^0| at the given on-domain velocities."""
        g = metric_at(self.model, x)
        det = float(np.linalg.det(g))
        if det >= 0:
            raise QuadratureDomainError("metric determinant must be negative", {"x": x, "det": det})
        dF = np.abs(self.domain.batch_dv0(x, V))
        if np.any(dF == 0):
            raise QuadratureDomainError(f"{self.domain.name} is stationary in v^0 on the region", {"x": x})
        k, a = self.domain.degree, self.domain.level
        return self.values(x, V) * math.sqrt(-det) * abs(k) * a / dF


def gaussian_density(model: SpacetimeModel, domain: KinematicIndicator, center: Sequence[float],
                     sigma: float, half_width: Optional[float] = None, name: str = "gaussian") -> AnalyticDensity:
    """Gaussian in the spatial velocity components, truncated to +-8 sigma by default."""
    center = np.asarray(center, dtype=float)
    half_width = 8.0 * sigma if half_width is None else half_width

    def f(x, V):
        d = V[:, 1:] - center
        return np.exp(-0.5 * np.sum(d * d, axis=1) / sigma ** 2)

    return AnalyticDensity(f, domain, VelocityRegion.centered(center, half_width), model, name)


def uniform_density(model: SpacetimeModel, domain: KinematicIndicator, region: VelocityRegion,
                    name: str = "uniform") -> AnalyticDensity:
    return AnalyticDensity(lambda x, V: np.ones(len(V)), domain, region, model, name)


def normalize_density(density: AnalyticDensity, x: np.ndarray, nodes: int = 32) -> AnalyticDensity:
    """Rescale f so that its measure integrates to one at x."""
    spatial, weights = box_rule(density.region.lower, density.region.upper, nodes)
    V = density.velocities_on_domain(np.asarray(x, dtype=float), spatial)
    total = float(np.sum(weights * density.measure_density(np.asarray(x, dtype=float), V)))
    if total <= 0:
        raise DegenerateDensityError(f"density '{density.name}' integrates to zero", {"x": x})
    return density.with_scale(density.scale / total)


@dataclass(frozen=True)
class SpacetimeBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'lower', np.asarray(self.lower, dtype=float))
        object.__setattr__(self, 'upper', np.asarray(self.upper, dtype=float))

    @property
    def spatial_volume(self) -> float:
        return float(np.prod(self.upper[1:] - self.lower[1:]))


def _flux_integrand(density: AnalyticDensity, x: np.ndarray, spatial: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    V = density.velocities_on_domain(x, spatial)
    return V, density.measure_density(x, V) * V[:, 0]


def _flux_bound(density: AnalyticDensity, box: SpacetimeBox, nodes: int = BOUND_NODES) -> float:
    """max of v^0 dmu over the box corners and centre, on a velocity grid plus the region centre."""
    corners = np.array(list(product(*zip(box.lower, box.upper))), dtype=float)
    positions = np.unique(np.vstack([corners, 0.5 * (box.lower + box.upper)]), axis=0)
    spatial, _ = box_rule(density.region.lower, density.region.upper, nodes)
    spatial = np.vstack([spatial, density.region.center, density.region.outline(per_axis=3)])
    peak = 0.0
    for x in positions:
        _, flux = _flux_integrand(density, x, spatial)
        peak = max(peak, float(np.max(flux)))
    return BOUND_MARGIN * peak


def _rejection_pass(density: AnalyticDensity, count: int, seed: int, box: SpacetimeBox, bound: float,
                    block: int, max_blocks: int) -> Tuple[List[np.ndarray], List[np.ndarray], int, float]:
    """One sampling pass; stops early and reports the flux when it exceeds ``bound``."""
    n = density.model.dim
    positions, velocities = [], []
    drawn = 0
    for child in np.random.SeedSequence(seed).spawn(max_blocks):
        rng = np.random.Generator(np.random.Philox(child))
        xs = rng.uniform(box.lower, box.upper, size=(block, n))
        spatial = rng.uniform(density.region.lower, density.region.upper, size=(block, n - 1))
        heights = rng.uniform(0.0, bound, size=block)
        for x, sv, h in zip(xs, spatial, heights):
            drawn += 1
            V, flux = _flux_integrand(density, x, sv[None, :])
            if flux[0] > bound:
                return positions, velocities, drawn, float(flux[0])
            if h < flux[0]:
                positions.append(x)
                velocities.append(V[0])
                if len(positions) == count:
                    return positions, velocities, drawn, 0.0
    return positions, velocities, drawn, 0.0


def seed_from_analytic(density: AnalyticDensity, count: int, seed: int, box: SpacetimeBox,
                       bound: Optional[float] = None, block: int = 1024,
                       max_blocks: int = 10000) -> ParticleEnsemble:
    """Rejection-sample the coordinate-time flux v^0 dmu over box x region.

    Each block of candidates draws from its own Philox stream spawned from
    ``seed``, so the result depends only on the seed. Weights are
    (Monte-Carlo total)/count, i.e. particle counts on an x^0 slice.

    ``bound`` defaults to a scan of the flux over the box and the region. A
    candidate above the bound restarts the pass with the bound raised past
    it, so accepted samples always come from the unclipped flux.
    """
    if bound is None:
        bound = _flux_bound(density, box)
    if not bound > 0:
        raise DegenerateDensityError(f"density '{density.name}' vanishes on its region", {"seed": seed})

    for _ in range(MAX_BOUND_RESTARTS + 1):
        positions, velocities, drawn, overrun = _rejection_pass(density, count, seed, box, bound,
                                                                block, max_blocks)
        if not overrun:
            break
        logger.info(f"Seeding bound {bound:.3g} exceeded by {overrun:.3g}; restarting with a larger bound")
        bound = max(BOUND_MARGIN * overrun, 2.0 * bound)
    else:
        raise DegenerateDensityError(f"seeding bound for '{density.name}' kept growing",
                                     {"seed": seed, "bound": bound, "restarts": MAX_BOUND_RESTARTS})
    if not positions:
        raise DegenerateDensityError(f"no samples accepted for density '{density.name}'", {"seed": seed})
    if len(positions) < count:
        raise DegenerateDensityError(f"only {len(positions)} of {count} samples accepted", {"seed": seed})

    accepted_rate = count / drawn
    total = accepted_rate * bound * density.region.volume * box.spatial_volume
    weights = np.full(count, total / count)
    return ParticleEnsemble(density.model, np.array(positions), np.array(velocities), weights,
                            DomainTag(density.domain), seed)
