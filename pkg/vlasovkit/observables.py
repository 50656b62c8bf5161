"""Fiber-integrated moments: currents, stress-energy, support forms, grids.

E-side moments at a point x come from one quadrature of the density on its
home domain. U-side moments integrate a support form over r and, at each
node r, run a fresh quadrature on the slice F^(1/k) = e^r with the density
carried there along rays (see ``AnalyticDensity.carried_to``).
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from vlasovkit.density import AnalyticDensity, ParticleEnsemble
from vlasovkit.errors import EmptyEnsembleError, QuadratureDomainError
from vlasovkit.phase_space import PhasePoint
from vlasovkit.quadrature import box_rule, composite_rule
from vlasovkit.trajectories import Prolongation, integrate
from vlasovkit.vlasov import KinematicIndicator, VlasovField, indicator_hyperboloid

logger = logging.getLogger(__name__)

DEFAULT_NODES = 32
TRUNCATION_THRESHOLD = 1e-12
SUPPORT_NODES = 16
CARRY_STEPS = 64
MAX_SPAN_DOUBLINGS = 6


@dataclass
class FiberSamples:
    x: np.ndarray
    velocities: np.ndarray
    measure: np.ndarray
    nodes: int
    truncation_ratio: float

    @property
    def truncated(self) -> bool:
        return self.truncation_ratio > TRUNCATION_THRESHOLD


def _boundary_ratio(density: AnalyticDensity, x: np.ndarray, peak: float, nodes: int) -> float:
    """max f on the faces of the velocity region, relative to the interior peak."""
    lower, upper = density.region.lower, density.region.upper
    d = lower.size
    face_nodes = max(2, min(nodes, 8))
    worst = 0.0
    for axis in range(d):
        other_lo = np.delete(lower, axis)
        other_hi = np.delete(upper, axis)
        if d > 1:
            pts, _ = box_rule(other_lo, other_hi, face_nodes)
        else:
            pts = np.zeros((1, 0))
        for value in (lower[axis], upper[axis]):
            spatial = np.insert(pts, axis, value, axis=1)
            try:
                V = density.velocities_on_domain(x, spatial)
            except QuadratureDomainError:
                continue
            worst = max(worst, float(np.max(density.values(x, V))))
    return worst / peak if peak > 0 else 0.0


def fiber_samples(density: AnalyticDensity, x: np.ndarray, nodes: int = DEFAULT_NODES) -> FiberSamples:
    """Tensor Gauss-Legendre nodes of the density's home domain at x."""
    x = np.asarray(x, dtype=float)
    spatial, weights = box_rule(density.region.lower, density.region.upper, nodes)
    V = density.velocities_on_domain(x, spatial)
    measure = weights * density.measure_density(x, V)
    peak = float(np.max(density.values(x, V)))
    ratio = _boundary_ratio(density, x, peak, nodes)
    if ratio > TRUNCATION_THRESHOLD:
        logger.warning(f"Density '{density.name}' is truncated by its velocity region "
                       f"(boundary/peak = {ratio:.3g})")
    return FiberSamples(x, V, measure, nodes, ratio)


def current_from_samples(samples: FiberSamples) -> np.ndarray:
    return samples.velocities.T @ samples.measure


def stress_energy_from_samples(samples: FiberSamples) -> np.ndarray:
    """sum v v dmu, symmetrised."""
    T = np.einsum('n,nm,nk->mk', samples.measure, samples.velocities, samples.velocities)
    return 0.5 * (T + T.T)


def current_from_E(density: AnalyticDensity, x: np.ndarray, nodes: int = DEFAULT_NODES,
                   samples: Optional[FiberSamples] = None) -> np.ndarray:
    samples = samples or fiber_samples(density, x, nodes)
    return current_from_samples(samples)


def stress_energy_at(density: AnalyticDensity, x: np.ndarray, nodes: int = DEFAULT_NODES,
                     samples: Optional[FiberSamples] = None) -> np.ndarray:
    samples = samples or fiber_samples(density, x, nodes)
    return stress_energy_from_samples(samples)


@dataclass(frozen=True)
class SupportForm:
    """chi = profile(r) dr on U with r = log of a 1-homogeneous indicator.

    Build through ``support_form`` to get the unit normalisation; the plain
    constructor keeps the profile as given.
    """
    profile: Callable[[np.ndarray], np.ndarray]
    r_min: float
    r_max: float
    breakpoints: Tuple[float, ...] = ()
    name: str = "chi"

    def rule(self, nodes: int = SUPPORT_NODES) -> Tuple[np.ndarray, np.ndarray]:
        cuts = [self.r_min] + sorted(b for b in self.breakpoints if self.r_min < b < self.r_max) + [self.r_max]
        return composite_rule(cuts, nodes)

    def integral(self, nodes: int = SUPPORT_NODES) -> float:
        r, w = self.rule(nodes)
        return float(np.sum(w * self.profile(r)))


def support_form(profile: Callable[[np.ndarray], np.ndarray], r_min: float, r_max: float,
                 breakpoints: Sequence[float] = (), name: str = "chi") -> SupportForm:
    if not r_max > r_min:
        raise ValueError(f"support [{r_min}, {r_max}] is empty")

    def clipped(r):
        r = np.asarray(r, dtype=float)
        return np.where((r >= r_min) & (r <= r_max), profile(r), 0.0)

    raw = SupportForm(clipped, r_min, r_max, tuple(breakpoints), name)
    total = raw.integral()
    if not total > 0:
        raise ValueError(f"support profile '{name}' has no mass")
    return SupportForm(lambda r: clipped(r) / total, r_min, r_max, tuple(breakpoints), name)


def bump_support() -> SupportForm:
    return support_form(lambda r: (1.0 - (2.0 * r) ** 2) ** 3, -0.5, 0.5, name="bump")


def box_support() -> SupportForm:
    return support_form(lambda r: np.ones_like(r), -1.0, 0.0, name="box")


def triangle_support() -> SupportForm:
    return support_form(lambda r: 1.0 - np.abs(2.0 * r - 1.0), 0.0, 1.0, breakpoints=(0.5,), name="triangle")


SUPPORT_CATALOG: Dict[str, Callable[[], SupportForm]] = {
    "bump": bump_support,
    "box": box_support,
    "triangle": triangle_support,
}


def slice_samples(density: AnalyticDensity, radial: KinematicIndicator, x: np.ndarray, r: float,
                  nodes: int = DEFAULT_NODES, density_degree: float = 0.0) -> FiberSamples:
    """Gauss-Legendre nodes on the slice F^(1/k) = e^r carrying the lifted density.

    ``density_degree`` makes the density on U+ homogeneous of that degree
    along rays instead of the plain lift; only degree 0 gives a closed form.
    """
    x = np.asarray(x, dtype=float)
    level = math.exp(radial.degree * r)
    carried = density.carried_to(radial.at_level(level), x, density_degree)
    spatial, weights = box_rule(carried.region.lower, carried.region.upper, nodes)
    V = carried.velocities_on_domain(x, spatial)
    return FiberSamples(x, V, weights * carried.measure_density(x, V), nodes, 0.0)


def _slice_moments(density: AnalyticDensity, chi: SupportForm, x: np.ndarray, radial: KinematicIndicator,
                   nodes: int, support_nodes: int, density_degree: float) -> Tuple[np.ndarray, np.ndarray]:
    """chi-weighted sums of the per-slice current and stress-energy."""
    n = density.model.dim
    J = np.zeros(n)
    T = np.zeros((n, n))
    r, w = chi.rule(support_nodes)
    for r_i, weight in zip(r, w * chi.profile(r)):
        if weight == 0:
            continue
        samples = slice_samples(density, radial, x, float(r_i), nodes, density_degree)
        J += weight * current_from_samples(samples)
        T += weight * stress_energy_from_samples(samples)
    return J, T


def current_from_U(density: AnalyticDensity, chi: SupportForm, x: np.ndarray,
                   radial: Optional[KinematicIndicator] = None, nodes: int = DEFAULT_NODES,
                   support_nodes: int = SUPPORT_NODES, density_degree: float = 0.0) -> np.ndarray:
    """J = pi_*(chi ^ theta): chi-weighted currents of the slices F^(1/k) = e^r."""
    radial = radial or indicator_hyperboloid(density.model)
    J, _ = _slice_moments(density, chi, x, radial, nodes, support_nodes, density_degree)
    return J


def stress_energy_from_U(density: AnalyticDensity, chi: SupportForm, x: np.ndarray,
                         radial: Optional[KinematicIndicator] = None, nodes: int = DEFAULT_NODES,
                         support_nodes: int = SUPPORT_NODES, density_degree: float = 0.0) -> np.ndarray:
    """The chi-weighted U stress-energy; depends on chi and on the radial indicator."""
    radial = radial or indicator_hyperboloid(density.model)
    _, T = _slice_moments(density, chi, x, radial, nodes, support_nodes, density_degree)
    return T


@dataclass
class DependenceEntry:
    domain: str
    chi: str
    current: np.ndarray
    stress_energy: np.ndarray


@dataclass
class DependenceReport:
    entries: List[DependenceEntry]
    stress_energy_differences: Dict[str, float] = field(default_factory=dict)
    current_differences: Dict[str, float] = field(default_factory=dict)

    @property
    def max_stress_energy_difference(self) -> float:
        return max(self.stress_energy_differences.values(), default=0.0)

    @property
    def max_current_difference(self) -> float:
        return max(self.current_differences.values(), default=0.0)

    def to_dict(self) -> dict:
        return {
            "choices": [f"{e.domain}/{e.chi}" for e in self.entries],
            "max_stress_energy_difference": self.max_stress_energy_difference,
            "max_current_difference": self.max_current_difference,
            "stress_energy_differences": self.stress_energy_differences,
            "current_differences": self.current_differences,
        }


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b))) / scale


def stress_energy_dependence_report(density: AnalyticDensity, x: np.ndarray,
                                    domains: Sequence[KinematicIndicator], chis: Sequence[SupportForm],
                                    nodes: int = DEFAULT_NODES) -> DependenceReport:
    """Relative pairwise differences of T and J over every (domain, chi) choice."""
    entries = []
    for F in domains:
        for chi in chis:
            J, T = _slice_moments(density, chi, x, F, nodes, SUPPORT_NODES, 0.0)
            entries.append(DependenceEntry(F.name, chi.name, J, T))
    report = DependenceReport(entries)
    for (i, a), (j, b) in combinations(enumerate(entries), 2):
        key = f"{a.domain}/{a.chi} vs {b.domain}/{b.chi}#{i}-{j}"
        report.stress_energy_differences[key] = _relative(a.stress_energy, b.stress_energy)
        report.current_differences[key] = _relative(a.current, b.current)
    return report


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred grid over a spacetime box; axis 0 holds the time slices."""
    lower: np.ndarray
    upper: np.ndarray
    shape: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'lower', np.asarray(self.lower, dtype=float))
        object.__setattr__(self, 'upper', np.asarray(self.upper, dtype=float))
        object.__setattr__(self, 'shape', tuple(int(s) for s in self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.shape)

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.lower[axis] + (np.arange(self.shape[axis]) + 0.5) * self.spacing[axis]

    def centers(self) -> np.ndarray:
        """All cell centres, shape (*shape, n)."""
        grids = np.meshgrid(*[self.axis_centers(a) for a in range(len(self.shape))], indexing='ij')
        return np.stack(grids, axis=-1)


@dataclass
class MomentGrid:
    spec: GridSpec
    current: np.ndarray                   # (*shape, n)
    stress_energy: Optional[np.ndarray] = None  # (*shape, n, n)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.stress_energy is not None:
            self.stress_energy = 0.5 * (self.stress_energy + np.swapaxes(self.stress_energy, -1, -2))

    def rows(self) -> Tuple[List[str], List[List[float]]]:
        """Long-format table: cell coordinates, J components, T upper triangle."""
        n = len(self.spec.shape)
        header = [f"x{a}" for a in range(n)] + [f"J{m}" for m in range(n)]
        pairs = [(m, k) for m in range(n) for k in range(m, n)]
        if self.stress_energy is not None:
            header += [f"T{m}{k}" for m, k in pairs]
        centers = self.spec.centers().reshape(-1, n)
        J = self.current.reshape(-1, n)
        T = self.stress_energy.reshape(-1, n, n) if self.stress_energy is not None else None
        rows = []
        for c in range(len(centers)):
            row = list(centers[c]) + list(J[c])
            if T is not None:
                row += [T[c, m, k] for m, k in pairs]
            rows.append(row)
        return header, rows


def _periodic_offsets(points: np.ndarray, centers: np.ndarray, length: float) -> np.ndarray:
    d = points[:, None] - centers[None, :]
    return d - length * np.round(d / length)


def _reach(W: VlasovField, u: PhasePoint, target: float, steps: int) -> Prolongation:
    """A prolongation from u whose x^0 gets to ``target``, unless it leaves the chart first."""
    gap = target - u.x[0]
    span = math.copysign(1.25 * abs(gap) / abs(u.v[0]), gap)
    for _ in range(MAX_SPAN_DOUBLINGS):
        prol = integrate(W, u, (0.0, span), steps)
        if prol.truncated or (prol.positions[-1, 0] - target) * gap >= 0:
            return prol
        span *= 2.0
    return prol


def _carried_states(W: VlasovField, ens: ParticleEnsemble, times: np.ndarray,
                    steps: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions and velocities at each x^0 in ``times`` along W, shape (T, P, n), and the reached mask."""
    n = ens.positions.shape[1]
    positions = np.zeros((len(times), len(ens), n))
    velocities = np.zeros_like(positions)
    reached = np.zeros((len(times), len(ens)), dtype=bool)
    for p, u in enumerate(ens.samples):
        pieces = [_reach(W, u, target, steps) for target in (times.min(), times.max()) if target != u.x[0]]
        nodes = [(u.x[None, :], u.v[None, :], W(u)[None, :])]
        for prol in pieces:
            nodes.append((prol.positions[1:], prol.velocities[1:], prol.accelerations[1:]))
        X, V, A = (np.vstack(parts) for parts in zip(*nodes))
        order = np.argsort(X[:, 0])
        X, V, A = X[order], V[order], A[order]
        if len(X) == 1:
            hit = times == X[0, 0]
            positions[hit, p], velocities[hit, p], reached[hit, p] = X[0], V[0], True
            continue
        hit = (times >= X[0, 0]) & (times <= X[-1, 0])
        rate = V[:, :1]
        positions[hit, p] = CubicHermiteSpline(X[:, 0], X, V / rate, axis=0)(times[hit])
        velocities[hit, p] = CubicHermiteSpline(X[:, 0], V, A / rate, axis=0)(times[hit])
        reached[hit, p] = True
    missed = int(np.sum(~reached))
    if missed:
        logger.warning(f"{missed} particle/slice pairs not reached along {W.label}; they deposit nothing")
    return positions, velocities, reached


def current_grid_from_ensemble(ens: ParticleEnsemble, grid: GridSpec, kernel_width: float,
                               W: Optional[VlasovField] = None, steps: int = CARRY_STEPS) -> MomentGrid:
    """Deposit w v^mu / v^0 with a periodic tent kernel at each time slice.

    Without ``W`` particles are carried to each slice along straight
    lines x^a + (t - x^0) v^a / v^0, which is only right for free streaming
    in an inertial chart. With ``W`` they follow its prolongations,
    interpolated in x^0. The kernel is renormalised on the grid so every
    particle deposits its full weight.
    """
    if len(ens) == 0:
        raise EmptyEnsembleError("cannot deposit an empty ensemble")
    n = len(grid.shape)
    times = grid.axis_centers(0)
    spatial_axes = range(1, n)
    cell_volume = float(np.prod(grid.spacing[1:]))
    if W is not None:
        carried_x, carried_v, reached = _carried_states(W, ens, times, steps)
    else:
        straight = ens.velocities / ens.velocities[:, :1]
    current = np.zeros(grid.shape + (n,))
    for ti, t in enumerate(times):
        if W is None:
            carried = ens.positions + (t - ens.positions[:, :1]) * straight
            ratios, weights = straight, ens.weights
        else:
            carried = carried_x[ti]
            ratios = carried_v[ti] / np.where(reached[ti], carried_v[ti, :, 0], 1.0)[:, None]
            weights = np.where(reached[ti], ens.weights, 0.0)
        kernel = np.ones((len(ens),) + grid.shape[1:])
        for a in spatial_axes:
            length = grid.upper[a] - grid.lower[a]
            d = _periodic_offsets(carried[:, a], grid.axis_centers(a), length)
            k = np.maximum(0.0, 1.0 - np.abs(d) / kernel_width)
            shape = [len(ens)] + [1] * (n - 1)
            shape[a] = grid.shape[a]
            kernel = kernel * k.reshape(shape)
        mass = kernel.reshape(len(ens), -1).sum(axis=1) * cell_volume
        kernel = kernel / np.where(mass > 0, mass, 1.0).reshape((-1,) + (1,) * (n - 1))
        current[ti] = np.einsum('p,p...,pm->...m', weights, kernel, ratios)
    carry = "straight-line" if W is None else W.label
    return MomentGrid(grid, current, metadata={"estimator": "tent-kernel", "kernel_width": kernel_width,
                                               "particles": len(ens), "seed": ens.seed, "carry": carry})


def current_grid_from_density(density_at: Callable[[np.ndarray], AnalyticDensity], grid: GridSpec,
                              nodes: int = DEFAULT_NODES, with_stress_energy: bool = True) -> MomentGrid:
    """Quadrature moments at every cell centre; ``density_at(x)`` supplies the density there."""
    centers = grid.centers()
    n = len(grid.shape)
    current = np.zeros(grid.shape + (n,))
    stress = np.zeros(grid.shape + (n, n)) if with_stress_energy else None
    for idx in np.ndindex(*grid.shape):
        x = centers[idx]
        samples = fiber_samples(density_at(x), x, nodes)
        current[idx] = current_from_samples(samples)
        if stress is not None:
            stress[idx] = stress_energy_from_samples(samples)
    return MomentGrid(grid, current, stress, metadata={"estimator": "gauss-legendre", "nodes": nodes})


@dataclass
class ContinuityReport:
    max_residual: float
    rms_residual: float
    cells: int

    def to_dict(self) -> dict:
        return {"max_residual": self.max_residual, "rms_residual": self.rms_residual, "cells": self.cells}


def divergence(grid: MomentGrid) -> np.ndarray:
    n = len(grid.spec.shape)
    spacing = grid.spec.spacing
    total = np.zeros(grid.spec.shape)
    for mu in range(n):
        if grid.spec.shape[mu] < 2:
            continue
        total += np.gradient(grid.current[..., mu], spacing[mu], axis=mu)
    return total


def continuity_residual(grid: MomentGrid) -> ContinuityReport:
    """Central-difference divergence of J over the grid interior."""
    if grid.spec.shape[0] < 2:
        raise ValueError("continuity needs at least two time slices")
    div = divergence(grid)
    interior = tuple(slice(1, -1) if s > 2 else slice(None) for s in grid.spec.shape)
    core = div[interior]
    return ContinuityReport(float(np.max(np.abs(core))), float(math.sqrt(np.mean(core ** 2))), core.size)


@dataclass
class MomentResult:
    x: np.ndarray
    current: np.ndarray
    stress_energy: np.ndarray
    truncation_ratio: float
    warnings: List[str] = field(default_factory=list)


def moments_at(density: AnalyticDensity, x: np.ndarray, nodes: int = DEFAULT_NODES) -> MomentResult:
    samples = fiber_samples(density, x, nodes)
    warnings = []
    if samples.truncated:
        warnings.append(f"density truncated by velocity region (boundary/peak {samples.truncation_ratio:.3g})")
    return MomentResult(samples.x, current_from_samples(samples), stress_energy_from_samples(samples),
                        samples.truncation_ratio, warnings)
