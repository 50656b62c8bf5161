"""Prolongations: RK4 integration, reparameterisation, leaves and drift diagnostics."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from vlasovkit.errors import (
    ChartDomainError, ChartExitError, KineticError, NonFiniteDerivativeError, NonFiniteStateError,
    ReparamDegenerateError,
)
from vlasovkit.geometry import (
    SpacetimeModel, christoffel_at, contract_nonmetricity, coordinate_scalar, nonmetricity_at,
)
from vlasovkit.phase_space import BundleScalar, PhasePoint
from vlasovkit.vlasov import (
    KinematicIndicator, VlasovBivector, VlasovField, apply_field, indicator_labtime,
    transform_to_domain, geodesic_field,
)

logger = logging.getLogger(__name__)

MATCH_TOLERANCE = 1e-6
LEAF_TANGENCY_TOLERANCE = 1e-5


@dataclass
class Prolongation:
    params: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    field_label: str
    truncated: bool = False
    exit_reason: Optional[str] = None

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def node_count(self) -> int:
        return len(self.params)

    @property
    def points(self) -> List[PhasePoint]:
        return [PhasePoint(x, v) for x, v in zip(self.positions, self.velocities)]

    def point(self, i: int) -> PhasePoint:
        return PhasePoint(self.positions[i], self.velocities[i])

    def self_consistency_defect(self) -> float:
        """max |central difference of x(t) - v(t)| over interior nodes."""
        if self.node_count < 3:
            return 0.0
        dt = np.diff(self.params)
        fd = (self.positions[2:] - self.positions[:-2]) / (dt[1:] + dt[:-1])[:, None]
        return float(np.max(np.abs(fd - self.velocities[1:-1])))

    def satisfies_prolongation_property(self) -> bool:
        if self.node_count < 3:
            return True
        dt = float(np.max(np.diff(self.params)))
        return self.self_consistency_defect() <= 10.0 * dt * dt


def _rhs(W: VlasovField, state: np.ndarray, n: int) -> np.ndarray:
    u = PhasePoint(state[:n], state[n:])
    return np.concatenate([u.v, W(u)])


def integrate(W: VlasovField, u0: PhasePoint, t_span: Tuple[float, float], steps: int,
              on_exit: str = "truncate") -> Prolongation:
    """Classic fixed-step RK4 on x' = v, v' = phi(x, v); returns steps + 1 nodes.

    Leaving the chart truncates the path and flags it; with on_exit="raise" a
    ChartExitError carrying the truncated path is raised instead.
    A node where the field itself cannot be evaluated is dropped, so every kept
    node has a finite acceleration; at the initial point that error propagates.
    """
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    h = (t1 - t0) / steps
    n = u0.dim
    params = t0 + h * np.arange(steps + 1)
    states = np.empty((steps + 1, 2 * n))
    accel = np.full((steps + 1, n), np.nan)
    states[0] = u0.state()
    inside = W.model.bounds.contains if W.model is not None else (lambda x: True)

    last, reason = steps, None
    for i in range(steps):
        y = states[i]
        try:
            k1 = _rhs(W, y, n)
            accel[i] = k1[n:]
            k2 = _rhs(W, y + 0.5 * h * k1, n)
            k3 = _rhs(W, y + 0.5 * h * k2, n)
            k4 = _rhs(W, y + h * k3, n)
        except (ChartDomainError, NonFiniteDerivativeError) as e:
            if not np.all(np.isfinite(accel[i])):
                # the field fails at node i itself, so node i is not kept
                if i == 0:
                    raise
                last = i - 1
            else:
                last = i
            reason = f"{e.error_code}: {e.message}"
            break
        nxt = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(nxt)):
            raise NonFiniteStateError(f"non-finite state after step {i + 1} of {W.label}",
                                      {"t": params[i + 1], "state": nxt})
        if not inside(nxt[:n]):
            last, reason = i, f"left chart at t = {params[i + 1]:.6g}"
            break
        states[i + 1] = nxt

    if reason is None:
        try:
            accel[steps] = W(PhasePoint(states[steps, :n], states[steps, n:]))
        except (ChartDomainError, NonFiniteDerivativeError) as e:
            last, reason = steps - 1, f"{e.error_code}: {e.message}"

    count = last + 1
    prol = Prolongation(
        params=params[:count].copy(),
        positions=states[:count, :n].copy(),
        velocities=states[:count, n:].copy(),
        accelerations=accel[:count].copy(),
        field_label=W.label,
        truncated=reason is not None,
        exit_reason=reason,
    )
    if prol.truncated:
        logger.warning(f"Integration of {W.label} truncated after {count} nodes: {reason}")
        if on_exit == "raise":
            raise ChartExitError(f"path of {W.label} left the chart", prolongation=prol,
                                 context={"nodes": count, "reason": reason})
    return prol


def integrate_batch(W: VlasovField, initial_points: Sequence[PhasePoint], t_span: Tuple[float, float],
                    steps: int, workers: int = 4, return_exceptions: bool = False) -> List[Any]:
    """Integrate many initial points; results keep input order."""
    def run(u0):
        try:
            return integrate(W, u0, t_span, steps)
        except KineticError as e:
            if return_exceptions:
                return e
            raise

    if workers <= 1 or len(initial_points) <= 1:
        return [run(u0) for u0 in initial_points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, initial_points))


def solve_reparameterization(params: np.ndarray, k_values: np.ndarray,
                             s0: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """RK4 for s'' + k(t) s' = 0 with s(t0) = s0 (default t0) and s'(t0) = 1.

    k between nodes comes from a cubic spline through the node values.
    Returns s and w = ds/dt at the nodes.
    """
    params = np.asarray(params, dtype=float)
    k_values = np.asarray(k_values, dtype=float)
    k_of_t = CubicSpline(params, k_values) if len(params) > 3 else (lambda t: np.interp(t, params, k_values))
    s = np.empty_like(params)
    w = np.empty_like(params)
    s[0] = params[0] if s0 is None else s0
    w[0] = 1.0

    def rhs(t, y):
        return np.array([y[1], -float(k_of_t(t)) * y[1]])

    for i in range(len(params) - 1):
        t, h = params[i], params[i + 1] - params[i]
        y = np.array([s[i], w[i]])
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if y[1] <= 0.0:
            raise ReparamDegenerateError(f"ds/dt reached {y[1]:.3g} at t = {params[i + 1]:.6g}",
                                         {"t": params[i + 1]})
        s[i + 1], w[i + 1] = y
    return s, w


def reparameterize(prol: Prolongation, k: BundleScalar) -> Prolongation:
    """The prolongation of the same curve for the field W + k R.

    Nodes are uniform in the new parameter s; positions and velocities are
    resampled with cubic Hermite interpolation.
    """
    k_values = np.array([k(u) for u in prol.points])
    s, w = solve_reparameterization(prol.params, k_values)
    new_v = prol.velocities / w[:, None]
    new_a = (prol.accelerations + k_values[:, None] * prol.velocities) / (w * w)[:, None]
    s_grid = np.linspace(s[0], s[-1], len(s))
    positions = CubicHermiteSpline(s, prol.positions, new_v, axis=0)(s_grid)
    velocities = CubicHermiteSpline(s, new_v, new_a, axis=0)(s_grid)
    accelerations = CubicSpline(s, new_a, axis=0)(s_grid) if len(s) > 3 else new_a
    return Prolongation(s_grid, positions, velocities, accelerations,
                        f"{prol.field_label}+{k.name}R", prol.truncated, prol.exit_reason)


def chordal_resample(positions: np.ndarray, count: int) -> np.ndarray:
    """Resample a polyline at uniform cumulative chord length."""
    positions = np.asarray(positions, dtype=float)
    chords = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    arclength = np.concatenate([[0.0], np.cumsum(chords)])
    if arclength[-1] == 0.0:
        return np.repeat(positions[:1], count, axis=0)
    target = np.linspace(0.0, arclength[-1], count)
    return np.column_stack([np.interp(target, arclength, positions[:, j]) for j in range(positions.shape[1])])


def _distance_to_polyline(points: np.ndarray, polyline: np.ndarray, chunk: int = 256) -> np.ndarray:
    start, seg = polyline[:-1], np.diff(polyline, axis=0)
    seg_len2 = np.maximum(np.einsum('sj,sj->s', seg, seg), np.finfo(float).tiny)
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk]
        rel = p[:, None, :] - start[None, :, :]
        t = np.clip(np.einsum('psj,sj->ps', rel, seg) / seg_len2, 0.0, 1.0)
        nearest = start[None, :, :] + t[:, :, None] * seg[None, :, :]
        out[lo:lo + chunk] = np.min(np.linalg.norm(p[:, None, :] - nearest, axis=2), axis=1)
    return out


def curve_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric max point-to-polyline distance between two base curves."""
    return float(max(np.max(_distance_to_polyline(a, b)), np.max(_distance_to_polyline(b, a))))


@dataclass
class MatchReport:
    field_label: str
    indicator: str
    distance: float
    reparam_span: float
    steps: int
    tolerance: float = MATCH_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.distance < self.tolerance

    def to_dict(self) -> dict:
        return {"field": self.field_label, "indicator": self.indicator, "distance": self.distance,
                "reparam_span": self.reparam_span, "steps": self.steps,
                "tolerance": self.tolerance, "passed": self.passed}


def transform_rate(W: VlasovField, F: KinematicIndicator) -> BundleScalar:
    """kappa = -W<F>/(k F), the 1-homogeneous factor with W + kappa R = transform_to_domain(W, F)."""
    return BundleScalar(lambda u: -apply_field(W, F.scalar, u) / (F.degree * F(u)), 1, f"kappa_{F.name}")


def trajectory_match(W: VlasovField, F: KinematicIndicator, u0: PhasePoint, t_span: Tuple[float, float],
                     steps: int, resample: int = 2001, tolerance: float = MATCH_TOLERANCE) -> MatchReport:
    """Compare base curves of W and transform_to_domain(W, F) as point sets."""
    original = integrate(W, u0, t_span, steps)
    reparam = reparameterize(original, transform_rate(W, F))
    s_span = (float(reparam.params[0]), float(reparam.params[-1]))
    adapted = integrate(transform_to_domain(W, F), u0, s_span, steps)
    distance = curve_distance(chordal_resample(original.positions, resample),
                              chordal_resample(adapted.positions, resample))
    return MatchReport(W.label, F.name, distance, s_span[1] - s_span[0], steps, tolerance)


@dataclass
class DriftReport:
    indicator: str
    params: np.ndarray
    values: np.ndarray
    rates: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.values - self.values[0])))

    def to_dict(self) -> dict:
        return {"indicator": self.indicator, "max_deviation": self.max_deviation,
                "max_abs_rate": float(np.max(np.abs(self.rates)))}


def indicator_drift(prol: Prolongation, F: KinematicIndicator) -> DriftReport:
    values = np.array([F(u) for u in prol.points])
    rates = np.gradient(values, prol.params, edge_order=2) if len(values) > 2 else np.zeros_like(values)
    return DriftReport(F.name, prol.params, values, rates)


def nonmetricity_along(model: SpacetimeModel, prol: Prolongation) -> np.ndarray:
    """Q(C', C', C') at every node."""
    return np.array([contract_nonmetricity(nonmetricity_at(model, x), v)
                     for x, v in zip(prol.positions, prol.velocities)])


@dataclass
class NullLabtimeReport:
    params: np.ndarray
    residual: np.ndarray
    fd_residual: np.ndarray
    oracle: np.ndarray
    lemma_series: np.ndarray
    comparison_residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))

    @property
    def max_oracle_mismatch(self) -> float:
        return float(np.max(np.abs(self.residual - self.oracle)))

    @property
    def comparison_max_residual(self) -> float:
        return float(np.max(self.comparison_residual))

    def to_dict(self) -> dict:
        return {"max_residual": self.max_residual, "max_oracle_mismatch": self.max_oracle_mismatch,
                "max_fd_residual": float(np.max(self.fd_residual)),
                "comparison_max_residual": self.comparison_max_residual}


def _labtime_null_line(model: SpacetimeModel, u0: PhasePoint, t_span, steps):
    F = indicator_labtime(model)
    u0 = u0.scaled(1.0 / F(u0))
    prol = integrate(transform_to_domain(geodesic_field(model), F), u0, t_span, steps)
    residual = []
    for x, v, a in zip(prol.positions, prol.velocities, prol.accelerations):
        covariant = a + np.einsum('mnr,n,r->m', christoffel_at(model, x), v, v)
        residual.append(float(np.linalg.norm(covariant)))
    return u0, prol, np.array(residual)


def null_labtime_defect(model: SpacetimeModel, u0: PhasePoint, t_span: Tuple[float, float] = (0.0, 2.0),
                        steps: int = 2000) -> NullLabtimeReport:
    """Geodesic residual of a null line parameterised by the model's lab time.

    The line has v = w l with l the fixed null direction (l^0 = 1) and
    w = 1/(l . grad s); the residual oracle is |l| |dw/dtau| with
    dw/dtau = -w^3 l . Hess(s) . l. The comparison run uses coordinate time.
    """
    u0, prol, residual = _labtime_null_line(model, u0, t_span, steps)
    fd_accel = np.gradient(prol.velocities, prol.params, axis=0, edge_order=2)
    fd_residual = np.linalg.norm(fd_accel, axis=1)

    direction = u0.v / u0.v[0]
    oracle, lemma = [], []
    for x, v in zip(prol.positions, prol.velocities):
        w = v[0]
        dw = -w ** 3 * float(direction @ model.labtime.hess(x) @ direction)
        oracle.append(float(np.linalg.norm(direction)) * abs(dw))
        lemma.append(dw * float(model.labtime.grad(x)[1]))

    flat = model.with_options(name=f"{model.name}-coordinate-time",
                              labtime=coordinate_scalar(model.dim, 0, "t"))
    _, _, comparison = _labtime_null_line(flat, u0, t_span, steps)
    return NullLabtimeReport(prol.params, residual, fd_residual, np.array(oracle), np.array(lemma), comparison)


@dataclass
class Leaf:
    t_grid: np.ndarray
    lam_grid: np.ndarray
    positions: np.ndarray      # (T, L, n)
    velocities: np.ndarray     # (T, L, n)
    accelerations: np.ndarray  # (T, L, n)
    prolongation: Prolongation
    field_label: str

    def points(self) -> np.ndarray:
        """(T*L, 2n) array of (x, v) samples."""
        return np.concatenate([self.positions, self.velocities], axis=2).reshape(-1, 2 * self.positions.shape[2])

    def tangency_ratio(self) -> float:
        """Worst sigma_3/sigma_1 of [d_t; d_lam; R; W] over interior nodes."""
        T, L, _ = self.positions.shape
        if T < 3 or L < 3:
            return 0.0
        state = np.concatenate([self.positions, self.velocities], axis=2)
        worst = 0.0
        for i in range(1, T - 1):
            for j in range(1, L - 1):
                d_t = (state[i + 1, j] - state[i - 1, j]) / (self.t_grid[i + 1] - self.t_grid[i - 1])
                d_lam = (state[i, j + 1] - state[i, j - 1]) / (self.lam_grid[j + 1] - self.lam_grid[j - 1])
                v, a = self.velocities[i, j], self.accelerations[i, j]
                radial = np.concatenate([np.zeros_like(v), v])
                spray = np.concatenate([v, a])
                rows = np.array([d_t, d_lam, radial, spray])
                rows /= np.maximum(np.linalg.norm(rows, axis=1, keepdims=True), np.finfo(float).tiny)
                sv = np.linalg.svd(rows, compute_uv=False)
                worst = max(worst, float(sv[2] / sv[0]))
        return worst


def integrate_leaf(psi: VlasovBivector, u0: PhasePoint, t_grid: np.ndarray, lam_grid: np.ndarray) -> Leaf:
    """leaf(t, lam) = lam . eta(t) for eta the prolongation of the representative."""
    t_grid = np.asarray(t_grid, dtype=float)
    lam_grid = np.asarray(lam_grid, dtype=float)
    prol = integrate(psi.representative, u0, (t_grid[0], t_grid[-1]), len(t_grid) - 1, on_exit="raise")
    positions = np.repeat(prol.positions[:, None, :], len(lam_grid), axis=1)
    velocities = lam_grid[None, :, None] * prol.velocities[:, None, :]
    accelerations = (lam_grid ** 2)[None, :, None] * prol.accelerations[:, None, :]
    return Leaf(prol.params, lam_grid, positions, velocities, accelerations, prol, psi.label)


def leaf_distance(a: Leaf, b: Leaf) -> float:
    """Symmetric distance between two leaves as point sets.

    Each sample is matched to the nearest base point of the other leaf's
    curve, then to the closest point on that node's fiber ray.
    """
    def one_way(src: Leaf, dst: Leaf) -> float:
        base = dst.prolongation.positions
        rays = dst.prolongation.velocities
        worst = 0.0
        for x, v in zip(src.positions.reshape(-1, src.positions.shape[2]),
                        src.velocities.reshape(-1, src.velocities.shape[2])):
            seg_start, seg = base[:-1], np.diff(base, axis=0)
            t = np.clip(np.einsum('sj,sj->s', x - seg_start, seg) /
                        np.maximum(np.einsum('sj,sj->s', seg, seg), np.finfo(float).tiny), 0.0, 1.0)
            nearest = seg_start + t[:, None] * seg
            idx = int(np.argmin(np.linalg.norm(nearest - x, axis=1)))
            ray = rays[idx] + t[idx] * (rays[idx + 1] - rays[idx])
            mu = float(v @ ray) / float(ray @ ray)
            dist = math.sqrt(float(np.sum((nearest[idx] - x) ** 2)) + float(np.sum((v - mu * ray) ** 2)))
            worst = max(worst, dist)
        return worst
    return max(one_way(a, b), one_way(b, a))
