"""Check routines for every run kind.

Each routine wraps its measurements in ``timed_check`` so the run logger
records pass/fail, measured errors and sample counts; tables and documents
for plotting go through the run's ArtifactWriter.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from runner.export import ArtifactWriter, leaf_table, trajectory_table
from runner.scenario import RunKind, ScenarioConfig
from vlasovkit.catalog import build_model, minkowski_2d_labtime, minkowski_efield, schwarzschild
from vlasovkit.density import (
    AnalyticDensity, SpacetimeBox, VelocityRegion, advect, check_ensemble, gaussian_density,
    normalize_density, project_to_domain, seed_from_analytic, uniform_density,
)
from vlasovkit.errors import KineticError
from vlasovkit.geometry import LeviCivita, SpacetimeModel, check_model_invariants, christoffel_at, metric_at
from vlasovkit.logging_config import RunLogger, timed_check
from vlasovkit.observables import (
    SUPPORT_CATALOG, GridSpec, continuity_residual, current_from_U, current_from_samples,
    current_grid_from_density, fiber_samples, stress_energy_dependence_report, stress_energy_from_samples,
)
from vlasovkit.phase_space import PhaseBox, PhasePoint, sample_bundle
from vlasovkit.sprays import semispray_from_spray, spray_from_semispray
from vlasovkit.trajectories import (
    LEAF_TANGENCY_TOLERANCE, MATCH_TOLERANCE, indicator_drift, integrate, integrate_batch, integrate_leaf,
    leaf_distance, nonmetricity_along, null_labtime_defect, reparameterize, trajectory_match, transform_rate,
)
from vlasovkit.vlasov import (
    BRACKET_TOLERANCE, FIELD_BUILDERS, INDICATOR_BUILDERS, KinematicIndicator, VlasovField,
    bivector_from_field, bivectors_equal, bracket_defect, compatibility_defect, field_from_bivector,
    indicator_hyperboloid, indicator_labtime, radial_quadraticity, radially_cubic_defect, transform_to_domain,
    validate_indicator, wedge_pair_equal,
)

logger = logging.getLogger(__name__)

COMPATIBILITY_TARGET = 1e-9
LABTIME_COEFFICIENT_TARGET = 1e-10
MASS_SHELL_TARGET = 1e-8
NONMETRIC_ORACLE_TARGET = 1e-5
ROUND_TRIP_TARGET = 1e-12
ADVECT_SHELL_TARGET = 1e-7
CURRENT_E_U_TARGET = 1e-3
SUPPORT_INDEPENDENCE_TARGET = 1e-6
CONTINUITY_TARGET = 1e-6
DEPENDENCE_FLOOR = 1e-3
DUST_TARGET = 1e-3
LEAF_DISTANCE_TARGET = 1e-5
LEAF_LAMBDAS = np.linspace(0.5, 2.0, 7)
MATCH_STARTS = 3


@dataclass
class SuiteContext:
    """Everything a check routine needs, built once per scenario."""
    config: ScenarioConfig
    model: SpacetimeModel
    field: VlasovField
    indicators: List[KinematicIndicator]
    log: RunLogger
    writer: ArtifactWriter
    _samples: Optional[list] = field(default=None, repr=False)

    @classmethod
    def build(cls, config: ScenarioConfig, log: RunLogger, writer: ArtifactWriter) -> "SuiteContext":
        model = build_model(config.model.name, **config.model.params)
        W = FIELD_BUILDERS[config.field.kind](model)
        indicators = [INDICATOR_BUILDERS[spec.name](model, level=spec.level) for spec in config.indicators]
        return cls(config, model, W, indicators, log, writer)

    def tolerance(self, default: float) -> float:
        return self.config.numeric.tolerance or default

    @property
    def span(self):
        return tuple(self.config.numeric.span)

    @property
    def steps(self) -> int:
        return self.config.numeric.steps

    @property
    def samples(self) -> list:
        if self._samples is None:
            box = sampling_box(self.model, self.config)
            drawn = sample_bundle(self.model, self.config.bundle, box, self.config.numeric.samples, self.config.seed)
            self._samples = list(drawn)
            logger.debug(f"Drew {len(drawn)} samples from {drawn.drawn} candidates")
        return self._samples

    def on_level(self, F: KinematicIndicator, limit: Optional[int] = None) -> List[PhasePoint]:
        points = self.samples if limit is None else self.samples[:limit]
        return [u.scaled(1.0 / F.level_scale(u)) for u in points]


def sampling_box(model: SpacetimeModel, config: ScenarioConfig) -> PhaseBox:
    """The configured box, or a future-timelike default sized to the model."""
    if config.box is not None:
        b = config.box
        return PhaseBox(b.x_lower, b.x_upper, b.v_lower, b.v_upper)
    if model.name == "schwarzschild":
        return PhaseBox([0.0, 8.0, 1.0, 0.0], [1.0, 12.0, 2.0, 1.0],
                        [1.5, -0.2, -0.02, -0.02], [2.5, 0.2, 0.02, 0.02])
    n = model.dim
    return PhaseBox(-np.ones(n), np.ones(n),
                    np.concatenate([[1.2], -0.5 * np.ones(n - 1)]), np.concatenate([[2.0], 0.5 * np.ones(n - 1)]))


def _optional_labtime(model: SpacetimeModel) -> Optional[KinematicIndicator]:
    try:
        return indicator_labtime(model)
    except KineticError:
        return None


def _labtime_is_coordinate(model: SpacetimeModel, points: List[PhasePoint]) -> bool:
    if model.labtime is None:
        return False
    e0 = np.eye(model.dim)[0]
    return all(np.array_equal(model.labtime.grad(u.x), e0) for u in points)


# ---------------------------------------------------------------- run kinds

def run_trajectories(ctx: SuiteContext):
    F = ctx.indicators[0]
    starts = ctx.on_level(F)
    with timed_check(ctx.log, "prolongation-property") as outcome:
        prols = integrate_batch(ctx.field, starts, ctx.span, ctx.steps, workers=ctx.config.numeric.workers)
        defects = [p.self_consistency_defect() for p in prols]
        failing = sum(not p.satisfies_prolongation_property() for p in prols)
        truncated = sum(p.truncated for p in prols)
        if truncated:
            ctx.log.warning(f"{truncated} of {len(prols)} trajectories left the chart", check="prolongation-property")
        outcome.metrics.samples_evaluated = len(prols)
        outcome.metrics.samples_failed = failing
        outcome.measured.update(max_self_consistency_defect=max(defects, default=0.0), truncated=truncated)
    ctx.writer.write_table("trajectories", trajectory_table(prols, indicator_hyperboloid(ctx.model),
                                                            _optional_labtime(ctx.model)))


def run_leaf(ctx: SuiteContext):
    u0 = ctx.on_level(ctx.indicators[0], 1)[0]
    t_grid = np.linspace(ctx.span[0], ctx.span[1], ctx.steps + 1)
    psi = bivector_from_field(ctx.field)
    with timed_check(ctx.log, "leaf-tangency") as outcome:
        leaf = integrate_leaf(psi, u0, t_grid, LEAF_LAMBDAS)
        ratio = leaf.tangency_ratio()
        outcome.metrics.samples_evaluated = leaf.positions.shape[0] * leaf.positions.shape[1]
        outcome.measured["tangency_ratio"] = ratio
        outcome.passed = ratio < ctx.tolerance(LEAF_TANGENCY_TOLERANCE)
    ctx.writer.write_table("leaf", leaf_table(leaf))

    for F in ctx.indicators:
        name = f"leaf-representative[{F.name}]"
        with timed_check(ctx.log, name) as outcome:
            params = reparameterize(integrate(ctx.field, u0, ctx.span, ctx.steps),
                                    transform_rate(ctx.field, F)).params
            other = integrate_leaf(bivector_from_field(transform_to_domain(ctx.field, F)), u0,
                                   np.linspace(params[0], params[-1], ctx.steps + 1), LEAF_LAMBDAS)
            distance = leaf_distance(leaf, other)
            outcome.metrics.samples_evaluated = 1
            outcome.measured["leaf_distance"] = distance
            outcome.passed = distance < ctx.tolerance(LEAF_DISTANCE_TARGET)


def run_transform_check(ctx: SuiteContext):
    rows = []
    for spec, F in zip(ctx.config.indicators, ctx.indicators):
        W_hat = transform_to_domain(ctx.field, F)
        with timed_check(ctx.log, f"compatibility[{F.name}]") as outcome:
            report = compatibility_defect(W_hat, F, ctx.samples)
            outcome.metrics.samples_evaluated = report.sample_count
            outcome.measured["max_defect"] = report.max_defect
            outcome.passed = report.max_defect < ctx.tolerance(COMPATIBILITY_TARGET)
        rows.append([F.name, "compatibility", -1, report.max_defect])

        with timed_check(ctx.log, f"trajectory-match[{F.name}]") as outcome:
            distances = []
            for i, u0 in enumerate(ctx.on_level(F, MATCH_STARTS)):
                match = trajectory_match(ctx.field, F, u0, ctx.span, ctx.steps)
                distances.append(match.distance)
                rows.append([F.name, "match-distance", i, match.distance])
            outcome.metrics.samples_evaluated = len(distances)
            outcome.metrics.samples_failed = sum(d >= ctx.tolerance(MATCH_TOLERANCE) for d in distances)
            outcome.measured["max_distance"] = max(distances, default=0.0)

        if spec.name == "labtime" and _labtime_is_coordinate(ctx.model, ctx.samples):
            _labtime_coefficients(ctx, W_hat, rows)
    ctx.writer.write_table("transform", (["indicator", "check", "sample", "value"], rows))


def _labtime_coefficients(ctx: SuiteContext, W_hat: VlasovField, rows: list):
    """Against phi - (phi^0 / v^0) v, the explicit lab-time coefficients."""
    with timed_check(ctx.log, "labtime-coefficients") as outcome:
        worst = 0.0
        for u in ctx.samples:
            phi = ctx.field(u)
            expected = phi - phi[0] * u.v / u.v[0]
            worst = max(worst, float(np.max(np.abs(W_hat(u) - expected))))
        outcome.metrics.samples_evaluated = len(ctx.samples)
        outcome.measured["max_abs_error"] = worst
        outcome.passed = worst < ctx.tolerance(LABTIME_COEFFICIENT_TARGET)
    rows.append(["labtime", "coefficient-error", -1, worst])


def run_drift(ctx: SuiteContext):
    F_H = indicator_hyperboloid(ctx.model)
    metric_connection = isinstance(ctx.model.connection, LeviCivita)
    starts = ctx.on_level(F_H)
    prols = integrate_batch(ctx.field, starts, ctx.span, ctx.steps, workers=ctx.config.numeric.workers)
    rows, deviations, mismatches = [], [], []
    for index, prol in enumerate(prols):
        drift = indicator_drift(prol, F_H)
        q = nonmetricity_along(ctx.model, prol)
        deviations.append(drift.max_deviation)
        mismatches.append(float(np.max(np.abs(-drift.rates - q))))
        rows.extend([index, float(t), float(f), float(r), float(qq)]
                    for t, f, r, qq in zip(drift.params, drift.values, drift.rates, q))
    ctx.writer.write_table("drift", (["trajectory", "t", "F_H", "rate", "Q"], rows))

    with timed_check(ctx.log, "nonmetricity-oracle") as outcome:
        outcome.metrics.samples_evaluated = len(prols)
        outcome.metrics.samples_failed = sum(m >= ctx.tolerance(NONMETRIC_ORACLE_TARGET) for m in mismatches)
        outcome.measured.update(max_rate_mismatch=max(mismatches, default=0.0),
                                max_shell_deviation=max(deviations, default=0.0))

    if metric_connection:
        with timed_check(ctx.log, "mass-shell") as outcome:
            outcome.metrics.samples_evaluated = len(prols)
            outcome.metrics.samples_failed = sum(d >= ctx.tolerance(MASS_SHELL_TARGET) for d in deviations)
            outcome.measured["max_shell_deviation"] = max(deviations, default=0.0)
    else:
        ctx.log.info(f"Connection {ctx.model.connection.label} is not metric; mass shell drift is expected")


def build_density(ctx: SuiteContext) -> AnalyticDensity:
    spec = ctx.config.density
    domain = INDICATOR_BUILDERS[spec.domain](ctx.model)
    if spec.kind == "uniform":
        half = spec.half_width or spec.sigma
        density = uniform_density(ctx.model, domain, VelocityRegion.centered(spec.center, half))
    else:
        density = gaussian_density(ctx.model, domain, spec.center, spec.sigma, half_width=spec.half_width)
    if spec.normalize:
        density = normalize_density(density, moment_position(ctx), ctx.config.numeric.nodes)
    return density


def moment_position(ctx: SuiteContext) -> np.ndarray:
    return np.asarray(ctx.config.position, dtype=float) if ctx.config.position else np.zeros(ctx.model.dim)


def run_density_advect(ctx: SuiteContext):
    density = build_density(ctx)
    box = SpacetimeBox(ctx.config.slice.lower, ctx.config.slice.upper)
    ens = seed_from_analytic(density, ctx.config.numeric.samples, ctx.config.seed, box)
    header = {"model": ctx.model.name, "field": ctx.field.label, "indicator": density.domain.name,
              "density": density.name}
    ctx.writer.write_ensemble("ensemble_initial", ens, header)

    with timed_check(ctx.log, "ensemble-valid") as outcome:
        report = check_ensemble(ens)
        outcome.metrics.samples_evaluated = report.sample_count
        outcome.measured.update(report.to_dict())
        outcome.passed = report.passed

    with timed_check(ctx.log, "projection-roundtrip") as outcome:
        again = project_to_domain(ens, density.domain)
        error = float(np.max(np.abs(again.velocities - ens.velocities))) if len(ens) else 0.0
        outcome.metrics.samples_evaluated = len(ens)
        outcome.measured["max_velocity_change"] = error
        outcome.passed = error < ctx.tolerance(ROUND_TRIP_TARGET) and np.array_equal(again.weights, ens.weights)

    with timed_check(ctx.log, "advect") as outcome:
        result = advect(ens, ctx.field, ctx.config.advect.dt, ctx.steps, workers=ctx.config.numeric.workers)
        dropped = {d.index for d in result.dropped}
        kept = [i for i in range(len(ens)) if i not in dropped]
        conserved = np.array_equal(result.ensemble.weights, ens.weights[kept])
        outcome.metrics.samples_evaluated = len(ens)
        outcome.metrics.samples_failed = len(result.dropped)
        outcome.measured.update(result.to_dict(), weights_conserved=conserved)
        expected = ctx.config.advect.expect_on_domain
        on_domain = result.tag_retained and (result.max_drift or 0.0) < ctx.tolerance(ADVECT_SHELL_TARGET)
        outcome.passed = conserved and on_domain == expected
    ctx.writer.write_ensemble("ensemble_final", result.ensemble, dict(header, dt=ctx.config.advect.dt))


def run_moments(ctx: SuiteContext):
    density = build_density(ctx)
    x = moment_position(ctx)
    nodes = ctx.config.numeric.nodes
    samples = fiber_samples(density, x, nodes)
    chis = [SUPPORT_CATALOG[name]() for name in ctx.config.supports]
    J_E = current_from_samples(samples)
    T = stress_energy_from_samples(samples)
    scale = float(np.max(np.abs(J_E)))

    with timed_check(ctx.log, "current-E-vs-U") as outcome:
        currents_U = {chi.name: current_from_U(density, chi, x, nodes=nodes) for chi in chis}
        errors = {name: float(np.max(np.abs(J - J_E))) / scale for name, J in currents_U.items()}
        outcome.metrics.samples_evaluated = len(errors)
        outcome.metrics.samples_failed = sum(e >= ctx.tolerance(CURRENT_E_U_TARGET) for e in errors.values())
        outcome.measured["relative_errors"] = errors

    with timed_check(ctx.log, "current-support-independence") as outcome:
        reference = currents_U[chis[0].name]
        worst = 0.0
        radials = ctx.indicators or [indicator_hyperboloid(ctx.model)]
        for radial in radials:
            for chi in chis:
                J = current_from_U(density, chi, x, radial=radial, nodes=nodes)
                worst = max(worst, float(np.max(np.abs(J - reference))) / scale)
        outcome.metrics.samples_evaluated = len(radials) * len(chis)
        outcome.measured["max_relative_difference"] = worst
        outcome.passed = worst < ctx.tolerance(SUPPORT_INDEPENDENCE_TARGET)

    with timed_check(ctx.log, "stress-energy-symmetry") as outcome:
        outcome.metrics.samples_evaluated = 1
        outcome.measured["max_asymmetry"] = float(np.max(np.abs(T - T.T)))
        outcome.passed = bool(np.array_equal(T, T.T))

    if samples.truncated:
        ctx.log.warning(f"Density truncated by its velocity region (ratio {samples.truncation_ratio:.3g})")
    ctx.writer.write_json("moments", {
        "x": x, "current_E": J_E, "stress_energy": T, "current_U": currents_U,
        "truncation_ratio": samples.truncation_ratio, "nodes": nodes,
        "density": density.name, "domain": density.domain.name,
    })

    if ctx.config.grid is not None:
        _continuity(ctx, density, nodes)


def _continuity(ctx: SuiteContext, density: AnalyticDensity, nodes: int):
    grid_cfg = ctx.config.grid
    spec = GridSpec(grid_cfg.lower, grid_cfg.upper, tuple(grid_cfg.shape))
    amplitude = grid_cfg.modulation
    axis = ctx.model.dim - 2 if ctx.model.dim > 2 else 1

    def density_at(x: np.ndarray) -> AnalyticDensity:
        # modulation along an axis the beam does not drift along keeps it stationary
        return density.with_scale(1.0 + amplitude * math.sin(2.0 * x[axis]))

    with timed_check(ctx.log, "continuity") as outcome:
        grid = current_grid_from_density(density_at, spec, nodes=nodes)
        report = continuity_residual(grid)
        outcome.metrics.samples_evaluated = report.cells
        outcome.measured.update(report.to_dict())
        outcome.passed = report.max_residual < ctx.tolerance(CONTINUITY_TARGET)
    ctx.writer.write_moment_grid("moment_grid", grid, {
        "model": ctx.model.name, "density": density.name, "domain": density.domain.name,
        "nodes": nodes, "modulation": amplitude, "tolerance": ctx.tolerance(CONTINUITY_TARGET),
    })


def run_dependence_report(ctx: SuiteContext):
    density = build_density(ctx)
    x = moment_position(ctx)
    chis = [SUPPORT_CATALOG[name]() for name in ctx.config.supports]
    report = stress_energy_dependence_report(density, x, ctx.indicators, chis, ctx.config.numeric.nodes)
    pairs = len(report.current_differences)

    with timed_check(ctx.log, "current-invariance") as outcome:
        outcome.metrics.samples_evaluated = pairs
        outcome.measured["max_current_difference"] = report.max_current_difference
        outcome.passed = report.max_current_difference < ctx.tolerance(SUPPORT_INDEPENDENCE_TARGET)

    with timed_check(ctx.log, "stress-energy-dependence") as outcome:
        outcome.metrics.samples_evaluated = pairs
        outcome.measured["max_stress_energy_difference"] = report.max_stress_energy_difference
        outcome.passed = pairs == 0 or report.max_stress_energy_difference > DEPENDENCE_FLOOR
    ctx.writer.write_json("dependence", dict(report.to_dict(), entries=[
        {"domain": e.domain, "chi": e.chi, "current": e.current, "stress_energy": e.stress_energy}
        for e in report.entries]))

    spec = ctx.config.density
    if spec.kind == "gaussian" and spec.domain == "hyperboloid":
        _dust_limit(ctx, x)


def _dust_limit(ctx: SuiteContext, x: np.ndarray):
    """T approaches J J / rho as the beam cools; the error must shrink with sigma."""
    spec = ctx.config.density
    g = metric_at(ctx.model, x)
    F_H = indicator_hyperboloid(ctx.model)
    with timed_check(ctx.log, "cold-beam-limit") as outcome:
        errors = []
        for sigma in (spec.sigma, spec.sigma / 2.0, spec.sigma / 4.0):
            beam = normalize_density(gaussian_density(ctx.model, F_H, spec.center, sigma), x,
                                     ctx.config.numeric.nodes)
            samples = fiber_samples(beam, x, ctx.config.numeric.nodes)
            J = current_from_samples(samples)
            T = stress_energy_from_samples(samples)
            dust = np.outer(J, J) / math.sqrt(-float(J @ g @ J))
            errors.append(float(np.max(np.abs(T - dust))) / float(np.max(np.abs(dust))))
        outcome.metrics.samples_evaluated = len(errors)
        outcome.measured["relative_errors"] = errors
        outcome.passed = errors[0] > errors[1] > errors[2] and errors[2] < ctx.tolerance(DUST_TARGET)


# ------------------------------------------------------------ invariant suite

def check_geometry(ctx: SuiteContext):
    with timed_check(ctx.log, "geometry") as outcome:
        report = check_model_invariants(ctx.model, [u.x for u in ctx.samples])
        outcome.metrics.samples_evaluated = report.points_checked
        outcome.metrics.samples_failed = len(report.failures)
        outcome.measured.update(max_metric_asymmetry=report.max_metric_asymmetry,
                                signature_failures=report.signature_failures,
                                max_faraday_asymmetry=report.max_faraday_asymmetry,
                                min_labtime_gradient=report.min_labtime_gradient)


def check_homogeneity_suite(ctx: SuiteContext):
    for kind, builder in FIELD_BUILDERS.items():
        W = builder(ctx.model)
        with timed_check(ctx.log, f"homogeneity[{kind}]") as outcome:
            quadratic = radial_quadraticity(W, ctx.samples)
            bracket = bracket_defect(W, ctx.samples, tolerance=BRACKET_TOLERANCE)
            outcome.metrics.samples_evaluated = len(ctx.samples)
            outcome.measured.update(quadraticity=quadratic.max_rel_error, bracket=bracket.max_defect)
            outcome.passed = quadratic.passed and bracket.passed
    for F in ctx.indicators:
        with timed_check(ctx.log, f"indicator[{F.name}]") as outcome:
            report = validate_indicator(F, ctx.samples)
            outcome.metrics.samples_evaluated = report.sample_count
            outcome.measured.update(report.to_dict())
            outcome.passed = report.passed


def check_bivectors(ctx: SuiteContext):
    W = ctx.field
    samples = ctx.samples
    with timed_check(ctx.log, "bivector-equivalence") as outcome:
        shifted = W.plus_radial(indicator_hyperboloid(ctx.model).root)
        outcome.metrics.samples_evaluated = len(samples)
        outcome.passed = bivectors_equal(bivector_from_field(W), bivector_from_field(shifted), samples)

    psi = bivector_from_field(W)
    for F in ctx.indicators:
        with timed_check(ctx.log, f"bivector-roundtrip[{F.name}]") as outcome:
            recovered = field_from_bivector(psi, F)
            direct = transform_to_domain(W, F)
            worst = 0.0
            for u in samples:
                expected = direct(u)
                worst = max(worst, float(np.max(np.abs(recovered(u) - expected)))
                            / max(1.0, float(np.max(np.abs(expected)))))
            outcome.metrics.samples_evaluated = len(samples)
            outcome.measured["max_relative_error"] = worst
            outcome.passed = worst <= ctx.tolerance(ROUND_TRIP_TARGET)

    with timed_check(ctx.log, "bivector-cubic") as outcome:
        report = radially_cubic_defect(psi, samples)
        outcome.metrics.samples_evaluated = report.sample_count
        outcome.measured["max_rel_error"] = report.max_defect
        outcome.passed = report.passed

    with timed_check(ctx.log, "wedge-pairs") as outcome:
        rng = np.random.default_rng(ctx.config.seed)
        X1, X2 = rng.normal(size=2 * ctx.model.dim), rng.normal(size=2 * ctx.model.dim)
        family = [((1.0, 0.0, 0.0, 1.0), True), ((2.0, 0.0, 0.0, 0.5), True), ((2.0, 3.0, 1.0, 2.0), True),
                  ((2.0, 0.0, 0.0, 1.0), False), ((1.0, 1.0, 1.0, 1.0), False)]
        wrong = [[a, b, c, d] for (a, b, c, d), expected in family
                 if wedge_pair_equal(X1, X2, a * X1 + b * X2, c * X1 + d * X2) is not expected]
        outcome.metrics.samples_evaluated = len(family)
        outcome.metrics.samples_failed = len(wrong)
        outcome.measured["misclassified"] = wrong


def check_spray_roundtrip(ctx: SuiteContext):
    labtime = _optional_labtime(ctx.model)
    if labtime is None:
        ctx.log.warning(f"Model {ctx.model.name} has no lab time; spray round trip skipped")
        return
    n = ctx.model.dim
    with timed_check(ctx.log, "spray-roundtrip") as outcome:
        lab = semispray_from_spray(ctx.field, n, labtime)
        back = semispray_from_spray(spray_from_semispray(lab, ctx.model), n)
        worst = 0.0
        for u in ctx.samples:
            s, xa, va = u.x[0], u.x[1:], u.v[1:] / u.v[0]
            worst = max(worst, float(np.max(np.abs(back(s, xa, va) - lab(s, xa, va)))))
        outcome.metrics.samples_evaluated = len(ctx.samples)
        outcome.measured["max_abs_error"] = worst
        outcome.passed = worst <= ctx.tolerance(ROUND_TRIP_TARGET)


def hyperbolic_state(a: float, tau: float) -> np.ndarray:
    return np.array([math.sinh(a * tau) / a, (math.cosh(a * tau) - 1.0) / a, 0.0, 0.0,
                     math.cosh(a * tau), math.sinh(a * tau), 0.0, 0.0])


def check_convergence(ctx: SuiteContext):
    with timed_check(ctx.log, "rk4-order") as outcome:
        W = FIELD_BUILDERS["lorentz"](minkowski_efield(field_strength=1.0))
        u0 = PhasePoint(np.zeros(4), [1.0, 0.0, 0.0, 0.0])
        exact = hyperbolic_state(1.0, 2.0)
        errors = []
        for steps in (40, 80):
            prol = integrate(W, u0, (0.0, 2.0), steps)
            errors.append(float(np.linalg.norm(np.concatenate([prol.positions[-1], prol.velocities[-1]]) - exact)))
        ratio = errors[0] / errors[1]
        outcome.metrics.samples_evaluated = 2
        outcome.measured.update(errors=errors, ratio=ratio)
        outcome.passed = 14.0 <= ratio <= 18.0

    with timed_check(ctx.log, "fd-christoffel-order") as outcome:
        x = np.array([0.0, 10.0, 1.2, 0.3])
        exact_gamma = christoffel_at(schwarzschild(1.0, exact_derivatives=True), x)
        errors = [float(np.max(np.abs(christoffel_at(schwarzschild(1.0).with_options(fd_step=h), x) - exact_gamma)))
                  for h in (0.4, 0.2)]
        ratio = errors[0] / errors[1]
        outcome.metrics.samples_evaluated = 2
        outcome.measured.update(errors=errors, ratio=ratio)
        outcome.passed = 3.5 <= ratio <= 4.5


def check_null_labtime(ctx: SuiteContext):
    if ctx.model.name == "minkowski-2d-labtime":
        model = ctx.model
    else:
        model = minkowski_2d_labtime(0.2)
    with timed_check(ctx.log, "null-labtime") as outcome:
        report = null_labtime_defect(model, PhasePoint([0.0, 0.0], [1.0, 1.0]))
        outcome.metrics.samples_evaluated = len(report.params)
        outcome.measured.update(report.to_dict())
        outcome.passed = (report.comparison_max_residual < 1e-10 and report.max_residual > 1e-3
                          and report.max_oracle_mismatch < NONMETRIC_ORACLE_TARGET)


SUITE_ROUTINES: Dict[str, Callable[[SuiteContext], None]] = {
    "geometry": check_geometry,
    "homogeneity": check_homogeneity_suite,
    "bivector": check_bivectors,
    "spray-roundtrip": check_spray_roundtrip,
    "convergence": check_convergence,
    "null-labtime": check_null_labtime,
}


def run_invariant_suite(ctx: SuiteContext):
    for name in ctx.config.checks:
        SUITE_ROUTINES[name](ctx)


RUN_ROUTINES: Dict[RunKind, Callable[[SuiteContext], None]] = {
    RunKind.TRAJECTORIES: run_trajectories,
    RunKind.LEAF: run_leaf,
    RunKind.TRANSFORM_CHECK: run_transform_check,
    RunKind.DRIFT: run_drift,
    RunKind.DENSITY_ADVECT: run_density_advect,
    RunKind.MOMENTS: run_moments,
    RunKind.DEPENDENCE_REPORT: run_dependence_report,
    RunKind.INVARIANT_SUITE: run_invariant_suite,
}
