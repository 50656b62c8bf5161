import math

import numpy as np
import pytest

from vlasovkit.density import (
    ParticleEnsemble, VelocityRegion, gaussian_density, normalize_density, uniform_density,
)
from vlasovkit.errors import EmptyEnsembleError
from vlasovkit.observables import (
    SUPPORT_CATALOG, GridSpec, MomentGrid, SupportForm, continuity_residual, current_from_E, current_from_U,
    current_grid_from_density, current_grid_from_ensemble, fiber_samples, moments_at, slice_samples,
    stress_energy_at, stress_energy_dependence_report, stress_energy_from_U, support_form,
)
from vlasovkit.vlasov import indicator_coordinate, indicator_hyperboloid, indicator_labtime, lorentz_field

ORIGIN = np.zeros(4)


@pytest.fixture(scope="module")
def beam(flat):
    """Normalised warm beam on the unit hyperboloid, drifting along x^1"""
    density = gaussian_density(flat, indicator_hyperboloid(flat), [0.3, 0.0, 0.0], 0.05)
    return normalize_density(density, ORIGIN)


@pytest.fixture(scope="module")
def supports():
    return [build() for build in SUPPORT_CATALOG.values()]


class TestSupportForms:
    """Unit-mass radial profiles"""

    @pytest.mark.parametrize("name", sorted(SUPPORT_CATALOG))
    def test_unit_integral(self, name):
        assert SUPPORT_CATALOG[name]().integral() == pytest.approx(1.0, rel=1e-14)

    def test_profile_vanishes_outside_support(self):
        chi = SUPPORT_CATALOG["triangle"]()
        np.testing.assert_array_equal(chi.profile(np.array([-0.5, 1.5])), [0.0, 0.0])

    def test_empty_support(self):
        with pytest.raises(ValueError):
            support_form(lambda r: np.ones_like(r), 1.0, 1.0)


class TestCurrent:
    """Particle current from a kinematic domain and from U"""

    def test_rest_gaussian_closed_form(self, flat):
        density = gaussian_density(flat, indicator_hyperboloid(flat), [0.0, 0.0, 0.0], 0.1)
        J = current_from_E(density, ORIGIN)
        expected = (0.1 * math.sqrt(2.0 * math.pi) * math.erf(8.0 / math.sqrt(2.0))) ** 3
        assert J[0] == pytest.approx(expected, rel=1e-9)
        np.testing.assert_allclose(J[1:], 0.0, atol=1e-15)

    def test_current_is_future_timelike(self, flat, beam):
        J = current_from_E(beam, ORIGIN)
        assert J[0] > 0
        assert J[1] > 0
        assert float(J @ np.diag([-1.0, 1.0, 1.0, 1.0]) @ J) < 0

    def test_from_U_matches_from_E(self, beam, supports):
        J_E = current_from_E(beam, ORIGIN)
        for chi in supports:
            J_U = current_from_U(beam, chi, ORIGIN)
            np.testing.assert_allclose(J_U, J_E, rtol=0.0, atol=1e-3 * float(np.max(np.abs(J_E))))

    def test_independent_of_support_and_slicing(self, flat, beam, supports):
        reference = current_from_U(beam, supports[0], ORIGIN)
        scale = float(np.max(np.abs(reference)))
        for radial in (indicator_hyperboloid(flat), indicator_labtime(flat), indicator_coordinate(flat)):
            for chi in supports:
                J = current_from_U(beam, chi, ORIGIN, radial=radial)
                assert float(np.max(np.abs(J - reference))) / scale < 1e-6

    def test_far_slices(self, flat, beam):
        """Slices at e^2..e^4 times the mass shell carry the same current."""
        far = support_form(lambda r: np.ones_like(r), 2.0, 4.0, name="far")
        J_E = current_from_E(beam, ORIGIN)
        for radial in (indicator_hyperboloid(flat), indicator_labtime(flat)):
            J = current_from_U(beam, far, ORIGIN, radial=radial)
            np.testing.assert_allclose(J, J_E, rtol=0.0, atol=1e-6 * float(np.max(np.abs(J_E))))

    def test_slice_nodes_lie_on_slice(self, flat, beam):
        radial = indicator_labtime(flat)
        samples = slice_samples(beam, radial, ORIGIN, 0.7, nodes=8)
        np.testing.assert_allclose(samples.velocities[:, 0], math.exp(0.7), rtol=1e-14)
        assert np.all(samples.measure >= 0)

    def test_chi_mass_scales_current(self, beam):
        """The plain constructor skips normalisation, so J follows the support mass."""
        double = SupportForm(lambda r: np.where((r >= 0.0) & (r <= 1.0), 2.0, 0.0), 0.0, 1.0, name="double")
        J_E = current_from_E(beam, ORIGIN)
        np.testing.assert_allclose(current_from_U(beam, double, ORIGIN), 2.0 * J_E, rtol=0.0,
                                   atol=2e-6 * float(np.max(np.abs(J_E))))

    def test_labtime_home_domain(self, flat, supports):
        """On v^0 = 1 the measure is f d^3v, so J^0 is the region volume."""
        density = uniform_density(flat, indicator_labtime(flat), VelocityRegion.centered([0.0, 0.0, 0.0], 0.2))
        J = current_from_E(density, ORIGIN)
        assert J[0] == pytest.approx(0.064, rel=1e-12)
        np.testing.assert_allclose(J[1:], 0.0, atol=1e-15)
        J_U = current_from_U(density, supports[2], ORIGIN, radial=indicator_labtime(flat))
        np.testing.assert_allclose(J_U, J, rtol=1e-12, atol=1e-15)


class TestNonClosedDensity:
    """A density of nonzero degree along rays: the current depends on chi"""

    def test_current_depends_on_support(self, beam, supports):
        by_name = {chi.name: chi for chi in supports}
        J_box = current_from_U(beam, by_name["box"], ORIGIN, density_degree=1.0)
        J_triangle = current_from_U(beam, by_name["triangle"], ORIGIN, density_degree=1.0)
        assert abs(J_triangle[0] - J_box[0]) / J_box[0] > 0.5

    def test_degree_one_weights_slices_by_scale(self, beam, supports):
        """On shells F_H = e^(2r) each slice carries e^r J_E."""
        box = next(chi for chi in supports if chi.name == "box")
        J_E = current_from_E(beam, ORIGIN)
        J = current_from_U(beam, box, ORIGIN, density_degree=1.0)
        np.testing.assert_allclose(J, (1.0 - math.exp(-1.0)) * J_E, rtol=0.0,
                                   atol=1e-6 * float(np.max(np.abs(J_E))))

    def test_degree_zero_is_support_independent(self, beam, supports):
        currents = [current_from_U(beam, chi, ORIGIN, density_degree=0.0) for chi in supports]
        for J in currents[1:]:
            np.testing.assert_allclose(J, currents[0], rtol=1e-6, atol=1e-12)


class TestStressEnergy:
    """Second moments and their dependence on the slicing"""

    def test_symmetric_exactly(self, beam, supports):
        T = stress_energy_at(beam, ORIGIN)
        assert np.array_equal(T, T.T)
        T_U = stress_energy_from_U(beam, supports[1], ORIGIN)
        assert np.array_equal(T_U, T_U.T)

    def test_cold_beam_approaches_dust(self, flat):
        eta = np.diag([-1.0, 1.0, 1.0, 1.0])
        errors = []
        for sigma in (0.04, 0.02, 0.01):
            density = normalize_density(
                gaussian_density(flat, indicator_hyperboloid(flat), [0.3, 0.0, 0.0], sigma), ORIGIN)
            J = current_from_E(density, ORIGIN)
            T = stress_energy_at(density, ORIGIN)
            rho = math.sqrt(-float(J @ eta @ J))
            dust = np.outer(J, J) / rho
            errors.append(float(np.max(np.abs(T - dust))) / float(np.max(np.abs(dust))))
        assert errors[0] > errors[1] > errors[2]
        assert errors[-1] < 1e-3

    def test_dependence_report(self, flat, beam, supports):
        domains = [indicator_hyperboloid(flat), indicator_labtime(flat), indicator_coordinate(flat)]
        report = stress_energy_dependence_report(beam, ORIGIN, domains, supports)
        assert len(report.entries) == 9
        assert report.max_stress_energy_difference > 1e-3
        assert report.max_current_difference < 1e-6
        assert report.to_dict()["choices"][0] == "F_H/bump"


class TestTruncation:

    def test_narrow_region_flags_truncation(self, flat):
        density = gaussian_density(flat, indicator_hyperboloid(flat), [0.0, 0.0, 0.0], 0.1, half_width=0.1)
        result = moments_at(density, ORIGIN, nodes=8)
        assert result.truncation_ratio > 1e-12
        assert result.warnings

    def test_wide_region_is_clean(self, beam):
        assert not fiber_samples(beam, ORIGIN).truncated


class TestMomentGrids:
    """Gridded moments and continuity"""

    def test_stationary_beam_continuity(self, flat):
        base = gaussian_density(flat, indicator_hyperboloid(flat), [0.3, 0.0, 0.0], 0.05)
        spec = GridSpec([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0], (3, 3, 3, 3))
        grid = current_grid_from_density(lambda x: base.with_scale(1.0 + 0.5 * math.sin(2.0 * x[2])),
                                         spec, nodes=16)
        assert grid.stress_energy.shape == (3, 3, 3, 3, 4, 4)
        assert continuity_residual(grid).max_residual < 1e-6

    def test_rows_long_format(self):
        spec = GridSpec([0.0, 0.0], [1.0, 2.0], (2, 2))
        grid = MomentGrid(spec, np.ones((2, 2, 2)), np.ones((2, 2, 2, 2)))
        header, rows = grid.rows()
        assert header == ["x0", "x1", "J0", "J1", "T00", "T01", "T11"]
        assert len(rows) == 4
        assert rows[0][:2] == [0.25, 0.5]

    def test_ensemble_deposit_conserves_weight(self, flat):
        rng = np.random.default_rng(1)
        count = 200
        positions = np.column_stack([np.zeros(count), rng.uniform(0.0, 1.0, (count, 3))])
        spatial = rng.normal(scale=0.05, size=(count, 3)) + [0.3, 0.0, 0.0]
        velocities = np.column_stack([np.sqrt(1.0 + np.sum(spatial ** 2, axis=1)), spatial])
        ens = ParticleEnsemble(flat, positions, velocities, np.full(count, 0.01))
        spec = GridSpec([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0], (2, 4, 4, 4))
        grid = current_grid_from_ensemble(ens, spec, kernel_width=0.5)
        cell_volume = float(np.prod(spec.spacing[1:]))
        for t in range(2):
            assert float(np.sum(grid.current[t, ..., 0])) * cell_volume == pytest.approx(ens.total_weight, rel=1e-12)

    def test_deposit_follows_field(self, efield):
        """Particles released at rest in E along x^1 reach v^1/v^0 = a t / sqrt(1 + a^2 t^2)."""
        count = 20
        rng = np.random.default_rng(2)
        positions = np.column_stack([np.zeros(count), rng.uniform(0.0, 1.0, (count, 3))])
        velocities = np.tile([1.0, 0.0, 0.0, 0.0], (count, 1))
        ens = ParticleEnsemble(efield, positions, velocities, np.full(count, 0.05))
        spec = GridSpec([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0], (2, 4, 4, 4))
        cell_volume = float(np.prod(spec.spacing[1:]))
        carried = current_grid_from_ensemble(ens, spec, kernel_width=0.5, W=lorentz_field(efield))
        straight = current_grid_from_ensemble(ens, spec, kernel_width=0.5)
        for ti, t in enumerate(spec.axis_centers(0)):
            expected = ens.total_weight * 0.1 * t / math.sqrt(1.0 + (0.1 * t) ** 2)
            flux = float(np.sum(carried.current[ti, ..., 1])) * cell_volume
            assert flux == pytest.approx(expected, rel=1e-6)
            assert float(np.sum(straight.current[ti, ..., 1])) == 0.0
        assert carried.metadata["carry"] == "lorentz[minkowski-efield]"
        assert straight.metadata["carry"] == "straight-line"

    def test_empty_ensemble(self, flat):
        ens = ParticleEnsemble(flat, np.zeros((0, 4)), np.zeros((0, 4)), np.zeros(0))
        with pytest.raises(EmptyEnsembleError):
            current_grid_from_ensemble(ens, GridSpec(np.zeros(4), np.ones(4), (2, 2, 2, 2)), 0.5)
