import numpy as np
import pytest

from vlasovkit.catalog import (
    minkowski, minkowski_2d_labtime, minkowski_efield, minkowski_nonmetric, schwarzschild,
)
from vlasovkit.phase_space import Bundle, PhaseBox, PhasePoint, sample_bundle

SEED = 20240601


@pytest.fixture(scope="session")
def flat():
    """4D Minkowski"""
    return minkowski(4)


@pytest.fixture(scope="session")
def efield():
    """Minkowski with E0 = 0.1 along x^1, q/m = 1"""
    return minkowski_efield(field_strength=0.1, charge_to_mass=1.0)


@pytest.fixture(scope="session")
def nonmetric():
    return minkowski_nonmetric(epsilon=0.1)


@pytest.fixture(scope="session")
def black_hole():
    """Schwarzschild, M = 1, finite-difference derivatives"""
    return schwarzschild(1.0)


@pytest.fixture(scope="session")
def wavy_labtime():
    return minkowski_2d_labtime(0.2)


def timelike_box(dim: int = 4, spread: float = 0.5) -> PhaseBox:
    """Positions in [-1, 1], future timelike-ish velocities."""
    return PhaseBox(
        x_lower=-np.ones(dim), x_upper=np.ones(dim),
        v_lower=np.concatenate([[1.2], -spread * np.ones(dim - 1)]),
        v_upper=np.concatenate([[2.0], spread * np.ones(dim - 1)]),
    )


@pytest.fixture(scope="session")
def flat_samples(flat):
    """100 seeded future timelike samples in Minkowski"""
    return sample_bundle(flat, Bundle.TIMELIKE, timelike_box(), 100, SEED)


@pytest.fixture(scope="session")
def efield_samples(efield):
    return sample_bundle(efield, Bundle.TIMELIKE, timelike_box(), 100, SEED)


@pytest.fixture(scope="session")
def schwarzschild_samples(black_hole):
    box = PhaseBox(
        x_lower=[0.0, 8.0, 1.0, 0.0], x_upper=[1.0, 12.0, 2.0, 1.0],
        v_lower=[1.5, -0.2, -0.02, -0.02], v_upper=[2.5, 0.2, 0.02, 0.02],
    )
    return sample_bundle(black_hole, Bundle.TIMELIKE, box, 100, SEED)


@pytest.fixture
def at_rest():
    return PhasePoint(np.zeros(4), np.array([1.0, 0.0, 0.0, 0.0]))
