"""Sprays, semi-sprays on the lab-time slice, and quadratic extension."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from vlasovkit.geometry import coordinate_scalar
from vlasovkit.phase_space import BundleScalar, PhasePoint, lift_scalar
from vlasovkit.vlasov import KinematicIndicator, VlasovField, transform_to_domain

SemiSprayMap = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SemiSpray:
    """Second-order system x''^a = X^a(s, x^a, x'^a) with s = x^0 as parameter."""
    coefficients: SemiSprayMap
    dim: int
    label: str = "semispray"

    def __call__(self, s: float, xa: np.ndarray, va: np.ndarray) -> np.ndarray:
        return np.asarray(self.coefficients(s, np.asarray(xa, dtype=float), np.asarray(va, dtype=float)),
                          dtype=float)


def time_component_indicator(dim: int) -> KinematicIndicator:
    """F = v^0 at level 1, the slice on which semi-sprays live."""
    lifted = lift_scalar(coordinate_scalar(dim, 0, "x0"))
    scalar = BundleScalar(lifted.evaluate, 1, "v0", lifted.base_gradient, lifted.fiber_gradient)
    return KinematicIndicator(scalar, 1, 1.0)


def quadratic_extension(phi_on_domain: Callable[[PhasePoint], np.ndarray], F: KinematicIndicator,
                        label: str = "extension", model=None) -> VlasovField:
    """Extend coefficients given on {F = a} to a 2-homogeneous field on U.

    phi(u) = rho(u)^2 phi_E(u / rho(u)) with rho = (F/a)^(1/k).
    """
    def phi(u: PhasePoint) -> np.ndarray:
        rho = F.level_scale(u)
        return rho * rho * np.asarray(phi_on_domain(u.scaled(1.0 / rho)), dtype=float)
    return VlasovField(phi, label, model)


def spray_from_semispray(semispray: SemiSpray, model=None) -> VlasovField:
    """X^0 = 0 and X^a = (v^0)^2 X_K^a(x^0, x^a, v^a / v^0)."""
    def on_slice(u: PhasePoint) -> np.ndarray:
        out = np.zeros(semispray.dim)
        out[1:] = semispray(u.x[0], u.x[1:], u.v[1:] / u.v[0])
        return out
    return quadratic_extension(on_slice, time_component_indicator(semispray.dim),
                               label=f"spray[{semispray.label}]", model=model)


def semispray_from_spray(W: VlasovField, dim: int, F: Optional[KinematicIndicator] = None) -> SemiSpray:
    """Restrict W to v^0 = 1; with F given, W is first adapted to F."""
    field = transform_to_domain(W, F) if F is not None else W

    def coefficients(s: float, xa: np.ndarray, va: np.ndarray) -> np.ndarray:
        x = np.concatenate([[s], xa])
        v = np.concatenate([[1.0], va])
        return field(PhasePoint(x, v))[1:]
    return SemiSpray(coefficients, dim, f"semispray[{field.label}]")
