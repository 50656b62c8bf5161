"""Parameterisation-free relativistic kinetic toolkit.

Spacetime models, Vlasov fields and bivectors on the conic bundle, domain
transformations, prolongations, particle densities and fiber moments.
"""

from vlasovkit.catalog import MODEL_BUILDERS, build_model
from vlasovkit.errors import KineticError
from vlasovkit.geometry import SpacetimeModel
from vlasovkit.phase_space import Bundle, BundleScalar, PhasePoint
from vlasovkit.vlasov import KinematicIndicator, VlasovBivector, VlasovField

__all__ = [
    "Bundle",
    "BundleScalar",
    "KinematicIndicator",
    "KineticError",
    "MODEL_BUILDERS",
    "PhasePoint",
    "SpacetimeModel",
    "VlasovBivector",
    "VlasovField",
    "build_model",
]

__version__ = "0.1.0"
