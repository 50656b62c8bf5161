"""Exception hierarchy for the kinetic toolkit.

Every error carries a stable ``error_code`` and a ``context`` dict so the
scenario runner can log and summarise failures without parsing messages.
"""

from typing import Any, Dict, Optional


class KineticError(Exception):
    error_code = "KINETIC_ERROR"

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error_code": self.error_code,
            "message": self.message,
            "context": {k: _plain(v) for k, v in self.context.items()},
        }


def _plain(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    return str(value)


class ChartDomainError(KineticError):
    error_code = "CHART_DOMAIN"


class SingularMetricError(KineticError):
    error_code = "SINGULAR_METRIC"


class NonFiniteDerivativeError(KineticError):
    error_code = "NON_FINITE_DERIVATIVE"


class NotTimeOrientableError(KineticError):
    error_code = "NOT_TIME_ORIENTABLE"


class NonTimelikeError(KineticError):
    error_code = "NON_TIMELIKE"


class SlitBundleError(KineticError):
    error_code = "ZERO_VELOCITY"


class MissingLabTimeError(KineticError):
    error_code = "MISSING_LAB_TIME"


class ChartExitError(KineticError):
    """Raised on request when a path leaves the chart; carries the truncated path."""
    error_code = "CHART_EXIT"

    def __init__(self, message: str, prolongation=None, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, context)
        self.prolongation = prolongation


class NonFiniteStateError(KineticError):
    error_code = "NON_FINITE_STATE"


class ReparamDegenerateError(KineticError):
    error_code = "REPARAM_DEGENERATE"


class SignError(KineticError):
    error_code = "INDICATOR_SIGN"


class DegenerateDensityError(KineticError):
    error_code = "DEGENERATE_DENSITY"


class QuadratureDomainError(KineticError):
    error_code = "QUADRATURE_DOMAIN"


class EmptyEnsembleError(KineticError):
    error_code = "EMPTY_ENSEMBLE"


class ConfigError(KineticError):
    """Scenario configuration problem; ``field`` and ``line`` locate it when known."""
    error_code = "CONFIG_ERROR"

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None,
                 context: Optional[Dict[str, Any]] = None):
        super().__init__(message, context)
        self.field = field
        self.line = line

    def __str__(self) -> str:
        where = []
        if self.field:
            where.append(f"field '{self.field}'")
        if self.line is not None:
            where.append(f"line {self.line}")
        return f"{self.message} ({', '.join(where)})" if where else self.message
