"""Central finite-difference helpers shared by the geometry and bundle code."""

from typing import Callable, Optional

import numpy as np

from vlasovkit.errors import NonFiniteDerivativeError

DEFAULT_FD_SCALE = 1e-6


def scaled_step(point: np.ndarray, scale: float = DEFAULT_FD_SCALE) -> float:
    """Step ``scale * max(1, |point|_inf)``."""
    return scale * max(1.0, float(np.max(np.abs(point))) if point.size else 1.0)


def central_gradient(func: Callable[[np.ndarray], np.ndarray], point: np.ndarray,
                     step: float, inside: Optional[Callable[[np.ndarray], bool]] = None) -> np.ndarray:
    """Partial derivatives of ``func`` at ``point`` along each coordinate axis.

    ``func`` may return a scalar or an array; the derivative axis is prepended,
    so an (n, n)-valued function yields an array of shape (dim, n, n).
    ``inside`` guards the stencil: a stencil node outside the domain raises
    NonFiniteDerivativeError.
    """
    point = np.asarray(point, dtype=float)
    partials = []
    for axis in range(point.size):
        offset = np.zeros_like(point)
        offset[axis] = step
        forward, backward = point + offset, point - offset
        if inside is not None and not (inside(forward) and inside(backward)):
            raise NonFiniteDerivativeError(
                f"finite-difference stencil leaves the domain along axis {axis}",
                {"point": point, "step": step, "axis": axis},
            )
        diff = (np.asarray(func(forward), dtype=float) - np.asarray(func(backward), dtype=float)) / (2.0 * step)
        partials.append(diff)
    result = np.stack(partials)
    if not np.all(np.isfinite(result)):
        raise NonFiniteDerivativeError("finite-difference derivative is not finite",
                                       {"point": point, "step": step})
    return result


def directional_derivative(func: Callable[[np.ndarray], np.ndarray], point: np.ndarray,
                           direction: np.ndarray, step: float) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    forward = np.asarray(func(point + step * direction), dtype=float)
    backward = np.asarray(func(point - step * direction), dtype=float)
    result = (forward - backward) / (2.0 * step)
    if not np.all(np.isfinite(result)):
        raise NonFiniteDerivativeError("directional derivative is not finite",
                                       {"point": point, "step": step})
    return result
