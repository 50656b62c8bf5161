"""Gauss-Legendre rules on intervals, boxes and piecewise intervals."""

from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np


@lru_cache(maxsize=32)
def _reference_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    points, weights = np.polynomial.legendre.leggauss(nodes)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def interval_rule(a: float, b: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    ref_x, ref_w = _reference_rule(nodes)
    half = 0.5 * (b - a)
    return a + half * (ref_x + 1.0), half * ref_w


def composite_rule(breakpoints: Sequence[float], nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Concatenated Gauss-Legendre rules on consecutive pieces [b_i, b_{i+1}]."""
    xs, ws = [], []
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        x, w = interval_rule(a, b, nodes)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def box_rule(lower: Sequence[float], upper: Sequence[float], nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor-product rule; returns points (nodes**d, d) and weights (nodes**d,)."""
    axes = [interval_rule(a, b, nodes) for a, b in zip(lower, upper)]
    grids = np.meshgrid(*[x for x, _ in axes], indexing='ij')
    weight_grids = np.meshgrid(*[w for _, w in axes], indexing='ij')
    points = np.column_stack([g.ravel() for g in grids])
    weights = np.prod(np.column_stack([g.ravel() for g in weight_grids]), axis=1)
    return points, weights
