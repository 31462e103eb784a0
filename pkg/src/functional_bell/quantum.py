"""Singlet predictions with reduced visibility and their squared norm."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sphere import Direction, QuadratureGrid, dot

OUTCOMES = (1, -1)
OUTCOME_PAIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
TWO_PI_SQ = (2.0 * math.pi) ** 2


def check_visibility(v: float) -> float:
    v = float(v)
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"visibility {v!r} outside [0, 1]")
    return v


def check_outcome(m) -> int:
    if m not in (1, -1):
        raise ValueError(f"outcome {m!r} is not +1 or -1")
    return int(m)


def joint_probability(m, mp, cos_ab, v):
    """Vectorized core: ``(1 - m m' v cos_ab) / 4``."""
    return 0.25 * (1.0 - m * mp * v * np.asarray(cos_ab))


def p_qm(m: int, mp: int, a: Direction, b: Direction, v: float) -> float:
    m, mp = check_outcome(m), check_outcome(mp)
    return 0.25 * (1.0 - m * mp * check_visibility(v) * dot(a, b))


def correlation_qm(a: Direction, b: Direction, v: float) -> float:
    return -check_visibility(v) * dot(a, b)


@dataclass(frozen=True)
class QuantumPrediction:
    """Joint probability field of the visibility-degraded singlet."""

    v: float

    def __post_init__(self):
        check_visibility(self.v)

    def prob(self, m: int, mp: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Probability at broadcastable (..., 3) setting arrays ``a`` and ``b``."""
        return joint_probability(m, mp, np.sum(np.asarray(a) * np.asarray(b), axis=-1), self.v)

    def sample_outcomes(self, a: np.ndarray, b: np.ndarray, rng: np.random.Generator):
        """Draw (m, m') per row: m is a fair coin, m' = -m with probability (1 + v a.b)/2."""
        cos_ab = np.sum(a * b, axis=-1)
        u = rng.random((2, len(cos_ab)))
        m = np.where(u[0] < 0.5, 1, -1).astype(np.int8)
        anti = u[1] < 0.5 * (1.0 + self.v * cos_ab)
        mp = np.where(anti, -m, m).astype(np.int8)
        return m, mp

    def describe(self) -> str:
        return f"quantum(v={self.v!r})"


def norm_sq_qm_analytic(v: float) -> float:
    v = check_visibility(v)
    return TWO_PI_SQ * (1.0 + v * v / 3.0)


def pairwise_cos(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(Na, Nb) matrix of dot products, summed componentwise in fixed order."""
    return (
        a[:, None, 0] * b[None, :, 0]
        + a[:, None, 1] * b[None, :, 1]
        + a[:, None, 2] * b[None, :, 2]
    )


def double_quadrature(kernel, grid_a: QuadratureGrid, grid_b: QuadratureGrid, block: int = 2048) -> float:
    """``sum_ij wa_i wb_j kernel(a_i, b_j)`` evaluated in row blocks.

    ``kernel`` maps (rows of a, all of b) to a (rows, Nb) array.  Block partial
    sums are combined in block order, so the result is deterministic.
    """
    partial = []
    for start in range(0, len(grid_a), block):
        a = grid_a.points[start:start + block]
        vals = kernel(a, grid_b.points)
        partial.append(np.sum(grid_a.weights[start:start + block] * np.sum(vals * grid_b.weights, axis=1)))
    return float(np.sum(partial))


def norm_sq_qm_numeric(v: float, grid: QuadratureGrid) -> float:
    """Direct quadrature of ``sum_{m,m'} P_QM^2`` over both spheres."""
    v = check_visibility(v)

    def kernel(a, b):
        c = pairwise_cos(a, b)
        total = np.zeros_like(c)
        for m, mp in OUTCOME_PAIRS:
            p = joint_probability(m, mp, c, v)
            total += p * p
        return total

    return double_quadrature(kernel, grid, grid)
