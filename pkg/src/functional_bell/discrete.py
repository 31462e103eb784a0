"""Finite-settings version of the functional inequality.

Integrals over each sphere become weighted sums over a finite list of
settings.  With side-A settings ``a_i`` (weights ``w_i``) and side-B settings
``b_j`` (weights ``u_j``)::

    quantum  = sum_ij w_i u_j (1 + v^2 (a_i . b_j)^2) / 4
    LHV(s,t) = W_a W_b / 4 - (v / 4) X(s) . Y(t)

with ``X(s) = sum_i w_i s_i a_i`` and ``Y(t) = sum_j u_j t_j b_j``.  Linearity
in the model makes sign vectors ``s, t`` the extreme points, and for fixed
``s`` the best ``t`` is ``t_j = -sign(b_j . X)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lhv import LhvModel
from .quantum import check_visibility
from .sphere import Direction, QuadratureGrid, angles_to_points, make_direction, points_to_angles

BRUTE_FORCE_LIMIT = 26
DEFAULT_RESTARTS = 32
THRESHOLD_RTOL = 1e-12
METHODS = ("brute-force", "alternating")


class EnsembleFileError(ValueError):
    """Malformed setting file; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class SettingEnsemble:
    """Finite list of local settings with positive weights."""

    points: np.ndarray
    weights: np.ndarray
    label: str = "custom"
    weighting: str = "given"

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) != len(self.weights):
            raise ValueError("points must be (N, 3) with one weight per setting")
        if len(self.weights) == 0:
            raise ValueError("empty setting ensemble")
        if np.any(self.weights <= 0):
            raise ValueError("setting weights must be positive")

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def settings(self) -> list[Direction]:
        theta, phi = points_to_angles(self.points)
        return [make_direction(t, p) for t, p in zip(theta, phi)]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    @classmethod
    def from_grid(cls, grid: QuadratureGrid) -> SettingEnsemble:
        n_theta, n_phi = grid.order
        return cls(np.array(grid.points), np.array(grid.weights), f"quadrature({n_theta}x{n_phi})", "quadrature")

    @classmethod
    def uniform(cls, directions, total: float = 4.0 * math.pi, label: str = "uniform") -> SettingEnsemble:
        """Equal weights ``total / N`` (the convention for settings not taken from a rule)."""
        pts = np.array([d.xyz if isinstance(d, Direction) else d for d in directions], dtype=float)
        return cls(pts, np.full(len(pts), total / len(pts)), label, "uniform")

    @classmethod
    def coplanar(cls, n_phi: int) -> SettingEnsemble:
        """``n_phi`` evenly spaced equatorial settings with weights ``2 pi / n_phi``."""
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        pts = angles_to_points(np.full(n_phi, np.pi / 2.0), phi)
        pts[:, 2] = 0.0
        return cls(pts, np.full(n_phi, 2.0 * np.pi / n_phi), f"coplanar({n_phi})", "uniform")

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> SettingEnsemble:
        """Area-uniform random settings with uniform weights."""
        u = rng.uniform(-1.0, 1.0, n)
        phi = rng.uniform(0.0, 2.0 * np.pi, n)
        return cls.uniform(angles_to_points(np.arccos(u), phi), label=f"random({n})")


def load_ensemble(path) -> SettingEnsemble:
    """Read ``theta phi [weight]`` lines; ``#`` starts a comment.

    Weights must be given on every line or on none (then uniform 4 pi / N).
    """
    path = Path(path)
    thetas, phis, weights = [], [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        if len(fields) not in (2, 3):
            raise EnsembleFileError(f"{path}:{lineno}: expected 'theta phi [weight]', got {body!r}")
        try:
            values = [float(x) for x in fields]
            d = make_direction(values[0], values[1])
        except ValueError as exc:
            raise EnsembleFileError(f"{path}:{lineno}: {exc}") from None
        thetas.append(d.theta)
        phis.append(d.phi)
        weights.append(values[2] if len(values) == 3 else None)
        if len(values) == 3 and not values[2] > 0:
            raise EnsembleFileError(f"{path}:{lineno}: weight must be positive")
    if not thetas:
        raise EnsembleFileError(f"{path}: no settings found")
    given = [w is not None for w in weights]
    if any(given) and not all(given):
        first = given.index(not given[0]) + 1
        raise EnsembleFileError(f"{path}: weights must be given on all lines or none (see setting {first})")
    pts = angles_to_points(np.array(thetas), np.array(phis))
    if all(given):
        return SettingEnsemble(pts, np.array(weights, dtype=float), path.name, "given")
    return SettingEnsemble(pts, np.full(len(pts), 4.0 * math.pi / len(pts)), path.name, "uniform")


@dataclass(frozen=True)
class DiscreteStrategy:
    signs: tuple[int, ...]

    def __post_init__(self):
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError("discrete strategy entries must be +1 or -1")

    def __len__(self) -> int:
        return len(self.signs)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.signs, dtype=float)


def discrete_quantum_value(ens_a: SettingEnsemble, ens_b: SettingEnsemble, v: float) -> float:
    v = check_visibility(v)
    c = ens_a.points @ ens_b.points.T
    # sum over the four outcome pairs of ((1 - m m' v c) / 4)^2
    per_pair = 0.25 * (1.0 + v * v * c * c)
    return float(np.sum(ens_a.weights * np.sum(per_pair * ens_b.weights, axis=1)))


def _quantum_coefficients(ens_a, ens_b) -> tuple[float, float]:
    c = ens_a.points @ ens_b.points.T
    c0 = 0.25 * ens_a.total_weight * ens_b.total_weight
    c2 = 0.25 * float(np.sum(ens_a.weights * np.sum(ens_b.weights * c * c, axis=1)))
    return c0, c2


def discrete_lhv_value(ens_a: SettingEnsemble, ens_b: SettingEnsemble, v: float, ia, ib) -> float:
    """Overlap for one pair of local responses given as values in [-1, 1] at the settings."""
    v = check_visibility(v)
    x = np.asarray(ia, dtype=float) * ens_a.weights @ ens_a.points
    y = np.asarray(ib, dtype=float) * ens_b.weights @ ens_b.points
    return ens_a.total_weight * ens_b.total_weight / 4.0 - v / 4.0 * float(x @ y)


def discrete_model_value(ens_a: SettingEnsemble, ens_b: SettingEnsemble, v: float, model: LhvModel) -> float:
    """Overlap of a mixed LHV model restricted to the ensembles' settings."""
    return sum(
        w * discrete_lhv_value(ens_a, ens_b, v, sa(ens_a.points), sb(ens_b.points))
        for w, sa, sb in model.ensemble
    )


def best_response(ens: SettingEnsemble, x: np.ndarray) -> np.ndarray:
    """Signs maximizing ``-x . sum_j w_j t_j b_j``; ties resolve to -1."""
    return np.where(ens.points @ x >= 0.0, -1.0, 1.0)


@dataclass(frozen=True)
class DiscreteMax:
    value: float
    strategy_a: DiscreteStrategy
    strategy_b: DiscreteStrategy
    method: str
    exact: bool
    slope: float  # coefficient of v in the LHV value at the maximizer


def _result(ens_a, ens_b, v, s, t, method, exact) -> DiscreteMax:
    x = s * ens_a.weights @ ens_a.points
    y = t * ens_b.weights @ ens_b.points
    slope = -0.25 * float(x @ y)
    return DiscreteMax(
        discrete_lhv_value(ens_a, ens_b, v, s, t),
        DiscreteStrategy(tuple(int(x) for x in s)),
        DiscreteStrategy(tuple(int(x) for x in t)),
        method,
        exact,
        slope,
    )


def _sign_block(start: int, stop: int, n: int) -> np.ndarray:
    """Rows ``k in [start, stop)`` as sign vectors of length n with s_0 = +1.

    Bit ``i - 1`` of ``k`` set means ``s_i = -1`` for ``i >= 1``.
    """
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (k >> np.arange(n - 1, dtype=np.int64)[None, :]) & 1
    return np.hstack([np.ones((len(k), 1)), 1.0 - 2.0 * bits])


def _brute_force(ens_a, ens_b, v, block=4096):
    swap = len(ens_a) > len(ens_b)
    outer, inner = (ens_b, ens_a) if swap else (ens_a, ens_b)
    n = len(outer)
    wa = outer.weights[:, None] * outer.points
    best_val, best_s = -math.inf, None
    # global sign flip s, t -> -s, -t leaves the value unchanged, so fix s_0 = +1
    for start in range(0, 2 ** (n - 1), block):
        signs = _sign_block(start, min(start + block, 2 ** (n - 1)), n)
        x = signs @ wa
        # inner optimum: max_t -x . Y(t) = sum_j w_j |b_j . x|
        vals = np.sum(np.abs(x @ inner.points.T) * inner.weights, axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_s = vals[k], signs[k]
    best_t = best_response(inner, best_s @ wa)
    s, t = (best_t, best_s) if swap else (best_s, best_t)
    return s, t


def _alternate(ens_a, ens_b, s, max_iter=1000):
    """Coordinate ascent between the two closed-form best responses."""
    prev = -math.inf
    for _ in range(max_iter):
        t = best_response(ens_b, s * ens_a.weights @ ens_a.points)
        s = best_response(ens_a, t * ens_b.weights @ ens_b.points)
        val = discrete_lhv_value(ens_a, ens_b, 1.0, s, t)
        if val <= prev:
            break
        prev = val
    return prev, s, t


def _alternating(ens_a, ens_b, restarts, seed, threads):
    rng = np.random.default_rng(seed)
    starts = [np.ones(len(ens_a))] + [rng.choice([-1.0, 1.0], len(ens_a)) for _ in range(restarts)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(lambda s0: _alternate(ens_a, ens_b, s0), starts))
    else:
        runs = [_alternate(ens_a, ens_b, s0) for s0 in starts]
    # winner: highest value, then lowest restart index
    k = max(range(len(runs)), key=lambda i: (runs[i][0], -i))
    return runs[k][1], runs[k][2]


def discrete_lhv_max(
    ens_a: SettingEnsemble,
    ens_b: SettingEnsemble,
    v: float,
    method: str = "brute-force",
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    threads: int = 1,
) -> DiscreteMax:
    """Largest LHV overlap over deterministic sign strategies.

    ``"brute-force"`` is exact and enumerates the smaller side's sign vectors
    (``N_a + N_b <= 26``).  ``"alternating"`` starts from all +1 plus
    ``restarts`` seeded random sign vectors and returns a lower bound.
    """
    v = check_visibility(v)
    if method == "brute-force":
        if len(ens_a) + len(ens_b) > BRUTE_FORCE_LIMIT:
            raise ValueError(
                f"brute force limited to N_a + N_b <= {BRUTE_FORCE_LIMIT}, got {len(ens_a)} + {len(ens_b)}"
            )
        s, t = _brute_force(ens_a, ens_b, v)
        return _result(ens_a, ens_b, v, s, t, method, True)
    if method == "alternating":
        s, t = _alternating(ens_a, ens_b, restarts, seed, threads)
        return _result(ens_a, ens_b, v, s, t, method, False)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def auto_method(ens_a: SettingEnsemble, ens_b: SettingEnsemble) -> str:
    return "brute-force" if len(ens_a) + len(ens_b) <= BRUTE_FORCE_LIMIT else "alternating"


@dataclass(frozen=True)
class DiscreteThreshold:
    threshold: float  # math.inf when no v <= 1 gives a violation
    quantum_c0: float
    quantum_c2: float
    lhv_c0: float
    lhv_c1: float
    method: str
    exact: bool

    @property
    def violated(self) -> bool:
        return math.isfinite(self.threshold)


def discrete_threshold(
    ens_a: SettingEnsemble,
    ens_b: SettingEnsemble,
    method: str | None = None,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    threads: int = 1,
    n_v: int = 21,
) -> DiscreteThreshold:
    """Smallest visibility at which the discrete quantum value beats the LHV maximum.

    The LHV maximum is computed on ``n_v`` visibilities in [0, 1]; its upper
    envelope is the line with the largest slope.  Returns ``inf`` when the
    crossing lies at or above 1.
    """
    method = method or auto_method(ens_a, ens_b)
    q0, q2 = _quantum_coefficients(ens_a, ens_b)
    l0 = ens_a.total_weight * ens_b.total_weight / 4.0
    slope = max(
        discrete_lhv_max(ens_a, ens_b, float(v), method, restarts, seed, threads).slope
        for v in np.linspace(0.0, 1.0, n_v)
    )
    # q0 + q2 v^2 = l0 + slope v; q0 equals l0 analytically
    disc = slope * slope - 4.0 * q2 * (q0 - l0)
    v_star = math.inf
    if q2 > 0.0 and disc >= 0.0:
        v_star = (slope + math.sqrt(disc)) / (2.0 * q2)
    # a crossing at v = 1 up to rounding is not a violation
    if not v_star < 1.0 - THRESHOLD_RTOL:
        v_star = math.inf
    return DiscreteThreshold(v_star, q0, q2, l0, slope, method, method == "brute-force")
