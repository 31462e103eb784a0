"""Local hidden variable side of the functional inequality.

A local model is a finite mixture of pairs of response functions
``I(n) = sum_m m P(m | n, lambda)`` with values in [-1, 1].  Its overlap with the
quantum prediction reduces to ``(2 pi)^2 - (v pi / 3) sum_k alpha^a_k alpha^b_k``
where ``alpha`` are the coordinates of each response function in the
orthonormal basis ``sqrt(3 / 4 pi) n_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import sph_harm_y

from .quantum import OUTCOME_PAIRS, TWO_PI_SQ, check_visibility, double_quadrature, joint_probability, pairwise_cos
from .sphere import Direction, QuadratureGrid, build_grid, points_to_angles

BASIS_NORM = math.sqrt(3.0 / (4.0 * math.pi))
KINDS = ("hemisphere", "linear", "harmonic", "tabulated")
FAMILIES = ("hemisphere-pair", "harmonic")


def real_harmonics(degree: int, points: np.ndarray) -> np.ndarray:
    """Orthonormal real spherical harmonics up to ``degree``, shape (..., (degree+1)^2).

    Column ``l*l + l + m`` holds Y_lm; for l = 1 the columns are
    proportional to (y, z, x).
    """
    theta, phi = points_to_angles(points)
    cols = []
    for l in range(degree + 1):
        for m in range(-l, l + 1):
            y = sph_harm_y(l, abs(m), theta, phi)
            if m == 0:
                cols.append(y.real)
            elif m > 0:
                cols.append(math.sqrt(2.0) * (-1) ** m * y.real)
            else:
                cols.append(math.sqrt(2.0) * (-1) ** m * y.imag)
    return np.stack(cols, axis=-1)


def _sign(x):
    # sign(0) = +1
    return np.where(x >= 0.0, 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class ResponseStrategy:
    """Deterministic local response ``I: S^2 -> [-1, 1]``.

    Build instances with :func:`hemisphere`, :func:`linear`, :func:`harmonic`,
    :func:`tabulated` or :func:`constant`.
    """

    kind: str
    axis: Direction | None = None
    coeffs: np.ndarray | None = None
    table_grid: QuadratureGrid | None = None
    table_values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")

    @property
    def degree(self) -> int:
        if self.kind == "harmonic":
            return math.isqrt(len(self.coeffs)) - 1
        return 1

    def raw(self, points) -> np.ndarray:
        """Unclipped values at (..., 3) unit vectors."""
        points = np.asarray(points, dtype=float)
        if self.kind in ("hemisphere", "linear"):
            c = self.axis
            proj = points[..., 0] * c.n1 + points[..., 1] * c.n2 + points[..., 2] * c.n3
            return _sign(proj) if self.kind == "hemisphere" else proj
        if self.kind == "harmonic":
            return real_harmonics(self.degree, points) @ self.coeffs
        flat = points.reshape(-1, 3)
        nearest = np.argmax(flat @ self.table_grid.points.T, axis=1)
        return self.table_values[nearest].reshape(points.shape[:-1])

    def __call__(self, points) -> np.ndarray:
        return np.clip(self.raw(points), -1.0, 1.0)

    def clip_violation(self, grid: QuadratureGrid) -> float:
        """Largest amount by which the unclipped function leaves [-1, 1] on ``grid``."""
        return float(max(0.0, np.max(np.abs(self.raw(grid.points))) - 1.0))

    def adapted_grid(self, grid: QuadratureGrid) -> QuadratureGrid:
        """Hemisphere responses get the grid rotated so their kink lies on the panel split."""
        if self.kind == "hemisphere":
            return grid.aligned_with(self.axis)
        return grid


def hemisphere(c: Direction) -> ResponseStrategy:
    return ResponseStrategy("hemisphere", axis=c)


def linear(c: Direction) -> ResponseStrategy:
    return ResponseStrategy("linear", axis=c)


def harmonic(coeffs) -> ResponseStrategy:
    coeffs = np.asarray(coeffs, dtype=float)
    if math.isqrt(len(coeffs)) ** 2 != len(coeffs) or len(coeffs) == 0:
        raise ValueError(f"harmonic strategy needs (L+1)^2 coefficients, got {len(coeffs)}")
    return ResponseStrategy("harmonic", coeffs=coeffs)


def constant(value: float) -> ResponseStrategy:
    return harmonic([value * 2.0 * math.sqrt(math.pi)])


def tabulated(grid: QuadratureGrid, values) -> ResponseStrategy:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.weights.shape:
        raise ValueError("tabulated values must match the grid's node count")
    return ResponseStrategy("tabulated", table_grid=grid, table_values=values)


@dataclass(frozen=True)
class ProjectionCoefficients:
    alpha: tuple[float, float, float]

    @property
    def norm(self) -> float:
        return math.sqrt(sum(a * a for a in self.alpha))

    def dot(self, other: ProjectionCoefficients) -> float:
        return sum(a * b for a, b in zip(self.alpha, other.alpha))


def project(strategy: ResponseStrategy, grid: QuadratureGrid) -> ProjectionCoefficients:
    """Coordinates of ``strategy`` along ``sqrt(3/4pi) n_k``, k = 1, 2, 3."""
    g = strategy.adapted_grid(grid)
    weighted = g.weights * strategy(g.points)
    alpha = BASIS_NORM * np.sum(weighted[:, None] * g.points, axis=0)
    return ProjectionCoefficients(tuple(float(x) for x in alpha))


def projection_error(strategy: ResponseStrategy, grid: QuadratureGrid) -> float:
    """Change in the coefficients when the grid order is doubled."""
    a = np.array(project(strategy, grid).alpha)
    b = np.array(project(strategy, grid.refined()).alpha)
    return float(np.linalg.norm(a - b))


def projection_norm_bound() -> float:
    """Largest possible coefficient norm, 2 pi sqrt(3 / 4 pi) = sqrt(3 pi)."""
    return 2.0 * math.pi * BASIS_NORM


@dataclass(frozen=True)
class LhvModel:
    """Finite mixture of (weight, response on side a, response on side b)."""

    ensemble: tuple[tuple[float, ResponseStrategy, ResponseStrategy], ...]

    def __post_init__(self):
        object.__setattr__(self, "ensemble", tuple(tuple(e) for e in self.ensemble))
        if not self.ensemble:
            raise ValueError("empty LHV ensemble")
        weights = [w for w, _, _ in self.ensemble]
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights must be non-negative and sum to 1, got {weights}")

    @classmethod
    def pair(cls, a: ResponseStrategy, b: ResponseStrategy) -> LhvModel:
        return cls(((1.0, a, b),))

    def prob(self, m: int, mp: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Joint probability at broadcastable (..., 3) setting arrays."""
        total = 0.0
        for w, sa, sb in self.ensemble:
            total = total + w * 0.25 * (1.0 + m * sa(a)) * (1.0 + mp * sb(b))
        return total

    def sample_outcomes(self, a: np.ndarray, b: np.ndarray, rng: np.random.Generator):
        """Pick lambda by weight, then each outcome from its local response."""
        u = rng.random((3, len(a)))
        if len(self.ensemble) == 1:
            _, sa, sb = self.ensemble[0]
            ia, ib = sa(a), sb(b)
        else:
            cum = np.cumsum([w for w, _, _ in self.ensemble])
            which = np.minimum(np.searchsorted(cum, u[0], side="right"), len(cum) - 1)
            ia = np.empty(len(a))
            ib = np.empty(len(a))
            for k, (_, sa, sb) in enumerate(self.ensemble):
                sel = which == k
                if sel.any():
                    ia[sel] = sa(a[sel])
                    ib[sel] = sb(b[sel])
        m = np.where(u[1] < 0.5 * (1.0 + ia), 1, -1).astype(np.int8)
        mp = np.where(u[2] < 0.5 * (1.0 + ib), 1, -1).astype(np.int8)
        return m, mp

    def describe(self) -> str:
        parts = []
        for w, sa, sb in self.ensemble:
            parts.append(f"{w:.6g}*({_describe(sa)}, {_describe(sb)})")
        return "lhv[" + " + ".join(parts) + "]"


def _describe(s: ResponseStrategy) -> str:
    if s.axis is not None:
        return f"{s.kind}(theta={s.axis.theta:.9g}, phi={s.axis.phi:.9g})"
    if s.kind == "harmonic":
        return f"harmonic(L={s.degree})"
    return s.kind


def lhv_functional_value(model: LhvModel, v: float, grid: QuadratureGrid) -> float:
    """Overlap with the quantum prediction via projection coefficients (fast path)."""
    v = check_visibility(v)
    corr = 0.0
    for w, sa, sb in model.ensemble:
        corr += w * project(sa, grid).dot(project(sb, grid))
    return TWO_PI_SQ - v * math.pi / 3.0 * corr


def lhv_functional_error(model: LhvModel, v: float, grid: QuadratureGrid) -> float:
    """Quadrature error estimate of :func:`lhv_functional_value` from an order doubling."""
    return abs(lhv_functional_value(model, v, grid) - lhv_functional_value(model, v, grid.refined()))


def lhv_functional_value_direct(model: LhvModel, v: float, grid: QuadratureGrid) -> float:
    """Overlap by direct four-fold quadrature of ``sum_{m,m'} P_QM P_HV`` (oracle path)."""
    v = check_visibility(v)
    total = []
    for w, sa, sb in model.ensemble:
        ga, gb = sa.adapted_grid(grid), sb.adapted_grid(grid)

        def kernel(a, b, sa=sa, sb=sb):
            c = pairwise_cos(a, b)
            ia = sa(a)[:, None]
            ib = sb(b)[None, :]
            acc = np.zeros_like(c)
            for m, mp in OUTCOME_PAIRS:
                acc += joint_probability(m, mp, c, v) * (0.5 * (1.0 + m * ia)) * (0.5 * (1.0 + mp * ib))
            return acc

        total.append(w * double_quadrature(kernel, ga, gb))
    return float(np.sum(total))


def lhv_bound_analytic(v: float) -> float:
    v = check_visibility(v)
    return TWO_PI_SQ * (1.0 + v / 4.0)


@dataclass
class LhvOptimum:
    model: LhvModel
    value: float
    evaluations: int
    final_step: float
    converged: bool
    error_estimate: float
    start_values: list[float] = field(default_factory=list)


def _unit(x: np.ndarray) -> Direction:
    if not np.any(x):
        x = np.array([0.0, 0.0, 1.0])
    return Direction.from_vector(x)


def _family_model(family: str, x: np.ndarray, degree: int) -> LhvModel:
    if family == "hemisphere-pair":
        return LhvModel.pair(hemisphere(_unit(x[:3])), hemisphere(_unit(x[3:])))
    k = (degree + 1) ** 2
    return LhvModel.pair(harmonic(x[:k]), harmonic(x[k:]))


def optimize_lhv(
    v: float,
    family: str = "hemisphere-pair",
    grid: QuadratureGrid | None = None,
    budget: int = 2000,
    seed: int = 0,
    degree: int = 1,
    n_starts: int = 3,
) -> LhvOptimum:
    """Maximize the overlap over a strategy family with restarted Nelder-Mead.

    ``budget`` is the total number of objective evaluations, split evenly over
    ``n_starts`` seeded starting points.  The reported ``final_step`` is the
    largest coordinate spread of the winning run's final simplex.
    """
    v = check_visibility(v)
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if budget < 100:
        raise ValueError("budget must be at least 100 evaluations")
    if family == "hemisphere-pair":
        grid = grid or build_grid(16, 32)
        dim = 6

        def objective(x):
            return -lhv_functional_value(_family_model(family, x, degree), v, grid)
    else:
        # clipped harmonics have kinks off the panel split; use a finer default rule
        grid = grid or build_grid(32, 64)
        k = (degree + 1) ** 2
        dim = 2 * k
        basis = real_harmonics(degree, grid.points)
        moments = BASIS_NORM * grid.weights[:, None] * grid.points

        def objective(x):
            alpha_a = np.clip(basis @ x[:k], -1.0, 1.0) @ moments
            alpha_b = np.clip(basis @ x[k:], -1.0, 1.0) @ moments
            return -(TWO_PI_SQ - v * math.pi / 3.0 * float(alpha_a @ alpha_b))

    rng = np.random.default_rng(seed)
    starts = rng.standard_normal((n_starts, dim))
    per_start = budget // n_starts

    best = None
    evaluations = 0
    start_values = []
    for x0 in starts:
        res = minimize(
            objective, x0, method="Nelder-Mead",
            options={"maxfev": per_start, "xatol": 1e-10, "fatol": 1e-13},
        )
        evaluations += res.nfev
        start_values.append(float(-res.fun))
        if best is None or -res.fun > -best.fun:
            best = res
    simplex = best.final_simplex[0]
    step = float(np.max(np.ptp(simplex, axis=0)))
    model = _family_model(family, best.x, degree)
    value = lhv_functional_value(model, v, grid)
    error = lhv_functional_error(model, v, grid)
    return LhvOptimum(model, value, evaluations, step, bool(best.success), error, start_values)
