"""The functional inequality: quantum value against the LHV bound.

Full sphere (measure dOmega on each side)::

    quantum  (2 pi)^2 (1 + v^2 / 3)
    LHV      (2 pi)^2 (1 + v / 4)          threshold 3/4

Coplanar settings (equator, measure dphi on each side)::

    quantum  pi^2 (1 + v^2 / 2)
    LHV      pi^2 + 4 v                    threshold 8 / pi^2

The coplanar closed forms are cross-checked against direct circle
quadrature in :func:`coplanar_quantum_numeric` and
:func:`coplanar_lhv_numeric` (see ``tests/test_functional.py``).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .lhv import LhvModel, hemisphere, lhv_bound_analytic, lhv_functional_value, optimize_lhv
from .quantum import (
    OUTCOME_PAIRS,
    TWO_PI_SQ,
    check_visibility,
    double_quadrature,
    joint_probability,
    norm_sq_qm_analytic,
    norm_sq_qm_numeric,
    pairwise_cos,
)
from .sphere import Z_AXIS, QuadratureGrid, build_circle, build_grid

FULL_SPHERE_THRESHOLD = 0.75
COPLANAR_THRESHOLD = 8.0 / math.pi**2
GISIN_THRESHOLD = math.pi / 4.0
CHAINED_LIMIT = 1.0
REFERENCE_THRESHOLDS = {
    "full-sphere": FULL_SPHERE_THRESHOLD,
    "gisin": GISIN_THRESHOLD,
    "coplanar": COPLANAR_THRESHOLD,
    "chained-limit": CHAINED_LIMIT,
}

GEOMETRIES = ("sphere", "coplanar")
_ALIASES = {"sphere": "sphere", "full-sphere": "sphere", "coplanar": "coplanar"}


def _geometry(name: str) -> str:
    try:
        return _ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown geometry {name!r}; expected 'sphere' or 'coplanar'") from None


def threshold_visibility(geometry: str) -> float:
    """Visibility where the quadratic quantum term meets the linear LHV term."""
    if _geometry(geometry) == "sphere":
        return FULL_SPHERE_THRESHOLD
    return COPLANAR_THRESHOLD


def quantum_value(geometry: str, v: float) -> float:
    v = check_visibility(v)
    if _geometry(geometry) == "sphere":
        return norm_sq_qm_analytic(v)
    return math.pi**2 * (1.0 + v * v / 2.0)


def lhv_bound(geometry: str, v: float) -> float:
    v = check_visibility(v)
    if _geometry(geometry) == "sphere":
        return lhv_bound_analytic(v)
    return math.pi**2 + 4.0 * v


@dataclass(frozen=True)
class InequalityReport:
    geometry: str
    v: float
    quantum_value: float
    quantum_numeric: float
    lhv_bound: float
    lhv_numeric: float
    lhv_best_found: float | None
    margin: float
    margin_ratio: float
    threshold_v: float
    violation: bool
    grid_order: tuple[int, int] | int
    quad_error_estimate: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.grid_order, tuple):
            d["grid_order"] = list(self.grid_order)
        return d


def _report(geometry, v, q, qn, lb, ln, best, order, err) -> InequalityReport:
    margin = q - lb
    return InequalityReport(
        geometry=geometry,
        v=v,
        quantum_value=q,
        quantum_numeric=qn,
        lhv_bound=lb,
        lhv_numeric=ln,
        lhv_best_found=best,
        margin=margin,
        margin_ratio=margin / TWO_PI_SQ,
        threshold_v=threshold_visibility(geometry),
        violation=bool(margin > err),
        grid_order=order,
        quad_error_estimate=err,
    )


def _sphere_numeric(v: float, grid: QuadratureGrid) -> tuple[float, float]:
    """Direct quantum norm and the overlap of the anti-aligned hemisphere pair."""
    pair = LhvModel.pair(hemisphere(Z_AXIS), hemisphere(-Z_AXIS))
    return norm_sq_qm_numeric(v, grid), lhv_functional_value(pair, v, grid)


def evaluate_inequality(
    geometry: str,
    v: float,
    order=(16, 32),
    optimize: bool = False,
    seed: int = 0,
    budget: int = 2000,
) -> InequalityReport:
    """Assemble the quantum value, LHV bound and margin for one visibility.

    Analytic values are reported; the numeric quadrature at ``order`` and at
    twice ``order`` bounds ``quad_error_estimate``.  With ``optimize`` the
    hemisphere-pair optimizer is run and its best value is recorded.
    """
    geometry = _geometry(geometry)
    v = check_visibility(v)
    if geometry == "coplanar":
        n_phi = order if isinstance(order, int) else order[-1]
        return evaluate_coplanar(v, n_phi, optimize=optimize)
    n_theta, n_phi = order
    grid = build_grid(n_theta, n_phi)
    q, lb = quantum_value(geometry, v), lhv_bound(geometry, v)
    qn, ln = _sphere_numeric(v, grid)
    qn2, ln2 = _sphere_numeric(v, grid.refined())
    err = max(abs(qn - qn2), abs(qn - q), abs(ln - ln2), abs(ln - lb))
    best = None
    if optimize:
        best = optimize_lhv(v, "hemisphere-pair", grid, budget=budget, seed=seed).value
    return _report(geometry, v, q, qn, lb, ln, best, (n_theta, n_phi), err)


def coplanar_quantum_numeric(v: float, n_phi: int) -> float:
    """Direct double-circle quadrature of ``sum_{m,m'} P_QM^2``."""
    v = check_visibility(v)
    grid = build_circle(n_phi)

    def kernel(a, b):
        c = pairwise_cos(a, b)
        acc = np.zeros_like(c)
        for m, mp in OUTCOME_PAIRS:
            p = joint_probability(m, mp, c, v)
            acc += p * p
        return acc

    return double_quadrature(kernel, grid, grid)


def _coplanar_pair_value(v: float, n_phi: int, gamma_a: float, gamma_b: float) -> float:
    """Overlap of half-circle responses ``sign(cos(phi - gamma))`` with P_QM.

    Each side uses Gauss-Legendre panels split at its own kinks, so the
    integrals are exact to rounding.
    """
    ga = build_circle(n_phi, "split", offset=gamma_a)
    gb = build_circle(n_phi, "split", offset=gamma_b)
    ca = np.array([math.cos(gamma_a), math.sin(gamma_a), 0.0])
    cb = np.array([math.cos(gamma_b), math.sin(gamma_b), 0.0])

    def kernel(a, b):
        c = pairwise_cos(a, b)
        ia = np.where(a @ ca >= 0.0, 1.0, -1.0)[:, None]
        ib = np.where(b @ cb >= 0.0, 1.0, -1.0)[None, :]
        acc = np.zeros_like(c)
        for m, mp in OUTCOME_PAIRS:
            acc += joint_probability(m, mp, c, v) * (0.5 * (1.0 + m * ia)) * (0.5 * (1.0 + mp * ib))
        return acc

    return double_quadrature(kernel, ga, gb)


def coplanar_lhv_numeric(v: float, n_phi: int) -> tuple[float, float]:
    """Best half-circle pair overlap, maximized over the relative axis angle.

    Returns ``(value, angle)``.
    """
    v = check_visibility(v)
    scan = 2.0 * math.pi * np.arange(64) / 64
    values = [_coplanar_pair_value(v, n_phi, 0.0, d) for d in scan]
    k = int(np.argmax(values))
    step = scan[1]
    res = minimize_scalar(
        lambda d: -_coplanar_pair_value(v, n_phi, 0.0, d),
        bounds=(scan[k] - step, scan[k] + step), method="bounded", options={"xatol": 1e-10},
    )
    if -res.fun >= values[k]:
        return float(-res.fun), float(res.x)
    return float(values[k]), float(scan[k])


def numeric_threshold(geometry: str, order=(16, 32)) -> float:
    """Zero crossing of the margin built only from numeric quadrature.

    Both sides are polynomials in v (quadratic and linear), so two evaluations
    per side fix their coefficients.
    """
    geometry = _geometry(geometry)
    if geometry == "sphere":
        grid = build_grid(*order)
        q0, l0 = _sphere_numeric(0.0, grid)
        q1, l1 = _sphere_numeric(1.0, grid)
    else:
        n_phi = order if isinstance(order, int) else order[-1]
        q0, q1 = coplanar_quantum_numeric(0.0, n_phi), coplanar_quantum_numeric(1.0, n_phi)
        l0, l1 = coplanar_lhv_numeric(0.0, n_phi)[0], coplanar_lhv_numeric(1.0, n_phi)[0]
    c2, c1, d = q1 - q0, l1 - l0, q0 - l0
    disc = c1 * c1 - 4.0 * c2 * d
    if c2 <= 0.0 or disc < 0.0:
        return math.inf
    # upper root of c2 v^2 - c1 v + d = 0; d vanishes up to quadrature error
    return (c1 + math.sqrt(disc)) / (2.0 * c2)


def evaluate_coplanar(v: float, n_phi: int = 64, optimize: bool = False) -> InequalityReport:
    """Coplanar report; ``optimize`` records the numerically maximized half-circle pair."""
    if int(n_phi) < 8:
        raise ValueError(f"n_phi={n_phi} below minimum 8")
    n_phi = int(n_phi)
    v = check_visibility(v)
    q, lb = quantum_value("coplanar", v), lhv_bound("coplanar", v)
    qn, qn2 = coplanar_quantum_numeric(v, n_phi), coplanar_quantum_numeric(v, 2 * n_phi)
    ln = _coplanar_pair_value(v, n_phi, 0.0, math.pi)
    ln2 = _coplanar_pair_value(v, 2 * n_phi, 0.0, math.pi)
    err = max(abs(qn - qn2), abs(qn - q), abs(ln - ln2), abs(ln - lb))
    best = coplanar_lhv_numeric(v, n_phi)[0] if optimize else None
    return _report("coplanar", v, q, qn, lb, ln, best, n_phi, err)
