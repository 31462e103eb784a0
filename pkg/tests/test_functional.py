import json
import math

import numpy as np
import pytest

from functional_bell.functional import (
    CHAINED_LIMIT,
    COPLANAR_THRESHOLD,
    FULL_SPHERE_THRESHOLD,
    GISIN_THRESHOLD,
    coplanar_lhv_numeric,
    coplanar_quantum_numeric,
    evaluate_coplanar,
    evaluate_inequality,
    lhv_bound,
    numeric_threshold,
    quantum_value,
    threshold_visibility,
)

TWO_PI_SQ = (2 * math.pi) ** 2


def test_evaluate_sphere_examples():
    r = evaluate_inequality("sphere", 1.0)
    assert r.quantum_value == pytest.approx(52.63789, abs=5e-6)
    assert r.lhv_bound == pytest.approx(49.34802, abs=5e-6)
    assert r.margin == pytest.approx(3.28987, abs=5e-6)
    assert r.violation
    assert r.margin_ratio == pytest.approx(1 / 3 - 1 / 4, rel=1e-12)

    r = evaluate_inequality("full-sphere", 0.75)
    assert abs(r.margin) < 1e-10
    assert not r.violation

    r = evaluate_inequality("sphere", 0.5)
    assert r.margin < 0 and not r.violation


def test_report_numeric_fields():
    r = evaluate_inequality("sphere", 0.9, order=(16, 32))
    assert abs(r.quantum_numeric - r.quantum_value) < 1e-9
    assert abs(r.lhv_numeric - r.lhv_bound) < 1e-9
    assert r.quad_error_estimate < 1e-9
    d = r.to_dict()
    assert json.loads(json.dumps(d))["grid_order"] == [16, 32]
    assert d["threshold_v"] == 0.75


def test_evaluate_with_optimizer():
    r = evaluate_inequality("sphere", 1.0, optimize=True, seed=0, budget=1500)
    assert r.lhv_best_found <= r.lhv_bound + 1e-6
    assert r.lhv_best_found == pytest.approx(r.lhv_bound, abs=1e-4)


def test_threshold_examples():
    assert threshold_visibility("full-sphere") == 0.75
    assert threshold_visibility("sphere") == 0.75
    assert threshold_visibility("coplanar") == pytest.approx(0.810569469, abs=1e-9)
    with pytest.raises(ValueError):
        threshold_visibility("torus")


def test_evaluate_coplanar_examples():
    r = evaluate_coplanar(8 / math.pi**2)
    assert abs(r.margin) < 1e-9 and not r.violation
    assert evaluate_coplanar(1.0).margin > 0
    assert evaluate_coplanar(0.75).margin < 0
    with pytest.raises(ValueError):
        evaluate_coplanar(1.0, n_phi=4)


def test_threshold_ordering():
    assert FULL_SPHERE_THRESHOLD < GISIN_THRESHOLD < COPLANAR_THRESHOLD < CHAINED_LIMIT
    assert GISIN_THRESHOLD == math.pi / 4


@pytest.mark.parametrize("geometry", ["sphere", "coplanar"])
def test_margin_shape(geometry):
    # margin is a convex quadratic in v vanishing at 0 and at the threshold,
    # so it falls to its minimum at half the threshold and rises from there
    vs = np.linspace(0, 1, 101)
    margins = np.array([quantum_value(geometry, v) - lhv_bound(geometry, v) for v in vs])
    t = threshold_visibility(geometry)
    assert abs(margins[0]) < 1e-12
    vmin = t / 2
    rising = vs >= vmin
    assert np.all(np.diff(margins[rising]) > 0)
    assert np.all(np.diff(margins[vs <= vmin]) < 0)
    above = vs > t + 1e-12
    below = (vs < t - 1e-12) & (vs > 0)
    assert np.all(margins[above] > 0) and np.all(margins[below] < 0)


def test_coplanar_closed_forms_against_direct_quadrature():
    for v in (0.0, 0.4, 8 / math.pi**2, 1.0):
        assert coplanar_quantum_numeric(v, 64) == pytest.approx(math.pi**2 * (1 + v * v / 2), abs=1e-10)
        value, angle = coplanar_lhv_numeric(v, 64)
        assert value == pytest.approx(math.pi**2 + 4 * v, abs=1e-8)
        if v > 0:
            # best half-circle pair is the opposite one
            assert abs(angle - math.pi) < 1e-4


def test_numeric_thresholds():
    assert abs(numeric_threshold("sphere") - 0.75) < 1e-9
    assert abs(numeric_threshold("coplanar", 64) - 8 / math.pi**2) < 1e-6


def test_analytic_numeric_agreement_finer_order():
    r = evaluate_inequality("sphere", 0.9, order=(32, 64))
    tol = max(r.quad_error_estimate, 1e-12)
    assert abs(r.quantum_numeric - r.quantum_value) <= tol
    assert abs(r.lhv_numeric - r.lhv_bound) <= tol


def test_bad_inputs():
    with pytest.raises(ValueError):
        evaluate_inequality("sphere", 1.01)
    with pytest.raises(ValueError):
        evaluate_inequality("cube", 0.5)
