import math

import numpy as np
import pytest

from functional_bell.lhv import (
    LhvModel,
    constant,
    harmonic,
    hemisphere,
    lhv_bound_analytic,
    lhv_functional_error,
    lhv_functional_value,
    lhv_functional_value_direct,
    linear,
    optimize_lhv,
    project,
    projection_error,
    projection_norm_bound,
    real_harmonics,
    tabulated,
)
from functional_bell.sphere import Z_AXIS, Direction, build_grid, random_rotation

TWO_PI_SQ = (2 * math.pi) ** 2
GRID = build_grid(16, 32)


def _random_direction(rng):
    return Direction.from_vector(rng.standard_normal(3))


def _random_strategy(rng):
    kind = rng.integers(3)
    if kind == 0:
        return hemisphere(_random_direction(rng))
    if kind == 1:
        return linear(_random_direction(rng))
    return harmonic(rng.standard_normal(4) * rng.uniform(0.2, 3.0))


def _random_model(rng, max_terms=4):
    k = int(rng.integers(1, max_terms + 1))
    w = rng.random(k)
    w /= w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return LhvModel(tuple((float(wi), _random_strategy(rng), _random_strategy(rng)) for wi in w))


def test_projection_examples():
    np.testing.assert_allclose(project(hemisphere(Z_AXIS), GRID).alpha, (0, 0, math.sqrt(3 * math.pi)), atol=1e-12)
    np.testing.assert_allclose(project(constant(1.0), GRID).alpha, (0, 0, 0), atol=1e-12)
    np.testing.assert_allclose(project(linear(Z_AXIS), GRID).alpha, (0, 0, math.sqrt(4 * math.pi / 3)), atol=1e-12)
    assert math.sqrt(4 * math.pi / 3) == pytest.approx(2.04665, abs=1e-5)


def test_projection_norm_bound_value():
    assert projection_norm_bound() == pytest.approx(math.sqrt(3 * math.pi), rel=1e-15)
    assert projection_norm_bound() == pytest.approx(3.06998, abs=1e-5)


def test_hemisphere_norm_any_axis():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = hemisphere(_random_direction(rng))
        assert project(s, GRID).norm == pytest.approx(projection_norm_bound(), abs=1e-10)
        assert projection_error(s, GRID) < 1e-12


def test_strategy_values_in_range():
    rng = np.random.default_rng(2)
    pts = rng.standard_normal((500, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    for _ in range(30):
        s = _random_strategy(rng)
        vals = s(pts)
        assert np.all(np.abs(vals) <= 1.0)
    assert hemisphere(Z_AXIS)(np.array([[1.0, 0.0, 0.0]]))[0] == 1.0


def test_harmonic_basis_orthonormal():
    g = build_grid(8, 16)
    y = real_harmonics(3, g.points)
    gram = np.einsum("i,ik,il->kl", g.weights, y, y)
    np.testing.assert_allclose(gram, np.eye(16), atol=1e-12)


def test_harmonic_rejects_bad_length():
    with pytest.raises(ValueError):
        harmonic([1.0, 2.0])


def test_functional_value_examples():
    up, down = hemisphere(Z_AXIS), hemisphere(-Z_AXIS)
    # aligned responses on both sides give the same-sign coefficients, which
    # lowers the overlap: the quantum correlation term enters with a minus sign
    for v in (0.0, 0.3, 1.0):
        assert lhv_functional_value(LhvModel.pair(up, down), v, GRID) == pytest.approx(TWO_PI_SQ * (1 + v / 4), abs=1e-11)
    assert lhv_functional_value(LhvModel.pair(up, up), 1.0, GRID) == pytest.approx(TWO_PI_SQ - math.pi**2, abs=1e-11)
    zeros = tabulated(GRID, np.zeros(len(GRID)))
    assert lhv_functional_value(LhvModel.pair(up, zeros), 1.0, GRID) == pytest.approx(TWO_PI_SQ, abs=1e-12)


@pytest.mark.parametrize("v, expected", [(1.0, 49.34802), (0.0, TWO_PI_SQ)])
def test_bound_examples(v, expected):
    assert lhv_bound_analytic(v) == pytest.approx(expected, abs=5e-6)


def test_bound_meets_quantum_at_three_quarters():
    from functional_bell.quantum import norm_sq_qm_analytic

    assert abs(lhv_bound_analytic(0.75) - norm_sq_qm_analytic(0.75)) < 1e-12
    assert lhv_bound_analytic(0.75) == pytest.approx(TWO_PI_SQ * 1.1875, rel=1e-15)


def test_model_validation():
    with pytest.raises(ValueError):
        LhvModel(())
    with pytest.raises(ValueError):
        LhvModel(((0.5, hemisphere(Z_AXIS), hemisphere(Z_AXIS)),))
    with pytest.raises(ValueError):
        LhvModel(((1.5, hemisphere(Z_AXIS), hemisphere(Z_AXIS)), (-0.5, constant(0.0), constant(0.0))))


def test_model_prob_normalized():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((100, 3))
    b = rng.standard_normal((100, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    model = _random_model(rng)
    probs = [model.prob(m, mp, a, b) for m in (1, -1) for mp in (1, -1)]
    np.testing.assert_allclose(sum(probs), 1.0, atol=1e-14)
    assert all(np.all(p >= -1e-15) for p in probs)


def test_bound_safety_random_models():
    rng = np.random.default_rng(20)
    for _ in range(1000):
        model = _random_model(rng)
        v = float(rng.random())
        value = lhv_functional_value(model, v, GRID)
        err = lhv_functional_error(model, v, GRID)
        assert value <= lhv_bound_analytic(v) + 10 * err + 1e-12


def test_schwartz_step():
    rng = np.random.default_rng(21)
    for _ in range(300):
        pa, pb = project(_random_strategy(rng), GRID), project(_random_strategy(rng), GRID)
        assert pa.dot(pb) <= pa.norm * pb.norm + 1e-12
        assert pa.norm <= projection_norm_bound() + 1e-9


def test_fast_path_matches_direct_quadrature():
    rng = np.random.default_rng(22)
    for _ in range(8):
        model = _random_model(rng, max_terms=2)
        v = float(rng.random())
        fast = lhv_functional_value(model, v, GRID)
        direct = lhv_functional_value_direct(model, v, GRID)
        assert abs(fast - direct) < 1e-9 + lhv_functional_error(model, v, GRID)


def test_mixture_linearity():
    rng = np.random.default_rng(23)
    for _ in range(50):
        model = _random_model(rng)
        v = float(rng.random())
        parts = sum(w * lhv_functional_value(LhvModel.pair(a, b), v, GRID) for w, a, b in model.ensemble)
        assert abs(lhv_functional_value(model, v, GRID) - parts) < 1e-12


def test_optimize_hemisphere_pair():
    opt = optimize_lhv(1.0, "hemisphere-pair", budget=2000, seed=0)
    assert abs(opt.value - lhv_bound_analytic(1.0)) < 1e-4
    assert opt.value <= lhv_bound_analytic(1.0) + 1e-6
    (_, sa, sb), = opt.model.ensemble
    # optimum is reached with opposite hemispheres
    assert np.dot(sa.axis.xyz, sb.axis.xyz) == pytest.approx(-1.0, abs=1e-4)
    assert opt.evaluations <= 2000


def test_optimize_is_deterministic():
    a = optimize_lhv(0.9, "hemisphere-pair", budget=600, seed=5)
    b = optimize_lhv(0.9, "hemisphere-pair", budget=600, seed=5)
    assert a.value == b.value and a.start_values == b.start_values


def test_optimize_harmonic_not_above_hemisphere():
    hemi = optimize_lhv(1.0, "hemisphere-pair", budget=2000, seed=0)
    harm = optimize_lhv(1.0, "harmonic", degree=1, budget=2000, seed=0)
    assert harm.value <= hemi.value + harm.error_estimate
    assert harm.value <= lhv_bound_analytic(1.0) + harm.error_estimate


@pytest.mark.parametrize("family", ["hemisphere-pair", "harmonic"])
def test_optimize_at_zero_visibility(family):
    opt = optimize_lhv(0.0, family, budget=300, seed=1)
    assert opt.value == pytest.approx(TWO_PI_SQ, abs=1e-12)


def test_optimum_rotation_invariance():
    opt = optimize_lhv(1.0, "hemisphere-pair", budget=2000, seed=3)
    (_, sa, sb), = opt.model.ensemble
    rng = np.random.default_rng(30)
    for _ in range(10):
        rot = random_rotation(rng)
        model = LhvModel.pair(
            hemisphere(Direction.from_vector(rot @ sa.axis.xyz)),
            hemisphere(Direction.from_vector(rot @ sb.axis.xyz)),
        )
        assert abs(lhv_functional_value(model, 1.0, GRID) - opt.value) < 1e-6


def test_optimize_rejects_bad_arguments():
    with pytest.raises(ValueError):
        optimize_lhv(1.0, "bogus")
    with pytest.raises(ValueError):
        optimize_lhv(1.0, budget=10)
    with pytest.raises(ValueError):
        optimize_lhv(1.2)
