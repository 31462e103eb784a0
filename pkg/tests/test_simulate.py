import json
import math

import numpy as np
import pytest

from functional_bell.discrete import SettingEnsemble
from functional_bell.lhv import LhvModel, hemisphere, lhv_bound_analytic
from functional_bell.quantum import QuantumPrediction, norm_sq_qm_analytic
from functional_bell.simulate import (
    CSV_HEADER,
    EnsembleSampler,
    EventFileError,
    EventStream,
    estimate_functional,
    generate_events,
    quantize,
    read_events,
    sidecar_path,
    write_events,
)
from functional_bell.sphere import Z_AXIS

TWO_PI_SQ = (2 * math.pi) ** 2
ANTI_PAIR = LhvModel.pair(hemisphere(Z_AXIS), hemisphere(-Z_AXIS))


def test_perfect_anticorrelation_at_equal_settings():
    ens = SettingEnsemble.uniform([[0.3, -0.4, math.sqrt(0.75)]])
    ev = generate_events(QuantumPrediction(1.0), EnsembleSampler(ens, ens), n=5000, seed=1)
    assert np.all(ev.m_b == -ev.m_a)
    assert ev.metadata["sampler"] == "ensemble"


def test_zero_visibility_independent_coins():
    n = 200_000
    ev = generate_events(QuantumPrediction(0.0), n=n, seed=2)
    corr = np.mean(ev.m_a.astype(float) * ev.m_b)
    assert abs(corr) < 4 / math.sqrt(n)
    assert abs(np.mean(ev.m_a)) < 4 / math.sqrt(n) and abs(np.mean(ev.m_b)) < 4 / math.sqrt(n)


def test_deterministic_lhv_outcomes():
    ev = generate_events(LhvModel.pair(hemisphere(Z_AXIS), hemisphere(Z_AXIS)), n=20_000, seed=3)
    np.testing.assert_array_equal(ev.m_a, np.where(np.cos(ev.theta_a) >= 0, 1, -1))
    np.testing.assert_array_equal(ev.m_b, np.where(np.cos(ev.theta_b) >= 0, 1, -1))


def test_event_invariants():
    ev = generate_events(QuantumPrediction(0.7), n=10_000, seed=4)
    assert len(ev) == 10_000
    assert set(np.unique(ev.m_a)) <= {-1, 1} and set(np.unique(ev.m_b)) <= {-1, 1}
    for arr in (ev.theta_a, ev.theta_b):
        assert np.all((arr >= 0) & (arr <= math.pi))
    for arr in (ev.phi_a, ev.phi_b):
        assert np.all((arr >= 0) & (arr < 2 * math.pi))
    first = next(iter(ev))
    assert first.m == ev.m_a[0] and first.a.theta == pytest.approx(ev.theta_a[0])
    assert ev.metadata == {"seed": 4, "source": "quantum(v=0.7)", "sampler": "uniform-sphere", "n": 10_000}


def test_uniform_settings_are_area_uniform():
    ev = generate_events(QuantumPrediction(1.0), n=200_000, seed=5)
    u = np.cos(ev.theta_a)
    # first two moments of cos(theta) under dOmega / 4 pi: 0 and 1/3
    assert abs(np.mean(u)) < 4 * math.sqrt(1 / 3 / len(u))
    assert abs(np.mean(u * u) - 1 / 3) < 4 * math.sqrt(4 / 45 / len(u))


def test_estimate_examples():
    r = estimate_functional(generate_events(QuantumPrediction(1.0), n=1_000_000, seed=42), 1.0)
    assert abs(r.functional_estimate - 52.63789) < 3 * r.std_error
    assert r.verdict == "violation"
    assert r.std_error < 0.05
    r = estimate_functional(generate_events(ANTI_PAIR, n=1_000_000, seed=42), 1.0)
    assert abs(r.functional_estimate - 49.34802) < 3 * r.std_error
    assert r.verdict == "no-violation"


def test_threshold_source_is_inconclusive():
    r = estimate_functional(generate_events(QuantumPrediction(0.75), n=1_000_000, seed=7), 0.75)
    assert abs(r.functional_estimate - r.lhv_bound) < 4 * r.std_error
    assert r.verdict == "inconclusive"


def test_small_sample_inconclusive():
    r = estimate_functional(generate_events(QuantumPrediction(1.0), n=100, seed=42), 1.0)
    assert r.verdict == "inconclusive"
    assert r.std_error > 0.5


def test_verdict_rule():
    r = estimate_functional(generate_events(QuantumPrediction(0.9), n=50_000, seed=8), 0.9, k_sigma=2.0)
    assert (r.verdict == "violation") == (r.functional_estimate - r.lhv_bound > 2.0 * r.std_error)
    assert r.significance == pytest.approx((r.functional_estimate - r.lhv_bound) / r.std_error)
    assert r.k_sigma == 2.0


def test_estimator_unbiased():
    rng = np.random.default_rng(9)
    for v, v_assumed in ((1.0, 1.0), (0.6, 0.9), (0.9, 0.3)):
        expected = TWO_PI_SQ * (1 + v * v_assumed / 3)
        runs = [
            estimate_functional(generate_events(QuantumPrediction(v), n=100_000, seed=int(s)), v_assumed)
            for s in rng.integers(0, 2**31, 50)
        ]
        grand = np.mean([r.functional_estimate for r in runs])
        se = math.sqrt(sum(r.std_error**2 for r in runs)) / len(runs)
        assert abs(grand - expected) < 4 * se


def test_lhv_estimate_matches_its_overlap():
    # deterministic pair: expectation is the model's overlap with P_QM(v_assumed)
    r = estimate_functional(generate_events(ANTI_PAIR, n=400_000, seed=10), 0.5)
    assert abs(r.functional_estimate - lhv_bound_analytic(0.5)) < 4 * r.std_error


def test_seed_determinism_and_threads():
    a = generate_events(QuantumPrediction(0.8), n=150_000, seed=11, threads=1)
    b = generate_events(QuantumPrediction(0.8), n=150_000, seed=11, threads=8)
    for col in ("theta_a", "phi_a", "theta_b", "phi_b", "m_a", "m_b"):
        np.testing.assert_array_equal(getattr(a, col), getattr(b, col))
    assert estimate_functional(a, 0.8) == estimate_functional(b, 0.8)
    c = generate_events(QuantumPrediction(0.8), n=150_000, seed=12)
    assert not np.array_equal(a.theta_a, c.theta_a)


def test_prefix_stability():
    short = generate_events(QuantumPrediction(1.0), n=1000, seed=13)
    long = generate_events(QuantumPrediction(1.0), n=5000, seed=13)
    np.testing.assert_array_equal(short.theta_a, long.theta_a[:1000])


def test_estimator_rejects_bad_streams():
    ens = SettingEnsemble.uniform([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    ev = generate_events(QuantumPrediction(1.0), EnsembleSampler(ens, ens), n=1000, seed=1)
    with pytest.raises(ValueError, match="area-uniform"):
        estimate_functional(ev, 1.0)
    with pytest.raises(ValueError):
        estimate_functional(generate_events(QuantumPrediction(1.0), n=50, seed=1), 1.0)
    with pytest.raises(ValueError):
        generate_events(QuantumPrediction(1.0), n=0)


def test_csv_round_trip(tmp_path):
    ev = generate_events(QuantumPrediction(1.0), n=3000, seed=14)
    path = tmp_path / "events.csv"
    write_events(ev, path)
    assert path.read_text().splitlines()[0] == CSV_HEADER
    assert json.loads(sidecar_path(path).read_text())["seed"] == 14
    back = read_events(path)
    q = quantize(ev)
    for col in ("theta_a", "phi_a", "theta_b", "phi_b", "m_a", "m_b"):
        np.testing.assert_array_equal(getattr(back, col), getattr(q, col))
        np.testing.assert_allclose(getattr(back, col), getattr(ev, col), rtol=1e-8)
    assert back.metadata == ev.metadata
    assert estimate_functional(back, 1.0) == estimate_functional(q, 1.0)


def test_read_events_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(EventFileError):
        read_events(p)
    p.write_text(CSV_HEADER + "\n0.1,0.2,0.3,0.4,1,0\n")
    with pytest.raises(EventFileError, match=":2:"):
        read_events(p)
    p.write_text(CSV_HEADER + "\n0.1,0.2,0.3,x,1,1\n")
    with pytest.raises(EventFileError):
        read_events(p)


def test_cos_ab_from_angles():
    ev = generate_events(QuantumPrediction(1.0), n=1000, seed=15)
    direct = np.array([e.a.n1 * e.b.n1 + e.a.n2 * e.b.n2 + e.a.n3 * e.b.n3 for e in ev])
    np.testing.assert_allclose(ev.cos_ab(), direct, atol=1e-12)
    assert isinstance(ev, EventStream)


def test_prediction_value_in_report():
    r = estimate_functional(generate_events(QuantumPrediction(1.0), n=1000, seed=16), 0.6)
    assert r.quantum_prediction == norm_sq_qm_analytic(0.6)
    assert r.lhv_bound == lhv_bound_analytic(0.6)
