"""Event-by-event Monte Carlo of the experiment and a plug-in estimator.

Settings are drawn per event, outcomes from the source's joint distribution.
With area-uniform settings the average of ``(4 pi)^2 P_QM(m, m'; a, b; v)``
over events is an unbiased estimate of the overlap between ``P_QM`` and the
source distribution.

Randomness is derived per chunk of ``CHUNK_SIZE`` events from
``SeedSequence([seed, chunk_index])``, so streams do not depend on how many
worker threads generate them.
"""
from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .discrete import SettingEnsemble
from .lhv import lhv_bound_analytic
from .quantum import check_visibility, norm_sq_qm_analytic
from .sphere import Direction, make_direction, points_to_angles

CHUNK_SIZE = 1 << 16
CSV_HEADER = "theta_a,phi_a,theta_b,phi_b,m_a,m_b"
UNIFORM_SPHERE = "uniform-sphere"
VERDICTS = ("violation", "no-violation", "inconclusive")
MIN_EVENTS = 100


class EventFileError(ValueError):
    pass


@dataclass(frozen=True)
class UniformSphere:
    """Area-uniform settings: cos(theta) and phi uniform, independently per side."""

    name: str = UNIFORM_SPHERE

    def sample(self, rng: np.random.Generator, n: int):
        """Return ``(theta_a, phi_a, points_a, theta_b, phi_b, points_b)``."""
        r = rng.random((4, n))
        out = []
        for k in (0, 2):
            u = 1.0 - 2.0 * r[k]
            phi = 2.0 * np.pi * r[k + 1]
            s = np.sqrt(1.0 - u * u)
            out += [np.arccos(u), phi, np.stack([s * np.cos(phi), s * np.sin(phi), u], axis=-1)]
        return tuple(out)


@dataclass(frozen=True, eq=False)
class EnsembleSampler:
    """Settings drawn from finite ensembles with probability proportional to weight."""

    ens_a: SettingEnsemble
    ens_b: SettingEnsemble
    name: str = "ensemble"

    def sample(self, rng: np.random.Generator, n: int):
        out = []
        for ens in (self.ens_a, self.ens_b):
            cum = np.cumsum(ens.weights) / ens.total_weight
            idx = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(cum) - 1)
            theta, phi = points_to_angles(ens.points)
            out += [theta[idx], phi[idx], ens.points[idx]]
        return tuple(out)


@dataclass(frozen=True)
class EventRecord:
    a: Direction
    b: Direction
    m: int
    mp: int


@dataclass(frozen=True, eq=False)
class EventStream:
    theta_a: np.ndarray
    phi_a: np.ndarray
    theta_b: np.ndarray
    phi_b: np.ndarray
    m_a: np.ndarray
    m_b: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.m_a)

    def __iter__(self):
        for i in range(len(self)):
            yield EventRecord(
                make_direction(self.theta_a[i], self.phi_a[i]),
                make_direction(self.theta_b[i], self.phi_b[i]),
                int(self.m_a[i]),
                int(self.m_b[i]),
            )

    @property
    def uniform_settings(self) -> bool:
        return self.metadata.get("sampler") == UNIFORM_SPHERE

    def cos_ab(self) -> np.ndarray:
        """``a . b`` per event, computed from the stored angles only."""
        ta, tb = self.theta_a, self.theta_b
        return np.cos(ta) * np.cos(tb) + np.sin(ta) * np.sin(tb) * np.cos(self.phi_a - self.phi_b)


def _chunk(source, sampler, seed: int, index: int, size: int):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))
    ta, pa, a, tb, pb, b = sampler.sample(rng, size)
    m, mp = source.sample_outcomes(a, b, rng)
    return ta, pa, tb, pb, m, mp


def generate_events(source, sampler=None, n: int = 1000, seed: int = 0, threads: int = 1) -> EventStream:
    """Draw ``n`` i.i.d. events; ``source`` is a QuantumPrediction or LhvModel."""
    if n < 1:
        raise ValueError("n must be at least 1")
    sampler = sampler or UniformSphere()
    sizes = [min(CHUNK_SIZE, n - start) for start in range(0, n, CHUNK_SIZE)]
    jobs = [(source, sampler, seed, k, size) for k, size in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(lambda job: _chunk(*job), jobs))
    else:
        chunks = [_chunk(*job) for job in jobs]
    cols = [np.concatenate(c) for c in zip(*chunks)]
    meta = {"seed": int(seed), "source": source.describe(), "sampler": sampler.name, "n": int(n)}
    return EventStream(*cols, metadata=meta)


@dataclass(frozen=True)
class EstimateReport:
    n_events: int
    v_assumed: float
    functional_estimate: float
    std_error: float
    lhv_bound: float
    quantum_prediction: float
    significance: float
    k_sigma: float
    verdict: str

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_functional(events: EventStream, v_assumed: float, k_sigma: float = 3.0) -> EstimateReport:
    """Plug-in estimate of the overlap with ``P_QM(v_assumed)`` and a verdict.

    ``violation`` when the estimate exceeds the LHV bound by more than
    ``k_sigma`` standard errors; ``no-violation`` when it does not and it falls
    more than ``k_sigma`` standard errors below the quantum prediction for
    ``v_assumed``; otherwise ``inconclusive``.
    """
    v = check_visibility(v_assumed)
    if not events.uniform_settings:
        raise ValueError(
            f"estimator needs area-uniform settings, stream sampler is {events.metadata.get('sampler')!r}"
        )
    n = len(events)
    if n < MIN_EVENTS:
        raise ValueError(f"need at least {MIN_EVENTS} events, got {n}")
    mm = events.m_a.astype(float) * events.m_b.astype(float)
    samples = (4.0 * math.pi) ** 2 * 0.25 * (1.0 - mm * v * events.cos_ab())
    estimate = float(np.mean(samples))
    std_error = float(np.std(samples, ddof=1) / math.sqrt(n))
    bound = lhv_bound_analytic(v)
    prediction = norm_sq_qm_analytic(v)
    significance = (estimate - bound) / std_error if std_error > 0 else math.copysign(math.inf, estimate - bound)
    if estimate - bound > k_sigma * std_error:
        verdict = "violation"
    elif prediction - estimate > k_sigma * std_error:
        verdict = "no-violation"
    else:
        verdict = "inconclusive"
    return EstimateReport(n, v, estimate, std_error, bound, prediction, significance, float(k_sigma), verdict)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def _write_csv(events: EventStream, handle) -> None:
    data = np.column_stack([events.theta_a, events.phi_a, events.theta_b, events.phi_b, events.m_a, events.m_b])
    handle.write(CSV_HEADER + "\n")
    np.savetxt(handle, data, fmt=["%.9g"] * 4 + ["%d"] * 2, delimiter=",")


def _read_csv(handle, source_name: str, metadata: dict) -> EventStream:
    header = handle.readline().strip()
    if header != CSV_HEADER:
        raise EventFileError(f"{source_name}:1: expected header {CSV_HEADER!r}, got {header!r}")
    try:
        data = np.loadtxt(handle, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise EventFileError(f"{source_name}: {exc}") from None
    if data.shape[1] != 6:
        raise EventFileError(f"{source_name}: expected 6 columns, got {data.shape[1]}")
    m_a, m_b = data[:, 4].astype(np.int8), data[:, 5].astype(np.int8)
    if not (np.all(np.abs(m_a) == 1) and np.all(np.abs(m_b) == 1)):
        bad = int(np.flatnonzero((np.abs(m_a) != 1) | (np.abs(m_b) != 1))[0]) + 2
        raise EventFileError(f"{source_name}:{bad}: outcomes must be +1 or -1")
    return EventStream(data[:, 0], data[:, 1], data[:, 2], data[:, 3], m_a, m_b, metadata)


def quantize(events: EventStream) -> EventStream:
    """The stream exactly as it reads back from CSV (angles at 9 significant digits)."""
    buf = io.StringIO()
    _write_csv(events, buf)
    buf.seek(0)
    return _read_csv(buf, "<memory>", dict(events.metadata))


def write_events(events: EventStream, path) -> None:
    """CSV with the fixed header plus a JSON metadata sidecar next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        _write_csv(events, fh)
    sidecar_path(path).write_text(json.dumps(events.metadata, sort_keys=True, indent=2) + "\n")


def read_events(path) -> EventStream:
    path = Path(path)
    meta_file = sidecar_path(path)
    metadata = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    with open(path) as fh:
        return _read_csv(fh, str(path), metadata)
