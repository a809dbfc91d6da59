"""Black-box target metrics, normalized to [0, 1].

Every metric exposes the same boundary: two waveforms in, one float out.
Nothing in here is differentiable and the trainer never sees inside it.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
import shutil
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dsp import SAMPLE_RATE, Utterance, save_wav

log = logging.getLogger(__name__)

PESQ_ENV_VAR = "SURROGATE_SE_PESQ"
ORACLE_EPS = 1e-8
# tolerated overshoot before an out-of-range raw score is an error instead of a clamp
CLAMP_SLACK = 0.5


class MetricUnavailableError(RuntimeError):
    """The requested metric has no implementation configured in this environment."""


@dataclass(frozen=True)
class MetricSpec:
    name: str
    raw_min: float
    raw_max: float

    def __post_init__(self):
        if not self.raw_max > self.raw_min:
            raise ValueError(f"degenerate metric range for {self.name!r}: [{self.raw_min}, {self.raw_max}]")


PESQ_SPEC = MetricSpec("pesq", -0.5, 4.5)
STOI_SPEC = MetricSpec("stoi", 0.0, 1.0)
SYNTHETIC_SPEC = MetricSpec("synthetic", 0.0, 1.0)


def normalize_score(raw: float, spec: MetricSpec) -> float:
    """Affine map of ``[raw_min, raw_max]`` onto ``[0, 1]``.

    Marginal overshoot is clamped with a warning; anything further out
    than ``CLAMP_SLACK`` of the range raises.
    """
    span = spec.raw_max - spec.raw_min
    if span <= 0:
        raise ValueError(f"degenerate metric range for {spec.name!r}")
    raw = float(raw)
    if not np.isfinite(raw):
        raise ValueError(f"{spec.name}: non-finite raw score")
    q = (raw - spec.raw_min) / span
    if q < 0.0 or q > 1.0:
        if q < -CLAMP_SLACK or q > 1.0 + CLAMP_SLACK:
            raise ValueError(f"{spec.name}: raw score {raw} far outside [{spec.raw_min}, {spec.raw_max}]")
        log.warning("%s raw score %.4f outside [%g, %g]; clamping", spec.name, raw, spec.raw_min, spec.raw_max)
        q = min(max(q, 0.0), 1.0)
    return q


def denormalize_score(q: float, spec: MetricSpec) -> float:
    return spec.raw_min + float(q) * (spec.raw_max - spec.raw_min)


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Utterance) else np.asarray(x, dtype=np.float64)


def synthetic_oracle(enhanced, clean) -> float:
    """exp(-||e - y||_1 / (||y||_1 + eps)) on the common prefix of both signals."""
    e, y = _samples(enhanced), _samples(clean)
    n = min(e.size, y.size)
    e, y = e[:n], y[:n]
    return float(np.exp(-np.sum(np.abs(e - y)) / (np.sum(np.abs(y)) + ORACLE_EPS)))


def _pesq_from_command(command: str, enhanced: Utterance, clean: Utterance, mode: str) -> float:
    with tempfile.TemporaryDirectory() as tmp:
        ref = save_wav(Path(tmp) / "reference.wav", clean)
        deg = save_wav(Path(tmp) / "degraded.wav", enhanced)
        proc = subprocess.run(
            [command, str(ref), str(deg), mode], capture_output=True, text=True, check=False
        )
    if proc.returncode != 0:
        raise RuntimeError(f"P.862 adapter {command!r} failed: {proc.stderr.strip()}")
    try:
        return float(proc.stdout.strip().split()[-1])
    except (ValueError, IndexError) as exc:
        raise RuntimeError(f"P.862 adapter {command!r} printed no score: {proc.stdout!r}") from exc


def pesq_raw(enhanced, clean, mode: str = "wb", sample_rate: int = SAMPLE_RATE) -> float:
    """Raw P.862 score from an external implementation.

    Uses the executable named by ``$SURROGATE_SE_PESQ`` when set (called as
    ``cmd reference.wav degraded.wav mode``, last token of stdout parsed as
    the score), else the ``pesq`` Python package.
    """
    if mode not in ("wb", "nb"):
        raise ValueError(f"PESQ mode must be 'wb' or 'nb', got {mode!r}")
    e = enhanced if isinstance(enhanced, Utterance) else Utterance("enhanced", enhanced, sample_rate)
    y = clean if isinstance(clean, Utterance) else Utterance("clean", clean, sample_rate)
    n = min(len(e), len(y))
    if n < 0.25 * sample_rate:
        raise ValueError(f"utterance too short for P.862: {n / sample_rate:.3f} s < 0.25 s")
    e = Utterance(e.id, e.samples[:n], e.sample_rate)
    y = Utterance(y.id, y.samples[:n], y.sample_rate)
    command = os.environ.get(PESQ_ENV_VAR)
    if command:
        resolved = shutil.which(command) or command
        return _pesq_from_command(resolved, e, y, mode)
    try:
        from pesq import pesq as _pesq
    except ImportError as exc:
        raise MetricUnavailableError(
            f"no P.862 implementation: install the 'pesq' package or set ${PESQ_ENV_VAR}"
        ) from exc
    return float(_pesq(sample_rate, y.samples, e.samples, mode))


def stoi_raw(enhanced, clean, sample_rate: int = SAMPLE_RATE) -> float:
    try:
        from pystoi import stoi as _stoi
    except ImportError as exc:
        raise MetricUnavailableError("no STOI implementation: install the 'pystoi' package") from exc
    e, y = _samples(enhanced), _samples(clean)
    n = min(e.size, y.size)
    return float(_stoi(y[:n], e[:n], sample_rate))


@dataclass
class Metric:
    """A raw scoring function paired with its normalization range."""

    spec: MetricSpec
    raw_fn: Callable[[Utterance, Utterance], float]

    @property
    def name(self) -> str:
        return self.spec.name

    def raw(self, enhanced, clean) -> float:
        return float(self.raw_fn(enhanced, clean))

    def __call__(self, enhanced, clean) -> float:
        return normalize_score(self.raw(enhanced, clean), self.spec)


def get_metric(name: str, pesq_mode: str = "wb") -> Metric:
    if name == "synthetic":
        return Metric(SYNTHETIC_SPEC, synthetic_oracle)
    if name == "pesq":
        return Metric(PESQ_SPEC, lambda e, y: pesq_raw(e, y, mode=pesq_mode))
    if name == "stoi":
        return Metric(STOI_SPEC, stoi_raw)
    raise ValueError(f"unknown metric {name!r}; choose from synthetic, pesq, stoi")


def waveform_key(enhanced, clean) -> str:
    """Content hash identifying an (enhanced, clean) scoring call."""
    h = hashlib.sha256()
    for x in (enhanced, clean):
        arr = np.ascontiguousarray(_samples(x), dtype=np.float64)
        h.update(arr.size.to_bytes(8, "little"))
        h.update(arr.tobytes())
    return h.hexdigest()


class RecordingMetric(Metric):
    """Wraps a metric and remembers every score it produced, keyed by content hash."""

    def __init__(self, inner: Metric):
        super().__init__(inner.spec, inner.raw_fn)
        self.table: dict[str, float] = {}

    def raw(self, enhanced, clean) -> float:
        value = super().raw(enhanced, clean)
        self.table[waveform_key(enhanced, clean)] = value
        return value


class LookupMetric(Metric):
    """Replays raw scores from a precomputed table; unknown inputs are an error."""

    def __init__(self, spec: MetricSpec, table: dict[str, float]):
        super().__init__(spec, self._lookup)
        self.table = dict(table)

    def _lookup(self, enhanced, clean) -> float:
        key = waveform_key(enhanced, clean)
        if key not in self.table:
            raise KeyError(f"no precomputed score for input {key[:12]}")
        return self.table[key]


@dataclass(frozen=True)
class ScoreRow:
    id: str
    raw: float
    normalized: float


@dataclass
class ScoreReport:
    metric: str
    rows: list[ScoreRow]
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    extra: dict[str, list[float]] = field(default_factory=dict)

    @property
    def mean_raw(self) -> float:
        return float(np.mean([r.raw for r in self.rows]))

    @property
    def mean_normalized(self) -> float:
        return float(np.mean([r.normalized for r in self.rows]))

    def extra_means(self) -> dict[str, float]:
        return {k: float(np.mean(v)) for k, v in self.extra.items()}

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        extra_names = sorted(self.extra)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", f"{self.metric}_raw", f"{self.metric}_normalized", *extra_names])
            for i, r in enumerate(self.rows):
                w.writerow([r.id, repr(r.raw), repr(r.normalized), *(repr(self.extra[k][i]) for k in extra_names)])
            w.writerow(["mean", repr(self.mean_raw), repr(self.mean_normalized),
                        *(repr(self.extra_means()[k]) for k in extra_names)])
        return path


def evaluate_corpus(
    pairs: Sequence[tuple[Utterance, Utterance]],
    metric: Metric,
    extra_metrics: dict[str, Callable[[Utterance, Utterance], float]] | None = None,
    n_jobs: int = 1,
) -> ScoreReport:
    """Score (enhanced, clean) pairs; rows come back sorted by enhanced utterance id.

    ``extra_metrics`` carries externally supplied measures (e.g. composite
    quality scores) that are reported alongside but never normalized.
    """
    if not pairs:
        raise ValueError("evaluate_corpus needs at least one pair")
    pairs = sorted(pairs, key=lambda p: p[0].id)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            raws = list(pool.map(lambda p: metric.raw(*p), pairs))
    else:
        raws = [metric.raw(e, y) for e, y in pairs]
    rows = [ScoreRow(e.id, r, normalize_score(r, metric.spec)) for (e, _), r in zip(pairs, raws)]
    extra = {name: [float(fn(e, y)) for e, y in pairs] for name, fn in (extra_metrics or {}).items()}
    return ScoreReport(metric.name, rows, extra=extra)
