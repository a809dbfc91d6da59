"""Append-only store of generated samples and the scores they earned.

On-disk record format (little-endian), preceded once per file by the
8-byte header ``b"SSRB"`` + u16 version + u16 reserved::

    u16 n  | n bytes  utf-8 clean reference id
    u16 n  | n bytes  utf-8 noisy reference id
    i32      epoch
    f64      q_true
    u8       payload kind (0 = waveform, 1 = magnitude)
    u32      sample rate (waveform) or 0
    u8       ndim, then ndim x u32 dims
    f32[]    payload, C order
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dsp import Utterance

MAGIC = b"SSRB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHH")
_KIND_WAVEFORM, _KIND_MAGNITUDE = 0, 1


@dataclass(frozen=True)
class ScoredSample:
    enhanced: Utterance | np.ndarray
    clean_ref_id: str
    noisy_ref_id: str
    q_true: float
    epoch: int

    def __post_init__(self):
        if not (0.0 <= self.q_true <= 1.0):
            raise ValueError(f"q_true must lie in [0, 1], got {self.q_true}")

    @property
    def nbytes(self) -> int:
        payload = self.enhanced.samples if isinstance(self.enhanced, Utterance) else self.enhanced
        return int(np.asarray(payload).size * 4)


def _encode(sample: ScoredSample) -> bytes:
    if isinstance(sample.enhanced, Utterance):
        kind, rate, payload = _KIND_WAVEFORM, sample.enhanced.sample_rate, sample.enhanced.samples
    else:
        kind, rate, payload = _KIND_MAGNITUDE, 0, np.asarray(sample.enhanced)
    payload = np.ascontiguousarray(payload, dtype="<f4")
    parts = []
    for s in (sample.clean_ref_id, sample.noisy_ref_id):
        b = s.encode("utf-8")
        parts.append(struct.pack("<H", len(b)) + b)
    parts.append(struct.pack("<idBIB", sample.epoch, sample.q_true, kind, rate, payload.ndim))
    parts.append(struct.pack(f"<{payload.ndim}I", *payload.shape))
    parts.append(payload.tobytes())
    return b"".join(parts)


def _decode(fh) -> ScoredSample | None:
    head = fh.read(2)
    if not head:
        return None
    ids = []
    for i in range(2):
        (n,) = struct.unpack("<H", head if i == 0 else fh.read(2))
        ids.append(fh.read(n).decode("utf-8"))
    fixed = struct.Struct("<idBIB")
    epoch, q, kind, rate, ndim = fixed.unpack(fh.read(fixed.size))
    shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
    count = int(np.prod(shape))
    payload = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
    if kind == _KIND_WAVEFORM:
        enhanced = Utterance(f"{ids[1]}@{epoch}", payload.astype(np.float64), rate)
    else:
        enhanced = payload.astype(np.float64)
    return ScoredSample(enhanced, ids[0], ids[1], q, epoch)


def _write_header(fh):
    fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 0))


def _check_header(fh, path):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError(f"{path}: truncated replay file")
    magic, version, _ = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a replay-buffer file")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported replay format version {version}")


class ReplayBuffer:
    """Unbounded (by default) experience buffer with seeded uniform sampling.

    Parameters
    ----------
    seed : int
        Seed for the sampling generator.
    max_items : int or None
        Evict the oldest samples beyond this count. ``None`` keeps everything.
    memory_budget : int
        Bytes of payload kept in RAM; later samples are appended to
        ``spill_path`` and read back on demand.
    spill_path : path or None
        Spill file location. Required only once the budget is exceeded.
    """

    def __init__(self, seed: int = 0, max_items: int | None = None,
                 memory_budget: int = 2 * 1024**3, spill_path=None):
        self.rng = np.random.default_rng(seed)
        self.max_items = max_items
        self.memory_budget = memory_budget
        self.spill_path = Path(spill_path) if spill_path is not None else None
        # each entry is either a ScoredSample or the byte offset of one in the spill file
        self._entries: list[ScoredSample | int] = []
        self._resident_bytes = 0

    def __len__(self):
        return len(self._entries)

    @property
    def size(self) -> int:
        return len(self._entries)

    def store_batch(self, batch: Iterable[ScoredSample]) -> "ReplayBuffer":
        batch = list(batch)
        for s in batch:
            if not (0.0 <= s.q_true <= 1.0):
                raise ValueError(f"invalid score {s.q_true}")
        for s in batch:
            if self._resident_bytes + s.nbytes > self.memory_budget:
                self._entries.append(self._spill(s))
            else:
                self._entries.append(s)
                self._resident_bytes += s.nbytes
        if self.max_items is not None and len(self._entries) > self.max_items:
            for old in self._entries[: len(self._entries) - self.max_items]:
                if isinstance(old, ScoredSample):
                    self._resident_bytes -= old.nbytes
            del self._entries[: len(self._entries) - self.max_items]
        return self

    def _spill(self, sample: ScoredSample) -> int:
        if self.spill_path is None:
            raise RuntimeError("replay memory budget exceeded and no spill_path configured")
        new = not self.spill_path.exists()
        with open(self.spill_path, "ab") as fh:
            if new:
                _write_header(fh)
            offset = fh.tell()
            fh.write(_encode(sample))
        return offset

    def _resolve(self, entry: ScoredSample | int) -> ScoredSample:
        if isinstance(entry, ScoredSample):
            return entry
        with open(self.spill_path, "rb") as fh:
            fh.seek(entry)
            return _decode(fh)

    def __getitem__(self, i: int) -> ScoredSample:
        return self._resolve(self._entries[i])

    def __iter__(self):
        return (self._resolve(e) for e in self._entries)

    def sample_history(self, portion: float) -> list[ScoredSample]:
        """Draw ``floor(portion * size)`` distinct samples uniformly without replacement."""
        if not 0.0 <= portion <= 1.0:
            raise ValueError(f"portion must lie in [0, 1], got {portion}")
        k = int(np.floor(portion * len(self._entries) + 1e-9))
        if k == 0:
            return []
        idx = self.rng.choice(len(self._entries), size=k, replace=False)
        return [self._resolve(self._entries[i]) for i in idx]

    def snapshot(self) -> tuple:
        return (list(self._entries), self._resident_bytes, self.rng.bit_generator.state)

    def restore(self, snap: tuple) -> None:
        entries, resident, rng_state = snap
        self._entries = list(entries)
        self._resident_bytes = resident
        self.rng.bit_generator.state = rng_state

    def save(self, path) -> Path:
        """Write every sample in the buffer to a standalone record file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            _write_header(fh)
            for s in self:
                fh.write(_encode(s))
        return path

    @classmethod
    def load(cls, path, seed: int = 0, **kwargs) -> "ReplayBuffer":
        path = Path(path)
        buf = cls(seed=seed, **kwargs)
        samples = []
        with open(path, "rb") as fh:
            _check_header(fh, path)
            while (s := _decode(fh)) is not None:
                samples.append(s)
        return buf.store_batch(samples)
