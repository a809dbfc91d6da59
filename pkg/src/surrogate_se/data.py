"""Paired clean/noisy corpora: directory ingestion and a synthetic generator."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, sosfiltfilt

from .dsp import SAMPLE_RATE, Utterance, load_wav, save_wav

SPLIT_DIRS = {
    "train": ("clean_trainset", "noisy_trainset"),
    "test": ("clean_testset", "noisy_testset"),
}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class PairedUtterance:
    id: str
    clean: Utterance
    noisy: Utterance


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    clean_path: Path
    noisy_path: Path


@dataclass(frozen=True)
class DatasetManifest:
    pairs: tuple[ManifestEntry, ...]
    split: str

    def __len__(self):
        return len(self.pairs)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.pairs]

    def load(self) -> list[PairedUtterance]:
        out = []
        for p in self.pairs:
            clean, noisy = load_wav(p.clean_path), load_wav(p.noisy_path)
            if len(clean) != len(noisy):
                raise DatasetError(f"{p.id}: clean has {len(clean)} samples, noisy has {len(noisy)}")
            out.append(PairedUtterance(p.id, clean, noisy))
        return out


def match_dirs(clean_dir, noisy_dir, split: str = "train") -> DatasetManifest:
    """Pair ``*.wav`` files by exact filename; any orphan is an error."""
    clean_dir, noisy_dir = Path(clean_dir), Path(noisy_dir)
    for d in (clean_dir, noisy_dir):
        if not d.is_dir():
            raise DatasetError(f"missing directory {d}")
    clean = {p.name: p for p in clean_dir.glob("*.wav")}
    noisy = {p.name: p for p in noisy_dir.glob("*.wav")}
    orphans = sorted(set(clean) ^ set(noisy))
    if orphans:
        where = [f"{clean_dir / n}" if n in clean else f"{noisy_dir / n}" for n in orphans]
        raise DatasetError("orphan files without a twin: " + ", ".join(where))
    if not clean:
        raise DatasetError(f"zero pairs in {clean_dir} / {noisy_dir}")
    entries = tuple(ManifestEntry(Path(n).stem, clean[n], noisy[n]) for n in sorted(clean))
    return DatasetManifest(entries, split)


def ingest_dataset(root, split: str = "train") -> DatasetManifest:
    """Build a manifest from a VoiceBank-DEMAND style root directory."""
    if split not in SPLIT_DIRS:
        raise DatasetError(f"split must be one of {sorted(SPLIT_DIRS)}, got {split!r}")
    root = Path(root)
    clean, noisy = SPLIT_DIRS[split]
    return match_dirs(root / clean, root / noisy, split)


def synthetic_pair(rng: np.random.Generator, uid: str, duration: float = 1.0,
                   sample_rate: int = SAMPLE_RATE, snr_db: tuple[float, float] = (0.0, 5.0),
                   noise_band: tuple[float, float] | None = None) -> PairedUtterance:
    """A harmonic tone with a slow envelope, mixed with coloured noise at a random SNR.

    ``noise_band`` (Hz) band-limits the noise before scaling; ``None`` keeps it broadband.
    """
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(120.0, 400.0)
    clean = np.zeros(n)
    for h in range(1, 6):
        if h * f0 >= 0.45 * sample_rate:
            break
        clean += rng.uniform(0.3, 1.0) / h * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
    env = 0.5 * (1 - np.cos(2 * np.pi * rng.uniform(1.0, 3.0) * t + rng.uniform(0, 2 * np.pi)))
    clean *= 0.6 + 0.4 * env
    clean *= 0.3 / np.max(np.abs(clean))

    white = rng.standard_normal(n)
    # one-pole lowpass; the random pole sets the spectral tilt
    tilt = rng.uniform(0.0, 0.9)
    coloured = lfilter([1.0], [1.0, -tilt], white)
    if noise_band is not None:
        sos = butter(6, noise_band, btype="bandpass", fs=sample_rate, output="sos")
        coloured = sosfiltfilt(sos, coloured)
    noise = coloured / np.sqrt(np.mean(coloured**2))
    snr = rng.uniform(*snr_db)
    noise *= np.sqrt(np.mean(clean**2) / 10 ** (snr / 10))
    noisy = clean + noise
    peak = np.max(np.abs(noisy))
    if peak > 0.99:
        clean, noisy = clean * 0.99 / peak, noisy * 0.99 / peak
    return PairedUtterance(uid, Utterance(uid, clean, sample_rate), Utterance(uid, noisy, sample_rate))


def synthetic_corpus(n_pairs: int, seed: int = 0, prefix: str = "syn", **kwargs) -> list[PairedUtterance]:
    rng = np.random.default_rng(seed)
    return [synthetic_pair(rng, f"{prefix}{i:04d}", **kwargs) for i in range(n_pairs)]


def write_corpus(root, pairs, split: str = "train") -> Path:
    """Write pairs into ``root`` using the VoiceBank-DEMAND folder names."""
    root = Path(root)
    clean_dir, noisy_dir = (root / d for d in SPLIT_DIRS[split])
    for p in pairs:
        save_wav(clean_dir / f"{p.id}.wav", p.clean)
        save_wav(noisy_dir / f"{p.id}.wav", p.noisy)
    return root
