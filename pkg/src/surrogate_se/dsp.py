"""Waveform I/O, STFT analysis/synthesis and time-frequency masking."""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
MAG_FLOOR = 1e-8


class AudioFormatError(ValueError):
    """Raised for WAV files outside the supported PCM16 mono 16 kHz format."""


@dataclass(frozen=True)
class Utterance:
    id: str
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"utterance {self.id!r}: samples must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise ValueError(f"utterance {self.id!r}: samples are empty")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"utterance {self.id!r}: non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size % 2:
            raise ValueError("fft_size must be a positive even integer")
        if not 0 < self.hop <= self.fft_size:
            raise ValueError("hop must satisfy 0 < hop <= fft_size")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_array(self) -> np.ndarray:
        # periodic Hann: satisfies COLA at hop = fft_size / 2
        n = np.arange(self.fft_size)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.fft_size)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.fft_size:
            return 0
        return 1 + (n_samples - self.fft_size) // self.hop

    def bin_frequencies(self, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
        return np.arange(self.n_bins) * sample_rate / self.fft_size


@dataclass(frozen=True)
class Spectrogram:
    magnitude: np.ndarray
    phase: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        mag = np.asarray(self.magnitude, dtype=np.float64)
        phase = np.asarray(self.phase, dtype=np.float64)
        if mag.shape != phase.shape:
            raise ValueError(f"magnitude shape {mag.shape} != phase shape {phase.shape}")
        if mag.ndim != 2 or mag.shape[1] != self.config.n_bins:
            raise ValueError(
                f"expected a T x {self.config.n_bins} spectrogram, got shape {mag.shape}"
            )
        if not np.all(np.isfinite(mag)) or np.any(mag < 0):
            raise ValueError("magnitude must be finite and non-negative")
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "phase", phase)

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude.shape

    def complex(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)


def load_wav(path, expected_rate: int | None = SAMPLE_RATE) -> Utterance:
    """Read a 16-bit PCM mono WAV file into an :class:`Utterance`.

    Samples are scaled by 1/32768. ``expected_rate`` rejects files at any
    other rate; pass ``None`` to accept whatever the header says.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: unsupported encoding ({exc})") from exc
    if channels != 1:
        raise AudioFormatError(f"{path}: multi-channel unsupported ({channels} channels)")
    if width != 2:
        raise AudioFormatError(f"{path}: unsupported encoding ({8 * width}-bit PCM)")
    if expected_rate is not None and rate != expected_rate:
        raise AudioFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Utterance(path.stem, pcm.astype(np.float64) / 32768.0, rate)


def save_wav(path, utt: Utterance) -> Path:
    """Write an utterance as 16-bit PCM mono; values outside [-1, 1) are clipped."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(utt.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(utt.sample_rate)
        wf.writeframes(pcm.tobytes())
    return path


def frame_signal(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = cfg.n_frames(samples.size)
    starts = np.arange(n_frames)[:, None] * cfg.hop
    return samples[starts + np.arange(cfg.fft_size)[None, :]]


def stft(u: Utterance, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Magnitude/phase STFT without centre padding; a partial tail frame is dropped."""
    if len(u) < cfg.fft_size:
        raise ValueError(
            f"utterance {u.id!r} has {len(u)} samples, shorter than one frame ({cfg.fft_size})"
        )
    frames = frame_signal(u.samples, cfg) * cfg.window_array()
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return Spectrogram(np.abs(spec), np.angle(spec), cfg, u.sample_rate)


def istft(spec: Spectrogram, length: int | None = None, id: str = "istft") -> Utterance:
    """Weighted overlap-add inverse of :func:`stft`.

    Samples not covered by any frame (the dropped tail) come back as zeros
    when ``length`` asks for them.
    """
    cfg = spec.config
    n_frames = spec.shape[0]
    if n_frames == 0:
        raise ValueError("cannot invert an empty spectrogram")
    win = cfg.window_array()
    frames = np.fft.irfft(spec.complex(), n=cfg.fft_size, axis=1) * win
    n_out = (n_frames - 1) * cfg.hop + cfg.fft_size
    out = np.zeros(n_out)
    norm = np.zeros(n_out)
    for t in range(n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.fft_size)
        out[sl] += frames[t]
        norm[sl] += win**2
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    if length is not None:
        out = out[:length] if length <= n_out else np.pad(out, (0, length - n_out))
    return Utterance(id, out, spec.sample_rate)


def apply_mask(noisy: Spectrogram, mask) -> Spectrogram:
    """Scale the noisy magnitude by ``mask`` and keep the noisy phase."""
    values = np.asarray(getattr(mask, "values", mask), dtype=np.float64)
    if values.shape != noisy.shape:
        raise ValueError(f"mask shape {values.shape} != spectrogram shape {noisy.shape}")
    return Spectrogram(values * noisy.magnitude, noisy.phase, noisy.config, noisy.sample_rate)


def snr_db(reference: np.ndarray, estimate: np.ndarray) -> float:
    err = np.sum((reference - estimate) ** 2)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(np.sum(reference**2) / err))
