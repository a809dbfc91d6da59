"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .dsp import SAMPLE_RATE, Utterance


def check_waveforms(X, name: str = "X", min_length: int = 1, sample_rate: int = SAMPLE_RATE) -> list[Utterance]:
    """Coerce a collection of mono waveforms into ``Utterance`` objects.

    Accepts a list of 1-D arrays or Utterances, or a 2-D array with one
    waveform per row. A single 1-D array is rejected so that a lone
    utterance is never mistaken for many one-sample signals.
    """
    if isinstance(X, Utterance):
        raise ValueError(f"{name}: expected a collection of waveforms, got a single Utterance")
    if isinstance(X, np.ndarray):
        if X.ndim != 2:
            raise ValueError(f"{name}: expected a 2-D array (n_utterances, n_samples), got {X.ndim}-D")
        X = list(X)
    X = list(X)
    if not X:
        raise ValueError(f"{name}: no waveforms given")
    out = []
    for i, x in enumerate(X):
        if isinstance(x, Utterance):
            u = x
        else:
            arr = np.asarray(x, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"{name}[{i}]: waveform must be 1-D, got shape {arr.shape}")
            u = Utterance(f"{name}{i:05d}", arr, sample_rate)
        if u.sample_rate != sample_rate:
            raise ValueError(f"{name}[{i}]: sample rate {u.sample_rate} Hz, expected {sample_rate} Hz")
        if len(u) < min_length:
            raise ValueError(f"{name}[{i}]: {len(u)} samples, need at least {min_length}")
        out.append(u)
    return out


def check_paired(X, y, min_length: int = 1) -> tuple[list[Utterance], list[Utterance]]:
    noisy = check_waveforms(X, "X", min_length)
    clean = check_waveforms(y, "y", min_length)
    if len(noisy) != len(clean):
        raise ValueError(f"X has {len(noisy)} waveforms but y has {len(clean)}")
    for i, (a, b) in enumerate(zip(noisy, clean)):
        if len(a) != len(b):
            raise ValueError(f"pair {i}: noisy has {len(a)} samples, clean has {len(b)}")
    return noisy, clean
