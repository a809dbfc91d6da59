"""Model archive: one ``.npz`` file holding named tensors plus JSON metadata.

Layout::

    __meta__                    uint8 array, UTF-8 JSON:
                                  {"schema": 1, "stft": {...},
                                   "generator": {...config...},
                                   "discriminator": {...config...} | null,
                                   "extra": {...}}
    generator/<state key>       float32/int tensors from state_dict()
    discriminator/<state key>   (optional)

The archive is read with ``allow_pickle=False``; anything unreadable or
with a different schema integer raises :class:`CheckpointError`.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .discriminator import DiscriminatorConfig, SurrogateDiscriminator
from .dsp import StftConfig
from .generator import GeneratorConfig, MaskGenerator

SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack(prefix: str, module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def save_checkpoint(path, generator: MaskGenerator, discriminator: SurrogateDiscriminator | None = None,
                    stft_config: StftConfig = StftConfig(), extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema": SCHEMA_VERSION,
        "stft": {"fft_size": stft_config.fft_size, "hop": stft_config.hop, "window": stft_config.window},
        "generator": generator.config.to_dict(),
        "discriminator": discriminator.config.to_dict() if discriminator is not None else None,
        "extra": extra or {},
    }
    arrays = _pack("generator", generator)
    if discriminator is not None:
        arrays.update(_pack("discriminator", discriminator))
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, default=str).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def _state(arrays, prefix: str) -> dict[str, torch.Tensor]:
    n = len(prefix) + 1
    return {k[n:]: torch.from_numpy(np.array(arrays[k])) for k in arrays.files if k.startswith(prefix + "/")}


def load_checkpoint(path):
    """Return ``(generator, discriminator or None, stft_config, meta)``."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        arrays = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(arrays["__meta__"]).decode("utf-8"))
    except (OSError, EOFError, ValueError, KeyError, zipfile.BadZipFile, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if meta.get("schema") != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: schema {meta.get('schema')!r}, expected {SCHEMA_VERSION}")
    try:
        gen = MaskGenerator(GeneratorConfig(**meta["generator"]))
        gen.load_state_dict(_state(arrays, "generator"))
        disc = None
        if meta.get("discriminator") is not None:
            disc = SurrogateDiscriminator(DiscriminatorConfig(**meta["discriminator"]))
            disc.load_state_dict(_state(arrays, "discriminator"))
        stft_config = StftConfig(**meta["stft"])
    except (TypeError, RuntimeError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path}: checkpoint does not match the model schema ({exc})") from exc
    gen.eval()
    if disc is not None:
        disc.eval()
    return gen, disc, stft_config, meta


def alpha_table(generator: MaskGenerator, stft_config: StftConfig = StftConfig(), sample_rate: int = 16000):
    """Rows of (bin index, centre frequency in Hz, learned alpha)."""
    if not generator.config.learnable_sigmoid:
        raise CheckpointError("model uses the conventional sigmoid; there is no learned alpha to export")
    alpha = generator.alpha()
    freqs = np.arange(alpha.size) * sample_rate / stft_config.fft_size
    return [(i, float(f), float(a)) for i, (f, a) in enumerate(zip(freqs, alpha))]


def export_alpha(checkpoint_path, out_path) -> Path:
    generator, _, stft_config, _ = load_checkpoint(checkpoint_path)
    rows = alpha_table(generator, stft_config)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        fh.write("bin,frequency_hz,alpha\n")
        for i, f, a in rows:
            fh.write(f"{i},{f!r},{a!r}\n")
    return out_path
