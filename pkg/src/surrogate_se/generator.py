"""BLSTM mask estimator with a per-frequency learnable sigmoid output."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .dsp import MAG_FLOOR, Spectrogram, StftConfig, Utterance, apply_mask, istft, stft

BETA = 1.2
MASK_FLOOR = 0.05


@dataclass(frozen=True)
class GeneratorConfig:
    blstm_layers: int = 2
    blstm_width: int = 200
    fc_width: int = 300
    output_bins: int = 257
    mask_floor: float = MASK_FLOOR
    leaky_slope: float = 0.3
    learnable_sigmoid: bool = True
    beta: float = BETA
    input_normalization: bool = False
    input_compression: str = "none"

    def __post_init__(self):
        if self.blstm_layers < 1 or self.blstm_width < 1 or self.fc_width < 1:
            raise ValueError("layer counts and widths must be positive")
        if self.input_compression not in ("none", "log1p"):
            raise ValueError(f"input_compression must be 'none' or 'log1p', got {self.input_compression!r}")
        if not 0 <= self.mask_floor < self.output_beta:
            raise ValueError(f"mask_floor must lie in [0, {self.output_beta})")

    @property
    def output_beta(self) -> float:
        # the conventional sigmoid tops out at 1
        return self.beta if self.learnable_sigmoid else 1.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Mask:
    values: np.ndarray
    floor: float = MASK_FLOOR
    ceiling: float = BETA

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("mask must be a T x F grid")
        if np.any(values < self.floor) or np.any(values > self.ceiling):
            raise ValueError(f"mask values outside [{self.floor}, {self.ceiling}]")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


def learnable_sigmoid(x, alpha, beta: float = BETA):
    """``beta / (1 + exp(-alpha * x))`` with ``alpha`` broadcast over the last axis.

    Works on numpy arrays and torch tensors alike. Non-finite inputs and an
    ``alpha`` that does not match the last axis raise ``ValueError``.
    """
    if isinstance(x, torch.Tensor):
        alpha = torch.as_tensor(alpha, dtype=x.dtype)
        if alpha.shape[-1:] != x.shape[-1:]:
            raise ValueError(f"alpha length {alpha.shape[-1]} != feature width {x.shape[-1]}")
        if not torch.all(torch.isfinite(x)):
            raise ValueError("learnable_sigmoid input must be finite")
        return beta * torch.sigmoid(alpha * x)
    x = np.asarray(x, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[-1:] != x.shape[-1:]:
        raise ValueError(f"alpha length {alpha.shape[-1]} != feature width {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("learnable_sigmoid input must be finite")
    z = alpha * x
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = beta / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = beta * ez / (1.0 + ez)
    return out


def normalize_log_magnitude(mag: torch.Tensor) -> torch.Tensor:
    """Per-utterance zero-mean, unit-variance log magnitude over the last two axes."""
    logmag = torch.log(mag.clamp_min(MAG_FLOOR))
    mean = logmag.mean(dim=(-2, -1), keepdim=True)
    std = logmag.std(dim=(-2, -1), keepdim=True).clamp_min(MAG_FLOOR)
    return (logmag - mean) / std


class LearnableSigmoid(nn.Module):
    """Per-bin sigmoid with learned slope and fixed scale ``beta``.

    The slope is stored unconstrained and passed through ``abs`` so the
    effective alpha stays positive.
    """

    def __init__(self, n_bins: int, beta: float = BETA, learnable: bool = True):
        super().__init__()
        self.beta = beta
        self.learnable = learnable
        if learnable:
            self.slope = nn.Parameter(torch.ones(n_bins))
        else:
            self.register_buffer("slope", torch.ones(n_bins))

    @property
    def alpha(self) -> torch.Tensor:
        return self.slope.abs()

    def forward(self, x):
        return self.beta * torch.sigmoid(self.alpha.to(x.dtype) * x)


class MaskGenerator(nn.Module):
    """BLSTM -> FC + LeakyReLU -> FC + (learnable) sigmoid -> mask floor."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.config = config
        self.blstm = nn.LSTM(
            input_size=config.output_bins,
            hidden_size=config.blstm_width,
            num_layers=config.blstm_layers,
            batch_first=True,
            bidirectional=True,
        )
        self.fc = nn.Linear(2 * config.blstm_width, config.fc_width)
        self.act = nn.LeakyReLU(config.leaky_slope)
        self.out = nn.Linear(config.fc_width, config.output_bins)
        self.sigmoid = LearnableSigmoid(
            config.output_bins, beta=config.output_beta, learnable=config.learnable_sigmoid
        )

    def features(self, mag: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if cfg.input_normalization:
            return normalize_log_magnitude(mag)
        if cfg.input_compression == "log1p":
            return torch.log1p(mag)
        return mag

    def forward(self, mag: torch.Tensor) -> torch.Tensor:
        """Map a (B, T, F) or (T, F) noisy magnitude to a floored mask of the same shape."""
        squeeze = mag.dim() == 2
        if squeeze:
            mag = mag.unsqueeze(0)
        if mag.dim() != 3 or mag.shape[-1] != self.config.output_bins:
            raise ValueError(
                f"expected (B, T, {self.config.output_bins}) magnitudes, got {tuple(mag.shape)}"
            )
        if mag.shape[1] == 0:
            raise ValueError("empty input: no frames")
        h, _ = self.blstm(self.features(mag))
        mask = self.sigmoid(self.out(self.act(self.fc(h))))
        mask = mask.clamp_min(self.config.mask_floor)
        return mask.squeeze(0) if squeeze else mask

    def alpha(self) -> np.ndarray:
        return self.sigmoid.alpha.detach().cpu().numpy().astype(np.float64)


def estimate_mask(noisy_mag, model: MaskGenerator) -> Mask:
    mag = torch.as_tensor(np.asarray(noisy_mag), dtype=torch.float32)
    if mag.dim() != 2:
        raise ValueError("noisy_mag must be a T x F grid")
    with torch.no_grad():
        values = model(mag).double().numpy()
    # float32 rounding can land a hair past the ceiling
    ceiling = model.config.output_beta
    return Mask(np.clip(values, model.config.mask_floor, ceiling), model.config.mask_floor, ceiling)


def enhance(noisy: Utterance, model: MaskGenerator, cfg: StftConfig = StftConfig()) -> Utterance:
    """Mask the noisy magnitude, resynthesise with the noisy phase, keep the input length."""
    spec = stft(noisy, cfg)
    mask = estimate_mask(spec.magnitude, model)
    return istft(apply_mask(spec, mask), length=len(noisy), id=noisy.id)


def enhance_spectrogram(spec: Spectrogram, model: MaskGenerator) -> Spectrogram:
    return apply_mask(spec, estimate_mask(spec.magnitude, model))


def generator_loss(d_score, s: float = 1.0):
    """Squared distance between the surrogate score and the target score, batch-averaged."""
    if isinstance(d_score, torch.Tensor):
        return ((d_score - s) ** 2).mean()
    return float(np.mean((np.asarray(d_score, dtype=np.float64) - s) ** 2))
