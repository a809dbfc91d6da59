"""Spectrally normalized CNN that regresses a normalized metric score for a
(candidate, clean reference) magnitude pair."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.nn.utils import parametrize

from .generator import normalize_log_magnitude

SN_EPS = 1e-12


@dataclass(frozen=True)
class DiscriminatorConfig:
    conv_layers: int = 4
    filters: int = 15
    kernel: tuple[int, int] = (5, 5)
    fc_widths: tuple[int, ...] = (50, 10)
    leaky_slope: float = 0.3
    power_iterations: int = 1
    input_bins: int = 257
    input_normalization: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        if self.conv_layers < 1 or self.filters < 1:
            raise ValueError("conv_layers and filters must be positive")
        if any(k % 2 == 0 for k in self.kernel):
            raise ValueError("kernel sizes must be odd for 'same' padding")
        if self.power_iterations < 1:
            raise ValueError("power_iterations must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = list(self.kernel)
        d["fc_widths"] = list(self.fc_widths)
        return d


def _unit(v, eps=SN_EPS):
    return v / (np.linalg.norm(v) + eps)


def power_iteration(matrix, n_iter: int = 1, u=None, rng=None):
    """Estimate the largest singular value of ``matrix``.

    Returns ``(sigma, u, v)``; feed ``u`` back in to accumulate iterations
    across calls.
    """
    w = np.asarray(matrix, dtype=np.float64)
    w = w.reshape(w.shape[0], -1)
    if u is None:
        rng = np.random.default_rng(0) if rng is None else rng
        u = rng.standard_normal(w.shape[0])
    u = _unit(np.asarray(u, dtype=np.float64))
    v = _unit(w.T @ u)  # defined even when n_iter == 0
    for _ in range(n_iter):
        v = _unit(w.T @ u)
        u = _unit(w @ v)
    return float(u @ w @ v), u, v


def spectral_normalize(weight, n_iter: int = 50, u=None, rng=None) -> np.ndarray:
    """Divide ``weight`` by its power-iteration estimate of the top singular value.

    Conv kernels are flattened to (out, -1) for the estimate. An all-zero
    weight comes back unchanged.
    """
    w = np.asarray(weight, dtype=np.float64)
    if not np.any(w):
        return w.copy()
    sigma, _, _ = power_iteration(w, n_iter, u=u, rng=rng)
    if sigma <= SN_EPS:
        return w.copy()
    return w / sigma


class SpectralNorm(nn.Module):
    """Weight parametrization ``W / sigma(W)`` with persistent power-iteration vectors.

    The vectors advance only in training mode, so an ``eval()`` model
    scores without touching its own state.
    """

    def __init__(self, weight: torch.Tensor, n_power_iterations: int = 1):
        super().__init__()
        self.n_power_iterations = n_power_iterations
        rows = weight.shape[0]
        cols = weight[0].numel()
        gen = torch.Generator().manual_seed(rows * 7919 + cols)
        u = torch.randn(rows, generator=gen, dtype=weight.dtype)
        v = torch.randn(cols, generator=gen, dtype=weight.dtype)
        self.register_buffer("u", u / (u.norm() + SN_EPS))
        self.register_buffer("v", v / (v.norm() + SN_EPS))

    @torch.no_grad()
    def _power_step(self, mat: torch.Tensor):
        for _ in range(self.n_power_iterations):
            self.v.copy_(nn.functional.normalize(mat.t() @ self.u, dim=0, eps=SN_EPS))
            self.u.copy_(nn.functional.normalize(mat @ self.v, dim=0, eps=SN_EPS))

    def sigma(self, weight: torch.Tensor) -> torch.Tensor:
        mat = weight.flatten(1)
        return self.u @ mat @ self.v

    def forward(self, weight: torch.Tensor) -> torch.Tensor:
        mat = weight.flatten(1)
        if self.training:
            self._power_step(mat.detach())
        sigma = self.u @ mat @ self.v
        if sigma.abs() <= SN_EPS:
            return weight
        return weight / sigma


def add_spectral_norm(module: nn.Module, n_power_iterations: int = 1) -> nn.Module:
    parametrize.register_parametrization(
        module, "weight", SpectralNorm(module.weight.detach(), n_power_iterations)
    )
    return module


def spectral_norm_layers(model: nn.Module):
    """Yield ``(name, layer)`` for every layer carrying a spectral-norm parametrization."""
    for name, mod in model.named_modules():
        if parametrize.is_parametrized(mod, "weight"):
            if any(isinstance(p, SpectralNorm) for p in mod.parametrizations.weight):
                yield name, mod


class SurrogateDiscriminator(nn.Module):
    """Conv stack over the 2-channel (candidate, reference) magnitude pair,
    global average pooling, then a small fully connected head ending in one
    linear unit. Every weight is spectrally normalized."""

    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.config = config
        pad = tuple(k // 2 for k in config.kernel)
        n_it = config.power_iterations
        convs = []
        in_ch = 2
        for _ in range(config.conv_layers):
            convs.append(add_spectral_norm(nn.Conv2d(in_ch, config.filters, config.kernel, padding=pad), n_it))
            in_ch = config.filters
        self.convs = nn.ModuleList(convs)
        fcs = []
        width = config.filters
        for w in config.fc_widths:
            fcs.append(add_spectral_norm(nn.Linear(width, w), n_it))
            width = w
        self.fcs = nn.ModuleList(fcs)
        self.head = add_spectral_norm(nn.Linear(width, 1), n_it)
        self.act = nn.LeakyReLU(config.leaky_slope)

    def forward(self, candidate: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
        """Score (B, T, F) or (T, F) pairs; returns shape (B,) or a 0-d tensor."""
        if candidate.shape != reference.shape:
            raise ValueError(
                f"candidate shape {tuple(candidate.shape)} != reference shape {tuple(reference.shape)}"
            )
        squeeze = candidate.dim() == 2
        if squeeze:
            candidate, reference = candidate.unsqueeze(0), reference.unsqueeze(0)
        if candidate.dim() != 3 or candidate.shape[-1] != self.config.input_bins:
            raise ValueError(f"expected (B, T, {self.config.input_bins}) inputs, got {tuple(candidate.shape)}")
        if candidate.shape[1] == 0:
            raise ValueError("empty input: no frames")
        if self.config.input_normalization:
            candidate, reference = normalize_log_magnitude(candidate), normalize_log_magnitude(reference)
        h = torch.stack([candidate, reference], dim=1)
        for conv in self.convs:
            h = self.act(conv(h))
        h = h.mean(dim=(2, 3))
        for fc in self.fcs:
            h = self.act(fc(h))
        out = self.head(h).squeeze(-1)
        return out.squeeze(0) if squeeze else out


def score_pair(candidate_mag, reference_mag, model: SurrogateDiscriminator) -> float:
    cand = torch.as_tensor(np.asarray(candidate_mag), dtype=torch.float32)
    ref = torch.as_tensor(np.asarray(reference_mag), dtype=torch.float32)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            return float(model(cand, ref))
    finally:
        model.train(was_training)


def _check_targets(*qs):
    for q in qs:
        if q is None:
            continue
        arr = q.detach().cpu().numpy() if isinstance(q, torch.Tensor) else np.asarray(q, dtype=np.float64)
        if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
            raise ValueError(f"metric targets must lie in [0, 1], got {arr}")


def discriminator_loss(d_clean, d_enh, d_noisy, q_clean, q_enh, q_noisy, include_noisy: bool = True):
    """Sum of squared surrogate errors on the clean, enhanced and (optionally)
    noisy pairs, averaged over the batch. Accepts floats, arrays or tensors."""
    _check_targets(q_clean, q_enh, q_noisy if include_noisy else None)
    torch_mode = any(isinstance(v, torch.Tensor) for v in (d_clean, d_enh, d_noisy))
    if torch_mode:
        loss = (d_clean - q_clean) ** 2 + (d_enh - q_enh) ** 2
        if include_noisy:
            loss = loss + (d_noisy - q_noisy) ** 2
        return loss.mean()
    d_clean, d_enh = np.asarray(d_clean, dtype=np.float64), np.asarray(d_enh, dtype=np.float64)
    loss = (d_clean - q_clean) ** 2 + (d_enh - q_enh) ** 2
    if include_noisy:
        loss = loss + (np.asarray(d_noisy, dtype=np.float64) - q_noisy) ** 2
    return float(np.mean(loss))
