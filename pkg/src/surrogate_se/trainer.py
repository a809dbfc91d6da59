"""Alternating generator / surrogate-discriminator optimization with experience replay."""

from __future__ import annotations

import copy
import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .data import PairedUtterance
from .discriminator import DiscriminatorConfig, SurrogateDiscriminator, discriminator_loss
from .dsp import StftConfig, Utterance, apply_mask, istft, stft
from .generator import GeneratorConfig, MaskGenerator, generator_loss
from .metrics import Metric, get_metric
from .replay import ReplayBuffer, ScoredSample

log = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "g_loss", "d_loss", "mean_q_enhanced", "buffer_size", "wall_time")


class TrainingAborted(RuntimeError):
    """An epoch was abandoned; models and buffer were rolled back to its start."""


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    number_of_samples: int = 100
    history_portion: float = 0.2
    target_s: float = 1.0
    include_noisy_in_d: bool = True
    learnable_sigmoid: bool = True
    input_normalization: bool = False
    metric: str = "synthetic"
    optimizer: str = "adam"
    lr_g: float = 5e-4
    lr_d: float = 5e-4
    discriminator_passes: int = 1
    seed: int = 0
    buffer_store: str = "waveform"
    buffer_max_items: int | None = None
    buffer_memory_budget: int = 2 * 1024**3
    scoring_jobs: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.number_of_samples < 1:
            raise ValueError("number_of_samples must be >= 1")
        if not 0.0 <= self.history_portion <= 1.0:
            raise ValueError(f"history_portion must lie in [0, 1], got {self.history_portion}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.discriminator_passes < 1:
            raise ValueError("discriminator_passes must be >= 1")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.buffer_store not in ("waveform", "magnitude"):
            raise ValueError("buffer_store must be 'waveform' or 'magnitude'")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    g_loss: float
    d_loss: float
    mean_q_enhanced: float
    buffer_size: int
    wall_time: float

    def row(self) -> list:
        return [self.epoch, repr(self.g_loss), repr(self.d_loss), repr(self.mean_q_enhanced),
                self.buffer_size, f"{self.wall_time:.3f}"]


def write_log_header(path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(LOG_HEADER)


def append_log(path, entry: EpochLog) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow(entry.row())


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _optimizer(name: str, params, lr: float):
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    return torch.optim.SGD(params, lr=lr)


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteLossError(f"non-finite {what}: {value}")
    return value


def _mag(x: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(x, dtype=torch.float32)


def train_generator_step(noisy_mag: torch.Tensor, clean_mag: torch.Tensor,
                         generator: MaskGenerator, discriminator: SurrogateDiscriminator,
                         optimizer: torch.optim.Optimizer, target_s: float = 1.0) -> float:
    """One optimizer step on G against the frozen surrogate; returns the pre-step loss."""
    d_mode = discriminator.training
    discriminator.eval()
    flags = [p.requires_grad for p in discriminator.parameters()]
    for p in discriminator.parameters():
        p.requires_grad_(False)
    try:
        generator.train()
        optimizer.zero_grad()
        enhanced = generator(noisy_mag) * noisy_mag
        loss = generator_loss(discriminator(enhanced, clean_mag), target_s)
        value = _finite(float(loss.detach()), "generator loss")
        loss.backward()
        optimizer.step()
    finally:
        for p, f in zip(discriminator.parameters(), flags):
            p.requires_grad_(f)
        discriminator.train(d_mode)
    return value


def train_discriminator_step(clean_mag: torch.Tensor, enhanced_mag: torch.Tensor,
                             noisy_mag: torch.Tensor | None, q_enh: float, q_noisy: float | None,
                             discriminator: SurrogateDiscriminator, optimizer: torch.optim.Optimizer,
                             include_noisy: bool = True) -> float:
    """Fit D to the true scores of one current sample's clean/enhanced/noisy pairs."""
    discriminator.train()
    optimizer.zero_grad()
    cands = [clean_mag, enhanced_mag] + ([noisy_mag] if include_noisy else [])
    scores = discriminator(torch.stack(cands), clean_mag.expand(len(cands), *clean_mag.shape))
    loss = discriminator_loss(scores[0], scores[1], scores[2] if include_noisy else None,
                              1.0, q_enh, q_noisy, include_noisy=include_noisy)
    value = _finite(float(loss.detach()), "discriminator loss")
    loss.backward()
    optimizer.step()
    return value


def train_discriminator_history_step(clean_mag: torch.Tensor, enhanced_mag: torch.Tensor, q_true: float,
                                     discriminator: SurrogateDiscriminator,
                                     optimizer: torch.optim.Optimizer) -> float:
    """Refit D on one historical enhanced sample and the score it earned when generated."""
    discriminator.train()
    optimizer.zero_grad()
    loss = (discriminator(enhanced_mag, clean_mag) - q_true) ** 2
    value = _finite(float(loss.detach()), "discriminator loss")
    loss.backward()
    optimizer.step()
    return value


@dataclass
class _Cached:
    item: PairedUtterance
    noisy_mag: torch.Tensor
    clean_mag: torch.Tensor
    noisy_spec: object
    q_noisy: float | None = None


class Trainer:
    """Owns both networks, their optimizers and the replay buffer for one run.

    Parameters
    ----------
    dataset : sequence of PairedUtterance
        Training pairs. Clean and noisy signals of one pair must have equal length.
    metric : Metric, optional
        Black-box scorer; defaults to ``get_metric(config.metric)``.
    """

    def __init__(self, dataset: Sequence[PairedUtterance], config: TrainingConfig = TrainingConfig(),
                 generator_config: GeneratorConfig = GeneratorConfig(),
                 discriminator_config: DiscriminatorConfig = DiscriminatorConfig(),
                 stft_config: StftConfig = StftConfig(), metric: Metric | None = None,
                 spill_path=None):
        if not dataset:
            raise ValueError("empty training set")
        if config.number_of_samples > len(dataset):
            raise ValueError(
                f"number_of_samples ({config.number_of_samples}) exceeds training-set size ({len(dataset)})"
            )
        if stft_config.n_bins != generator_config.output_bins:
            raise ValueError("fft_size/2 + 1 must equal the generator's output_bins")
        self.config = config
        self.stft_config = stft_config
        self.generator_config = replace(
            generator_config,
            learnable_sigmoid=config.learnable_sigmoid,
            input_normalization=config.input_normalization,
        )
        self.discriminator_config = replace(discriminator_config, input_bins=stft_config.n_bins,
                                           input_normalization=config.input_normalization)
        self.metric = metric if metric is not None else get_metric(config.metric)

        torch.manual_seed(config.seed)
        self.generator = MaskGenerator(self.generator_config)
        self.discriminator = SurrogateDiscriminator(self.discriminator_config)
        self.opt_g = _optimizer(config.optimizer, self.generator.parameters(), config.lr_g)
        self.opt_d = _optimizer(config.optimizer, self.discriminator.parameters(), config.lr_d)
        self.rng = np.random.default_rng(config.seed)
        self.buffer = ReplayBuffer(seed=config.seed + 1, max_items=config.buffer_max_items,
                                   memory_budget=config.buffer_memory_budget, spill_path=spill_path)
        self.epoch = 0
        self.history: list[EpochLog] = []

        self._items: list[_Cached] = []
        self._by_id: dict[str, _Cached] = {}
        for item in sorted(dataset, key=lambda p: p.id):
            if item.id in self._by_id:
                raise ValueError(f"duplicate utterance id {item.id!r}")
            ns, cs = stft(item.noisy, stft_config), stft(item.clean, stft_config)
            if ns.shape != cs.shape:
                raise ValueError(f"clean and noisy lengths differ for {item.id!r}")
            c = _Cached(item, _mag(ns.magnitude), _mag(cs.magnitude), ns)
            self._items.append(c)
            self._by_id[item.id] = c

    def _score(self, jobs: list[tuple[Utterance, Utterance]]) -> list[float]:
        if self.config.scoring_jobs > 1:
            with ThreadPoolExecutor(self.config.scoring_jobs) as pool:
                return list(pool.map(lambda j: self.metric(*j), jobs))
        return [self.metric(e, y) for e, y in jobs]

    def _enhance(self, c: _Cached) -> Utterance:
        with torch.no_grad():
            self.generator.eval()
            mask = self.generator(c.noisy_mag).double().numpy()
        spec = apply_mask(c.noisy_spec, mask)
        return istft(spec, length=len(c.item.noisy), id=c.item.id)

    def _state(self):
        return (copy.deepcopy(self.generator.state_dict()), copy.deepcopy(self.discriminator.state_dict()),
                copy.deepcopy(self.opt_g.state_dict()), copy.deepcopy(self.opt_d.state_dict()),
                self.buffer.snapshot())

    def _restore(self, state) -> None:
        g, d, og, od, buf = state
        self.generator.load_state_dict(g)
        self.discriminator.load_state_dict(d)
        self.opt_g.load_state_dict(og)
        self.opt_d.load_state_dict(od)
        self.buffer.restore(buf)

    def _history_mag(self, s: ScoredSample) -> torch.Tensor:
        if isinstance(s.enhanced, Utterance):
            return _mag(stft(s.enhanced, self.stft_config).magnitude)
        return _mag(s.enhanced)

    def train_epoch(self) -> EpochLog:
        cfg = self.config
        start = time.perf_counter()
        epoch = self.epoch + 1
        state = self._state()
        rng_state = self.rng.bit_generator.state
        try:
            idx = self.rng.choice(len(self._items), size=cfg.number_of_samples, replace=False)
            batch = [self._items[i] for i in idx]

            g_losses = [
                train_generator_step(c.noisy_mag, c.clean_mag, self.generator, self.discriminator,
                                     self.opt_g, cfg.target_s)
                for c in batch
            ]

            # black-box scoring: plain waveforms in, floats out, no autograd anywhere
            enhanced = [self._enhance(c) for c in batch]
            q_enh = self._score([(e, c.item.clean) for e, c in zip(enhanced, batch)])
            if cfg.include_noisy_in_d:
                todo = [c for c in batch if c.q_noisy is None]
                for c, q in zip(todo, self._score([(c.item.noisy, c.item.clean) for c in todo])):
                    c.q_noisy = q

            enh_mags = [_mag(stft(e, self.stft_config).magnitude) for e in enhanced]
            self.buffer.store_batch(
                ScoredSample(e if cfg.buffer_store == "waveform" else m.double().numpy(),
                             c.item.id, c.item.id, q, epoch)
                for e, m, c, q in zip(enhanced, enh_mags, batch, q_enh)
            )

            d_losses = []
            for _ in range(cfg.discriminator_passes):
                d_losses += [
                    train_discriminator_step(c.clean_mag, m, c.noisy_mag, q, c.q_noisy,
                                             self.discriminator, self.opt_d, cfg.include_noisy_in_d)
                    for c, m, q in zip(batch, enh_mags, q_enh)
                ]
                for s in self.buffer.sample_history(cfg.history_portion):
                    ref = self._by_id.get(s.clean_ref_id)
                    if ref is None:
                        raise KeyError(f"unresolvable history reference id {s.clean_ref_id!r}")
                    d_losses.append(train_discriminator_history_step(
                        ref.clean_mag, self._history_mag(s), s.q_true, self.discriminator, self.opt_d))
        except Exception as exc:
            self._restore(state)
            self.rng.bit_generator.state = rng_state
            raise TrainingAborted(f"epoch {epoch} aborted: {exc}") from exc

        self.epoch = epoch
        entry = EpochLog(epoch, float(np.mean(g_losses)), float(np.mean(d_losses)),
                         float(np.mean(q_enh)), self.buffer.size, time.perf_counter() - start)
        self.history.append(entry)
        log.info("epoch %d g_loss=%.4f d_loss=%.4f q_enh=%.4f buffer=%d",
                 epoch, entry.g_loss, entry.d_loss, entry.mean_q_enhanced, entry.buffer_size)
        return entry

    def fit(self, epochs: int | None = None, out_dir=None,
            callback: Callable[[EpochLog], None] | None = None) -> list[EpochLog]:
        """Run ``epochs`` (default ``config.epochs``) epochs, logging and checkpointing into ``out_dir``."""
        from .checkpoint import save_checkpoint

        epochs = self.config.epochs if epochs is None else epochs
        log_path = None
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            log_path = out_dir / "epoch_log.csv"
            if not log_path.exists():
                write_log_header(log_path)
        for _ in range(epochs):
            try:
                entry = self.train_epoch()
            except TrainingAborted:
                if out_dir is not None:
                    save_checkpoint(out_dir / "partial.ckpt", self.generator, self.discriminator,
                                    self.stft_config, {"epoch": self.epoch, "status": "aborted"})
                raise
            if log_path is not None:
                append_log(log_path, entry)
                every = self.config.checkpoint_every
                if every and entry.epoch % every == 0:
                    save_checkpoint(out_dir / f"epoch{entry.epoch:04d}.ckpt", self.generator,
                                    self.discriminator, self.stft_config, {"epoch": entry.epoch})
            if callback is not None:
                callback(entry)
        if out_dir is not None:
            save_checkpoint(out_dir / "final.ckpt", self.generator, self.discriminator,
                            self.stft_config, {"epoch": self.epoch, "training": asdict(self.config)})
        return self.history


def fit(dataset: Sequence[PairedUtterance], config: TrainingConfig = TrainingConfig(), **kwargs):
    """Train from scratch; returns ``(generator, discriminator, epoch logs)``."""
    out_dir = kwargs.pop("out_dir", None)
    trainer = Trainer(dataset, config, **kwargs)
    logs = trainer.fit(out_dir=out_dir)
    return trainer.generator, trainer.discriminator, logs
