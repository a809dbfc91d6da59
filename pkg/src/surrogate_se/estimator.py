"""scikit-learn compatible front end for the enhancement trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import PairedUtterance
from .discriminator import DiscriminatorConfig
from .dsp import StftConfig, Utterance
from .generator import GeneratorConfig, enhance
from .metrics import Metric, get_metric
from .trainer import Trainer, TrainingConfig
from .validation import check_paired, check_waveforms


class SurrogateMetricEnhancer(TransformerMixin, BaseEstimator):
    """Mask-based speech enhancer trained to maximise a black-box metric.

    ``fit(X, y)`` takes noisy waveforms ``X`` and their clean references
    ``y`` (16 kHz mono, equal length per pair). ``transform(X)`` returns
    enhanced waveforms of the same lengths. ``metric`` is a metric name
    (``"synthetic"``, ``"pesq"``, ``"stoi"``) or a :class:`Metric`.

    Fitted attributes: ``generator_``, ``discriminator_``, ``trainer_``,
    ``history_`` (one :class:`EpochLog` per epoch) and ``alpha_``.
    """

    def __init__(self, epochs=100, number_of_samples=100, history_portion=0.2, target_s=1.0,
                 include_noisy_in_d=True, learnable_sigmoid=True, input_normalization=False,
                 input_compression="none", metric="synthetic", optimizer="adam", lr_g=5e-4, lr_d=5e-4,
                 blstm_layers=2, blstm_width=200, fc_width=300, mask_floor=0.05, leaky_slope=0.3,
                 fft_size=512, hop=256, seed=0):
        self.epochs = epochs
        self.number_of_samples = number_of_samples
        self.history_portion = history_portion
        self.target_s = target_s
        self.include_noisy_in_d = include_noisy_in_d
        self.learnable_sigmoid = learnable_sigmoid
        self.input_normalization = input_normalization
        self.input_compression = input_compression
        self.metric = metric
        self.optimizer = optimizer
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.blstm_layers = blstm_layers
        self.blstm_width = blstm_width
        self.fc_width = fc_width
        self.mask_floor = mask_floor
        self.leaky_slope = leaky_slope
        self.fft_size = fft_size
        self.hop = hop
        self.seed = seed

    def _metric(self) -> Metric:
        return self.metric if isinstance(self.metric, Metric) else get_metric(self.metric)

    def _configs(self):
        train = TrainingConfig(
            epochs=self.epochs, number_of_samples=self.number_of_samples,
            history_portion=self.history_portion, target_s=self.target_s,
            include_noisy_in_d=self.include_noisy_in_d, learnable_sigmoid=self.learnable_sigmoid,
            input_normalization=self.input_normalization,
            metric=self.metric if isinstance(self.metric, str) else self.metric.name,
            optimizer=self.optimizer, lr_g=self.lr_g, lr_d=self.lr_d, seed=self.seed,
        )
        stft_cfg = StftConfig(self.fft_size, self.hop)
        gen = GeneratorConfig(
            blstm_layers=self.blstm_layers, blstm_width=self.blstm_width, fc_width=self.fc_width,
            output_bins=stft_cfg.n_bins, mask_floor=self.mask_floor, leaky_slope=self.leaky_slope,
            input_compression=self.input_compression,
        )
        disc = DiscriminatorConfig(leaky_slope=self.leaky_slope, input_bins=stft_cfg.n_bins)
        return train, gen, disc, stft_cfg

    def fit(self, X, y):
        train_cfg, gen_cfg, disc_cfg, stft_cfg = self._configs()
        noisy, clean = check_paired(X, y, min_length=stft_cfg.fft_size)
        pairs = [
            PairedUtterance(f"utt{i:05d}", Utterance(f"utt{i:05d}", c.samples, c.sample_rate),
                            Utterance(f"utt{i:05d}", n.samples, n.sample_rate))
            for i, (n, c) in enumerate(zip(noisy, clean))
        ]
        self.trainer_ = Trainer(pairs, train_cfg, gen_cfg, disc_cfg, stft_cfg, metric=self._metric())
        self.history_ = self.trainer_.fit()
        self.generator_ = self.trainer_.generator.eval()
        self.discriminator_ = self.trainer_.discriminator.eval()
        self.stft_config_ = stft_cfg
        self.n_features_in_ = 1
        return self

    @property
    def alpha_(self) -> np.ndarray:
        check_is_fitted(self, "generator_")
        return self.generator_.alpha()

    def transform(self, X):
        check_is_fitted(self, "generator_")
        utts = check_waveforms(X, "X", min_length=self.stft_config_.fft_size)
        out = [enhance(u, self.generator_, self.stft_config_).samples for u in utts]
        if isinstance(X, np.ndarray):
            return np.stack(out)
        return out

    def score(self, X, y) -> float:
        """Mean normalized metric score of ``transform(X)`` against ``y``."""
        metric = self._metric()
        clean = check_waveforms(y, "y")
        enhanced = self.transform(X)
        return float(np.mean([metric(e, c) for e, c in zip(enhanced, clean)]))
