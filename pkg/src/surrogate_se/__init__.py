"""Mask-based speech enhancement optimized against black-box metrics through a
learned surrogate discriminator."""

from .data import PairedUtterance, ingest_dataset, synthetic_corpus
from .discriminator import DiscriminatorConfig, SurrogateDiscriminator, discriminator_loss, score_pair
from .dsp import Spectrogram, StftConfig, Utterance, apply_mask, istft, load_wav, save_wav, stft
from .estimator import SurrogateMetricEnhancer
from .generator import GeneratorConfig, Mask, MaskGenerator, enhance, estimate_mask, generator_loss, learnable_sigmoid
from .metrics import MetricSpec, evaluate_corpus, get_metric, normalize_score, synthetic_oracle
from .replay import ReplayBuffer, ScoredSample
from .trainer import EpochLog, Trainer, TrainingConfig, fit

__version__ = "0.1.0"

__all__ = [
    "DiscriminatorConfig", "EpochLog", "GeneratorConfig", "Mask", "MaskGenerator", "MetricSpec",
    "PairedUtterance", "ReplayBuffer", "ScoredSample", "Spectrogram", "StftConfig",
    "SurrogateDiscriminator", "SurrogateMetricEnhancer", "Trainer", "TrainingConfig", "Utterance",
    "apply_mask", "discriminator_loss", "enhance", "estimate_mask", "evaluate_corpus", "fit",
    "generator_loss", "get_metric", "ingest_dataset", "istft", "learnable_sigmoid", "load_wav",
    "normalize_score", "save_wav", "score_pair", "stft", "synthetic_corpus", "synthetic_oracle",
]
