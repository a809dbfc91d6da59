"""Command-line entry points.

Exit codes: 0 success, 1 validation error (bad config, data, checkpoint),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, export_alpha, load_checkpoint
from .config import ConfigError, RunConfig, dump_config, load_config
from .data import DatasetError, PairedUtterance, ingest_dataset, match_dirs
from .dsp import AudioFormatError, load_wav, save_wav
from .generator import enhance
from .metrics import PESQ_ENV_VAR, MetricUnavailableError, evaluate_corpus, get_metric
from .trainer import Trainer, TrainingAborted

log = logging.getLogger("surrogate_se")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

VALIDATION_ERRORS = (ConfigError, DatasetError, AudioFormatError, CheckpointError, FileNotFoundError, ValueError)


def run_train(config_path) -> int:
    cfg = load_config(config_path)
    if cfg.paths.dataset_root is None:
        raise ConfigError("paths.dataset_root", "required for training")
    pairs = ingest_dataset(cfg.paths.dataset_root, "train").load()
    metric = get_metric(cfg.train.metric, pesq_mode=cfg.metric.pesq_mode)
    out_dir = Path(cfg.paths.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.cfg").write_text(dump_config(cfg))
    spill = out_dir / "replay.spill"
    spill.unlink(missing_ok=True)
    trainer = Trainer(pairs, cfg.train, cfg.generator, cfg.discriminator, cfg.stft, metric=metric,
                      spill_path=spill)
    logs = trainer.fit(out_dir=out_dir)
    if trainer.generator_config.learnable_sigmoid:
        export_alpha(out_dir / "final.ckpt", out_dir / "alpha.csv")
    print(f"trained {len(logs)} epochs; outputs in {out_dir}")
    return EXIT_OK


def run_enhance(model_path, inputs, output_dir) -> int:
    generator, _, stft_cfg, _ = load_checkpoint(model_path)
    inputs, output_dir = Path(inputs), Path(output_dir)
    files = sorted(inputs.glob("*.wav")) if inputs.is_dir() else [inputs]
    if not files:
        raise DatasetError(f"no WAV files in {inputs}")
    for path in files:
        out = enhance(load_wav(path), generator, stft_cfg)
        save_wav(output_dir / path.name, out)
    print(f"enhanced {len(files)} file(s) into {output_dir}")
    return EXIT_OK


def run_evaluate(enhanced_dir, clean_dir, metric_name: str, out=None, pesq_mode: str = "wb") -> int:
    manifest = match_dirs(clean_dir, enhanced_dir, split="test")
    pairs: list[PairedUtterance] = manifest.load()
    metric = get_metric(metric_name, pesq_mode=pesq_mode)
    report = evaluate_corpus([(p.noisy, p.clean) for p in pairs], metric)
    out = Path(out) if out else Path(enhanced_dir) / f"{metric_name}_report.csv"
    report.to_csv(out)
    print(f"{metric_name}: mean raw {report.mean_raw:.4f}, mean normalized {report.mean_normalized:.4f} "
          f"over {len(report.rows)} utterances -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="surrogate-se",
        description="Train and run mask-based speech enhancers against black-box metrics.",
        epilog=f"P.862 discovery: set ${PESQ_ENV_VAR} to an external scorer, else the 'pesq' package is used.",
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a run config file")
    t.add_argument("config")

    e = sub.add_parser("enhance", help="enhance one WAV file or a directory of them")
    e.add_argument("checkpoint")
    e.add_argument("input")
    e.add_argument("output_dir")

    v = sub.add_parser("evaluate", help="score enhanced files against clean references")
    v.add_argument("enhanced_dir")
    v.add_argument("clean_dir")
    v.add_argument("--metric", default="synthetic", choices=["synthetic", "pesq", "stoi"])
    v.add_argument("--pesq-mode", default="wb", choices=["wb", "nb"])
    v.add_argument("--out", help="report CSV path (default: <enhanced_dir>/<metric>_report.csv)")

    a = sub.add_parser("export-alpha", help="write the learned per-bin sigmoid slopes as CSV")
    a.add_argument("checkpoint")
    a.add_argument("out")

    c = sub.add_parser("init-config", help="write a config file with every default filled in")
    c.add_argument("out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            return run_train(args.config)
        if args.command == "enhance":
            return run_enhance(args.checkpoint, args.input, args.output_dir)
        if args.command == "evaluate":
            return run_evaluate(args.enhanced_dir, args.clean_dir, args.metric, args.out, args.pesq_mode)
        if args.command == "export-alpha":
            export_alpha(args.checkpoint, args.out)
            return EXIT_OK
        if args.command == "init-config":
            Path(args.out).write_text(dump_config(RunConfig()))
            return EXIT_OK
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingAborted, MetricUnavailableError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
