"""Command-line harness.

Subcommands: gen-data, train, eval-sweep, gradcheck, decode. Configuration
comes from an optional JSON file plus flag overrides; outputs default to
$AVSR_OUTPUT_DIR (or ./runs). Exit codes: 0 success, 2 bad config/usage,
3 missing data, 4 training divergence, 5 gradcheck failure, 1 anything else.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from .config import CLEAN, MODES, ExperimentConfig, parse_snr
from .data import load_dataset, make_dataset, save_dataset
from .evaluate import decode_split, evaluate_sweep, fit_lm, render_table
from .gradcheck import render_report, run_gradcheck
from .model import build_model, load_checkpoint
from .train import DivergenceError, train
from .vocab import Vocab

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_GRADCHECK = 5


def output_root() -> Path:
    return Path(os.environ.get("AVSR_OUTPUT_DIR", "runs"))


def _load_config(config_path: str | None, **overrides) -> ExperimentConfig:
    base = ExperimentConfig.load(config_path) if config_path else ExperimentConfig()
    return base.override(**overrides)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Audio-visual speech recognition on synthetic viseme/phoneme data."""


config_option = click.option("--config", "config_path", type=click.Path(exists=True),
                             default=None, help="JSON config file.")


@main.command("gen-data")
@config_option
@click.option("--out", "out_dir", default=None, help="Dataset directory.")
@click.option("--num-samples", type=int, default=None, help="Training split size.")
@click.option("--val-samples", type=int, default=None)
@click.option("--test-samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--snr", default=None, help="Store splits pre-corrupted at this SNR (dB or 'clean').")
@click.option("--noise-kind", default=None, type=click.Choice(["gaussian", "babble"]))
@click.option("--overlap", is_flag=True, help="Store overlap-corrupted splits.")
def gen_data(config_path, out_dir, num_samples, val_samples, test_samples, seed,
             snr, noise_kind, overlap):
    """Generate train/val/test splits and write them as jsonl manifests."""
    try:
        cfg = _load_config(config_path, train_samples=num_samples,
                           val_samples=val_samples, test_samples=test_samples,
                           seed=seed)
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    out_dir = Path(out_dir) if out_dir else output_root() / "dataset"
    dataset = make_dataset(cfg)
    if overlap or snr is not None:
        from .data import make_overlapped, mix_noise, substream
        target = parse_snr(snr) if snr is not None else 0.0
        kind = noise_kind or cfg.train_noise_kind
        for split in ("train", "val", "test"):
            pool = dataset[split]
            corrupted = []
            for i, s in enumerate(pool):
                rng = substream(cfg.seed, f"gen.{split}", i)
                if overlap:
                    j = int(rng.integers(0, len(pool)))
                    if pool[j].sample_id == s.sample_id:
                        j = (j + 1) % len(pool)
                    corrupted.append(make_overlapped(s, pool[j], target))
                elif target == CLEAN:
                    corrupted.append(s)
                else:
                    corrupted.append(mix_noise(s, kind, target, rng, dataset["alphabet"]))
            dataset[split] = corrupted
    save_dataset(out_dir, cfg, dataset)
    click.echo(f"wrote dataset to {out_dir} "
               f"({cfg.train_samples}/{cfg.val_samples}/{cfg.test_samples} samples)")


@main.command("train")
@config_option
@click.option("--data", "data_dir", default=None, help="Dataset directory (else generated).")
@click.option("--out", "out_dir", default=None, help="Run directory for checkpoint/log.")
@click.option("--mode", type=click.Choice(MODES), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--overlap/--no-overlap", "train_overlap", default=None,
              help="Train with overlapped-speech corruption.")
@click.option("--verbose", is_flag=True)
def train_cmd(config_path, data_dir, out_dir, mode, epochs, seed, lr, batch_size,
              train_overlap, verbose):
    """Train a recognizer and save its checkpoint."""
    try:
        cfg = _load_config(config_path, mode=mode, epochs=epochs, seed=seed, lr=lr,
                           batch_size=batch_size, train_overlap=train_overlap)
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    dataset = None
    if data_dir is not None:
        try:
            meta, dataset = load_dataset(data_dir)
        except FileNotFoundError as e:
            _fail(EXIT_DATA, str(e))
        for key in ("audio_dim", "visual_dim", "num_phonemes"):
            if meta[key] != getattr(cfg, key):
                _fail(EXIT_CONFIG, f"dataset {key}={meta[key]} does not match "
                                   f"config {key}={getattr(cfg, key)}")
    out_dir = Path(out_dir) if out_dir else output_root() / f"train-{cfg.mode}-s{cfg.seed}"
    try:
        result = train(cfg, dataset=dataset, out_dir=out_dir, quiet=not verbose)
    except DivergenceError as e:
        _fail(EXIT_DIVERGED, str(e))
    final = result.log[-1]
    click.echo(f"checkpoint: {result.checkpoint_path}")
    click.echo(f"final val loss: {final['val_loss']:.4f} "
               f"(epoch {final['epoch']}, train {final['train_loss']:.4f})")


def _restore(checkpoint_path: str):
    try:
        cfg, weights = load_checkpoint(checkpoint_path)
    except FileNotFoundError:
        _fail(EXIT_DATA, f"no checkpoint at {checkpoint_path}")
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    return cfg, weights


@main.command("eval-sweep")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data", "data_dir", default=None, help="Dataset directory (else regenerated).")
@click.option("--out", "out_dir", default=None)
@click.option("--snrs", default=None, help="Comma list, e.g. '-5,0,5,10,15,clean'.")
@click.option("--noise-kinds", default=None, help="Comma list of gaussian/babble/overlap.")
@click.option("--dump-masks", is_flag=True, help="Emit per-sample mask CSVs.")
def eval_sweep(checkpoint, data_dir, out_dir, snrs, noise_kinds, dump_masks):
    """Evaluate a checkpoint over the noise/SNR grid; write result tables."""
    cfg, weights = _restore(checkpoint)
    if data_dir is not None:
        try:
            _, dataset = load_dataset(data_dir)
        except FileNotFoundError as e:
            _fail(EXIT_DATA, str(e))
    else:
        dataset = make_dataset(cfg)
    vocab = Vocab(dataset["alphabet"].phonemes)
    try:
        model = build_model(cfg, vocab, weights)
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    snr_list = ([parse_snr(s) for s in snrs.split(",")] if snrs else cfg.eval_snrs)
    kind_list = noise_kinds.split(",") if noise_kinds else cfg.eval_noise_kinds
    out_dir = Path(out_dir) if out_dir else output_root() / f"eval-{cfg.mode}-s{cfg.seed}"
    lm = fit_lm(dataset, vocab)
    rows = evaluate_sweep(model, dataset["test"], lm, kind_list, snr_list,
                          dataset["alphabet"], cfg.seed, out_dir=out_dir,
                          dump_masks=dump_masks)
    click.echo(render_table(rows))
    click.echo(f"results in {out_dir}")


@main.command("gradcheck")
@config_option
@click.option("--tolerance", type=float, default=1e-4)
@click.option("--max-entries", type=int, default=16,
              help="Entries sampled per parameter group.")
def gradcheck_cmd(config_path, tolerance, max_entries):
    """Finite-difference check of every parameter group on a tiny model."""
    try:
        cfg = ExperimentConfig.load(config_path) if config_path else None
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    reports, ok = run_gradcheck(cfg, tolerance=tolerance, max_entries=max_entries)
    click.echo(render_report(reports, tolerance))
    if not ok:
        sys.exit(EXIT_GRADCHECK)


@main.command("decode")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data", "data_dir", default=None)
@click.option("--split", default="test", type=click.Choice(["train", "val", "test"]))
@click.option("--snr", default=None, help="Corrupt before decoding (dB or 'clean').")
@click.option("--noise-kind", default=None,
              type=click.Choice(["gaussian", "babble", "overlap"]))
@click.option("--out", "out_path", default=None)
def decode_cmd(checkpoint, data_dir, split, snr, noise_kind, out_path):
    """Decode one split to jsonl records {sample_id, hypothesis, reference, wer}."""
    cfg, weights = _restore(checkpoint)
    if data_dir is not None:
        try:
            _, dataset = load_dataset(data_dir)
        except FileNotFoundError as e:
            _fail(EXIT_DATA, str(e))
    else:
        dataset = make_dataset(cfg)
    vocab = Vocab(dataset["alphabet"].phonemes)
    model = build_model(cfg, vocab, weights)
    lm = fit_lm(dataset, vocab)
    out_path = Path(out_path) if out_path else output_root() / f"decode-{cfg.mode}.jsonl"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    kind = noise_kind if (noise_kind or snr is None) else cfg.train_noise_kind
    records = decode_split(model, dataset[split], lm, out_path, kind=kind,
                           snr=parse_snr(snr) if snr is not None else CLEAN,
                           alphabet=dataset["alphabet"], seed=cfg.seed)
    mean_wer = sum(r["wer"] for r in records) / len(records)
    click.echo(f"decoded {len(records)} samples, mean WER {100 * mean_wer:.2f}%")
    click.echo(f"records: {out_path}")


if __name__ == "__main__":
    main()
