"""Training loop: per-sample graphs, gradient accumulation over a batch,
AdamW updates, per-epoch validation, and deterministic noise augmentation.

All randomness flows from the config seed through named substreams (data,
init, shuffle, augment), so a config and seed pin the run bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import AVSample, make_dataset, make_overlapped, mix_noise, substream
from .model import Recognizer, save_checkpoint
from .tensor import AdamW, Graph
from .vocab import Vocab


class DivergenceError(RuntimeError):
    """Raised when the loss stops being finite; carries the failing step."""

    def __init__(self, step: int, epoch: int):
        super().__init__(f"training diverged: non-finite loss at step {step} "
                         f"(epoch {epoch})")
        self.step = step
        self.epoch = epoch


@dataclass
class TrainResult:
    model: Recognizer
    vocab: Vocab
    dataset: dict
    log: list = field(default_factory=list)
    best_epoch: int = -1
    checkpoint_path: Path | None = None


def _corrupt(sample: AVSample, config: ExperimentConfig, dataset: dict,
             rng: np.random.Generator, split: str) -> AVSample:
    """Noise draw for one training/validation pass over one sample."""
    snr = float(rng.choice(config.train_snrs))
    if config.train_overlap:
        pool = dataset[split]
        j = int(rng.integers(0, len(pool)))
        if pool[j].sample_id == sample.sample_id:
            j = (j + 1) % len(pool)
        out = make_overlapped(sample, pool[j], snr)
    else:
        out = mix_noise(sample, config.train_noise_kind, snr, rng, dataset["alphabet"])
    if config.time_masking:
        frames = out.audio.shape[0]
        width = int(rng.integers(1, max(2, frames // 4)))
        start = int(rng.integers(0, frames - width + 1))
        out.audio[start:start + width] = 0.0
    return out


def _mean_loss(model: Recognizer, samples: list[AVSample]) -> float:
    """Per-token joint loss averaged over samples (no gradients)."""
    total = 0.0
    for s in samples:
        total += model.loss(s).item() / (len(s.transcript) + 1)
    return total / len(samples)


def train(config: ExperimentConfig, dataset: dict | None = None,
          out_dir: str | Path | None = None, quiet: bool = True) -> TrainResult:
    """Train one recognizer; returns the model, log, and checkpoint path.

    ``dataset`` may be injected (clean splits + alphabet); otherwise it is
    generated from the config. When ``out_dir`` is given, the checkpoint and
    a JSON training log are written there (atomically).
    """
    if dataset is None:
        dataset = make_dataset(config)
    vocab = Vocab(dataset["alphabet"].phonemes)
    model = Recognizer(config, vocab, rng=substream(config.seed, "init"))
    params = model.params()
    opt = AdamW(params, lr=config.lr, betas=(config.beta1, config.beta2),
                eps=config.adam_eps, weight_decay=config.weight_decay)

    train_split = dataset["train"]
    val_split = [
        _corrupt(s, config, dataset, substream(config.seed, "augment.val", i), "val")
        for i, s in enumerate(dataset["val"])
    ]

    decay_epoch = config.lr_decay_epoch
    if decay_epoch < 0:
        decay_epoch = (2 * config.epochs) // 3

    log: list[dict] = []
    best_val = math.inf
    best_epoch = -1
    best_params: dict | None = None
    step = 0
    for epoch in range(config.epochs):
        if config.lr_decay != 1.0 and epoch == decay_epoch:
            opt.lr = config.lr * config.lr_decay
        order = substream(config.seed, "shuffle", epoch).permutation(len(train_split))
        epoch_loss = 0.0
        seen = 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo:lo + config.batch_size]
            opt.zero_grad()
            for idx in batch:
                idx = int(idx)
                noisy = _corrupt(train_split[idx], config, dataset,
                                 substream(config.seed, "augment", epoch, idx), "train")
                tokens = len(noisy.transcript) + 1
                with Graph() as g:
                    loss = model.loss(noisy)
                value = loss.item()
                if not math.isfinite(value):
                    raise DivergenceError(step, epoch)
                g.backward(loss, seed=1.0 / (len(batch) * tokens))
                epoch_loss += value / tokens
                seen += 1
            opt.step()
            step += 1
        val_loss = _mean_loss(model, val_split)
        entry = {"epoch": epoch, "train_loss": epoch_loss / seen, "val_loss": val_loss}
        log.append(entry)
        if config.keep_best and val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {name: p.data.copy() for name, p in params.items()}
        if not quiet:
            print(f"epoch {epoch:3d}  train {entry['train_loss']:.4f}  "
                  f"val {val_loss:.4f}")

    if config.keep_best and best_params is not None:
        for name, p in params.items():
            p.data[...] = best_params[name]

    result = TrainResult(model=model, vocab=vocab, dataset=dataset, log=log,
                         best_epoch=best_epoch)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = out_dir / "checkpoint.json"
        save_checkpoint(ckpt, config, params)
        import json
        tmp = out_dir / "train_log.json.tmp"
        tmp.write_text(json.dumps(log, indent=2))
        tmp.replace(out_dir / "train_log.json")
        result.checkpoint_path = ckpt
    return result
