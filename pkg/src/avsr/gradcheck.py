"""Finite-difference verification of the analytic gradients, per parameter
group, over the full composed model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .data import generate_sample, make_dataset, substream
from .model import Recognizer
from .tensor import Graph, Tensor
from .vocab import Vocab


@dataclass
class GroupReport:
    name: str
    max_rel_err: float
    entries_checked: int
    passed: bool


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_params(loss_fn, params: dict[str, Tensor], tolerance: float,
                 h: float = 1e-5, max_entries: int | None = None,
                 rng: np.random.Generator | None = None) -> list[GroupReport]:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` rebuilds the forward pass from scratch on every call. Large
    groups are subsampled to ``max_entries`` seeded entries.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params.values():
        p.zero_grad()
    with Graph() as g:
        loss = loss_fn()
    g.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    def value() -> float:
        return loss_fn().item()

    reports = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        gflat = analytic[name].reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            idxs = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        else:
            idxs = np.arange(flat.size)
        numeric = np.zeros(len(idxs))
        for k, idx in enumerate(idxs):
            old = flat[idx]
            flat[idx] = old + h
            fp = value()
            flat[idx] = old - h
            fm = value()
            flat[idx] = old
            numeric[k] = (fp - fm) / (2.0 * h)
        err = max_rel_err(gflat[idxs], numeric)
        reports.append(GroupReport(name=name, max_rel_err=err,
                                   entries_checked=len(idxs), passed=err < tolerance))
    return reports


def tiny_gradcheck_config(mode: str = "avsr_enhanced", seed: int = 0) -> ExperimentConfig:
    """Smallest config that still exercises every parameter group."""
    return ExperimentConfig(
        mode=mode, d1=8, d2=4,
        enc_layers=1, enc_ff=12, enc_heads=2, enc_kernel=3,
        dec_layers=1, dec_ff=12, dec_heads=2,
        num_phonemes=4, num_visemes=2, audio_dim=5, visual_dim=4,
        length_min=2, length_max=3,
        train_samples=2, val_samples=2, test_samples=2,
        seed=seed,
    )


def run_gradcheck(config: ExperimentConfig | None = None, tolerance: float = 1e-4,
                  max_entries: int | None = 16,
                  num_samples: int = 2) -> tuple[list[GroupReport], bool]:
    """Gradcheck the full model (joint loss over a few samples) per group."""
    config = config if config is not None else tiny_gradcheck_config()
    dataset = make_dataset(config)
    vocab = Vocab(dataset["alphabet"].phonemes)
    model = Recognizer(config, vocab, rng=substream(config.seed, "init"))
    samples = [generate_sample(dataset["alphabet"], (config.length_min, config.length_max),
                               substream(config.seed, "gradcheck", i))
               for i in range(num_samples)]

    def loss_fn():
        total = model.loss(samples[0])
        for s in samples[1:]:
            total = total + model.loss(s)
        return total

    reports = check_params(loss_fn, model.params(), tolerance,
                           max_entries=max_entries,
                           rng=np.random.default_rng(config.seed))
    return reports, all(r.passed for r in reports)


def render_report(reports: list[GroupReport], tolerance: float) -> str:
    lines = [f"{'group':<40} {'max rel err':>12} {'entries':>8}  status"]
    for r in reports:
        status = "ok" if r.passed else "FAIL"
        lines.append(f"{r.name:<40} {r.max_rel_err:>12.3e} {r.entries_checked:>8}  {status}")
    worst = max((r.max_rel_err for r in reports), default=0.0)
    verdict = "PASS" if all(r.passed for r in reports) else "FAIL"
    lines.append(f"{verdict}: worst group error {worst:.3e} (tolerance {tolerance:g})")
    return "\n".join(lines)
