"""Multi-seed mode comparisons (recognition ablations over noise sweeps).

Runs are cached on disk in two layers: checkpoints under a digest of the
training-relevant config fields, result tables under the full config
digest. Repeated or overlapping comparisons never retrain or re-decode.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig
from .data import make_dataset
from .evaluate import CellResult, evaluate_sweep, fit_lm
from .model import Recognizer, build_model, load_checkpoint, save_checkpoint
from .train import train
from .vocab import Vocab

_EVAL_ONLY_FIELDS = ("eval_noise_kinds", "eval_snrs", "alpha", "beta",
                     "beam_width", "length_norm")


def training_digest(config: ExperimentConfig) -> str:
    d = config.to_dict()
    for key in _EVAL_ONLY_FIELDS:
        d.pop(key)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _rows_from_dicts(dicts: list[dict]) -> list[CellResult]:
    rows = []
    for d in dicts:
        d = dict(d)
        if d["snr_db"] == "clean":
            d["snr_db"] = float("inf")
        rows.append(CellResult(**d))
    return rows


def ensure_trained(config: ExperimentConfig, cache_dir: str | Path,
                   dataset: dict | None = None) -> tuple[Recognizer, dict]:
    """Train once per training digest; later calls rebuild from the checkpoint."""
    run_dir = Path(cache_dir) / f"train-{training_digest(config)}"
    ckpt = run_dir / "checkpoint.json"
    if dataset is None:
        dataset = make_dataset(config)
    vocab = Vocab(dataset["alphabet"].phonemes)
    if ckpt.exists():
        _, weights = load_checkpoint(ckpt)
        return build_model(config, vocab, weights), dataset
    run_dir.mkdir(parents=True, exist_ok=True)
    result = train(config, dataset=dataset)
    save_checkpoint(ckpt, config, result.model.params())
    tmp = run_dir / "train_log.json.tmp"
    tmp.write_text(json.dumps({"best_epoch": result.best_epoch, "log": result.log},
                              indent=2))
    tmp.replace(run_dir / "train_log.json")
    return result.model, dataset


def ensure_run(config: ExperimentConfig, cache_dir: str | Path,
               dataset: dict | None = None) -> list[CellResult]:
    """Train + sweep once per config digest; later calls load the cache."""
    eval_dir = Path(cache_dir) / f"eval-{config.digest()}"
    results_path = eval_dir / "results.json"
    if results_path.exists():
        payload = json.loads(results_path.read_text())
        return _rows_from_dicts(payload["rows"])
    model, dataset = ensure_trained(config, cache_dir, dataset)
    lm = fit_lm(dataset, Vocab(dataset["alphabet"].phonemes))
    rows = evaluate_sweep(model, dataset["test"], lm,
                          config.eval_noise_kinds, config.eval_snrs,
                          dataset["alphabet"], config.seed, out_dir=eval_dir)
    return rows


def compare_modes(base: ExperimentConfig, modes: list[str], seeds: list[int],
                  cache_dir: str | Path) -> dict:
    """results[mode][seed] -> {(kind, snr): wer}; one dataset per seed."""
    results: dict = {mode: {} for mode in modes}
    for seed in seeds:
        dataset = None
        for mode in modes:
            cfg = replace(base, mode=mode, seed=seed)
            if dataset is None:
                dataset = make_dataset(cfg)
            rows = ensure_run(cfg, cache_dir, dataset=dataset)
            results[mode][seed] = {(r.noise_kind, r.snr_db): r.wer for r in rows}
    return results


def mean_wer(results: dict, mode: str, kind: str, snr: float) -> float:
    per_seed = [cells[(kind, snr)] for cells in results[mode].values()]
    return sum(per_seed) / len(per_seed)
