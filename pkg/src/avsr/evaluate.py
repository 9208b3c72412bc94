"""Noise-sweep evaluation: per-cell WER/CER tables, plottable series, and
per-sample decode records."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from .config import CLEAN
from .data import (AVSample, cer as char_error_rate, levenshtein,
                   make_overlapped, mix_noise, substream, wer as word_error_rate)
from .enhance import dump_mask_csv
from .lm import BigramLM, train_bigram_lm
from .model import Recognizer
from .search import transcribe
from .vocab import Vocab


@dataclass
class CellResult:
    mode: str
    noise_kind: str
    snr_db: float
    wer: float          # corpus-level, as a fraction
    cer: float
    samples: int
    runtime_s: float = 0.0  # informational; kept out of the deterministic tables


def corrupt_for_eval(sample: AVSample, kind: str, snr: float, idx: int,
                     pool: list[AVSample], alphabet, seed: int) -> AVSample:
    """Deterministic evaluation corruption for one (kind, snr, sample) cell entry."""
    if snr == CLEAN:
        return sample
    rng = substream(seed, f"eval.{kind}", int(round(snr * 100)), idx)
    if kind == "overlap":
        j = int(rng.integers(0, len(pool)))
        if pool[j].sample_id == sample.sample_id:
            j = (j + 1) % len(pool)
        return make_overlapped(sample, pool[j], snr)
    return mix_noise(sample, kind, snr, rng, alphabet)


def evaluate_cell(model: Recognizer, samples: list[AVSample], lm: BigramLM | None,
                  kind: str, snr: float, alphabet, seed: int,
                  mask_dir: Path | None = None, mask_limit: int = 8):
    """(CellResult, per-sample decode records) for one noise condition."""
    start = time.perf_counter()
    edits = 0
    ref_tokens = 0
    cer_sum = 0.0
    records = []
    for i, clean in enumerate(samples):
        noisy = corrupt_for_eval(clean, kind, snr, i, samples, alphabet, seed)
        if mask_dir is not None and i < mask_limit and model.mode == "avsr_enhanced":
            _, mask = model.features(noisy)
            dump_mask_csv(mask_dir / f"mask_{noisy.sample_id}.csv", mask)
        hyp = transcribe(model, noisy, lm)
        ref = clean.transcript
        edits += levenshtein(hyp, ref)
        ref_tokens += len(ref)
        cer_sum += char_error_rate(hyp, ref)
        records.append({"sample_id": clean.sample_id, "hypothesis": hyp,
                        "reference": ref, "wer": word_error_rate(hyp, ref)})
    cell = CellResult(mode=model.mode, noise_kind=kind,
                      snr_db=snr, wer=edits / ref_tokens, cer=cer_sum / len(samples),
                      samples=len(samples), runtime_s=time.perf_counter() - start)
    return cell, records


def evaluate_sweep(model: Recognizer, samples: list[AVSample], lm: BigramLM | None,
                   kinds: list[str], snrs: list[float], alphabet, seed: int,
                   out_dir: str | Path | None = None,
                   dump_masks: bool = False) -> list[CellResult]:
    """One row per (noise kind, snr); optionally writes CSV/JSON artifacts."""
    mask_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if dump_masks:
            mask_dir = out_dir / "masks"
            mask_dir.mkdir(exist_ok=True)
    rows: list[CellResult] = []
    all_records: dict[str, list] = {}
    for kind in kinds:
        for snr in snrs:
            cell, records = evaluate_cell(model, samples, lm, kind, snr, alphabet,
                                          seed, mask_dir=mask_dir)
            rows.append(cell)
            all_records[f"{kind}@{format_snr(snr)}"] = records
    if out_dir is not None:
        write_results(out_dir, rows)
        tmp = out_dir / "decodes.jsonl.tmp"
        with open(tmp, "w") as fh:
            for key, records in all_records.items():
                for rec in records:
                    fh.write(json.dumps({"cell": key, **rec}) + "\n")
        tmp.replace(out_dir / "decodes.jsonl")
    return rows


def format_snr(snr: float) -> str:
    return "clean" if snr == CLEAN else f"{snr:g}dB"


def rows_to_dicts(rows: list[CellResult]) -> list[dict]:
    out = []
    for r in rows:
        d = asdict(r)
        d.pop("runtime_s")  # wall time cannot be part of a reproducible table
        d["snr_db"] = "clean" if r.snr_db == CLEAN else r.snr_db
        out.append(d)
    return out


def series_by_mode(rows: list[CellResult]) -> dict:
    """WER-vs-SNR series per (mode, noise kind), for plotting."""
    series: dict = {}
    for r in rows:
        series.setdefault(r.mode, {}).setdefault(r.noise_kind, {})[
            format_snr(r.snr_db)] = r.wer
    return series


def write_results(out_dir: str | Path, rows: list[CellResult]) -> None:
    """results.csv/json/txt (deterministic) plus per-cell wall times.

    Identical config and seed reproduce the three table files byte for byte;
    runtimes go to timing.json on the side.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tmp = out_dir / "results.csv.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "noise_kind", "snr_db", "wer", "cer", "samples"])
        for r in rows:
            writer.writerow([r.mode, r.noise_kind, format_snr(r.snr_db),
                             repr(r.wer), repr(r.cer), r.samples])
    tmp.replace(out_dir / "results.csv")

    payload = {"rows": rows_to_dicts(rows), "series": series_by_mode(rows)}
    tmp = out_dir / "results.json.tmp"
    tmp.write_text(json.dumps(payload, indent=2))
    tmp.replace(out_dir / "results.json")

    tmp = out_dir / "results.txt.tmp"
    tmp.write_text(render_table(rows))
    tmp.replace(out_dir / "results.txt")

    timing = [{"mode": r.mode, "noise_kind": r.noise_kind,
               "snr_db": format_snr(r.snr_db), "runtime_s": round(r.runtime_s, 3)}
              for r in rows]
    tmp = out_dir / "timing.json.tmp"
    tmp.write_text(json.dumps(timing, indent=2))
    tmp.replace(out_dir / "timing.json")


def render_table(rows: list[CellResult]) -> str:
    """Text table: one line per (mode, noise kind), one WER%% column per SNR."""
    snrs = sorted({r.snr_db for r in rows}, reverse=True)
    header = ["mode", "noise"] + [format_snr(s) for s in snrs]
    lines = [" | ".join(f"{h:>12}" for h in header)]
    lines.append("-+-".join("-" * 12 for _ in header))
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.mode, r.noise_kind), {})[r.snr_db] = r.wer
    for (mode, kind), cells in sorted(groups.items()):
        vals = [f"{100.0 * cells[s]:.2f}" if s in cells else "-" for s in snrs]
        lines.append(" | ".join(f"{v:>12}" for v in [mode, kind] + vals))
    return "\n".join(lines) + "\n"


def fit_lm(dataset: dict, vocab: Vocab) -> BigramLM:
    """Bigram LM over the training transcripts."""
    corpus = [vocab.encode(s.transcript) for s in dataset["train"]]
    return train_bigram_lm(corpus, vocab)


def decode_split(model: Recognizer, samples: list[AVSample], lm: BigramLM | None,
                 out_path: str | Path, kind: str | None = None,
                 snr: float = CLEAN, alphabet=None, seed: int = 0) -> list[dict]:
    """Decode one split (optionally corrupted) to a jsonl of hypothesis records."""
    records = []
    for i, clean in enumerate(samples):
        noisy = (corrupt_for_eval(clean, kind, snr, i, samples, alphabet, seed)
                 if kind is not None else clean)
        hyp = transcribe(model, noisy, lm)
        records.append({"sample_id": clean.sample_id, "hypothesis": hyp,
                        "reference": clean.transcript,
                        "wer": word_error_rate(hyp, clean.transcript)})
    out_path = Path(out_path)
    tmp = Path(str(out_path) + ".tmp")
    with open(tmp, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    tmp.replace(out_path)
    return records
