"""Synthetic paired audio-visual data.

Each phoneme has a distinct audio template; phonemes sharing a viseme share
one visual template, so video alone cannot separate them while audio can.
Samples expand each transcript symbol into 4 audio frames and 1 video frame
(plus small jitter), keeping the two streams aligned 4:1 by construction.
Noise mixing is power-calibrated: the measured SNR of a mixed sample equals
the requested value to float precision.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CLEAN = float("inf")
FRAMES_PER_PHONEME = 4


def substream(root_seed: int, name: str, *indices: int) -> np.random.Generator:
    """Named, index-addressed RNG stream derived from one root seed."""
    key = [int(root_seed) & 0xFFFFFFFF, zlib.crc32(name.encode())]
    key.extend(int(i) & 0xFFFFFFFF for i in indices)
    return np.random.default_rng(key)


@dataclass
class PhonemeAlphabet:
    """Phoneme inventory with a many-to-one viseme map and signal templates."""

    phonemes: list[str]
    viseme_of: dict[str, int]
    audio_templates: np.ndarray   # [P, audio_dim]
    visual_templates: np.ndarray  # [num_visemes, visual_dim]

    def __post_init__(self):
        visemes = set(self.viseme_of.values())
        if visemes != set(range(self.num_visemes)):
            raise ValueError("viseme map must cover every viseme index")
        counts = [list(self.viseme_of.values()).count(v) for v in range(self.num_visemes)]
        if max(counts) < 2:
            raise ValueError("viseme map must be non-injective "
                             "(at least one viseme shared by two phonemes)")

    @property
    def num_visemes(self) -> int:
        return self.visual_templates.shape[0]

    @property
    def audio_dim(self) -> int:
        return self.audio_templates.shape[1]

    @property
    def visual_dim(self) -> int:
        return self.visual_templates.shape[1]

    def audio_template(self, phoneme: str) -> np.ndarray:
        return self.audio_templates[self.phonemes.index(phoneme)]

    def visual_template(self, phoneme: str) -> np.ndarray:
        return self.visual_templates[self.viseme_of[phoneme]]


def build_alphabet(seed: int, num_phonemes: int = 12, num_visemes: int = 6,
                   audio_dim: int = 20, visual_dim: int = 16) -> PhonemeAlphabet:
    """Deterministic alphabet: phoneme i maps to viseme i mod num_visemes."""
    if num_phonemes > 26:
        raise ValueError("at most 26 single-letter phonemes supported")
    if num_phonemes < 2 * num_visemes:
        raise ValueError("need at least two phonemes per viseme "
                         f"({num_phonemes} phonemes over {num_visemes} visemes)")
    rng = substream(seed, "alphabet")
    phonemes = [chr(ord("a") + i) for i in range(num_phonemes)]
    viseme_of = {p: i % num_visemes for i, p in enumerate(phonemes)}
    return PhonemeAlphabet(
        phonemes=phonemes,
        viseme_of=viseme_of,
        audio_templates=rng.normal(size=(num_phonemes, audio_dim)),
        visual_templates=rng.normal(size=(num_visemes, visual_dim)),
    )


@dataclass
class AVSample:
    sample_id: str
    visual: np.ndarray    # [T, visual_dim]
    audio: np.ndarray     # [4*T, audio_dim]
    transcript: str       # one letter per phoneme
    snr_db: float = CLEAN
    noise_kind: str | None = None


NOISE_KINDS = ("gaussian", "babble", "overlap")


@dataclass(frozen=True)
class NoiseSpec:
    """One corruption draw: what kind, how strong, which random stream."""

    kind: str
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r} (expected one of {NOISE_KINDS})")
        if np.isnan(self.snr_db):
            raise ValueError("snr_db must be a number or the clean sentinel (inf)")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _jittered(clean: np.ndarray, rng: np.random.Generator, jitter_snr_db: float) -> np.ndarray:
    power = float(np.mean(clean ** 2))
    std = math.sqrt(power * 10.0 ** (-jitter_snr_db / 10.0))
    return clean + rng.normal(scale=std, size=clean.shape)


def generate_sample(alphabet: PhonemeAlphabet, length_range: tuple[int, int],
                    seed_rng: np.random.Generator, sample_id: str = "",
                    jitter_snr_db: float = 40.0) -> AVSample:
    """Clean sample: random transcript, template streams plus jitter.

    Transcripts avoid immediate repeats: at one aligned frame per phoneme a
    repeated symbol would need an extra blank frame, making the sample
    unalignable for the sequence loss.
    """
    lo, hi = length_range
    if not 2 <= lo <= hi <= 20:
        raise ValueError(f"length range must satisfy 2 <= min <= max <= 20, got {length_range}")
    length = int(seed_rng.integers(lo, hi + 1))
    symbols = [int(seed_rng.integers(0, len(alphabet.phonemes)))]
    while len(symbols) < length:
        step = int(seed_rng.integers(1, len(alphabet.phonemes)))
        symbols.append((symbols[-1] + step) % len(alphabet.phonemes))
    transcript = "".join(alphabet.phonemes[i] for i in symbols)
    audio = np.repeat(np.stack([alphabet.audio_template(p) for p in transcript]),
                      FRAMES_PER_PHONEME, axis=0)
    visual = np.stack([alphabet.visual_template(p) for p in transcript])
    return AVSample(
        sample_id=sample_id,
        visual=_jittered(visual, seed_rng, jitter_snr_db),
        audio=_jittered(audio, seed_rng, jitter_snr_db),
        transcript=transcript,
    )


def _phoneme_stream(alphabet: PhonemeAlphabet, frames: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Random frame-synchronous template stream, ``frames`` long.

    Interferers share the target's segment grid, so a noisy mix is a sum of
    templates with no alignment cue singling the target out.
    """
    count = frames // FRAMES_PER_PHONEME + 1
    ids = rng.integers(0, len(alphabet.phonemes), size=count)
    stream = np.repeat(alphabet.audio_templates[ids], FRAMES_PER_PHONEME, axis=0)
    return stream[:frames]


def make_noise(kind: str, frames: int, dim: int, rng: np.random.Generator,
               alphabet: PhonemeAlphabet | None = None) -> np.ndarray:
    if kind == "gaussian":
        return rng.normal(size=(frames, dim))
    if kind == "babble":
        if alphabet is None:
            raise ValueError("babble noise needs the phoneme alphabet")
        return sum(_phoneme_stream(alphabet, frames, rng) for _ in range(3))
    raise ValueError(f"unknown noise kind {kind!r} (expected 'gaussian' or 'babble')")


def scaled_to_snr(signal: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """Scale ``noise`` so 10*log10(P_signal / P_noise) == snr_db exactly."""
    p_sig = float(np.mean(signal ** 2))
    if p_sig == 0.0:
        raise ValueError("cannot calibrate SNR against a zero-power signal")
    p_noise = float(np.mean(noise ** 2))
    if p_noise == 0.0:
        raise ValueError("noise stream has zero power")
    return noise * math.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))


def measured_snr_db(signal: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * math.log10(float(np.mean(signal ** 2)) / float(np.mean(noise ** 2)))


def mix_noise(sample: AVSample, kind: str, snr_db: float,
              rng: np.random.Generator,
              alphabet: PhonemeAlphabet | None = None) -> AVSample:
    """Return a copy with additive noise at exactly ``snr_db``; clean passes through."""
    if snr_db == CLEAN:
        return AVSample(sample.sample_id, sample.visual.copy(), sample.audio.copy(),
                        sample.transcript, CLEAN, None)
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or the clean sentinel, got {snr_db}")
    noise = make_noise(kind, sample.audio.shape[0], sample.audio.shape[1], rng, alphabet)
    noise = scaled_to_snr(sample.audio, noise, snr_db)
    return AVSample(sample.sample_id, sample.visual.copy(), sample.audio + noise,
                    sample.transcript, float(snr_db), kind)


def apply_noise(sample: AVSample, spec: NoiseSpec,
                alphabet: PhonemeAlphabet | None = None,
                distractor: AVSample | None = None) -> AVSample:
    """Corrupt one sample according to a NoiseSpec.

    The overlap kind needs the competing utterance passed in; additive kinds
    draw their noise from the spec's seed.
    """
    if spec.kind == "overlap":
        if spec.snr_db == CLEAN:
            return AVSample(sample.sample_id, sample.visual.copy(),
                            sample.audio.copy(), sample.transcript, CLEAN, None)
        if distractor is None:
            raise ValueError("overlap corruption needs a distractor sample")
        return make_overlapped(sample, distractor, spec.snr_db)
    return mix_noise(sample, spec.kind, spec.snr_db, spec.rng(), alphabet)


def make_overlapped(sample: AVSample, distractor: AVSample, snr_db: float) -> AVSample:
    """Mix a competing utterance into the audio; video and transcript stay the
    target's. The distractor is tiled or trimmed to the target's length."""
    if distractor is sample or distractor.sample_id == sample.sample_id:
        raise ValueError("distractor must be a different sample")
    frames = sample.audio.shape[0]
    reps = -(-frames // distractor.audio.shape[0])
    other = np.tile(distractor.audio, (reps, 1))[:frames]
    other = scaled_to_snr(sample.audio, other, snr_db)
    return AVSample(sample.sample_id, sample.visual.copy(), sample.audio + other,
                    sample.transcript, float(snr_db), "overlap")


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def wer(hyp: Sequence, ref: Sequence) -> float:
    if len(ref) == 0:
        raise ValueError("wer needs a nonempty reference")
    return levenshtein(hyp, ref) / len(ref)


def cer(hyp: str, ref: str) -> float:
    if len(ref) == 0:
        raise ValueError("cer needs a nonempty reference")
    return levenshtein(list(hyp), list(ref)) / len(ref)


def generate_split(alphabet: PhonemeAlphabet, count: int, root_seed: int,
                   split: str, length_range: tuple[int, int],
                   jitter_snr_db: float = 40.0) -> list[AVSample]:
    """Samples with per-index seeds; distinct splits use disjoint streams."""
    return [generate_sample(alphabet, length_range,
                            substream(root_seed, f"data.{split}", i),
                            sample_id=f"{split}-{i:05d}",
                            jitter_snr_db=jitter_snr_db)
            for i in range(count)]


def sample_to_record(sample: AVSample) -> dict:
    return {
        "id": sample.sample_id,
        "visual": [[float(v) for v in row] for row in sample.visual],
        "audio": [[float(v) for v in row] for row in sample.audio],
        "transcript": sample.transcript,
        "snr_db": "clean" if sample.snr_db == CLEAN else float(sample.snr_db),
        "noise_kind": sample.noise_kind,
    }


def sample_from_record(rec: dict) -> AVSample:
    snr = rec.get("snr_db", "clean")
    return AVSample(
        sample_id=rec["id"],
        visual=np.asarray(rec["visual"], dtype=np.float64),
        audio=np.asarray(rec["audio"], dtype=np.float64),
        transcript=rec["transcript"],
        snr_db=CLEAN if snr == "clean" else float(snr),
        noise_kind=rec.get("noise_kind"),
    )


def write_jsonl(path: str | Path, samples: Iterable[AVSample]) -> None:
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_record(s)) + "\n")
    tmp.replace(path)


def read_jsonl(path: str | Path) -> list[AVSample]:
    with open(path) as fh:
        return [sample_from_record(json.loads(line)) for line in fh if line.strip()]


SPLITS = ("train", "val", "test")

_META_FIELDS = ("seed", "num_phonemes", "num_visemes", "audio_dim", "visual_dim",
                "length_min", "length_max", "train_samples", "val_samples",
                "test_samples", "jitter_snr_db")


def make_dataset(config) -> dict:
    """Alphabet plus clean train/val/test splits from the config's data fields."""
    alphabet = build_alphabet(config.seed, config.num_phonemes, config.num_visemes,
                              config.audio_dim, config.visual_dim)
    length_range = (config.length_min, config.length_max)
    counts = {"train": config.train_samples, "val": config.val_samples,
              "test": config.test_samples}
    out = {"alphabet": alphabet}
    for split in SPLITS:
        out[split] = generate_split(alphabet, counts[split], config.seed, split,
                                    length_range, config.jitter_snr_db)
    return out


def save_dataset(out_dir: str | Path, config, dataset: dict) -> None:
    """One jsonl manifest per split plus the generation metadata."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {k: getattr(config, k) for k in _META_FIELDS}
    tmp = out_dir / "meta.json.tmp"
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True))
    tmp.replace(out_dir / "meta.json")
    for split in SPLITS:
        write_jsonl(out_dir / f"{split}.jsonl", dataset[split])


def load_dataset(data_dir: str | Path) -> tuple[dict, dict]:
    """(generation metadata, dataset dict with regenerated alphabet)."""
    data_dir = Path(data_dir)
    meta_path = data_dir / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no dataset at {data_dir} (missing meta.json)")
    meta = json.loads(meta_path.read_text())
    alphabet = build_alphabet(meta["seed"], meta["num_phonemes"], meta["num_visemes"],
                              meta["audio_dim"], meta["visual_dim"])
    dataset = {"alphabet": alphabet}
    for split in SPLITS:
        dataset[split] = read_jsonl(data_dir / f"{split}.jsonl")
    return meta, dataset
