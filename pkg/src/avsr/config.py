"""Experiment configuration: one flat record covering model, data, training
and decoding, serializable to/from JSON with flag-style overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

MODES = ("asr", "vsr", "avsr_baseline", "avsr_enhanced")
CLEAN = float("inf")  # snr sentinel for uncorrupted audio


@dataclass
class ExperimentConfig:
    # model
    mode: str = "avsr_enhanced"
    d1: int = 32                      # feature width after the front-ends
    d2: int = 16                      # cross-modal context width
    enc_layers: int = 2
    enc_ff: int = 64
    enc_heads: int = 2
    enc_kernel: int = 7
    dec_layers: int = 2
    dec_ff: int = 64
    dec_heads: int = 2
    enhancer_kernel: int = 3
    enhancer_heads: int = 1
    enhancer_positional: bool = False
    encoder_positional: bool = True
    frontend_kernel: int = 3
    # data
    num_phonemes: int = 12
    num_visemes: int = 6
    audio_dim: int = 20
    visual_dim: int = 16
    length_min: int = 3
    length_max: int = 8
    train_samples: int = 2000
    val_samples: int = 200
    test_samples: int = 200
    jitter_snr_db: float = 40.0
    # training
    seed: int = 0
    lr: float = 1e-3
    lr_decay: float = 0.25            # factor applied at lr_decay_epoch (1.0 = off)
    lr_decay_epoch: int = -1          # -1 = two thirds of the way through
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 16
    epochs: int = 18
    keep_best: bool = True            # restore the best-validation epoch at the end
    loss_weight: float = 0.8          # attention share of the joint loss
    mask_init_scale: float = 0.1      # damping of the mask generator's output conv
    train_noise_kind: str = "gaussian"  # babble stays held out for evaluation
    train_snrs: list = field(default_factory=lambda: [-5.0, 0.0, 5.0, 10.0, 15.0])
    train_overlap: bool = False
    time_masking: bool = False
    # decoding / evaluation
    alpha: float = 0.3                # ctc share at decode time
    beta: float = 0.1                 # lm weight
    beam_width: int = 4
    length_norm: bool = False
    eval_noise_kinds: list = field(default_factory=lambda: ["babble"])
    eval_snrs: list = field(default_factory=lambda: [-5.0, 0.0, 5.0, 10.0, 15.0])

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.loss_weight <= 1.0:
            raise ValueError(f"loss_weight must be in [0, 1], got {self.loss_weight}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if not 2 <= self.length_min <= self.length_max <= 20:
            raise ValueError(f"length range must satisfy 2 <= min <= max <= 20, "
                             f"got [{self.length_min}, {self.length_max}]")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train_snrs"] = [_snr_out(s) for s in self.train_snrs]
        d["eval_snrs"] = [_snr_out(s) for s in self.eval_snrs]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("train_snrs", "eval_snrs"):
            if key in d:
                d[key] = [parse_snr(s) for s in d[key]]
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def override(self, **kwargs) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kwargs.items() if v is not None})
        return self.from_dict(d)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _snr_out(s: float):
    return "clean" if s == CLEAN else float(s)


def parse_snr(s) -> float:
    """Accept a number or the string 'clean' (case-insensitive)."""
    if isinstance(s, str):
        if s.lower() == "clean":
            return CLEAN
        return float(s)
    return float(s)
