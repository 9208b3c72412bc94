"""Full recognizer: front-ends, optional enhancement, encoder, CTC head and
attention decoder, plus joint loss and checkpoint serialization.

Modes select which inputs the model consumes:
  asr            audio features only
  vsr            visual features only
  avsr_baseline  raw audio/visual features fused by concatenation
  avsr_enhanced  visual-context mask enhancement before fusion
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .ctc import ctc_loss
from .data import AVSample, substream
from .decoder import TransformerDecoder
from .encoder import ConformerEncoder
from .enhance import ContextMaskEnhancer, FeatureFusion
from .frontend import AudioFrontend, VisualFrontend
from .layers import Linear
from .tensor import Tensor, add, log_softmax, pick, scale
from .vocab import Vocab

CHECKPOINT_FORMAT = "avsr-checkpoint-v1"


def joint_loss(attention_loss: Tensor, ctc_loss_value: Tensor, w: float) -> Tensor:
    """Convex mixture of the two sequence losses, weighted toward attention."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"joint loss weight must be in [0, 1], got {w}")
    return add(scale(attention_loss, w), scale(ctc_loss_value, 1.0 - w))


class Recognizer:
    def __init__(self, config: ExperimentConfig, vocab: Vocab,
                 rng: np.random.Generator | None = None):
        self.config = config
        self.vocab = vocab
        self.mode = config.mode
        rng = rng if rng is not None else substream(config.seed, "init")

        self.uses_audio = self.mode != "vsr"
        self.uses_visual = self.mode != "asr"

        self.audio_frontend = (AudioFrontend(rng, config.audio_dim, config.d1,
                                             kernel=config.frontend_kernel)
                               if self.uses_audio else None)
        self.visual_frontend = (VisualFrontend(rng, config.visual_dim, config.d1,
                                               kernel=config.frontend_kernel)
                               if self.uses_visual else None)
        self.enhancer = None
        self.fusion = None
        if self.mode == "avsr_enhanced":
            self.enhancer = ContextMaskEnhancer(
                rng, config.d1, config.d2, kernel=config.enhancer_kernel,
                heads=config.enhancer_heads, positional=config.enhancer_positional,
                mask_init_scale=config.mask_init_scale)
        elif self.mode == "avsr_baseline":
            self.fusion = FeatureFusion(rng, config.d1)

        self.encoder = ConformerEncoder(rng, config.d1, config.enc_ff, config.enc_heads,
                                        config.enc_kernel, config.enc_layers,
                                        positional=config.encoder_positional)
        self.ctc_head = Linear(rng, config.d1, vocab.size)
        self.decoder = TransformerDecoder(rng, vocab.size, config.d1, config.dec_ff,
                                          config.dec_heads, config.dec_layers)

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.audio_frontend is not None:
            out.update(self.audio_frontend.params("audio_frontend"))
        if self.visual_frontend is not None:
            out.update(self.visual_frontend.params("visual_frontend"))
        if self.enhancer is not None:
            out.update(self.enhancer.params("enhancer"))
        if self.fusion is not None:
            out.update(self.fusion.params("fusion"))
        out.update(self.encoder.params("encoder"))
        out.update(self.ctc_head.params("ctc_head"))
        out.update(self.decoder.params("decoder"))
        return out

    def features(self, sample: AVSample) -> tuple[Tensor, np.ndarray | None]:
        """Mode-dependent fused features [T, d1] and the mask when present."""
        f_a = self.audio_frontend(sample.audio) if self.uses_audio else None
        f_v = self.visual_frontend(sample.visual) if self.uses_visual else None
        if self.mode == "asr":
            return f_a, None
        if self.mode == "vsr":
            return f_v, None
        if self.mode == "avsr_baseline":
            return self.fusion(f_a, f_v), None
        fused, mask = self.enhancer(f_a, f_v)
        return fused, mask.data

    def encode(self, sample: AVSample) -> Tensor:
        fused, _ = self.features(sample)
        return self.encoder(fused)

    def ctc_log_probs(self, memory: Tensor) -> Tensor:
        return log_softmax(self.ctc_head(memory), axis=-1)

    def decoder_log_probs(self, memory: Tensor, tokens_in: list[int]) -> Tensor:
        return log_softmax(self.decoder.forward(memory, tokens_in), axis=-1)

    def attention_loss(self, memory: Tensor, target_ids: list[int]) -> Tensor:
        """Teacher-forced cross-entropy over target tokens plus eos."""
        if not target_ids:
            raise ValueError("attention loss needs a nonempty target")
        tokens_in = [self.vocab.bos_id] + list(target_ids)
        targets = np.asarray(list(target_ids) + [self.vocab.eos_id])
        lp = self.decoder_log_probs(memory, tokens_in)
        return scale(pick(lp, targets).sum(), -1.0)

    def loss(self, sample: AVSample) -> Tensor:
        """Joint loss for one sample (unnormalized)."""
        target_ids = self.vocab.encode(sample.transcript)
        memory = self.encode(sample)
        att = self.attention_loss(memory, target_ids)
        ctc = ctc_loss(self.ctc_log_probs(memory), target_ids, blank=self.vocab.blank_id)
        return joint_loss(att, ctc, self.config.loss_weight)


def save_checkpoint(path: str | Path, config: ExperimentConfig,
                    params: dict[str, Tensor]) -> None:
    """Named-parameter table as JSON with hex floats (bit-exact round trip)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "params": {
            name: {"shape": list(p.shape),
                   "data": [float(v).hex() for v in p.data.ravel()]}
            for name, p in params.items()
        },
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[ExperimentConfig, dict[str, np.ndarray]]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a recognizer checkpoint: {path}")
    config = ExperimentConfig.from_dict(payload["config"])
    params = {
        name: np.array([float.fromhex(v) for v in entry["data"]]).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    return config, params


def build_model(config: ExperimentConfig, vocab: Vocab,
                weights: dict[str, np.ndarray] | None = None) -> Recognizer:
    model = Recognizer(config, vocab)
    if weights is not None:
        own = model.params()
        if set(own) != set(weights):
            missing = sorted(set(own) ^ set(weights))
            raise ValueError(f"checkpoint parameters do not match model: {missing[:5]}")
        for name, p in own.items():
            if p.shape != weights[name].shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{p.shape} vs {weights[name].shape}")
            p.data[...] = weights[name]
    return model
