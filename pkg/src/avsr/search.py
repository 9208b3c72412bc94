"""Beam search over the attention decoder with CTC prefix scores and
shallow bigram-LM fusion.

A hypothesis completes when it expands with eos (full-sequence scores for
all three components) or when it hits the length cap, in which case its
prefix scores stand as-is. The best completed hypothesis under
(1-alpha)*log_pa + alpha*log_pc + beta*log_plm wins; score ties break
lexicographically on the token ids.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ctc import CtcPrefixScorer
from .lm import BigramLM
from .model import Recognizer
from .tensor import Tensor
from .vocab import Vocab


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    log_pa: float
    log_pc: float
    log_plm: float
    combined: float
    ctc_state: tuple | None = None

    @staticmethod
    def combine(log_pa: float, log_pc: float, log_plm: float,
                alpha: float, beta: float) -> float:
        return (1.0 - alpha) * log_pa + alpha * log_pc + beta * log_plm


def beam_search(model: Recognizer, memory: Tensor, lm: BigramLM | None,
                alpha: float, beta: float, beam_width: int,
                max_len: int | None = None, length_norm: bool = False) -> list[int]:
    """Highest-combined-score token sequence for one utterance."""
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    vocab: Vocab = model.vocab
    t_len = memory.shape[0]
    if max_len is None:
        max_len = t_len

    scorer = CtcPrefixScorer(model.ctc_log_probs(memory).data, blank=vocab.blank_id)
    content = vocab.content_ids

    def lm_step(prev: int, tok: int) -> float:
        if lm is None or beta == 0.0:
            return 0.0
        return lm.log_prob(prev, tok)

    start = Hypothesis(tokens=(), log_pa=0.0, log_pc=0.0, log_plm=0.0,
                       combined=0.0, ctc_state=scorer.initial_state())
    alive = [start]
    ended: list[Hypothesis] = []

    for _ in range(max_len):
        expansions: list[Hypothesis] = []
        for hyp in alive:
            last = hyp.tokens[-1] if hyp.tokens else None
            prev_for_lm = last if last is not None else vocab.bos_id
            dec_lp = model.decoder_log_probs(
                memory, [vocab.bos_id] + list(hyp.tokens)).data[-1]

            # completion: score eos against all three models
            pa_end = hyp.log_pa + float(dec_lp[vocab.eos_id])
            pc_end = scorer.full_sequence_score(hyp.ctc_state)
            plm_end = hyp.log_plm + lm_step(prev_for_lm, vocab.eos_id)
            ended.append(Hypothesis(
                tokens=hyp.tokens, log_pa=pa_end, log_pc=pc_end, log_plm=plm_end,
                combined=Hypothesis.combine(pa_end, pc_end, plm_end, alpha, beta)))

            psi, states = scorer.extend(hyp.ctc_state, last)
            for tok in content:
                pa = hyp.log_pa + float(dec_lp[tok])
                pc = float(psi[tok])
                plm = hyp.log_plm + lm_step(prev_for_lm, tok)
                expansions.append(Hypothesis(
                    tokens=hyp.tokens + (tok,), log_pa=pa, log_pc=pc, log_plm=plm,
                    combined=Hypothesis.combine(pa, pc, plm, alpha, beta),
                    ctc_state=CtcPrefixScorer.state_for(states, tok)))
        if not expansions:
            break
        expansions.sort(key=lambda h: (-h.combined, h.tokens))
        alive = expansions[:beam_width]

    # length cap reached: remaining hypotheses stand on their prefix scores
    ended.extend(alive)
    if length_norm:
        best = min(ended, key=lambda h: (-h.combined / max(1, len(h.tokens)), h.tokens))
    else:
        best = min(ended, key=lambda h: (-h.combined, h.tokens))
    return list(best.tokens)


def transcribe(model: Recognizer, sample, lm: BigramLM | None = None,
               alpha: float | None = None, beta: float | None = None,
               beam_width: int | None = None, max_len: int | None = None) -> str:
    """Decode one sample to a transcript string using the model's config defaults."""
    cfg = model.config
    memory = model.encode(sample)
    ids = beam_search(model, memory, lm,
                      alpha=cfg.alpha if alpha is None else alpha,
                      beta=cfg.beta if beta is None else beta,
                      beam_width=cfg.beam_width if beam_width is None else beam_width,
                      max_len=max_len, length_norm=cfg.length_norm)
    return model.vocab.decode(ids)
