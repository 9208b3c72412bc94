"""Add-one smoothed bigram language model for shallow fusion."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .vocab import Vocab


class BigramLM:
    """p(next | prev) over content tokens plus end-of-sequence.

    Contexts are bos plus every content token; events are every content
    token plus eos. Add-one smoothing keeps unseen transitions nonzero and
    each context's distribution normalized.
    """

    def __init__(self, vocab: Vocab):
        self.vocab = vocab
        self._content = vocab.content_ids
        # context index: 0 = bos, then content tokens in vocab order
        self._ctx_of = {vocab.bos_id: 0}
        self._ctx_of.update({c: i + 1 for i, c in enumerate(self._content)})
        # event index: content tokens in vocab order, then eos last
        self._ev_of = {c: i for i, c in enumerate(self._content)}
        self._ev_of[vocab.eos_id] = len(self._content)
        self.num_events = len(self._content) + 1
        self._log_p = np.full((len(self._ctx_of), self.num_events),
                              -np.log(self.num_events))

    def fit(self, corpus: Iterable[Sequence[int]]) -> "BigramLM":
        """Count bigrams over token-id sequences (content ids, no specials)."""
        counts = np.zeros_like(self._log_p)
        seen = False
        for seq in corpus:
            seen = True
            prev = self.vocab.bos_id
            for tok in seq:
                counts[self._ctx_of[prev], self._ev_of[tok]] += 1.0
                prev = tok
            counts[self._ctx_of[prev], self._ev_of[self.vocab.eos_id]] += 1.0
        if not seen:
            raise ValueError("bigram LM needs a nonempty corpus")
        totals = counts.sum(axis=1, keepdims=True)
        self._log_p = np.log(counts + 1.0) - np.log(totals + self.num_events)
        return self

    def log_prob(self, prev_id: int, next_id: int) -> float:
        return float(self._log_p[self._ctx_of[prev_id], self._ev_of[next_id]])

    def next_log_probs(self, prev_id: int) -> np.ndarray:
        """Log p(event | prev) for all events, in event-index order."""
        return self._log_p[self._ctx_of[prev_id]].copy()

    def sequence_log_prob(self, ids: Sequence[int]) -> float:
        """Chained log probability of the sequence followed by eos."""
        total = 0.0
        prev = self.vocab.bos_id
        for tok in ids:
            total += self.log_prob(prev, tok)
            prev = tok
        return total + self.log_prob(prev, self.vocab.eos_id)


def train_bigram_lm(corpus: Iterable[Sequence[int]], vocab: Vocab) -> BigramLM:
    return BigramLM(vocab).fit(corpus)
