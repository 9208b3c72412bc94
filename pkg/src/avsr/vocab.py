"""Token inventory shared by the CTC head, decoder, LM and beam search."""

from __future__ import annotations

from typing import Iterable, Sequence

BLANK = "<blank>"
BOS = "<bos>"
EOS = "<eos>"


class Vocab:
    """Ordered tokens with blank pinned at index 0, then bos and eos."""

    def __init__(self, content_tokens: Iterable[str]):
        content = list(content_tokens)
        if len(set(content)) != len(content):
            raise ValueError("duplicate content tokens")
        if any(t in (BLANK, BOS, EOS) for t in content):
            raise ValueError("content tokens may not shadow the special symbols")
        self.tokens = [BLANK, BOS, EOS] + content
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def size(self) -> int:
        return len(self.tokens)

    blank_id = 0
    bos_id = 1
    eos_id = 2

    @property
    def content_ids(self) -> list[int]:
        return list(range(3, len(self.tokens)))

    def encode(self, text: Sequence[str]) -> list[int]:
        return [self._index[t] for t in text]

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.tokens[i] for i in ids)

    def __repr__(self) -> str:
        return f"Vocab(size={self.size})"
