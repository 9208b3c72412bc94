"""Shared test utilities: finite-difference oracle and error metrics.

The numeric gradient here only ever calls forward evaluations, so it stays
independent of the backward implementations it is used to check.
"""

import numpy as np
import pytest


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f()`` w.r.t. array ``x``.

    Perturbs ``x`` in place entry by entry and restores it afterwards.
    """
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """Largest relative deviation; denominators below ``floor`` are clamped
    so near-zero gradients are compared absolutely."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def collapse_path(path, blank=0):
    """CTC collapse: drop repeats, then blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return tuple(out)


def brute_force_ctc_table(lp: np.ndarray, blank=0) -> dict:
    """Total probability per collapsed output, enumerating all |V|^T paths."""
    import itertools

    t_len, vocab = lp.shape
    table: dict = {}
    for path in itertools.product(range(vocab), repeat=t_len):
        p = float(np.exp(sum(lp[t, path[t]] for t in range(t_len))))
        key = collapse_path(path, blank)
        table[key] = table.get(key, 0.0) + p
    return table


def tiny_config(mode="avsr_enhanced", **overrides):
    """Smallest config that exercises every code path; fast to gradcheck."""
    from avsr.config import ExperimentConfig

    base = dict(
        mode=mode, d1=8, d2=4,
        enc_layers=1, enc_ff=12, enc_heads=2, enc_kernel=3,
        dec_layers=1, dec_ff=12, dec_heads=2,
        num_phonemes=4, num_visemes=2, audio_dim=5, visual_dim=4,
        length_min=2, length_max=3,
        train_samples=8, val_samples=4, test_samples=4,
        epochs=1, batch_size=4, seed=7,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def tiny_setup(mode="avsr_enhanced", seed=7, **overrides):
    """(config, vocab, alphabet, model, one clean sample)."""
    from avsr.data import build_alphabet, generate_sample, substream
    from avsr.model import Recognizer
    from avsr.vocab import Vocab

    cfg = tiny_config(mode=mode, seed=seed, **overrides)
    alphabet = build_alphabet(cfg.seed, cfg.num_phonemes, cfg.num_visemes,
                              cfg.audio_dim, cfg.visual_dim)
    vocab = Vocab(alphabet.phonemes)
    model = Recognizer(cfg, vocab)
    sample = generate_sample(alphabet, (cfg.length_min, cfg.length_max),
                             substream(cfg.seed, "data.test", 0), sample_id="t-0")
    return cfg, vocab, alphabet, model, sample
