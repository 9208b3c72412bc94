"""CTC: alignment-free sequence loss and incremental prefix scoring.

The loss treats the emission distribution as a product over frames and sums
path probabilities over all blank-augmented alignments with the standard
log-space forward recursion. The gradient with respect to the per-frame log
probabilities is computed analytically from the forward/backward lattices
and registered as a single tape record, so the log-softmax that produced
the inputs stays differentiable through the engine.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _emit

NEG = -np.inf


def interleave_blanks(targets: list[int], blank: int) -> list[int]:
    out = [blank]
    for t in targets:
        out.append(t)
        out.append(blank)
    return out


def min_frames(targets: list[int]) -> int:
    """Shortest alignment able to emit ``targets``: length plus forced blanks
    between adjacent repeats."""
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def _forward_lattice(lp: np.ndarray, labels: list[int], blank: int) -> np.ndarray:
    t_len = lp.shape[0]
    s_len = len(labels)
    alpha = np.full((t_len, s_len), NEG)
    alpha[0, 0] = lp[0, labels[0]]
    if s_len > 1:
        alpha[0, 1] = lp[0, labels[1]]
    lab = np.asarray(labels)
    emit = lp[:, lab]  # [T, S]
    # skip into state s allowed when lab[s] is content and differs from lab[s-2]
    can_skip = np.zeros(s_len, dtype=bool)
    can_skip[2:] = (lab[2:] != blank) & (lab[2:] != lab[:-2])
    with np.errstate(invalid="ignore"):  # NaN emissions must propagate silently
        for t in range(1, t_len):
            prev = alpha[t - 1]
            stay = prev
            move = np.concatenate(([NEG], prev))[:s_len]
            skip = np.concatenate(([NEG, NEG], prev))[:s_len]
            skip = np.where(can_skip, skip, NEG)
            alpha[t] = np.logaddexp(np.logaddexp(stay, move), skip) + emit[t]
    return alpha


def _backward_lattice(lp: np.ndarray, labels: list[int], blank: int) -> np.ndarray:
    t_len = lp.shape[0]
    s_len = len(labels)
    beta = np.full((t_len, s_len), NEG)
    beta[t_len - 1, s_len - 1] = lp[t_len - 1, labels[s_len - 1]]
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = lp[t_len - 1, labels[s_len - 2]]
    lab = np.asarray(labels)
    emit = lp[:, lab]
    # leaving state s by skip requires content at s+2 differing from lab[s]
    can_skip = np.zeros(s_len, dtype=bool)
    can_skip[:-2] = (lab[2:] != blank) & (lab[2:] != lab[:-2])
    with np.errstate(invalid="ignore"):
        for t in range(t_len - 2, -1, -1):
            nxt = beta[t + 1]
            stay = nxt
            move = np.concatenate((nxt[1:], [NEG]))[:s_len]
            skip = np.concatenate((nxt[2:], [NEG, NEG]))[:s_len]
            skip = np.where(can_skip, skip, NEG)
            beta[t] = np.logaddexp(np.logaddexp(stay, move), skip) + emit[t]
    return beta


def ctc_loss(log_probs: Tensor, targets: list[int], blank: int = 0) -> Tensor:
    """Negative log probability of ``targets`` under the CTC model.

    ``log_probs`` is [T, V] (normalized per frame); ``targets`` must not
    contain the blank symbol. Raises if no alignment of length T can emit
    the target sequence.
    """
    lp = log_probs.data
    if lp.ndim != 2:
        raise ValueError(f"ctc_loss expects [T, V] log-probs, got shape {lp.shape}")
    t_len, vocab = lp.shape
    targets = [int(t) for t in targets]
    if any(t == blank for t in targets):
        raise ValueError("ctc targets must not contain the blank symbol")
    if any(t < 0 or t >= vocab for t in targets):
        raise ValueError(f"ctc target id out of range for vocab size {vocab}")
    if min_frames(targets) > t_len:
        raise ValueError(
            f"infeasible alignment: {len(targets)} target tokens need at least "
            f"{min_frames(targets)} frames, got {t_len}")

    labels = interleave_blanks(targets, blank)
    alpha = _forward_lattice(lp, labels, blank)
    s_len = len(labels)
    with np.errstate(invalid="ignore"):
        if s_len > 1:
            log_p = np.logaddexp(alpha[t_len - 1, s_len - 1], alpha[t_len - 1, s_len - 2])
        else:
            log_p = alpha[t_len - 1, 0]
    out = Tensor(-log_p)

    def bwd(g: np.ndarray) -> None:
        beta = _backward_lattice(lp, labels, blank)
        lab = np.asarray(labels)
        # total probability of passing through lattice state s at frame t
        # (emission counted once); fold states sharing a symbol per frame
        occupancy = alpha + beta - lp[:, lab]
        grad = np.zeros_like(lp)
        with np.errstate(invalid="ignore"):
            post = np.exp(occupancy - log_p)
        post = np.nan_to_num(post, nan=0.0, posinf=0.0)
        for s, v in enumerate(labels):
            grad[:, v] += post[:, s]
        log_probs._accum(float(g) * (-grad))

    return _emit(out, (log_probs,), bwd)


class CtcPrefixScorer:
    """Prefix probabilities P(output starts with g) over a fixed utterance.

    State per hypothesis: two length-T log-prob vectors for paths matching
    the prefix and ending in its last symbol vs. in blank. ``extend`` scores
    every candidate token at once; ``state_for`` slices out the state of the
    chosen one.
    """

    def __init__(self, log_probs: np.ndarray, blank: int = 0):
        self.lp = np.asarray(log_probs, dtype=np.float64)
        self.t_len, self.vocab = self.lp.shape
        self.blank = blank

    def initial_state(self) -> tuple[np.ndarray, np.ndarray]:
        r_n = np.full(self.t_len, NEG)
        r_b = np.cumsum(self.lp[:, self.blank])
        return r_n, r_b

    def extend(self, state: tuple[np.ndarray, np.ndarray], last: int | None):
        """Score every candidate extension.

        Returns (psi [V], (r_n [T, V], r_b [T, V])) where psi[c] is the log
        prefix probability after appending c.
        """
        r_n, r_b = state
        lp = self.lp
        t_len, vocab = self.t_len, self.vocab

        phi = np.logaddexp(r_b[:, None], np.broadcast_to(r_n[:, None], (t_len, vocab)).copy())
        if last is not None:
            phi[:, last] = r_b  # repeat needs an intervening blank
        new_n = np.full((t_len, vocab), NEG)
        new_b = np.full((t_len, vocab), NEG)
        start = lp[0] if last is None else np.full(vocab, NEG)
        new_n[0] = start
        psi = start.copy()
        for t in range(1, t_len):
            new_n[t] = np.logaddexp(new_n[t - 1], phi[t - 1]) + lp[t]
            new_b[t] = np.logaddexp(new_b[t - 1], new_n[t - 1]) + lp[t, self.blank]
            psi = np.logaddexp(psi, phi[t - 1] + lp[t])
        return psi, (new_n, new_b)

    @staticmethod
    def state_for(states, token: int) -> tuple[np.ndarray, np.ndarray]:
        new_n, new_b = states
        return new_n[:, token].copy(), new_b[:, token].copy()

    def full_sequence_score(self, state) -> float:
        """Log probability that the output is exactly the current prefix."""
        r_n, r_b = state
        return float(np.logaddexp(r_n[self.t_len - 1], r_b[self.t_len - 1]))
