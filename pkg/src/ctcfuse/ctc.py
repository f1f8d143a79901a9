"""CTC machinery: collapse, forward-backward loss, greedy and prefix beam search.

All functions are pure and operate on per-utterance log-probability
matrices in the log domain. The loss gradient is derived analytically
from the forward/backward lattice over the blank-augmented target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ctcfuse.tensor import Tensor

NEG_INF = -math.inf

TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class CtcPosterior:
    """Per-frame log-probabilities over the vocabulary (blank included)."""

    log_probs: np.ndarray  # [T, V]
    blank_id: int

    def __post_init__(self):
        if self.log_probs.ndim != 2 or self.log_probs.shape[0] < 1:
            raise ValueError("posterior must be a [T, V] matrix with T >= 1")
        if not 0 <= self.blank_id < self.log_probs.shape[1]:
            raise ValueError("blank id outside the posterior vocabulary")
        # guard against raw logits; the bound leaves room for the
        # finite-difference probes the tests run on single entries
        sums = np.exp(self.log_probs).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-5):
            raise ValueError("posterior rows must exponentiate to a distribution")

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]


@dataclass
class NBestList:
    """Ranked collapsed hypotheses with total log-probability scores."""

    hypotheses: list[tuple[TokenSeq, float]]
    requested: int
    incomplete: bool = field(default=False)

    def __post_init__(self):
        scores = [s for _, s in self.hypotheses]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueError("hypothesis scores must be non-increasing")
        seqs = [h for h, _ in self.hypotheses]
        if len(set(seqs)) != len(seqs):
            raise ValueError("duplicate hypothesis sequences")

    def __len__(self) -> int:
        return len(self.hypotheses)

    def sequences(self) -> list[TokenSeq]:
        return [h for h, _ in self.hypotheses]


@dataclass
class CtcLossResult:
    """Loss value plus the gradient w.r.t. the input log-probabilities.

    ``reachable`` is False when no frame path can collapse to the target
    (too few frames); the loss is then +inf and the gradient all zero.
    """

    loss: float
    grad: np.ndarray
    reachable: bool


def collapse(path, blank: int) -> TokenSeq:
    """Merge adjacent repeats, then drop blanks (blank separates repeats)."""
    out = []
    prev = None
    for tok in path:
        if tok != prev:
            out.append(tok)
        prev = tok
    return tuple(t for t in out if t != blank)


def min_frames(target) -> int:
    """Fewest frames that can emit ``target``: length plus forced separators."""
    reps = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + reps


def _augment(target, blank: int) -> np.ndarray:
    aug = np.empty(2 * len(target) + 1, dtype=np.int64)
    aug[::2] = blank
    aug[1::2] = target
    return aug


def ctc_loss(posterior: CtcPosterior, target) -> CtcLossResult:
    """Negative log-probability that any frame path collapses to ``target``.

    Computed over the blank-augmented label lattice with log-domain
    forward and backward passes; the returned gradient is w.r.t. the
    posterior's log-probabilities and its rows each sum to -1 when the
    target is reachable.
    """
    target = tuple(int(t) for t in target)
    blank = posterior.blank_id
    if blank in target:
        raise ValueError("CTC target must not contain the blank token")
    lp = posterior.log_probs
    t_frames, vocab = lp.shape

    if t_frames < min_frames(target):
        return CtcLossResult(math.inf, np.zeros_like(lp), reachable=False)

    aug = _augment(target, blank)
    s_len = aug.size
    emit = lp[:, aug]  # [T, S]

    # skip transition s-2 -> s allowed for non-blank labels that differ from
    # the label two slots back
    can_skip = np.zeros(s_len, dtype=bool)
    if s_len > 2:
        can_skip[2:] = (aug[2:] != blank) & (aug[2:] != aug[:-2])

    def shifted(prev: np.ndarray, by: int) -> np.ndarray:
        out = np.full(s_len, NEG_INF)
        out[by:] = prev[:-by]
        return out

    alpha = np.full((t_frames, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_frames):
        prev = alpha[t - 1]
        stay = prev
        step = shifted(prev, 1)
        skip = np.where(can_skip, shifted(prev, 2), NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(stay, step), skip) + emit[t]

    log_p = alpha[-1, -1] if s_len == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    if log_p == NEG_INF:
        return CtcLossResult(math.inf, np.zeros_like(lp), reachable=False)

    beta = np.full((t_frames, s_len), NEG_INF)
    beta[-1, -1] = emit[-1, -1]
    if s_len > 1:
        beta[-1, -2] = emit[-1, -2]
    can_skip_fwd = np.zeros(s_len, dtype=bool)
    if s_len > 2:
        can_skip_fwd[:-2] = can_skip[2:]
    for t in range(t_frames - 2, -1, -1):
        nxt = beta[t + 1]
        stay = nxt
        step = np.full(s_len, NEG_INF)
        step[:-1] = nxt[1:]
        skip = np.full(s_len, NEG_INF)
        skip[:-2] = np.where(can_skip_fwd[:-2], nxt[2:], NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), skip) + emit[t]

    # occupancy of lattice slot s at frame t; both passes include the frame's
    # emission, so divide it out once
    log_gamma = alpha + beta - emit
    grad = np.zeros_like(lp)
    with np.errstate(divide="ignore"):
        for s in range(s_len):
            col = np.exp(log_gamma[:, s] - log_p)
            grad[:, aug[s]] -= col
    return CtcLossResult(float(-log_p), grad, reachable=True)


def ctc_loss_op(posterior_tensor: Tensor, target, blank_id: int) -> tuple[Tensor, CtcLossResult]:
    """Autodiff wrapper: scalar loss tensor whose backward uses the analytic gradient.

    The caller must have checked reachability; an unreachable target is a
    contract violation here (the training loop screens such utterances out).
    """
    result = ctc_loss(CtcPosterior(posterior_tensor.data, blank_id), target)
    if not result.reachable:
        raise ValueError("ctc_loss_op called with an unreachable target")
    out = Tensor._result(
        np.asarray(result.loss),
        (posterior_tensor,),
        lambda g: (g * result.grad,),
    )
    return out, result


def greedy_1best(posterior: CtcPosterior) -> TokenSeq:
    """Frame-wise argmax followed by collapse; ties go to the lowest id."""
    path = np.argmax(posterior.log_probs, axis=1)
    return collapse(path.tolist(), posterior.blank_id)


def prefix_beam_nbest(
    posterior: CtcPosterior,
    beam_width: int | None,
    n: int,
) -> NBestList:
    """Prefix beam search over collapsed sequences.

    Maintains per-prefix blank/non-blank path mass in the log domain;
    scores are total log-probabilities summed over all frame paths that
    collapse to the prefix. ``beam_width=None`` disables pruning, making
    the ranking exact. Returns the top ``n`` prefixes; if fewer distinct
    prefixes are reachable the list is shorter and flagged ``incomplete``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if beam_width is not None and beam_width < n:
        raise ValueError("beam_width must be >= n")
    lp = posterior.log_probs
    blank = posterior.blank_id
    t_frames, vocab = lp.shape

    # prefix -> (log mass of paths ending in blank, ending in non-blank)
    beams: dict[TokenSeq, tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(t_frames):
        frame = lp[t]
        grown: dict[TokenSeq, tuple[float, float]] = {}

        def bump(prefix: TokenSeq, add_blank: float, add_nonblank: float) -> None:
            pb, pnb = grown.get(prefix, (NEG_INF, NEG_INF))
            grown[prefix] = (np.logaddexp(pb, add_blank), np.logaddexp(pnb, add_nonblank))

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            for k in range(vocab):
                p = frame[k]
                if k == blank:
                    bump(prefix, total + p, NEG_INF)
                elif prefix and k == prefix[-1]:
                    # repeat merges into the same prefix; a blank-separated
                    # path is the only way to extend with the same token
                    bump(prefix, NEG_INF, pnb + p)
                    bump(prefix + (k,), NEG_INF, pb + p)
                else:
                    bump(prefix + (k,), NEG_INF, total + p)

        if beam_width is not None and len(grown) > beam_width:
            ranked = sorted(
                grown.items(), key=lambda kv: (-np.logaddexp(*kv[1]), len(kv[0]), kv[0])
            )
            grown = dict(ranked[:beam_width])
        beams = grown

    scored = [(prefix, float(np.logaddexp(pb, pnb))) for prefix, (pb, pnb) in beams.items()]
    scored = [(p, s) for p, s in scored if s > NEG_INF]
    scored.sort(key=lambda ps: (-ps[1], len(ps[0]), ps[0]))
    top = scored[:n]
    return NBestList(hypotheses=top, requested=n, incomplete=len(top) < n)


def format_nbest(utt_id: str, nbest: NBestList, id_to_token) -> str:
    """Serialize an N-best list: one ``utt_id<TAB>rank<TAB>log_score<TAB>tokens`` line per hypothesis."""
    lines = []
    for rank, (seq, score) in enumerate(nbest.hypotheses, start=1):
        toks = " ".join(id_to_token[t] for t in seq)
        lines.append(f"{utt_id}\t{rank}\t{score:.8f}\t{toks}")
    return "\n".join(lines)
