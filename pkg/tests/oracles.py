"""Independent brute-force oracles shared by unit and acceptance tests.

Everything here is deliberately naive (full enumeration, full DP tables)
and kept separate from the library's own algorithms.
"""

from itertools import product

import numpy as np


def exhaustive_ctc_scores(log_probs: np.ndarray, blank: int) -> dict[tuple, float]:
    """Total probability of every collapsed sequence, by enumerating all V^T paths."""
    t_frames, vocab = log_probs.shape
    probs = np.exp(log_probs)
    totals: dict[tuple, float] = {}
    for path in product(range(vocab), repeat=t_frames):
        p = 1.0
        for t, k in enumerate(path):
            p *= probs[t, k]
        key = collapse_oracle(path, blank)
        totals[key] = totals.get(key, 0.0) + p
    return totals


def collapse_oracle(path, blank: int) -> tuple:
    out = []
    prev = None
    for tok in path:
        if tok != prev and tok != blank:
            out.append(tok)
        prev = tok
    return tuple(out)


def exhaustive_ctc_loss(log_probs: np.ndarray, target, blank: int) -> float:
    """-log of the summed probability of all paths collapsing to ``target``."""
    totals = exhaustive_ctc_scores(log_probs, blank)
    p = totals.get(tuple(target), 0.0)
    return float("inf") if p == 0.0 else -float(np.log(p))


def levenshtein_oracle(a, b) -> int:
    """Two-row unit-cost edit distance, no traceback."""
    if len(a) > len(b):
        a, b = b, a
    prev = list(range(len(a) + 1))
    for j, cb in enumerate(b, start=1):
        cur = [j]
        for i, ca in enumerate(a, start=1):
            if ca == cb:
                cur.append(prev[i - 1])
            else:
                cur.append(1 + min(prev[i - 1], prev[i], cur[-1]))
        prev = cur
    return prev[-1]


def random_posterior(rng: np.random.Generator, t_frames: int, vocab: int) -> np.ndarray:
    """Random row-stochastic matrix in the log domain."""
    logits = rng.normal(size=(t_frames, vocab)) * 2.0
    logits -= logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return logits - log_z
