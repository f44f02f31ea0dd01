"""Exact CTC machinery in log space.

Everything here works on plain (T, C) arrays of row-normalized
log-probabilities, with class 0 reserved for the blank. The forward/backward
recursions run over the blank-interleaved label sequence and accumulate with
log-sum-exp; -inf is the absorbing "no path" value and numpy's ``logaddexp``
propagates it without special casing.

Infeasible (frames, label) pairs raise :class:`FeasibilityError` from the
training-facing entry points, while the brute-force oracle stays total and
returns -inf, so it can double as the ground truth for the error paths too.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .corpus import BLANK, LabelSequence
from .errors import FeasibilityError

NEG_INF = float("-inf")

# brute_force_ctc refuses instances with more alignments than this
BRUTE_FORCE_LIMIT = 10**6


@dataclass
class CtcResult:
    """Path-sum log-probability and, optionally, d(-log P)/d(logits)."""

    log_prob: float
    grad: np.ndarray | None = None


def _as_logp(logp) -> np.ndarray:
    arr = np.asarray(getattr(logp, "logp", logp), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("logp must be a (T, C) matrix with T >= 1")
    return arr


def collapse(alignment) -> LabelSequence:
    """Merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for z in alignment:
        if z != prev and z != BLANK:
            out.append(int(z))
        prev = z
    return LabelSequence(tuple(out))


def _num_repeat_pairs(labels) -> int:
    toks = list(labels)
    return sum(1 for a, b in zip(toks, toks[1:]) if a == b)


def is_feasible(num_frames: int, labels) -> bool:
    """A label fits in T frames iff T >= L + (# adjacent equal pairs)."""
    return num_frames >= len(list(labels)) + _num_repeat_pairs(labels)


def _extended(labels) -> np.ndarray:
    toks = np.asarray(list(labels), dtype=np.int64)
    ext = np.full(2 * toks.size + 1, BLANK, dtype=np.int64)
    ext[1::2] = toks
    return ext


def ctc_log_prob(logp, labels, with_grad: bool = False) -> CtcResult:
    """Log path-sum probability of ``labels`` under a (T, C) log-prob matrix.

    Standard forward dynamic program over the blank-interleaved label
    sequence. With ``with_grad`` the forward-backward occupancies are turned
    into the gradient of the loss -log P with respect to the logits behind
    the given log-softmax output.
    """
    arr = _as_logp(logp)
    T, C = arr.shape
    toks = list(labels)
    if any(t == BLANK or t >= C for t in toks):
        raise ValueError("label token outside the non-blank class range")
    if not is_feasible(T, toks):
        raise FeasibilityError(
            f"label of length {len(toks)} with {_num_repeat_pairs(toks)} repeat pair(s) "
            f"does not fit in {T} frame(s)"
        )

    ext = _extended(toks)
    S = ext.size
    e = arr[:, ext]  # (T, S) emission log-probs
    allow = np.zeros(S, dtype=bool)
    if S > 2:
        allow[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = e[0, 0]
    if S > 1:
        alpha[0, 1] = e[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        if S > 2:
            acc[2:] = np.where(allow[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + e[t]

    log_prob = alpha[-1, -1] if S == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    log_prob = float(log_prob)
    if not with_grad:
        return CtcResult(log_prob=log_prob)

    beta = np.full((T, S), NEG_INF)
    beta[-1, -1] = e[-1, -1]
    if S > 1:
        beta[-1, -2] = e[-1, -2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        if S > 2:
            acc[:-2] = np.where(allow[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + e[t]

    # alpha + beta counts the emission at t twice
    occupancy = np.exp(alpha + beta - e - log_prob)  # (T, S)
    gamma = np.zeros((T, C))
    np.add.at(gamma, (np.arange(T)[:, None], ext[None, :]), occupancy)
    grad = np.exp(arr) - gamma
    return CtcResult(log_prob=log_prob, grad=grad)


def ctc_loss_batch(model_outputs, labels) -> float:
    """Sum of -log P over a batch; empty batches cost 0."""
    outs = list(model_outputs)
    labs = list(labels)
    if len(outs) != len(labs):
        raise ValueError(f"batch length mismatch: {len(outs)} outputs vs {len(labs)} labels")
    total = 0.0
    for i, (out, lab) in enumerate(zip(outs, labs)):
        try:
            total += -ctc_log_prob(out, lab).log_prob
        except FeasibilityError as e:
            uid = getattr(out, "utterance_id", i)
            raise FeasibilityError(f"utterance {uid}: {e}") from e
    return total


def greedy_decode(logp) -> tuple[LabelSequence, np.ndarray]:
    """Collapse of the per-frame argmax path, plus each frame's max log-prob.

    Ties break toward the lowest class index, so decodes are reproducible.
    """
    arr = _as_logp(logp)
    alignment = arr.argmax(axis=1)
    framewise_max = arr.max(axis=1)
    return collapse(alignment), framewise_max


def brute_force_ctc(logp, labels) -> float:
    """Literal path enumeration; the test oracle for :func:`ctc_log_prob`.

    Total over all inputs: an infeasible label simply has no compatible
    alignment and comes back as -inf.
    """
    arr = _as_logp(logp)
    T, C = arr.shape
    if C**T > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large to enumerate: {C}^{T} alignments")
    target = tuple(int(t) for t in labels)
    total = NEG_INF
    for z in itertools.product(range(C), repeat=T):
        if collapse(z).tokens != target:
            continue
        path_lp = sum(arr[t, k] for t, k in enumerate(z))
        total = np.logaddexp(total, path_lp)
    return float(total)
