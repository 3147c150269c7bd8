"""Linear-chain CRF over BIOES tags.

The transition matrix has ``K + 2`` rows/columns: the ``K`` real tags, then
``START`` (index ``K``) and ``STOP`` (index ``K + 1``). A path
``y_1..y_T`` scores::

    A[START, y_1] + sum_t A[y_t, y_{t+1}] + A[y_T, STOP] + sum_t P[t, y_t]

Transitions into START and out of STOP are pinned at ``-1e4`` and receive
no gradient.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .layers import INIT_STD, Layout, Module, linear, normal, zeros
from .tagging import NUM_TAGS, TAGS, split_tag

FORBIDDEN = -1e4


def start_index(num_tags: int) -> int:
    return num_tags


def stop_index(num_tags: int) -> int:
    return num_tags + 1


def pin_boundaries(transitions: np.ndarray) -> np.ndarray:
    k = transitions.shape[0] - 2
    transitions[:, start_index(k)] = FORBIDDEN
    transitions[stop_index(k), :] = FORBIDDEN
    return transitions


def init_transitions(rng: np.random.Generator, num_tags: int = NUM_TAGS) -> np.ndarray:
    return pin_boundaries(rng.normal(0.0, INIT_STD, size=(num_tags + 2, num_tags + 2)))


def _check(emissions: np.ndarray, transitions: np.ndarray) -> int:
    t, k = emissions.shape
    if t < 1:
        raise ContractError("CRF needs at least one position")
    if transitions.shape != (k + 2, k + 2):
        raise ContractError(f"transitions {transitions.shape} do not match {k} tags (+START/STOP)")
    return k


def sequence_score(emissions: np.ndarray, transitions: np.ndarray, tags: Sequence[int]) -> float:
    emissions = np.asarray(emissions, dtype=np.float64)
    k = _check(emissions, transitions)
    tags = list(tags)
    if len(tags) != emissions.shape[0] or any(not 0 <= y < k for y in tags):
        raise ContractError(f"tag sequence {tags} invalid for {emissions.shape[0]} positions and {k} tags")
    path = [start_index(k)] + tags + [stop_index(k)]
    score = 0.0
    for a, b in zip(path[:-1], path[1:]):
        score += transitions[a, b]
    for t, y in enumerate(tags):
        score += emissions[t, y]
    return float(score)


def _forward(emissions: np.ndarray, transitions: np.ndarray) -> tuple[float, np.ndarray]:
    k = emissions.shape[1]
    trans = transitions[:k, :k]
    alpha = np.empty_like(emissions)
    alpha[0] = transitions[start_index(k), :k] + emissions[0]
    for t in range(1, len(emissions)):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    return float(logsumexp(alpha[-1] + transitions[:k, stop_index(k)])), alpha


def _backward(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    k = emissions.shape[1]
    trans = transitions[:k, :k]
    beta = np.empty_like(emissions)
    beta[-1] = transitions[:k, stop_index(k)]
    for t in range(len(emissions) - 2, -1, -1):
        beta[t] = logsumexp(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log of the summed exp-score over all tag paths (forward algorithm)."""
    emissions = np.asarray(emissions, dtype=np.float64)
    _check(emissions, transitions)
    return _forward(emissions, transitions)[0]


def marginal_gradients(emissions: np.ndarray, transitions: np.ndarray, tags: Sequence[int]):
    """NLL value and its gradients w.r.t. emissions and transitions."""
    k = emissions.shape[1]
    start, stop = start_index(k), stop_index(k)
    log_z, alpha = _forward(emissions, transitions)
    beta = _backward(emissions, transitions)
    node = np.exp(alpha + beta - log_z)
    g_trans = np.zeros_like(transitions)
    if len(emissions) > 1:
        pair = alpha[:-1, :, None] + transitions[None, :k, :k] + (emissions[1:] + beta[1:])[:, None, :]
        g_trans[:k, :k] = np.exp(pair - log_z).sum(axis=0)
    g_trans[start, :k] += node[0]
    g_trans[:k, stop] += node[-1]
    g_emit = node.copy()
    tags = np.asarray(tags, dtype=np.intp)
    g_emit[np.arange(len(tags)), tags] -= 1.0
    path = np.concatenate([[start], tags, [stop]])
    np.add.at(g_trans, (path[:-1], path[1:]), -1.0)
    g_trans[:, start] = 0.0
    g_trans[stop, :] = 0.0
    # log_z dominates every path score; clamp summation-order round-off
    nll = max(log_z - sequence_score(emissions, transitions, tags), 0.0)
    return nll, g_emit, g_trans


def crf_nll(emissions: Tensor, transitions: Tensor, tags: Sequence[int]) -> Tensor:
    """``log_partition - sequence_score(tags)`` for a single sentence."""
    _check(emissions.data, transitions.data)
    nll, g_emit, g_trans = marginal_gradients(emissions.data, transitions.data, tags)
    return ad.custom_op(
        np.asarray(nll), (emissions, transitions), lambda g: (g * g_emit, g * g_trans), "crf_nll"
    )


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def batch_marginal_gradients(emissions: np.ndarray, transitions: np.ndarray, tags: np.ndarray,
                             lengths: np.ndarray):
    """Vectorised :func:`marginal_gradients` over right-padded sentences.

    ``emissions`` is ``B x T x K``; returns per-sentence NLLs, the emission
    gradient (zero on padding) and the summed transition gradient.
    """
    b, t_max, k = emissions.shape
    start, stop = start_index(k), stop_index(k)
    trans = transitions[:k, :k]
    live = np.arange(t_max)[None, :] < lengths[:, None]  # B x T
    last = lengths - 1
    rows = np.arange(b)

    alpha = np.empty_like(emissions)
    alpha[:, 0] = transitions[start, :k] + emissions[:, 0]
    for t in range(1, t_max):
        alpha[:, t] = _lse(alpha[:, t - 1, :, None] + trans[None], axis=1) + emissions[:, t]
    log_z = _lse(alpha[rows, last] + transitions[:k, stop], axis=1)

    beta = np.empty_like(emissions)
    beta[:, t_max - 1] = transitions[:k, stop]
    for t in range(t_max - 2, -1, -1):
        rec = _lse(trans[None] + (emissions[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        beta[:, t] = np.where((t >= last)[:, None], transitions[:k, stop], rec)

    node = np.exp(alpha + beta - log_z[:, None, None]) * live[:, :, None]
    g_trans = np.zeros_like(transitions)
    if t_max > 1:
        pair = alpha[:, :-1, :, None] + trans[None, None] + (emissions[:, 1:] + beta[:, 1:])[:, :, None, :]
        pair = np.exp(pair - log_z[:, None, None, None]) * live[:, 1:, None, None]
        g_trans[:k, :k] = pair.sum(axis=(0, 1))
    g_trans[start, :k] = node[:, 0].sum(axis=0)
    g_trans[:k, stop] = node[rows, last].sum(axis=0)

    tags = np.where(live, tags, 0)
    gold = np.zeros_like(emissions)
    gold[rows[:, None], np.arange(t_max)[None, :], tags] = live
    g_emit = node - gold
    score = (emissions * gold).sum(axis=(1, 2)) + transitions[start, tags[:, 0]] + transitions[tags[rows, last], stop]
    np.add.at(g_trans, (start, tags[:, 0]), -1.0)
    np.add.at(g_trans, (tags[rows, last], stop), -1.0)
    if t_max > 1:
        step = live[:, 1:]
        score = score + (trans[tags[:, :-1], tags[:, 1:]] * step).sum(axis=1)
        np.add.at(g_trans, (tags[:, :-1][step], tags[:, 1:][step]), -1.0)
    g_trans[:, start] = 0.0
    g_trans[stop, :] = 0.0
    return np.maximum(log_z - score, 0.0), g_emit, g_trans


def crf_batch_nll(emissions: Tensor, transitions: Tensor, gold: np.ndarray, layout: Layout) -> Tensor:
    """Mean sentence NLL over a packed batch; padded rows get zero gradient."""
    lengths = layout.key_mask.sum(axis=1)
    if not np.array_equal(layout.key_mask, Layout.from_lengths(lengths).key_mask):
        raise ContractError("CRF expects right-padded (prefix) masks")
    b, t_max = layout.batch_size, layout.t_max
    k = emissions.shape[1]
    _check(emissions.data, transitions.data)
    gold = np.asarray(gold, dtype=np.intp).reshape(b, t_max)
    nll, g_emit, g_trans = batch_marginal_gradients(emissions.data.reshape(b, t_max, k), transitions.data,
                                                    gold, lengths)
    g_emit = g_emit.reshape(-1, k) / b
    g_trans = g_trans / b
    return ad.custom_op(
        np.asarray(nll.mean()), (emissions, transitions), lambda g: (g * g_emit, g * g_trans), "crf_batch_nll"
    )


def bioes_allowed(num_tags: int = NUM_TAGS) -> np.ndarray:
    """Boolean ``(K+2) x (K+2)`` matrix of grammatical transitions."""
    k = num_tags
    ok = np.zeros((k + 2, k + 2), dtype=bool)
    start, stop = start_index(k), stop_index(k)

    def can_follow(prev: str | None, cur: str | None) -> bool:
        ppos, psent = ("O", None) if prev is None else split_tag(prev)
        cpos, csent = ("O", None) if cur is None else split_tag(cur)
        run_open = ppos in ("B", "I")
        if cpos in ("I", "E"):
            return run_open and psent == csent
        return not run_open

    names = TAGS[:k]
    for j, cur in enumerate(names):
        ok[start, j] = can_follow(None, cur)
        ok[j, stop] = can_follow(cur, None)
        for i, prev in enumerate(names):
            ok[i, j] = can_follow(prev, cur)
    return ok


def viterbi(emissions: np.ndarray, transitions: np.ndarray, allowed: np.ndarray | None = None) -> list[int]:
    """Highest-scoring path; ties go to the lowest tag index.

    ``allowed`` optionally forbids transitions (e.g. :func:`bioes_allowed`).
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    k = _check(emissions, transitions)
    trans = np.asarray(transitions, dtype=np.float64)
    if allowed is not None:
        trans = np.where(allowed, trans, -np.inf)
    start, stop = start_index(k), stop_index(k)
    delta = trans[start, :k] + emissions[0]
    back = np.zeros((len(emissions), k), dtype=np.intp)
    for t in range(1, len(emissions)):
        cand = delta[:, None] + trans[:k, :k]
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(k)] + emissions[t]
    best = int(np.argmax(delta + trans[:k, stop]))
    path = [best]
    for t in range(len(emissions) - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    return path[::-1]


def brute_force(emissions: np.ndarray, transitions: np.ndarray):
    """Enumerate every path: returns (log-partition, best score, {path: score})."""
    t, k = np.asarray(emissions).shape
    scores = {y: sequence_score(emissions, transitions, y) for y in itertools.product(range(k), repeat=t)}
    vals = np.fromiter(scores.values(), dtype=np.float64)
    return float(logsumexp(vals)), float(vals.max()), scores


class CRFHead(Module):
    variant = "crf"

    def __init__(self, dim: int, rng: np.random.Generator, num_tags: int = NUM_TAGS, constrained: bool = False):
        super().__init__()
        self.num_tags = num_tags
        self.constrained = constrained
        self.params["w_e"] = normal(rng, (dim, num_tags))
        self.params["b_e"] = zeros(num_tags)
        self.params["transitions"] = Tensor(init_transitions(rng, num_tags), requires_grad=True)

    def emissions(self, h: Tensor) -> Tensor:
        return linear(h, self.params["w_e"], self.params["b_e"])

    def loss(self, h: Tensor, gold: np.ndarray, layout: Layout) -> Tensor:
        return crf_batch_nll(self.emissions(h), self.params["transitions"], gold, layout)

    def decode(self, h: Tensor, layout: Layout) -> list[list[int]]:
        emit = self.emissions(h).data
        trans = self.params["transitions"].data
        allowed = bioes_allowed(self.num_tags) if self.constrained else None
        lengths = layout.key_mask.sum(axis=1)
        return [
            viterbi(emit[i * layout.t_max : i * layout.t_max + int(n)], trans, allowed)
            for i, n in enumerate(lengths)
        ]
