"""Linear-chain CRF core: path scores, partition function, NLL gradients,
Viterbi decoding, and exact brute-force oracles.

A path p = (n_1 .. n_T) over d tags scores

    s(p, x) = start[n_1] + sum_t l[t, n_t] + sum_t a[n_t, n_{t+1}]

where l is the (T, d) emission matrix and a the (d, d) transition matrix.
The start vector defaults to zero, in which case it contributes nothing.
All dynamic programs run in log space with float64.

The brute-force routines enumerate all d^T paths (optionally restricted to
the legal subset defined by a TransitionRuleSet) in lexicographic order and
exist purely as independent oracles for the dynamic programs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SizeError
from .schemes import TransitionRuleSet

MAX_BRUTE_FORCE_PATHS = 10_000_000
_CHUNK = 1 << 16

Batch = list[tuple[np.ndarray, list[int]]]  # (emissions, gold path) pairs


@dataclass
class TransitionMatrix:
    """Transition scores plus the start-score vector.

    scores[i, j] is the score of moving from tag i to tag j; start[j] is
    added at position 0. Both are float64 and mutated in place by training.
    """

    scores: np.ndarray
    start: np.ndarray

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.start = np.asarray(self.start, dtype=np.float64)
        d = self.scores.shape[0]
        if self.scores.shape != (d, d):
            raise ValueError(f"transition matrix must be square, got {self.scores.shape}")
        if self.start.shape != (d,):
            raise ValueError(
                f"start vector shape {self.start.shape} does not match {d} tags"
            )

    @property
    def num_tags(self) -> int:
        return self.scores.shape[0]

    @classmethod
    def zeros(cls, num_tags: int) -> "TransitionMatrix":
        return cls(np.zeros((num_tags, num_tags)), np.zeros(num_tags))

    def copy(self) -> "TransitionMatrix":
        return TransitionMatrix(self.scores.copy(), self.start.copy())


@dataclass
class CrfGradients:
    """Gradients of the batch-averaged NLL.

    emissions holds one (T_i, d) array per batch sentence; transitions and
    start match TransitionMatrix. Every array is already divided by the
    batch size.
    """

    emissions: list[np.ndarray] = field(default_factory=list)
    transitions: np.ndarray | None = None
    start: np.ndarray | None = None


def logsumexp(x: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Numerically stable log(sum(exp(x))) via the max-shift trick."""
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _check_emissions(emissions: np.ndarray) -> np.ndarray:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2:
        raise ValueError(f"emissions must be (T, d), got shape {emissions.shape}")
    if emissions.shape[0] == 0:
        raise ValueError("empty sequence: T must be >= 1")
    return emissions


def path_score(emissions: np.ndarray, trans: TransitionMatrix, path: list[int]) -> float:
    """Score of one path: start + emissions along the path + transitions."""
    emissions = _check_emissions(emissions)
    T, d = emissions.shape
    tags = np.asarray(path, dtype=np.intp)
    if tags.shape != (T,):
        raise ValueError(f"path length {tags.shape} does not match T={T}")
    if tags.min() < 0 or tags.max() >= d:
        raise ValueError("path contains a tag index out of range")
    score = np.sum(emissions[np.arange(T), tags])
    score += np.sum(trans.scores[tags[:-1], tags[1:]])
    score += trans.start[tags[0]]
    return float(score)


def forward_log_alphas(emissions: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    """Forward messages: alpha[t, j] = log sum over prefixes ending in j at t."""
    emissions = _check_emissions(emissions)
    T, d = emissions.shape
    alpha = np.empty((T, d))
    alpha[0] = trans.start + emissions[0]
    for t in range(1, T):
        alpha[t] = emissions[t] + logsumexp(alpha[t - 1][:, None] + trans.scores, axis=0)
    return alpha


def backward_log_betas(emissions: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    """Backward messages: beta[t, i] = log sum over suffixes starting after (t, i)."""
    emissions = _check_emissions(emissions)
    T, d = emissions.shape
    beta = np.zeros((T, d))
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(trans.scores + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(emissions: np.ndarray, trans: TransitionMatrix) -> float:
    """log Z: log-sum-exp of all d^T path scores, computed by the forward pass."""
    alpha = forward_log_alphas(emissions, trans)
    return float(logsumexp(alpha[-1]))


def posterior_marginals(
    emissions: np.ndarray, trans: TransitionMatrix
) -> tuple[np.ndarray, np.ndarray, float]:
    """Position marginals P(y_t = j), pairwise marginals P(y_t = i, y_{t+1} = j), log Z."""
    emissions = _check_emissions(emissions)
    T, d = emissions.shape
    alpha = forward_log_alphas(emissions, trans)
    beta = backward_log_betas(emissions, trans)
    log_z = float(logsumexp(alpha[-1]))
    unary = np.exp(alpha + beta - log_z)
    pairwise = np.empty((max(T - 1, 0), d, d))
    for t in range(T - 1):
        pairwise[t] = np.exp(
            alpha[t][:, None] + trans.scores + (emissions[t + 1] + beta[t + 1])[None, :] - log_z
        )
    return unary, pairwise, log_z


def sequence_nll(emissions: np.ndarray, trans: TransitionMatrix, gold: list[int]) -> float:
    """Negative log-likelihood of one gold path: log Z - s(gold)."""
    return log_partition(emissions, trans) - path_score(emissions, trans, gold)


def nll_loss(batch: Batch, trans: TransitionMatrix) -> float:
    """Mean NLL over a batch of (emissions, gold) pairs."""
    if not batch:
        raise ValueError("empty batch")
    return float(np.mean([sequence_nll(e, trans, g) for e, g in batch]))


def loss_and_gradients(batch: Batch, trans: TransitionMatrix) -> tuple[float, CrfGradients]:
    """Batch NLL and its analytic gradients.

    d l[t, j] = P(y_t = j) - 1{gold_t = j}
    d a[i, j] = sum_t P(y_t = i, y_{t+1} = j) - #(gold transitions i -> j)
    d start[j] = P(y_0 = j) - 1{gold_0 = j}

    all averaged over the batch.
    """
    if not batch:
        raise ValueError("empty batch")
    d = trans.num_tags
    n = len(batch)
    d_trans = np.zeros((d, d))
    d_start = np.zeros(d)
    d_emissions: list[np.ndarray] = []
    total = 0.0
    for emissions, gold in batch:
        emissions = _check_emissions(emissions)
        T = emissions.shape[0]
        tags = np.asarray(gold, dtype=np.intp)
        unary, pairwise, log_z = posterior_marginals(emissions, trans)
        total += log_z - path_score(emissions, trans, gold)
        d_em = unary.copy()
        d_em[np.arange(T), tags] -= 1.0
        d_emissions.append(d_em / n)
        if T > 1:
            d_trans += pairwise.sum(axis=0)
            np.add.at(d_trans, (tags[:-1], tags[1:]), -1.0)
        d_start += unary[0]
        d_start[tags[0]] -= 1.0
    return total / n, CrfGradients(
        emissions=d_emissions, transitions=d_trans / n, start=d_start / n
    )


def viterbi(emissions: np.ndarray, trans: TransitionMatrix) -> list[int]:
    """Highest-scoring path; ties resolve to the lexicographically smallest path.

    The max-product recursion runs backward (tail[t, j] = best score of a
    completion starting at position t with tag j), then the path is read off
    forward with first-occurrence argmax. Fixing earlier positions first is
    what makes the tie-break lexicographic.
    """
    emissions = _check_emissions(emissions)
    T, d = emissions.shape
    tail = np.empty((T, d))
    tail[T - 1] = emissions[T - 1]
    for t in range(T - 2, -1, -1):
        tail[t] = emissions[t] + np.max(trans.scores + tail[t + 1][None, :], axis=1)
    path = [int(np.argmax(trans.start + tail[0]))]
    for t in range(1, T):
        path.append(int(np.argmax(trans.scores[path[-1]] + tail[t])))
    return path


def _check_enumerable(T: int, d: int) -> None:
    if d**T > MAX_BRUTE_FORCE_PATHS:
        raise SizeError(
            f"brute force refuses d^T = {d}^{T} = {d**T} paths "
            f"(limit {MAX_BRUTE_FORCE_PATHS})"
        )


def _legality_tables(
    d: int, rules: TransitionRuleSet | None
) -> tuple[np.ndarray, np.ndarray]:
    illegal_pair = np.zeros((d, d), dtype=bool)
    illegal_start = np.zeros(d, dtype=bool)
    if rules is not None:
        for i, j in rules.omega:
            illegal_pair[i, j] = True
        for i in rules.illegal_starts:
            illegal_start[i] = True
    return illegal_pair, illegal_start


def _iter_scored_chunks(
    emissions: np.ndarray,
    trans: TransitionMatrix,
    restrict_to_legal: bool,
    rules: TransitionRuleSet | None,
):
    """Yield (paths, scores) chunks over all paths in lexicographic order.

    With restrict_to_legal, paths containing an omega pair or an illegal
    start are dropped from the chunk.
    """
    emissions = _check_emissions(emissions)
    T, d = emissions.shape
    _check_enumerable(T, d)
    if restrict_to_legal and rules is None:
        raise ValueError("restrict_to_legal requires a TransitionRuleSet")
    illegal_pair, illegal_start = _legality_tables(d, rules)
    total = d**T
    positions = np.arange(T)
    for lo in range(0, total, _CHUNK):
        hi = min(lo + _CHUNK, total)
        paths = np.stack(
            np.unravel_index(np.arange(lo, hi), (d,) * T), axis=1
        )  # lexicographic: position 0 is the most significant digit
        scores = emissions[positions[None, :], paths].sum(axis=1) + trans.start[paths[:, 0]]
        if T > 1:
            scores += trans.scores[paths[:, :-1], paths[:, 1:]].sum(axis=1)
        if restrict_to_legal:
            keep = ~illegal_start[paths[:, 0]]
            if T > 1:
                keep &= ~illegal_pair[paths[:, :-1], paths[:, 1:]].any(axis=1)
            paths, scores = paths[keep], scores[keep]
        if len(paths):
            yield paths, scores


def brute_force_log_partition(
    emissions: np.ndarray,
    trans: TransitionMatrix,
    restrict_to_legal: bool = False,
    rules: TransitionRuleSet | None = None,
) -> float:
    """Exact log Z by explicit enumeration (oracle for log_partition)."""
    parts = [
        logsumexp(scores)
        for _, scores in _iter_scored_chunks(emissions, trans, restrict_to_legal, rules)
    ]
    if not parts:
        raise ValueError("no legal paths exist for this instance")
    return float(logsumexp(np.asarray(parts)))


def brute_force_best(
    emissions: np.ndarray,
    trans: TransitionMatrix,
    restrict_to_legal: bool = False,
    rules: TransitionRuleSet | None = None,
) -> tuple[list[int], float]:
    """Exact argmax path by enumeration (oracle for viterbi).

    Enumeration is lexicographic and a candidate replaces the incumbent only
    on a strictly greater score, so ties resolve to the lexicographically
    smallest path. The returned score is recomputed with path_score so that
    it is bit-identical to path_score(best).
    """
    best_path: list[int] | None = None
    best_score = -np.inf
    for paths, scores in _iter_scored_chunks(emissions, trans, restrict_to_legal, rules):
        k = int(np.argmax(scores))
        if scores[k] > best_score:
            best_score = float(scores[k])
            best_path = [int(v) for v in paths[k]]
    if best_path is None:
        raise ValueError("no legal paths exist for this instance")
    return best_path, path_score(emissions, trans, best_path)


def brute_force_loss_and_gradients(
    batch: Batch,
    trans: TransitionMatrix,
    restrict_to_legal: bool = False,
    rules: TransitionRuleSet | None = None,
) -> tuple[float, CrfGradients]:
    """Batch NLL and gradients by explicit enumeration (oracle for loss_and_gradients).

    Path probabilities are the softmax of the enumerated scores; gradients
    are probability-weighted feature counts minus gold counts, exactly as in
    the analytic form but without any dynamic program.
    """
    if not batch:
        raise ValueError("empty batch")
    d = trans.num_tags
    n = len(batch)
    d_trans = np.zeros((d, d))
    d_start = np.zeros(d)
    d_emissions: list[np.ndarray] = []
    total = 0.0
    for emissions, gold in batch:
        emissions = _check_emissions(emissions)
        T = emissions.shape[0]
        tags = np.asarray(gold, dtype=np.intp)
        log_z = brute_force_log_partition(emissions, trans, restrict_to_legal, rules)
        total += log_z - path_score(emissions, trans, gold)
        d_em = np.zeros((T, d))
        for paths, scores in _iter_scored_chunks(emissions, trans, restrict_to_legal, rules):
            w = np.exp(scores - log_z)
            for t in range(T):
                np.add.at(d_em[t], paths[:, t], w)
            if T > 1:
                for t in range(T - 1):
                    np.add.at(d_trans, (paths[:, t], paths[:, t + 1]), w)
            np.add.at(d_start, paths[:, 0], w)
        d_em[np.arange(T), tags] -= 1.0
        d_emissions.append(d_em / n)
        if T > 1:
            np.add.at(d_trans, (tags[:-1], tags[1:]), -1.0)
        d_start[tags[0]] -= 1.0
    return total / n, CrfGradients(
        emissions=d_emissions, transitions=d_trans / n, start=d_start / n
    )
