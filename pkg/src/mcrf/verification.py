"""Self-contained correctness checks pitting the dynamic programs against
independent oracles. Used by the `verify` CLI subcommand; the test suite
runs the same checks with its own tolerances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .crf import (
    TransitionMatrix,
    brute_force_best,
    brute_force_log_partition,
    log_partition,
    loss_and_gradients,
    nll_loss,
    path_score,
    viterbi,
)
from .encoder import EncoderWeights, Vocabulary, encode, encoder_backward
from .masking import MaskSpec, apply_mask, mask_convergence_gap
from .schemes import TransitionRuleSet, build_tagset, illegal_transition_set


@dataclass(frozen=True)
class CheckResult:
    name: str
    observed: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: observed {self.observed:.3e} vs {self.threshold:.3e}{extra}"


def _random_instance(rng: np.random.Generator, t_max: int = 6, d_max: int = 5):
    T = int(rng.integers(1, t_max + 1))
    d = int(rng.integers(2, d_max + 1))
    emissions = rng.uniform(-2.0, 2.0, size=(T, d))
    trans = TransitionMatrix(
        rng.uniform(-2.0, 2.0, size=(d, d)), rng.uniform(-2.0, 2.0, size=d)
    )
    gold = [int(v) for v in rng.integers(0, d, size=T)]
    return emissions, trans, gold


def check_log_partition(seed: int = 0, instances: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        emissions, trans, _ = _random_instance(rng)
        worst = max(
            worst,
            abs(log_partition(emissions, trans) - brute_force_log_partition(emissions, trans)),
        )
    return CheckResult(
        name="log-partition vs enumeration",
        observed=worst,
        threshold=1e-9,
        passed=worst <= 1e-9,
        detail=f"{instances} instances",
    )


def check_viterbi(seed: int = 1, instances: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    mismatched_paths = 0
    for _ in range(instances):
        emissions, trans, _ = _random_instance(rng)
        best_path, best_score = brute_force_best(emissions, trans)
        decoded = viterbi(emissions, trans)
        if decoded != best_path:
            mismatched_paths += 1
        worst = max(worst, abs(path_score(emissions, trans, decoded) - best_score))
    passed = worst == 0.0 and mismatched_paths == 0
    return CheckResult(
        name="viterbi vs enumeration",
        observed=worst,
        threshold=0.0,
        passed=passed,
        detail=f"{instances} instances, {mismatched_paths} path mismatches",
    )


def _relative_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-2)
    return float(np.max(np.abs(analytic - fd) / denom))


def _fd_crf(batch, trans, h: float = 1e-5) -> float:
    """Worst relative error of the analytic CRF gradients against central
    finite differences over emissions, transitions, and start."""
    _, grads = loss_and_gradients(batch, trans)
    worst = 0.0
    for s, (emissions, _) in enumerate(batch):
        fd = np.zeros_like(emissions)
        for t in range(emissions.shape[0]):
            for j in range(emissions.shape[1]):
                for sign in (1.0, -1.0):
                    emissions[t, j] += sign * h
                    fd[t, j] += sign * nll_loss(batch, trans)
                    emissions[t, j] -= sign * h
        fd /= 2 * h
        worst = max(worst, _relative_error(grads.emissions[s], fd))
    for arr, g in ((trans.scores, grads.transitions), (trans.start, grads.start)):
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            for sign in (1.0, -1.0):
                arr[idx] += sign * h
                fd[idx] += sign * nll_loss(batch, trans)
                arr[idx] -= sign * h
            it.iternext()
        fd /= 2 * h
        worst = max(worst, _relative_error(g, fd))
    return worst


def check_gradients(seed: int = 2, instances: int = 20, masked: bool = False) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        T = int(rng.integers(2, 5))
        tagset = build_tagset("bio", ["A"])
        d = tagset.size
        emissions = rng.uniform(-2.0, 2.0, size=(T, d))
        trans = TransitionMatrix(
            rng.uniform(-2.0, 2.0, size=(d, d)), rng.uniform(-2.0, 2.0, size=d)
        )
        gold = [0] * T
        if masked:
            trans = apply_mask(trans, MaskSpec(rules=illegal_transition_set(tagset)))
        worst = max(worst, _fd_crf([(emissions, gold)], trans))
    label = "masked" if masked else "unmasked"
    return CheckResult(
        name=f"analytic vs finite-difference gradients ({label})",
        observed=worst,
        threshold=1e-4,
        passed=worst <= 1e-4,
        detail=f"{instances} instances",
    )


def check_encoder_gradients(seed: int = 3, instances: int = 10) -> CheckResult:
    """Finite-difference check through encode -> NLL for every weight class."""
    rng = np.random.default_rng(seed)
    h = 1e-5
    worst = 0.0
    for _ in range(instances):
        V, e, d, T = 7, 3, 3, int(rng.integers(2, 5))
        vocab = Vocabulary(tuple(["<pad>", "<unk>"] + [f"t{i}" for i in range(V - 2)]))
        weights = EncoderWeights.init(vocab.size, e, d, rng)
        trans = TransitionMatrix(
            rng.uniform(-1.0, 1.0, size=(d, d)), rng.uniform(-1.0, 1.0, size=d)
        )
        ids = [int(v) for v in rng.integers(0, V, size=T)]
        gold = [int(v) for v in rng.integers(0, d, size=T)]

        def loss() -> float:
            return nll_loss([(encode(ids, weights), gold)], trans)

        _, grads = loss_and_gradients([(encode(ids, weights), gold)], trans)
        analytic = encoder_backward(ids, grads.emissions[0], weights)
        for arr, g in (
            (weights.embeddings, analytic.embeddings),
            (weights.projection, analytic.projection),
            (weights.bias, analytic.bias),
        ):
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                for sign in (1.0, -1.0):
                    arr[idx] += sign * h
                    fd[idx] += sign * loss()
                    arr[idx] -= sign * h
                it.iternext()
            fd /= 2 * h
            worst = max(worst, _relative_error(g, fd))
    return CheckResult(
        name="encoder gradients vs finite differences",
        observed=worst,
        threshold=1e-4,
        passed=worst <= 1e-4,
        detail=f"{instances} instances",
    )


def check_mask_convergence(seed: int = 4, instances: int = 8) -> CheckResult:
    """Masked-vs-restricted gaps must shrink monotonically in |c| and be tiny
    at c = -30; with no illegal entries both gaps are exactly zero."""
    rng = np.random.default_rng(seed)
    tagset = build_tagset("bio", ["A", "B"])
    rules = illegal_transition_set(tagset)
    d = tagset.size
    values = (-5.0, -10.0, -20.0, -30.0)
    per_value = {c: 0.0 for c in values}
    for _ in range(instances):
        T = int(rng.integers(2, 5))
        emissions = rng.uniform(-1.5, 1.5, size=(T, d))
        trans = TransitionMatrix(
            rng.uniform(-1.5, 1.5, size=(d, d)), rng.uniform(-1.5, 1.5, size=d)
        )
        gold = [0] * T
        for c in values:
            loss_gap, grad_gap = mask_convergence_gap(
                [(emissions, gold)], trans, MaskSpec(rules=rules, mask_value=c)
            )
            per_value[c] = max(per_value[c], max(loss_gap, grad_gap))
    monotone = all(
        per_value[values[i]] >= per_value[values[i + 1]] for i in range(len(values) - 1)
    )
    final = per_value[-30.0]
    empty = MaskSpec(rules=TransitionRuleSet(frozenset(), frozenset()))
    emissions = rng.uniform(-1.5, 1.5, size=(3, d))
    trans = TransitionMatrix(rng.uniform(-1.5, 1.5, size=(d, d)), np.zeros(d))
    zero_gaps = mask_convergence_gap([(emissions, [0, 0, 0])], trans, empty)
    passed = monotone and final <= 1e-8 and zero_gaps == (0.0, 0.0)
    return CheckResult(
        name="mask convergence gaps",
        observed=final,
        threshold=1e-8,
        passed=passed,
        detail=f"monotone={monotone}, empty-set gaps={zero_gaps}",
    )


def check_legal_scores_unchanged(seed: int = 5, instances: int = 100) -> CheckResult:
    """Masking must leave the score of every legal path bitwise unchanged."""
    rng = np.random.default_rng(seed)
    tagset = build_tagset("bio", ["A", "B"])
    rules = illegal_transition_set(tagset)
    spec = MaskSpec(rules=rules)
    d = tagset.size
    worst = 0.0
    for _ in range(instances):
        T = int(rng.integers(1, 7))
        emissions = rng.uniform(-2.0, 2.0, size=(T, d))
        trans = TransitionMatrix(
            rng.uniform(-2.0, 2.0, size=(d, d)), rng.uniform(-2.0, 2.0, size=d)
        )
        masked = apply_mask(trans, spec)
        path = _random_legal_path(rng, tagset, T)
        worst = max(
            worst,
            abs(path_score(emissions, trans, path) - path_score(emissions, masked, path)),
        )
    return CheckResult(
        name="legal path scores invariant under masking",
        observed=worst,
        threshold=0.0,
        passed=worst == 0.0,
        detail=f"{instances} paths",
    )


def check_mask_idempotence(seed: int = 6, instances: int = 50) -> CheckResult:
    """apply_mask twice must equal apply_mask once, bitwise."""
    rng = np.random.default_rng(seed)
    tagset = build_tagset("bioes", ["A", "B"])
    spec = MaskSpec(rules=illegal_transition_set(tagset))
    d = tagset.size
    mismatches = 0
    for _ in range(instances):
        trans = TransitionMatrix(
            rng.uniform(-3.0, 3.0, size=(d, d)), rng.uniform(-3.0, 3.0, size=d)
        )
        once = apply_mask(trans, spec)
        twice = apply_mask(once, spec)
        if not (
            np.array_equal(once.scores, twice.scores)
            and np.array_equal(once.start, twice.start)
        ):
            mismatches += 1
    return CheckResult(
        name="mask idempotence",
        observed=float(mismatches),
        threshold=0.0,
        passed=mismatches == 0,
        detail=f"{instances} matrices",
    )


def _random_legal_path(rng: np.random.Generator, tagset, T: int) -> list[int]:
    from .schemes import is_legal_start, is_legal_transition

    d = tagset.size
    starts = [i for i in range(d) if is_legal_start(tagset, i)]
    path = [int(rng.choice(starts))]
    for _ in range(T - 1):
        nxt = [j for j in range(d) if is_legal_transition(tagset, path[-1], j)]
        path.append(int(rng.choice(nxt)))
    return path


def run_verification(seed: int = 0) -> tuple[list[CheckResult], float]:
    """Run every check; returns the results and the elapsed wall time."""
    t0 = time.perf_counter()
    results = [
        check_log_partition(seed),
        check_viterbi(seed + 1),
        check_gradients(seed + 2, masked=False),
        check_gradients(seed + 3, masked=True),
        check_encoder_gradients(seed + 4),
        check_mask_convergence(seed + 5),
        check_legal_scores_unchanged(seed + 6),
        check_mask_idempotence(seed + 7),
    ]
    return results, time.perf_counter() - t0
