"""Transition masking: apply a large negative constant c to illegal entries.

Masking replaces each illegal transition score (and, when start enforcement
is on, each illegal start score) with a finite constant c << 0. Decoding
with the masked matrix can then never prefer an illegal path, and the masked
NLL converges to the NLL computed over legal paths only as c decreases, with
error on the order of e^c. c stays finite so every dynamic program remains
ordinary float arithmetic; the default -1e4 makes e^c underflow to zero in
float64, which is as good as -inf without the NaN hazards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crf import (
    Batch,
    TransitionMatrix,
    brute_force_log_partition,
    brute_force_loss_and_gradients,
    nll_loss,
    path_score,
    viterbi,
)
from .errors import ConfigurationError, DataError
from .schemes import Tagset, TransitionRuleSet, first_violation

DEFAULT_MASK_VALUE = -1e4
_GUARD_MARGIN = 1e3


@dataclass(frozen=True)
class MaskSpec:
    """Which entries to mask (rules), with what value (mask_value), and
    whether illegal start tags are masked too (enforce_start)."""

    rules: TransitionRuleSet
    mask_value: float = DEFAULT_MASK_VALUE
    enforce_start: bool = True

    def __post_init__(self) -> None:
        if not self.mask_value < 0:
            raise ConfigurationError(
                f"mask value must be negative, got {self.mask_value}"
            )

    def restriction_rules(self) -> TransitionRuleSet:
        """Rules matching what the mask actually touches: start rules are
        dropped when start enforcement is off."""
        return self.rules if self.enforce_start else self.rules.without_start_rules()


def apply_mask(trans: TransitionMatrix, spec: MaskSpec) -> TransitionMatrix:
    """Return a copy of trans with masked entries set to spec.mask_value."""
    masked = trans.copy()
    reapply_mask_in_place(masked, spec)
    return masked


def reapply_mask_in_place(trans: TransitionMatrix, spec: MaskSpec) -> None:
    """Overwrite masked entries with spec.mask_value (idempotent)."""
    d = trans.num_tags
    for i, j in spec.rules.omega:
        if not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"mask entry ({i}, {j}) out of range for {d} tags")
        trans.scores[i, j] = spec.mask_value
    if spec.enforce_start:
        for i in spec.rules.illegal_starts:
            if not 0 <= i < d:
                raise ValueError(f"illegal start {i} out of range for {d} tags")
            trans.start[i] = spec.mask_value


def guard_threshold(emissions_list: list[np.ndarray], trans: TransitionMatrix, spec: MaskSpec) -> float:
    """Largest mask value guaranteed to keep every masked path below every
    legal path, for the given instances.

    Any path score lies within +-(T*max|l| + (T-1)*max|a| + max|start|) over
    legal entries; one masked entry contributes c once. Separating the two
    sets therefore needs c below twice that range, plus a fixed margin.
    """
    d = trans.num_tags
    t_max = max(e.shape[0] for e in emissions_list)
    max_l = max(float(np.max(np.abs(e))) for e in emissions_list)
    legal = np.ones((d, d), dtype=bool)
    for i, j in spec.rules.omega:
        legal[i, j] = False
    max_a = float(np.max(np.abs(trans.scores[legal]))) if legal.any() else 0.0
    legal_start = np.ones(d, dtype=bool)
    if spec.enforce_start:
        for i in spec.rules.illegal_starts:
            legal_start[i] = False
    max_s = float(np.max(np.abs(trans.start[legal_start]))) if legal_start.any() else 0.0
    return -(2.0 * t_max * (max_l + max_a + max_s) + _GUARD_MARGIN)


def _check_guard(emissions: np.ndarray, trans: TransitionMatrix, spec: MaskSpec) -> None:
    bound = guard_threshold([emissions], trans, spec)
    if spec.mask_value > bound:
        raise ConfigurationError(
            f"mask value {spec.mask_value} is not negative enough for this "
            f"instance; need <= {bound:.1f} to guarantee masked paths score "
            f"below every legal path"
        )


def constrained_viterbi(
    emissions: np.ndarray, trans: TransitionMatrix, spec: MaskSpec
) -> list[int]:
    """Best path under the masked matrix; never outputs a masked transition
    or (with enforce_start) a masked start, provided the guard holds."""
    _check_guard(emissions, trans, spec)
    return viterbi(emissions, apply_mask(trans, spec))


def validate_gold_paths(batch: Batch, tagset: Tagset, spec: MaskSpec) -> None:
    """Reject any gold path the mask would make unreachable."""
    for k, (_, gold) in enumerate(batch):
        hit = first_violation(tagset, list(gold), enforce_start=spec.enforce_start)
        if hit is not None:
            pos, rule = hit
            raise DataError(
                f"sentence {k + 1}: illegal gold path at position {pos + 1}: {rule}"
            )


def masked_nll(batch: Batch, trans: TransitionMatrix, tagset: Tagset, spec: MaskSpec) -> float:
    """Mean NLL through the masked transition matrix.

    Gold paths must be legal; otherwise their score would carry the mask
    penalty and the loss would be meaningless.
    """
    validate_gold_paths(batch, tagset, spec)
    return nll_loss(batch, apply_mask(trans, spec))


def restricted_nll(batch: Batch, trans: TransitionMatrix, spec: MaskSpec) -> float:
    """Exact NLL with the partition function summed over legal paths only
    (enumeration oracle; small instances only)."""
    rules = spec.restriction_rules()
    total = 0.0
    for emissions, gold in batch:
        log_z = brute_force_log_partition(emissions, trans, restrict_to_legal=True, rules=rules)
        total += log_z - path_score(emissions, trans, gold)
    return total / len(batch)


def mask_convergence_gap(
    batch: Batch, trans: TransitionMatrix, spec: MaskSpec
) -> tuple[float, float]:
    """How far the masked objective sits from the exact legal-paths objective.

    Both sides are computed by the same exact enumeration: the masked side
    sums over all paths under the masked matrix, the restricted side over
    legal paths under the original matrix. Returns (loss_gap, grad_gap)
    where grad_gap is the max-norm difference over emissions, unmasked
    transition entries, and unmasked start entries. Both gaps decay like
    e^c and are exactly zero when the rule set is empty.
    """
    rules = spec.restriction_rules()
    masked = apply_mask(trans, spec)
    loss_m, grads_m = brute_force_loss_and_gradients(batch, masked)
    loss_r, grads_r = brute_force_loss_and_gradients(
        batch, trans, restrict_to_legal=True, rules=rules
    )
    loss_gap = abs(loss_m - loss_r)
    d = trans.num_tags
    legal = np.ones((d, d), dtype=bool)
    for i, j in rules.omega:
        legal[i, j] = False
    legal_start = np.ones(d, dtype=bool)
    for i in rules.illegal_starts:
        legal_start[i] = False
    grad_gap = 0.0
    for em_m, em_r in zip(grads_m.emissions, grads_r.emissions):
        grad_gap = max(grad_gap, float(np.max(np.abs(em_m - em_r))))
    diff_a = np.abs(grads_m.transitions - grads_r.transitions)[legal]
    if diff_a.size:
        grad_gap = max(grad_gap, float(np.max(diff_a)))
    diff_s = np.abs(grads_m.start - grads_r.start)[legal_start]
    if diff_s.size:
        grad_gap = max(grad_gap, float(np.max(diff_s)))
    return loss_gap, grad_gap
