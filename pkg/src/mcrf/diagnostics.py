"""Illegal-path diagnostics: a deterministic adversarial fixture and a
side-by-side comparison of decoding/repair systems on one corpus.

The adversarial fixture is a 5-token BIO instance whose unconstrained
Viterbi path necessarily contains an illegal O -> I transition, while the
constrained decode returns a legal path with a strictly lower raw score.
Both claims are verified against the brute-force oracles at construction
time, so the fixture cannot silently drift.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .crf import TransitionMatrix, brute_force_best, viterbi
from .data import LabeledSentence
from .encoder import encode
from .errors import ConfigurationError
from .evaluation import ChunkMetrics, IllegalStats, chunk_prf, illegal_stats
from .masking import MaskSpec, constrained_viterbi
from .postproc import extract_segments, repair_tags
from .schemes import Scheme, Tagset, first_violation, illegal_transition_set
from .training import TrainConfig, train


@dataclass(frozen=True)
class AdversarialInstance:
    emissions: np.ndarray
    trans: TransitionMatrix
    spec: MaskSpec
    unconstrained_path: list[int]
    constrained_path: list[int]


def build_adversarial_instance(tagset: Tagset) -> AdversarialInstance:
    """Emissions that bait the decoder into an orphan I tag.

    Position 2 strongly prefers I-X (with a weaker B-X runner-up); every
    other position strongly prefers O. Transitions are zero, so the
    unconstrained argmax is (O, O, I-X, O, O), illegal at the O -> I step.
    Masking flips position 2 to the runner-up: (O, O, B-X, O, O).
    """
    if tagset.scheme is not Scheme.BIO:
        raise ConfigurationError("the adversarial fixture is defined for BIO tagsets")
    etype = tagset.entity_types[0]
    o = tagset.index_of("O")
    b = tagset.index_of(f"B-{etype}")
    i = tagset.index_of(f"I-{etype}")
    T = 5
    emissions = np.zeros((T, tagset.size))
    emissions[:, o] = 10.0
    emissions[2, o] = 0.0
    emissions[2, i] = 10.0
    emissions[2, b] = 1.0
    trans = TransitionMatrix.zeros(tagset.size)
    spec = MaskSpec(rules=illegal_transition_set(tagset))
    expected_illegal = [o, o, i, o, o]
    expected_legal = [o, o, b, o, o]
    checked, _ = brute_force_best(emissions, trans)
    if checked != expected_illegal or viterbi(emissions, trans) != expected_illegal:
        raise AssertionError("fixture lost its unconstrained optimum")
    checked, _ = brute_force_best(
        emissions, trans, restrict_to_legal=True, rules=spec.restriction_rules()
    )
    if checked != expected_legal or constrained_viterbi(emissions, trans, spec) != expected_legal:
        raise AssertionError("fixture lost its constrained optimum")
    if first_violation(tagset, expected_illegal) is None:
        raise AssertionError("the unconstrained path should be illegal")
    return AdversarialInstance(
        emissions=emissions,
        trans=trans,
        spec=spec,
        unconstrained_path=expected_illegal,
        constrained_path=expected_legal,
    )


@dataclass(frozen=True)
class SystemRow:
    label: str
    metrics: ChunkMetrics
    stats: IllegalStats


@dataclass
class ComparisonTable:
    rows: list[SystemRow]

    def to_text(self) -> str:
        lines = ["system\tprecision\trecall\tf1\tillegal_pct"]
        for row in self.rows:
            lines.append(
                f"{row.label}\t{100 * row.metrics.precision:.1f}"
                f"\t{100 * row.metrics.recall:.1f}\t{100 * row.metrics.f1:.1f}"
                f"\t{100 * row.stats.ratio_illegal_over_total:.1f}"
            )
        return "\n".join(lines) + "\n"


def compare_systems(
    train_sentences: list[LabeledSentence],
    dev_sentences: list[LabeledSentence],
    config: TrainConfig,
    tagset: Tagset,
) -> ComparisonTable:
    """Evaluate six systems sharing one seed on one corpus.

    tagger-retain / tagger-discard: per-position argmax (transitions zeroed)
    plus repair; crf-retain / crf-discard: plain Viterbi plus repair;
    mcrf-decoding: the same crf model decoded under the mask; mcrf-training:
    a model trained with the mask maintained throughout. Exactly two
    training runs happen (crf and mcrf-train), both from config.seed.
    """
    crf_config = replace(config, mode="crf")
    mcrf_config = replace(config, mode="mcrf-train")
    crf_model, _ = train(train_sentences, dev_sentences, crf_config, tagset)
    mcrf_model, _ = train(train_sentences, dev_sentences, mcrf_config, tagset)
    spec = MaskSpec(
        rules=illegal_transition_set(tagset),
        mask_value=config.mask_value,
        enforce_start=config.enforce_start,
    )
    gold_segments = [extract_segments(s.gold, tagset) for s in dev_sentences]

    def emissions_for(model, sent):
        return encode(model.vocab.lookup_all(sent.tokens), model.encoder)

    zero_trans = TransitionMatrix.zeros(tagset.size)
    tagger_raw = [
        viterbi(emissions_for(crf_model, s), zero_trans) for s in dev_sentences
    ]
    crf_raw = [
        viterbi(emissions_for(crf_model, s), crf_model.trans) for s in dev_sentences
    ]
    mcrf_decode_raw = [
        constrained_viterbi(emissions_for(crf_model, s), crf_model.trans, spec)
        for s in dev_sentences
    ]
    mcrf_train_raw = [
        constrained_viterbi(emissions_for(mcrf_model, s), mcrf_model.trans, spec)
        for s in dev_sentences
    ]

    def row(label: str, raw: list[list[int]], strategy: str) -> SystemRow:
        stats = illegal_stats(gold_segments, [extract_segments(p, tagset) for p in raw])
        repaired = [repair_tags(p, tagset, strategy) for p in raw]
        metrics = chunk_prf(
            gold_segments, [extract_segments(p, tagset) for p in repaired]
        )
        return SystemRow(label=label, metrics=metrics, stats=stats)

    rows = [
        row("tagger-retain", tagger_raw, "retain"),
        row("tagger-discard", tagger_raw, "discard"),
        row("crf-retain", crf_raw, "retain"),
        row("crf-discard", crf_raw, "discard"),
        row("mcrf-decoding", mcrf_decode_raw, "none"),
        row("mcrf-training", mcrf_train_raw, "none"),
    ]
    return ComparisonTable(rows=rows)
