"""Acceptance gate: twelve numbered criteria, one test and one printed
pass/fail line each. Tolerances are pinned in the assertions and must not
be loosened; a red here means the package does not meet its contract.
"""

import math
import time

import numpy as np
import pytest

from oracles import central_difference, max_relative_error

from mcrf.cli import main
from mcrf.crf import (
    TransitionMatrix,
    brute_force_best,
    brute_force_log_partition,
    log_partition,
    loss_and_gradients,
    nll_loss,
    path_score,
    viterbi,
)
from mcrf.data import SyntheticConfig, generate_synthetic, split_corpus
from mcrf.diagnostics import build_adversarial_instance
from mcrf.encoder import EncoderWeights, encode, encoder_backward
from mcrf.masking import (
    MaskSpec,
    apply_mask,
    constrained_viterbi,
    masked_nll,
    mask_convergence_gap,
    restricted_nll,
)
from mcrf.schemes import (
    Scheme,
    TransitionRuleSet,
    build_tagset,
    first_violation,
    illegal_transition_set,
)
from mcrf.training import TrainConfig, train

BIO1 = build_tagset(Scheme.BIO, ["PER"])
BIO2 = build_tagset(Scheme.BIO, ["LOC", "PER"])
BIO3 = build_tagset(Scheme.BIO, ["LOC", "ORG", "PER"])

# Hand-derived illegal (row, column) pairs for BIO with three entity types
# under the canonical tag order (O, B-LOC, I-LOC, B-ORG, I-ORG, B-PER, I-PER):
# O cannot precede any I tag, and I-X may only follow B-X or I-X.
BIO3_MASK_PAIRS = frozenset({
    (0, 2), (0, 4), (0, 6),
    (1, 4), (1, 6),
    (2, 4), (2, 6),
    (3, 2), (3, 6),
    (4, 2), (4, 6),
    (5, 2), (5, 4),
    (6, 2), (6, 4),
})


def _verdict(num: int, description: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] criterion {num:02d}: {description}{suffix}")
    assert passed, f"criterion {num:02d} failed: {description}{suffix}"


def _legal_path(rng, tagset, T):
    path = []
    for _ in range(T):
        options = [
            j for j in range(tagset.size) if first_violation(tagset, path + [j]) is None
        ]
        path.append(int(rng.choice(options)))
    return path


@pytest.fixture(scope="module")
def shared_instances():
    """200 seeded random instances with T <= 6 and d <= 5, reused by the two
    oracle criteria so the decoding check runs on the same inputs."""
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(200):
        T = int(rng.integers(1, 7))
        d = int(rng.integers(2, 6))
        emissions = rng.uniform(-3.0, 3.0, size=(T, d))
        trans = TransitionMatrix(
            rng.uniform(-3.0, 3.0, size=(d, d)), rng.uniform(-3.0, 3.0, size=d)
        )
        out.append((emissions, trans))
    return out


def test_criterion_01_partition_oracle(shared_instances):
    """Forward-pass log Z agrees with exhaustive enumeration to 1e-9."""
    start = time.perf_counter()
    worst = 0.0
    for emissions, trans in shared_instances:
        dp = log_partition(emissions, trans)
        exact = brute_force_log_partition(emissions, trans)
        worst = max(worst, abs(dp - exact))
    elapsed = time.perf_counter() - start
    _verdict(
        1,
        "log_partition matches brute force on 200 instances",
        worst <= 1e-9 and elapsed < 10.0,
        f"max |diff| = {worst:.3e}, {elapsed:.2f}s",
    )


def test_criterion_02_decoding_oracle(shared_instances):
    """Viterbi path and score agree with enumeration; scores exactly equal."""
    mismatches = 0
    for emissions, trans in shared_instances:
        path = viterbi(emissions, trans)
        oracle_path, oracle_score = brute_force_best(emissions, trans)
        if path != oracle_path:
            mismatches += 1
        elif path_score(emissions, trans, path) != oracle_score:
            mismatches += 1
    _verdict(
        2,
        "viterbi equals brute-force argmax on the same 200 instances",
        mismatches == 0,
        f"{mismatches} mismatches",
    )


def _gradient_sweep(masked: bool, instances: int = 50) -> float:
    rng = np.random.default_rng(7 if masked else 6)
    spec = MaskSpec(rules=illegal_transition_set(BIO1), mask_value=-1e4)
    worst = 0.0
    for _ in range(instances):
        T = int(rng.integers(2, 5))
        enc = EncoderWeights(
            embeddings=rng.uniform(-0.5, 0.5, size=(6, 2)),
            projection=rng.uniform(-0.5, 0.5, size=(6, 3)),
            bias=rng.uniform(-0.5, 0.5, size=3),
        )
        ids = [int(v) for v in rng.integers(2, 6, size=T)]
        gold = _legal_path(rng, BIO1, T)
        base = TransitionMatrix(
            rng.uniform(-0.5, 0.5, size=(3, 3)), rng.uniform(-0.5, 0.5, size=3)
        )
        trans = apply_mask(base, spec) if masked else base

        # Emission, transition, and start gradients at fixed emissions.
        emissions = rng.uniform(-1.0, 1.0, size=(T, 3))
        batch = [(emissions, gold)]
        _, grads = loss_and_gradients(batch, trans)
        fd = central_difference(lambda: nll_loss(batch, trans), emissions)
        worst = max(worst, max_relative_error(grads.emissions[0], fd))
        fd = central_difference(lambda: nll_loss(batch, trans), trans.scores)
        worst = max(worst, max_relative_error(grads.transitions, fd))
        fd = central_difference(lambda: nll_loss(batch, trans), trans.start)
        worst = max(worst, max_relative_error(grads.start, fd))

        # Encoder weight classes, through the composed loss.
        def composed():
            return nll_loss([(encode(ids, enc), gold)], trans)

        _, g = loss_and_gradients([(encode(ids, enc), gold)], trans)
        enc_grads = encoder_backward(ids, g.emissions[0], enc)
        for analytic, arr in (
            (enc_grads.embeddings, enc.embeddings),
            (enc_grads.projection, enc.projection),
            (enc_grads.bias, enc.bias),
        ):
            fd = central_difference(composed, arr)
            worst = max(worst, max_relative_error(analytic, fd))
    return worst


def test_criterion_03_gradient_correctness():
    """Analytic gradients match central differences (h = 1e-5) within 1e-4
    for every weight class, with and without the mask at c = -1e4."""
    worst_plain = _gradient_sweep(masked=False)
    worst_masked = _gradient_sweep(masked=True)
    worst = max(worst_plain, worst_masked)
    _verdict(
        3,
        "gradients match finite differences, unmasked and masked",
        worst <= 1e-4,
        f"max rel err = {worst:.3e}",
    )


def test_criterion_04_gap_convergence():
    """Masked-vs-restricted loss and gradient gaps shrink with |c|, land
    below 1e-8 at c = -30, and are exactly zero with an empty rule set."""
    rng = np.random.default_rng(11)
    sweep = (-5.0, -10.0, -20.0, -30.0)
    passed = True
    detail = []
    worst_final = 0.0
    for tagset in (BIO1, BIO2):
        rules = illegal_transition_set(tagset)
        for _ in range(6):
            T = int(rng.integers(2, 5))
            d = tagset.size
            emissions = rng.uniform(-2.0, 2.0, size=(T, d))
            trans = TransitionMatrix(
                rng.uniform(-2.0, 2.0, size=(d, d)), rng.uniform(-2.0, 2.0, size=d)
            )
            batch = [(emissions, _legal_path(rng, tagset, T))]
            gaps = [
                mask_convergence_gap(batch, trans, MaskSpec(rules, mask_value=c))
                for c in sweep
            ]
            for series in ([g[0] for g in gaps], [g[1] for g in gaps]):
                if not (series[0] > series[1] > series[2] >= series[3]):
                    passed = False
                    detail.append(f"non-monotone series {series}")
            worst_final = max(worst_final, gaps[-1][0], gaps[-1][1])
    if worst_final > 1e-8:
        passed = False
        detail.append(f"gap at c=-30 is {worst_final:.3e}")
    # Empty-omega control: both gaps must be exactly zero.
    emissions = rng.uniform(-2.0, 2.0, size=(3, 3))
    trans = TransitionMatrix(rng.uniform(-2, 2, size=(3, 3)), rng.uniform(-2, 2, size=3))
    empty = MaskSpec(TransitionRuleSet(frozenset(), frozenset()))
    control = mask_convergence_gap([(emissions, [0, 1, 2])], trans, empty)
    if control != (0.0, 0.0):
        passed = False
        detail.append(f"empty-omega control gave {control}")
    _verdict(
        4,
        "masked objective converges to the restricted objective",
        passed,
        f"max gap at c=-30 = {worst_final:.3e}" + ("; " + "; ".join(detail) if detail else ""),
    )


def test_criterion_05_zero_illegal_guarantee():
    """Ten thousand constrained decodes, not one illegal transition or start."""
    rng = np.random.default_rng(13)
    spec = MaskSpec(rules=illegal_transition_set(BIO3))
    violations = 0
    for _ in range(10_000):
        T = int(rng.integers(1, 9))
        emissions = rng.uniform(-2.0, 2.0, size=(T, 7))
        trans = TransitionMatrix(
            rng.uniform(-2.0, 2.0, size=(7, 7)), rng.uniform(-2.0, 2.0, size=7)
        )
        path = constrained_viterbi(emissions, trans, spec)
        if first_violation(BIO3, path, enforce_start=True) is not None:
            violations += 1
    _verdict(
        5,
        "10^4 constrained decodes emit zero illegal transitions or starts",
        violations == 0,
        f"{violations} violations",
    )


def test_criterion_06_mask_entry_set():
    """Masking the three-type BIO matrix touches exactly the 15 hand-derived
    entries, each set to exactly c."""
    rng = np.random.default_rng(17)
    trans = TransitionMatrix(rng.normal(size=(7, 7)), rng.normal(size=7))
    masked = apply_mask(trans, MaskSpec(rules=illegal_transition_set(BIO3)))
    changed = {
        (i, j)
        for i in range(7)
        for j in range(7)
        if masked.scores[i, j] != trans.scores[i, j]
    }
    exact_values = all(masked.scores[i, j] == -1e4 for i, j in BIO3_MASK_PAIRS)
    _verdict(
        6,
        "three-type BIO mask hits exactly the 15 expected entries",
        changed == BIO3_MASK_PAIRS and len(changed) == 15 and exact_values,
        f"{len(changed)} entries changed",
    )


def test_criterion_07_repair_rows():
    """retain and discard of (O, I-PER, O, B-LOC, I-MISC) reproduce the
    reference rows exactly."""
    from mcrf.postproc import repair_tags

    ts = build_tagset(Scheme.BIO, ["LOC", "MISC", "PER"])
    tags = [ts.index_of(t) for t in ("O", "I-PER", "O", "B-LOC", "I-MISC")]
    retained = [ts.tag_of(i) for i in repair_tags(tags, ts, "retain")]
    discarded = [ts.tag_of(i) for i in repair_tags(tags, ts, "discard")]
    ok_retain = retained == ["O", "B-PER", "O", "B-LOC", "B-MISC"]
    ok_discard = discarded == ["O", "O", "O", "B-LOC", "O"]
    _verdict(
        7,
        "repair strategies reproduce the reference fixture rows",
        ok_retain and ok_discard,
        f"retain={retained}, discard={discarded}",
    )


def test_criterion_08_loss_ordering():
    """Restricted NLL never exceeds full NLL, and the masked NLL at c = -1e4
    sits within 1e-8 of the restricted NLL, on 50 enumerable instances."""
    rng = np.random.default_rng(19)
    spec = MaskSpec(rules=illegal_transition_set(BIO1), mask_value=-1e4)
    worst_gap = 0.0
    ordering_ok = True
    for _ in range(50):
        T = int(rng.integers(1, 5))
        emissions = rng.uniform(-2.0, 2.0, size=(T, 3))
        trans = TransitionMatrix(
            rng.uniform(-2.0, 2.0, size=(3, 3)), rng.uniform(-2.0, 2.0, size=3)
        )
        batch = [(emissions, _legal_path(rng, BIO1, T))]
        restricted = restricted_nll(batch, trans, spec)
        full = nll_loss(batch, trans)
        masked = masked_nll(batch, trans, BIO1, spec)
        if restricted > full + 1e-12:
            ordering_ok = False
        worst_gap = max(worst_gap, abs(masked - restricted))
    _verdict(
        8,
        "restricted <= full NLL and masked NLL within 1e-8 of restricted",
        ordering_ok and worst_gap <= 1e-8,
        f"max |masked - restricted| = {worst_gap:.3e}",
    )


def test_criterion_09_mask_persistence():
    """After 500 masked-training iterations, every masked entry holds exactly
    c at every checkpoint."""
    config = SyntheticConfig(sentences=160)
    tagset, sentences = generate_synthetic(config, seed=23)
    train_s, dev_s = split_corpus(sentences, dev_fraction=0.1, seed=23)
    rules = illegal_transition_set(tagset)
    checkpoints = []

    def grab(iteration, trans):
        values = [float(trans.scores[i, j]) for i, j in sorted(rules.omega)]
        values += [float(trans.start[i]) for i in sorted(rules.illegal_starts)]
        checkpoints.append((iteration, values))

    train_config = TrainConfig(
        mode="mcrf-train", mask_value=-1e4, batch_size=16, max_epochs=0,
        max_iterations=500, eval_every=20, embedding_dim=8, seed=23,
    )
    train(train_s, dev_s, train_config, tagset, on_checkpoint=grab)
    drifted = sum(
        1 for _, values in checkpoints for v in values if v != -1e4
    )
    _verdict(
        9,
        "masked entries equal c bit-exactly at all 25 checkpoints of a "
        "500-iteration run",
        len(checkpoints) == 25 and checkpoints[-1][0] == 500 and drifted == 0,
        f"{len(checkpoints)} checkpoints, {drifted} drifted values",
    )


def test_criterion_10_behavioral_separation():
    """On the adversarial fixture the unconstrained decode is illegal and the
    constrained decode is legal, deterministically."""
    first = build_adversarial_instance(BIO3)
    second = build_adversarial_instance(BIO3)
    unconstrained_illegal = first_violation(BIO3, first.unconstrained_path) is not None
    constrained_legal = first_violation(BIO3, first.constrained_path) is None
    deterministic = (
        first.unconstrained_path == second.unconstrained_path
        and first.constrained_path == second.constrained_path
        and viterbi(first.emissions, first.trans) == first.unconstrained_path
        and constrained_viterbi(first.emissions, first.trans, first.spec)
        == first.constrained_path
    )
    _verdict(
        10,
        "adversarial fixture separates unconstrained from constrained decoding",
        unconstrained_illegal and constrained_legal and deterministic,
        f"unconstrained={first.unconstrained_path}, constrained={first.constrained_path}",
    )


@pytest.fixture(scope="module")
def synth_2000(tmp_path_factory):
    root = tmp_path_factory.mktemp("endtoend")
    prefix = str(root / "synth")
    start = time.perf_counter()
    code = main([
        "gen-synth", "--sentences", "2000", "--types", "3", "--seed", "0",
        "--out-prefix", prefix,
    ])
    gen_elapsed = time.perf_counter() - start
    assert code == 0
    return root, prefix, gen_elapsed


def _run_default_training(root, prefix, tag):
    model = root / f"model_{tag}.json"
    report = root / f"report_{tag}.txt"
    start = time.perf_counter()
    code = main([
        "train", "--data", f"{prefix}_train.conll", "--dev", f"{prefix}_dev.conll",
        "--mode", "mcrf-train", "--out", str(model), "--report", str(report),
    ])
    elapsed = time.perf_counter() - start
    assert code == 0
    return report.read_bytes(), elapsed


@pytest.fixture(scope="module")
def first_training(synth_2000):
    root, prefix, gen_elapsed = synth_2000
    report_bytes, train_elapsed = _run_default_training(root, prefix, "first")
    return report_bytes, gen_elapsed + train_elapsed


def test_criterion_11_desk_scale_end_to_end(first_training):
    """Generating 2000/200 sentences and training mcrf-train with the default
    config finishes in under five minutes and reaches dev F1 >= 0.8."""
    report_bytes, elapsed = first_training
    final = report_bytes.decode().strip().splitlines()[-1].split("\t")
    dev_f1 = float(final[3])
    _verdict(
        11,
        "default masked training reaches dev F1 >= 0.8 in < 5 minutes",
        dev_f1 >= 0.8 and elapsed < 300.0,
        f"dev_f1 = {dev_f1:.6f}, {elapsed:.1f}s",
    )


def test_criterion_12_determinism(synth_2000, first_training):
    """Re-running the criterion-11 training with the same seed reproduces the
    report byte-for-byte."""
    root, prefix, _ = synth_2000
    first_bytes, _ = first_training
    second_bytes, _ = _run_default_training(root, prefix, "second")
    _verdict(
        12,
        "repeated run reproduces the training report byte-for-byte",
        second_bytes == first_bytes,
        f"{len(first_bytes)} bytes compared",
    )
