"""Mini-batch NLL training with Adam, in three modes.

  crf         - plain training, plain decoding
  mcrf-decode - plain training; the transition mask is applied only when
                decoding, so the training trajectory is bit-identical to crf
  mcrf-train  - the mask is applied at initialization, masked entries get
                zero gradient (their Adam moments stay zero), and the mask
                value is reassigned after every update, so masked entries
                hold exactly c at every point of training

The budget rule is max(epochs, iteration floor): training runs for
max(max_epochs * batches_per_epoch, max_iterations) iterations. Everything
is seeded; two runs with the same config and data produce byte-identical
reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .crf import TransitionMatrix, loss_and_gradients, nll_loss, viterbi
from .data import TRAIN_MODES, LabeledSentence, ModelState
from .encoder import EncoderWeights, Vocabulary, encode, encoder_backward
from .errors import ConfigurationError, DataError, TrainingError
from .evaluation import chunk_prf, illegal_stats
from .masking import MaskSpec, constrained_viterbi, reapply_mask_in_place
from .postproc import extract_segments
from .schemes import Tagset, first_violation, illegal_transition_set


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "crf"
    mask_value: float = -1e4
    enforce_start: bool = True
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 5
    max_iterations: int = 1000
    eval_every: int = 50
    embedding_dim: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in TRAIN_MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}, expected {TRAIN_MODES}")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be >= 0")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        if self.max_epochs < 0 or self.max_iterations < 0:
            raise ConfigurationError("epoch and iteration budgets must be >= 0")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be >= 1")
        if self.embedding_dim < 1:
            raise ConfigurationError("embedding dimension must be >= 1")


@dataclass
class OptimizerState:
    """Adam first/second moments per named parameter, plus the step count."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(
            step=0,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    config: TrainConfig,
    frozen: dict[str, np.ndarray] | None = None,
) -> None:
    """One bias-corrected Adam update, in place.

    frozen maps a parameter name to a boolean array; gradients there are
    treated as zero, so the corresponding moments never move.
    """
    if set(params) != set(grads):
        raise ValueError("params and grads must hold the same parameter names")
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if frozen is not None and name in frozen:
            g = np.where(frozen[name], 0.0, g)
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1 - config.beta1) * g
        v *= config.beta2
        v += (1 - config.beta2) * g * g
        m_hat = m / (1 - config.beta1**t)
        v_hat = v / (1 - config.beta2**t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


@dataclass(frozen=True)
class EvalRecord:
    iteration: int
    train_nll: float
    dev_nll: float
    dev_f1: float
    illegal_pct: float


@dataclass
class TrainReport:
    """Evaluation trace; to_text() is byte-stable for a given run."""

    records: list[EvalRecord] = field(default_factory=list)

    HEADER = "iteration\ttrain_nll\tdev_nll\tdev_f1\tillegal_pct"

    def to_text(self) -> str:
        lines = [self.HEADER]
        for r in self.records:
            lines.append(
                f"{r.iteration}\t{r.train_nll:.6f}\t{r.dev_nll:.6f}"
                f"\t{r.dev_f1:.6f}\t{r.illegal_pct:.4f}"
            )
        return "\n".join(lines) + "\n"

    @property
    def final(self) -> EvalRecord:
        if not self.records:
            raise ValueError("empty report")
        return self.records[-1]


def initialize(
    config: TrainConfig,
    tagset: Tagset,
    vocab: Vocabulary,
    rng: np.random.Generator | None = None,
) -> tuple[EncoderWeights, TransitionMatrix, OptimizerState]:
    """Seeded initial weights; in mcrf-train mode the mask is already applied."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    enc = EncoderWeights.init(vocab.size, config.embedding_dim, tagset.size, rng)
    trans = TransitionMatrix.zeros(tagset.size)
    if config.mode == "mcrf-train":
        spec = MaskSpec(
            rules=illegal_transition_set(tagset),
            mask_value=config.mask_value,
            enforce_start=config.enforce_start,
        )
        reapply_mask_in_place(trans, spec)
    params = _param_dict(enc, trans)
    return enc, trans, OptimizerState.for_params(params)


def _param_dict(enc: EncoderWeights, trans: TransitionMatrix) -> dict[str, np.ndarray]:
    return {
        "embeddings": enc.embeddings,
        "projection": enc.projection,
        "bias": enc.bias,
        "transitions": trans.scores,
        "start": trans.start,
    }


def _validate_gold(sentences: list[LabeledSentence], tagset: Tagset, name: str) -> None:
    for k, sent in enumerate(sentences):
        hit = first_violation(tagset, sent.gold, enforce_start=True)
        if hit is not None:
            pos, rule = hit
            raise DataError(
                f"{name} sentence {k + 1}, position {pos + 1}: illegal gold path ({rule})"
            )


def _decode(
    emissions: np.ndarray, trans: TransitionMatrix, spec: MaskSpec, mode: str
) -> list[int]:
    if mode == "crf":
        return viterbi(emissions, trans)
    return constrained_viterbi(emissions, trans, spec)


def train(
    train_sentences: list[LabeledSentence],
    dev_sentences: list[LabeledSentence],
    config: TrainConfig,
    tagset: Tagset,
    vocab: Vocabulary | None = None,
    train_logits: list[np.ndarray] | None = None,
    dev_logits: list[np.ndarray] | None = None,
    on_checkpoint=None,
) -> tuple[ModelState, TrainReport]:
    """Run the configured training and return the model plus its report.

    When train_logits/dev_logits are given, emissions are frozen to those
    arrays and only the transition matrix and start vector are optimized.
    on_checkpoint, if given, is called as on_checkpoint(iteration, trans)
    at every evaluation point.
    """
    if not train_sentences:
        raise DataError("empty training corpus")
    if not dev_sentences:
        raise DataError("empty dev corpus")
    _validate_gold(train_sentences, tagset, "train")
    _validate_gold(dev_sentences, tagset, "dev")
    if train_logits is not None and len(train_logits) != len(train_sentences):
        raise DataError(
            f"got {len(train_logits)} emission sequences for "
            f"{len(train_sentences)} training sentences"
        )
    if dev_logits is not None and len(dev_logits) != len(dev_sentences):
        raise DataError(
            f"got {len(dev_logits)} emission sequences for "
            f"{len(dev_sentences)} dev sentences"
        )
    external = train_logits is not None
    if external != (dev_logits is not None):
        raise ConfigurationError("external emissions must cover both train and dev")
    if external:
        for name, seqs in (("train", train_logits), ("dev", dev_logits)):
            for k, em in enumerate(seqs):
                if not np.all(np.isfinite(em)):
                    raise TrainingError(
                        f"non-finite value in external {name} emissions, sentence {k + 1}"
                    )

    if vocab is None:
        vocab = Vocabulary.from_tokens(
            tok for sent in train_sentences for tok in sent.tokens
        )
    rng = np.random.default_rng(config.seed)
    enc, trans, opt = initialize(config, tagset, vocab, rng)
    params = _param_dict(enc, trans)
    spec = MaskSpec(
        rules=illegal_transition_set(tagset),
        mask_value=config.mask_value,
        enforce_start=config.enforce_start,
    )
    masked_training = config.mode == "mcrf-train"
    frozen = None
    if masked_training:
        frozen = {
            "transitions": _omega_matrix(spec, tagset.size),
            "start": _start_mask(spec, tagset.size),
        }

    train_ids = [vocab.lookup_all(s.tokens) for s in train_sentences]
    dev_ids = [vocab.lookup_all(s.tokens) for s in dev_sentences]
    gold_segments = [extract_segments(s.gold, tagset) for s in dev_sentences]

    n = len(train_sentences)
    batches_per_epoch = math.ceil(n / config.batch_size)
    target = max(config.max_epochs * batches_per_epoch, config.max_iterations)
    if target < 1:
        raise ConfigurationError("training budget is zero iterations")

    report = TrainReport()
    iteration = 0
    d = tagset.size
    while iteration < target:
        order = rng.permutation(n)
        for b in range(batches_per_epoch):
            if iteration >= target:
                break
            picked = order[b * config.batch_size : (b + 1) * config.batch_size]
            batch = []
            for k in picked:
                em = train_logits[k] if external else encode(train_ids[k], enc)
                batch.append((em, train_sentences[k].gold))
            loss, grads = loss_and_gradients(batch, trans)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at iteration {iteration + 1}; "
                    f"check emissions and learning rate"
                )
            g_trans = grads.transitions
            g_start = grads.start
            g_enc = EncoderWeights.zeros(vocab.size, config.embedding_dim, d)
            if not external:
                for idx, k in enumerate(picked):
                    g = encoder_backward(train_ids[k], grads.emissions[idx], enc)
                    g_enc.embeddings += g.embeddings
                    g_enc.projection += g.projection
                    g_enc.bias += g.bias
            grad_dict = {
                "embeddings": g_enc.embeddings,
                "projection": g_enc.projection,
                "bias": g_enc.bias,
                "transitions": g_trans,
                "start": g_start,
            }
            adam_step(opt, params, grad_dict, config, frozen=frozen)
            if masked_training:
                reapply_mask_in_place(trans, spec)
            iteration += 1
            if iteration % config.eval_every == 0 or iteration == target:
                record = _evaluate(
                    iteration, loss, dev_sentences, dev_ids, dev_logits,
                    enc, trans, spec, config.mode, tagset, gold_segments, external,
                )
                report.records.append(record)
                if on_checkpoint is not None:
                    on_checkpoint(iteration, trans)

    state = ModelState(
        tagset=tagset,
        mode=config.mode,
        mask_value=config.mask_value,
        enforce_start=config.enforce_start,
        trans=trans,
        encoder=enc,
        vocab=vocab,
    )
    return state, report


def _omega_matrix(spec: MaskSpec, d: int) -> np.ndarray:
    out = np.zeros((d, d), dtype=bool)
    for i, j in spec.rules.omega:
        out[i, j] = True
    return out


def _start_mask(spec: MaskSpec, d: int) -> np.ndarray:
    out = np.zeros(d, dtype=bool)
    if spec.enforce_start:
        for i in spec.rules.illegal_starts:
            out[i] = True
    return out


def _evaluate(
    iteration: int,
    train_loss: float,
    dev_sentences: list[LabeledSentence],
    dev_ids: list[list[int]],
    dev_logits: list[np.ndarray] | None,
    enc: EncoderWeights,
    trans: TransitionMatrix,
    spec: MaskSpec,
    mode: str,
    tagset: Tagset,
    gold_segments,
    external: bool,
) -> EvalRecord:
    dev_batch = []
    predictions = []
    for k, sent in enumerate(dev_sentences):
        em = dev_logits[k] if external else encode(dev_ids[k], enc)
        dev_batch.append((em, sent.gold))
        predictions.append(_decode(em, trans, spec, mode))
    # in mcrf-train mode the live matrix already carries the mask, so this
    # is the masked objective; in the other modes it is the plain NLL
    dev_nll = nll_loss(dev_batch, trans)
    pred_segments = [extract_segments(p, tagset) for p in predictions]
    metrics = chunk_prf(gold_segments, pred_segments)
    stats = illegal_stats(gold_segments, pred_segments)
    return EvalRecord(
        iteration=iteration,
        train_nll=float(train_loss),
        dev_nll=float(dev_nll),
        dev_f1=float(metrics.f1),
        illegal_pct=100.0 * stats.ratio_illegal_over_total,
    )
