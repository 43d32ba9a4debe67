"""Corpus and model I/O plus a seeded synthetic corpus generator.

CoNLL format: one token per line, columns separated by whitespace, token in
the first column and tag in the last, sentences separated by blank lines.
Gold paths are validated for scheme legality at load time; an illegal gold
corpus is a data error, not something to repair silently.

The model file is a single JSON document (format tag "mcrf-model-v1") whose
floats round-trip exactly through repr, so save/load is bit-faithful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .crf import TransitionMatrix
from .encoder import EncoderWeights, Vocabulary
from .errors import ConfigurationError, DataError, FormatError
from .schemes import Scheme, Tagset, build_tagset, first_violation

MODEL_FORMAT = "mcrf-model-v1"

TRAIN_MODES = ("crf", "mcrf-decode", "mcrf-train")


@dataclass
class LabeledSentence:
    tokens: list[str]
    gold: list[int]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.gold):
            raise ValueError("tokens and gold tags must have equal length")
        if not self.tokens:
            raise ValueError("empty sentence")


def read_conll(path: str, tagset: Tagset, validate: bool = True) -> list[LabeledSentence]:
    """Parse a CoNLL file; an empty file is an empty corpus.

    With validate (the default), every gold path is checked against the
    tagset and an illegal path is a DataError. Prediction files written by
    an unconstrained decoder may legitimately be illegal; read those with
    validate=False.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    sentences: list[LabeledSentence] = []
    tokens: list[str] = []
    tags: list[int] = []
    first_line = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            if tokens:
                _finish_sentence(path, tagset, sentences, tokens, tags, first_line, validate)
                tokens, tags = [], []
            continue
        if not tokens:
            first_line = lineno
        cols = line.split()
        if len(cols) < 2:
            raise FormatError(
                f"{path}:{lineno}: need at least token and tag columns, got {line!r}"
            )
        tag = cols[-1]
        try:
            tags.append(tagset.index_of(tag))
        except ValueError:
            raise FormatError(
                f"{path}:{lineno}: unknown tag {tag!r} (tagset: {list(tagset.tags)})"
            ) from None
        tokens.append(cols[0])
    if tokens:
        _finish_sentence(path, tagset, sentences, tokens, tags, first_line, validate)
    return sentences


def _finish_sentence(
    path: str,
    tagset: Tagset,
    sentences: list[LabeledSentence],
    tokens: list[str],
    tags: list[int],
    first_line: int,
    validate: bool,
) -> None:
    if validate:
        hit = first_violation(tagset, tags, enforce_start=True)
        if hit is not None:
            pos, rule = hit
            raise DataError(
                f"{path}:{first_line + pos}: sentence {len(sentences) + 1}, "
                f"position {pos + 1}: illegal gold path ({rule})"
            )
    sentences.append(LabeledSentence(tokens=tokens, gold=tags))


def write_conll(
    path: str,
    sentences: list[LabeledSentence],
    tagset: Tagset,
    predictions: list[list[int]] | None = None,
) -> None:
    """Write token/gold (or token/gold/predicted) columns, tab separated."""
    if predictions is not None and len(predictions) != len(sentences):
        raise ValueError("predictions do not align with the sentences")
    with open(path, "w", encoding="utf-8") as fh:
        for k, sent in enumerate(sentences):
            for t, (token, gold) in enumerate(zip(sent.tokens, sent.gold)):
                cols = [token, tagset.tag_of(gold)]
                if predictions is not None:
                    cols.append(tagset.tag_of(predictions[k][t]))
                fh.write("\t".join(cols) + "\n")
            fh.write("\n")


@dataclass
class ModelState:
    """Everything needed to reload and apply a trained model."""

    tagset: Tagset
    mode: str
    mask_value: float
    enforce_start: bool
    trans: TransitionMatrix
    encoder: EncoderWeights
    vocab: Vocabulary

    def __post_init__(self) -> None:
        if self.mode not in TRAIN_MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}, expected {TRAIN_MODES}")


def save_model(path: str, state: ModelState) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "scheme": state.tagset.scheme.value,
        "entity_types": list(state.tagset.entity_types),
        "tags": list(state.tagset.tags),
        "mode": state.mode,
        "mask_value": state.mask_value,
        "enforce_start": state.enforce_start,
        "transitions": state.trans.scores.tolist(),
        "start": state.trans.start.tolist(),
        "encoder": {
            "embedding_dim": state.encoder.embedding_dim,
            "embeddings": state.encoder.embeddings.tolist(),
            "projection": state.encoder.projection.tolist(),
            "bias": state.encoder.bias.tolist(),
        },
        "vocabulary": list(state.vocab.tokens),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path: str) -> ModelState:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupted model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError(
            f"{path}: unsupported model format {doc.get('format') if isinstance(doc, dict) else doc!r}, "
            f"expected {MODEL_FORMAT!r}"
        )
    try:
        tagset = build_tagset(Scheme(doc["scheme"]), doc["entity_types"])
        if tuple(doc["tags"]) != tagset.tags:
            raise FormatError(
                f"{path}: stored tag order {doc['tags']} does not match the "
                f"canonical order {list(tagset.tags)}"
            )
        enc = doc["encoder"]
        state = ModelState(
            tagset=tagset,
            mode=doc["mode"],
            mask_value=float(doc["mask_value"]),
            enforce_start=bool(doc["enforce_start"]),
            trans=TransitionMatrix(
                np.asarray(doc["transitions"], dtype=np.float64),
                np.asarray(doc["start"], dtype=np.float64),
            ),
            encoder=EncoderWeights(
                embeddings=np.asarray(enc["embeddings"], dtype=np.float64),
                projection=np.asarray(enc["projection"], dtype=np.float64),
                bias=np.asarray(enc["bias"], dtype=np.float64),
            ),
            vocab=Vocabulary(tokens=tuple(doc["vocabulary"])),
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: invalid model file ({exc})") from None
    return state


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic corpus generator.

    Each entity type gets its own small pool of surface tokens, so emission
    windows genuinely predict the type; fillers come from a shared pool.
    noise_rate randomly swaps a token for one drawn from the global pool
    without touching the gold tags.
    """

    entity_types: tuple[str, ...] = ("LOC", "ORG", "PER")
    scheme: Scheme = Scheme.BIO
    sentences: int = 100
    min_length: int = 5
    max_length: int = 15
    vocab_size: int = 60  # size of the filler pool; entity pools add tokens_per_type each
    tokens_per_type: int = 12
    entity_density: float = 0.2
    max_entity_length: int = 3
    noise_rate: float = 0.02

    def __post_init__(self) -> None:
        if not 1 <= self.min_length <= self.max_length:
            raise ConfigurationError("need 1 <= min_length <= max_length")
        if not 0.0 <= self.entity_density <= 1.0:
            raise ConfigurationError("entity_density must lie in [0, 1]")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ConfigurationError("noise_rate must lie in [0, 1]")
        if self.sentences < 1:
            raise ConfigurationError("need at least one sentence")


def _entity_tags(tagset: Tagset, etype: str, length: int) -> list[int]:
    if tagset.scheme is Scheme.BIO:
        return [tagset.index_of(f"B-{etype}")] + [tagset.index_of(f"I-{etype}")] * (length - 1)
    if length == 1:
        return [tagset.index_of(f"S-{etype}")]
    return (
        [tagset.index_of(f"B-{etype}")]
        + [tagset.index_of(f"I-{etype}")] * (length - 2)
        + [tagset.index_of(f"E-{etype}")]
    )


def generate_synthetic(
    config: SyntheticConfig, seed: int
) -> tuple[Tagset, list[LabeledSentence]]:
    """Deterministically sample a legal labeled corpus."""
    tagset = build_tagset(config.scheme, config.entity_types)
    rng = np.random.default_rng(seed)
    fillers = [f"w{i}" for i in range(config.vocab_size)]
    pools = {
        etype: [f"{etype.lower()}{i}" for i in range(config.tokens_per_type)]
        for etype in config.entity_types
    }
    global_pool = fillers + [tok for pool in pools.values() for tok in pool]
    outside = tagset.index_of("O")
    sentences: list[LabeledSentence] = []
    for _ in range(config.sentences):
        length = int(rng.integers(config.min_length, config.max_length + 1))
        tokens: list[str] = []
        gold: list[int] = []
        t = 0
        while t < length:
            remaining = length - t
            if remaining >= 1 and rng.random() < config.entity_density:
                etype = str(rng.choice(list(config.entity_types)))
                span = int(rng.integers(1, min(config.max_entity_length, remaining) + 1))
                pool = pools[etype]
                tokens.extend(str(rng.choice(pool)) for _ in range(span))
                gold.extend(_entity_tags(tagset, etype, span))
                t += span
            else:
                tokens.append(str(rng.choice(fillers)))
                gold.append(outside)
                t += 1
        if config.noise_rate > 0.0:
            for t in range(length):
                if rng.random() < config.noise_rate:
                    tokens[t] = str(rng.choice(global_pool))
        if first_violation(tagset, gold, enforce_start=True) is not None:
            raise AssertionError("generator produced an illegal gold path")
        sentences.append(LabeledSentence(tokens=tokens, gold=gold))
    return tagset, sentences


def split_corpus(
    sentences: list[LabeledSentence], dev_fraction: float, seed: int
) -> tuple[list[LabeledSentence], list[LabeledSentence]]:
    """Seeded shuffle split; dev gets round(dev_fraction * n), at least 1."""
    if not 0.0 < dev_fraction < 1.0:
        raise ConfigurationError("dev_fraction must lie strictly between 0 and 1")
    if len(sentences) < 2:
        raise DataError("need at least two sentences to split")
    order = np.random.default_rng(seed).permutation(len(sentences))
    n_dev = max(1, round(dev_fraction * len(sentences)))
    if n_dev >= len(sentences):
        n_dev = len(sentences) - 1
    dev_idx = set(int(i) for i in order[:n_dev])
    train = [s for k, s in enumerate(sentences) if k not in dev_idx]
    dev = [s for k, s in enumerate(sentences) if k in dev_idx]
    return train, dev
