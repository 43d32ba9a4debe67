"""Deliberately small emission model: a window-3 linear layer over token
embeddings.

logits[t] = concat(E[tok_{t-1}], E[tok_t], E[tok_{t+1}]) @ P + b

Out-of-sentence neighbors use the padding embedding (row 0). The point is a
trainable, fully differentiable emission source that keeps every experiment
runnable on a desk; emissions can also come from a logits file produced by
any external model (load_external_logits / write_logits).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import FormatError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-index map with fixed special entries: pad=0, unk=1."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) < 2 or self.tokens[0] != PAD_TOKEN or self.tokens[1] != UNK_TOKEN:
            raise ValueError("vocabulary must start with the pad and unk tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def index(self) -> dict[str, int]:
        return self._index

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_INDEX)

    def lookup_all(self, tokens: Iterable[str]) -> list[int]:
        idx = self.index
        return [idx.get(t, UNK_INDEX) for t in tokens]

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        """Build from raw tokens in first-occurrence order, specials first."""
        seen = dict.fromkeys([PAD_TOKEN, UNK_TOKEN])
        for t in tokens:
            seen.setdefault(t)
        return cls(tokens=tuple(seen))


@dataclass
class EncoderWeights:
    """Embedding table (V, e), projection (3e, d), bias (d).

    Doubles as the gradient container: encoder_backward returns an
    EncoderWeights holding arrays of the same shapes.
    """

    embeddings: np.ndarray
    projection: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        e = self.embeddings.shape[1]
        if self.projection.shape[0] != 3 * e:
            raise ValueError(
                f"projection expects 3*e = {3 * e} input features, "
                f"got {self.projection.shape[0]}"
            )
        if self.bias.shape != (self.projection.shape[1],):
            raise ValueError("bias length must match the projection output width")

    @property
    def embedding_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def num_tags(self) -> int:
        return self.projection.shape[1]

    @classmethod
    def init(
        cls, vocab_size: int, embedding_dim: int, num_tags: int, rng: np.random.Generator
    ) -> "EncoderWeights":
        """Uniform [-0.1, 0.1] everywhere, drawn from the given generator."""
        return cls(
            embeddings=rng.uniform(-0.1, 0.1, size=(vocab_size, embedding_dim)),
            projection=rng.uniform(-0.1, 0.1, size=(3 * embedding_dim, num_tags)),
            bias=rng.uniform(-0.1, 0.1, size=num_tags),
        )

    @classmethod
    def zeros(cls, vocab_size: int, embedding_dim: int, num_tags: int) -> "EncoderWeights":
        return cls(
            embeddings=np.zeros((vocab_size, embedding_dim)),
            projection=np.zeros((3 * embedding_dim, num_tags)),
            bias=np.zeros(num_tags),
        )

    def copy(self) -> "EncoderWeights":
        return EncoderWeights(
            self.embeddings.copy(), self.projection.copy(), self.bias.copy()
        )


def _window_ids(token_ids: list[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ids = np.asarray(token_ids, dtype=np.intp)
    if ids.ndim != 1 or ids.shape[0] == 0:
        raise ValueError("token id sequence must be non-empty and one-dimensional")
    prev_ids = np.concatenate(([PAD_INDEX], ids[:-1]))
    next_ids = np.concatenate((ids[1:], [PAD_INDEX]))
    return prev_ids, ids, next_ids


def encode(token_ids: list[int], weights: EncoderWeights) -> np.ndarray:
    """Emission logits (T, d) for one sentence of token ids."""
    prev_ids, ids, next_ids = _window_ids(token_ids)
    if ids.max() >= weights.embeddings.shape[0]:
        raise ValueError("token id out of range for the embedding table")
    x = np.hstack(
        (weights.embeddings[prev_ids], weights.embeddings[ids], weights.embeddings[next_ids])
    )
    return x @ weights.projection + weights.bias


def encoder_backward(
    token_ids: list[int], d_logits: np.ndarray, weights: EncoderWeights
) -> EncoderWeights:
    """Chain-rule gradients for encode, given d loss / d logits.

    Embedding rows of tokens absent from the sentence (and its pad
    neighbors) receive exactly zero gradient.
    """
    prev_ids, ids, next_ids = _window_ids(token_ids)
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != (len(ids), weights.num_tags):
        raise ValueError(
            f"d_logits shape {d_logits.shape} does not match "
            f"({len(ids)}, {weights.num_tags})"
        )
    e = weights.embedding_dim
    x = np.hstack(
        (weights.embeddings[prev_ids], weights.embeddings[ids], weights.embeddings[next_ids])
    )
    d_bias = d_logits.sum(axis=0)
    d_projection = x.T @ d_logits
    d_x = d_logits @ weights.projection.T
    d_embeddings = np.zeros_like(weights.embeddings)
    np.add.at(d_embeddings, prev_ids, d_x[:, :e])
    np.add.at(d_embeddings, ids, d_x[:, e : 2 * e])
    np.add.at(d_embeddings, next_ids, d_x[:, 2 * e :])
    return EncoderWeights(embeddings=d_embeddings, projection=d_projection, bias=d_bias)


def write_logits(path: str, sequences: list[np.ndarray], tags: tuple[str, ...]) -> None:
    """Write per-position emission scores in the external logits format.

    Header line: "d=<int>\\ttags=<comma-separated tag names>". Then one line
    of d tab-separated floats per position, sentences separated by a blank
    line. Floats are written with repr so reading them back is exact.
    """
    d = len(tags)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"d={d}\ttags={','.join(tags)}\n")
        for k, seq in enumerate(sequences):
            seq = np.asarray(seq, dtype=np.float64)
            if seq.ndim != 2 or seq.shape[1] != d:
                raise ValueError(f"sequence {k} has shape {seq.shape}, expected (T, {d})")
            for row in seq:
                fh.write("\t".join(repr(float(v)) for v in row) + "\n")
            fh.write("\n")


def load_external_logits(
    path: str,
    tags: tuple[str, ...] | None = None,
    expected_sentences: int | None = None,
) -> list[np.ndarray]:
    """Read a logits file; validates width, tag names, and sentence count.

    Every failure names the offending line number.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].strip():
        raise FormatError(f"{path}:1: missing header line")
    header = lines[0].rstrip("\r")
    parts = header.split("\t")
    if len(parts) != 2 or not parts[0].startswith("d=") or not parts[1].startswith("tags="):
        raise FormatError(f"{path}:1: header must be 'd=<int>\\ttags=<names>', got {header!r}")
    try:
        d = int(parts[0][2:])
    except ValueError:
        raise FormatError(f"{path}:1: non-integer width in header: {parts[0]!r}") from None
    file_tags = tuple(parts[1][5:].split(","))
    if len(file_tags) != d:
        raise FormatError(
            f"{path}:1: header declares d={d} but lists {len(file_tags)} tag names"
        )
    if tags is not None and file_tags != tuple(tags):
        raise FormatError(
            f"{path}:1: tag names {list(file_tags)} do not match the active "
            f"tagset {list(tags)}"
        )
    sequences: list[np.ndarray] = []
    rows: list[list[float]] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line.strip():
            if rows:
                sequences.append(np.asarray(rows, dtype=np.float64))
                rows = []
            continue
        fields = line.split("\t")
        if len(fields) != d:
            raise FormatError(
                f"{path}:{lineno}: expected {d} fields, found {len(fields)}"
            )
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
        if not all(np.isfinite(values)):
            raise FormatError(f"{path}:{lineno}: non-finite value in {line!r}")
        rows.append(values)
    if rows:
        sequences.append(np.asarray(rows, dtype=np.float64))
    if expected_sentences is not None and len(sequences) != expected_sentences:
        raise FormatError(
            f"{path}: holds {len(sequences)} sentences but the companion "
            f"corpus has {expected_sentences}"
        )
    return sequences
