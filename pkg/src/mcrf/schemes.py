"""Tagging schemes (BIO, BIOES): tagset construction and transition legality.

The tag order is fixed and deterministic: O first, then one block per
entity type in the given order. BIO blocks are (B-X, I-X); BIOES blocks
are (B-X, I-X, E-X, S-X). Legality is a pure function of the two tags'
prefixes and types:

  BIO:   I-X may only follow B-X or I-X of the same type.
  BIOES: B-X/I-X must be followed by I-X or E-X of the same type;
         O, E-X and S-X may be followed by O, any B-*, or any S-*.

A path is illegal if it contains an illegal adjacent pair or starts on a
tag that cannot open a sentence (I-* for BIO; I-* and E-* for BIOES).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ConfigurationError

OUTSIDE = "O"


class Scheme(str, Enum):
    BIO = "bio"
    BIOES = "bioes"


_PREFIXES = {Scheme.BIO: ("B", "I"), Scheme.BIOES: ("B", "I", "E", "S")}


@dataclass(frozen=True)
class Tagset:
    """Immutable tag inventory for one scheme and an ordered set of entity types."""

    scheme: Scheme
    entity_types: tuple[str, ...]
    tags: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.tags)

    def index_of(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise ValueError(f"unknown tag {tag!r} for scheme {self.scheme.value}") from None

    def tag_of(self, index: int) -> str:
        if not 0 <= index < len(self.tags):
            raise ValueError(f"tag index {index} out of range [0, {len(self.tags)})")
        return self.tags[index]


def build_tagset(scheme: Scheme | str, entity_types: list[str] | tuple[str, ...]) -> Tagset:
    """Build the canonical tagset: O, then per-type prefix blocks in order."""
    scheme = Scheme(scheme)
    types = tuple(entity_types)
    if not types:
        raise ConfigurationError("at least one entity type is required")
    if len(set(types)) != len(types):
        raise ConfigurationError(f"duplicate entity types: {list(types)}")
    for t in types:
        if not t or t == OUTSIDE or "-" in t:
            raise ConfigurationError(f"invalid entity type name {t!r}")
    tags = [OUTSIDE]
    for t in types:
        tags.extend(f"{p}-{t}" for p in _PREFIXES[scheme])
    return Tagset(scheme=scheme, entity_types=types, tags=tuple(tags))


def decompose_tag(tagset: Tagset, index: int) -> tuple[str, str | None]:
    """Return (prefix, entity_type) for a tag index; O decomposes to ("O", None)."""
    tag = tagset.tag_of(index)
    if tag == OUTSIDE:
        return OUTSIDE, None
    prefix, _, etype = tag.partition("-")
    return prefix, etype


def is_legal_start(tagset: Tagset, index: int) -> bool:
    prefix, _ = decompose_tag(tagset, index)
    if tagset.scheme is Scheme.BIO:
        return prefix != "I"
    return prefix in (OUTSIDE, "B", "S")


def is_legal_transition(tagset: Tagset, i: int, j: int) -> bool:
    """True when tag j may immediately follow tag i."""
    pi, ti = decompose_tag(tagset, i)
    pj, tj = decompose_tag(tagset, j)
    if tagset.scheme is Scheme.BIO:
        if pj != "I":
            return True
        return pi in ("B", "I") and ti == tj
    # BIOES: continuation targets need an open chunk of the same type;
    # opening targets need the previous chunk closed.
    if pj in ("I", "E"):
        return pi in ("B", "I") and ti == tj
    return pi in (OUTSIDE, "E", "S")


@dataclass(frozen=True)
class TransitionRuleSet:
    """The illegal transition pairs (omega) and illegal start tags of a tagset."""

    omega: frozenset[tuple[int, int]]
    illegal_starts: frozenset[int]

    def without_start_rules(self) -> "TransitionRuleSet":
        return TransitionRuleSet(omega=self.omega, illegal_starts=frozenset())


def illegal_transition_set(tagset: Tagset) -> TransitionRuleSet:
    """Enumerate every illegal (from, to) pair and every illegal start tag."""
    d = tagset.size
    omega = frozenset(
        (i, j) for i in range(d) for j in range(d) if not is_legal_transition(tagset, i, j)
    )
    starts = frozenset(i for i in range(d) if not is_legal_start(tagset, i))
    return TransitionRuleSet(omega=omega, illegal_starts=starts)


def first_violation(
    tagset: Tagset, path: list[int] | tuple[int, ...], enforce_start: bool = True
) -> tuple[int, str] | None:
    """Locate the first illegality in a path.

    Returns (position, human-readable rule) or None for a legal path.
    Positions are 0-based; a start violation reports position 0.
    """
    if len(path) == 0:
        raise ValueError("empty path")
    if enforce_start and not is_legal_start(tagset, path[0]):
        return 0, f"{tagset.tag_of(path[0])} cannot start a sentence"
    for t in range(1, len(path)):
        if not is_legal_transition(tagset, path[t - 1], path[t]):
            a, b = tagset.tag_of(path[t - 1]), tagset.tag_of(path[t])
            return t, f"{a} -> {b} is not a legal transition"
    return None
