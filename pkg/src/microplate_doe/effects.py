"""GF(2) algebra of factorial effect words for regular two-level designs.

A word is a subset of factor letters stored as a bit mask (bit ``i`` is the
letter ``LETTERS[i]``).  Multiplying two words is the symmetric difference of
their masks, so every word is its own inverse and the empty mask is the
identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Optional, Sequence

from .errors import DependentGenerators, IdentityWord

LETTERS = "abcdefghijklmnop"
MAX_FACTORS = len(LETTERS)


@dataclass(frozen=True)
class EffectWord:
    mask: int

    def __post_init__(self):
        if not 0 <= self.mask < (1 << MAX_FACTORS):
            raise ValueError(f"mask {self.mask:#x} outside {MAX_FACTORS}-factor range")

    @classmethod
    def parse(cls, label: str) -> "EffectWord":
        """Build a word from a label such as ``"acf"``; ``"I"`` or ``""`` is the identity."""
        label = label.strip()
        if label in ("", "I", "1"):
            return IDENTITY
        mask = 0
        for ch in label:
            idx = LETTERS.find(ch)
            if idx < 0:
                raise ValueError(f"unknown factor letter {ch!r} in {label!r}")
            if mask >> idx & 1:
                raise ValueError(f"repeated letter {ch!r} in {label!r}")
            mask |= 1 << idx
        return cls(mask)

    @property
    def label(self) -> str:
        if not self.mask:
            return "I"
        return "".join(ch for i, ch in enumerate(LETTERS) if self.mask >> i & 1)

    @property
    def letters(self) -> tuple[int, ...]:
        return tuple(i for i in range(MAX_FACTORS) if self.mask >> i & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __bool__(self) -> bool:
        return self.mask != 0

    def __mul__(self, other: "EffectWord") -> "EffectWord":
        return EffectWord(self.mask ^ other.mask)

    def sort_key(self):
        return (len(self), self.label)

    def __lt__(self, other: "EffectWord") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"EffectWord({self.label!r})"


IDENTITY = EffectWord(0)


def word(label: str) -> EffectWord:
    return EffectWord.parse(label)


def words(labels: Iterable[str] | str) -> list[EffectWord]:
    if isinstance(labels, str):
        labels = labels.replace(",", " ").split()
    return [EffectWord.parse(s) for s in labels]


def word_product(u: EffectWord, v: EffectWord) -> EffectWord:
    return u * v


def product(ws: Iterable[EffectWord]) -> EffectWord:
    return reduce(word_product, ws, IDENTITY)


def span_masks(masks: Sequence[int]) -> list[int]:
    """All 2**b products of ``masks`` (identity included), in subset order."""
    out = [0]
    for m in masks:
        out += [x ^ m for x in out]
    return out


def gf2_rank(masks: Iterable[int]) -> int:
    """Rank of a set of bit vectors over GF(2)."""
    basis: list[int] = []
    for m in masks:
        for b in basis:
            m = min(m, m ^ b)
        if m:
            basis.append(m)
    return len(basis)


def is_independent(ws: Sequence[EffectWord]) -> bool:
    return gf2_rank(w.mask for w in ws) == len(ws)


@dataclass(frozen=True)
class WordSubgroup:
    """Subgroup spanned by independent generator words.

    ``closure`` holds the ``2**b - 1`` nonidentity elements ordered by length,
    then label.
    """

    generators: tuple[EffectWord, ...]
    closure: tuple[EffectWord, ...]

    @property
    def dimension(self) -> int:
        return len(self.generators)

    @property
    def elements(self) -> frozenset[EffectWord]:
        """Closure plus the identity."""
        return frozenset(self.closure) | {IDENTITY}

    def __contains__(self, w: EffectWord) -> bool:
        return w == IDENTITY or w in set(self.closure)

    def __iter__(self):
        return iter(self.closure)

    def __len__(self) -> int:
        return len(self.closure)


def subgroup_closure(generators: Sequence[EffectWord]) -> WordSubgroup:
    gens = tuple(generators)
    if any(not g for g in gens) or not is_independent(gens):
        raise DependentGenerators(
            "generators are not independent: " + ", ".join(g.label for g in gens)
        )
    closure = sorted(EffectWord(m) for m in span_masks([g.mask for g in gens])[1:])
    return WordSubgroup(gens, tuple(closure))


EMPTY_SUBGROUP = WordSubgroup((), ())


@dataclass(frozen=True)
class DefiningRelation:
    """Defining contrast subgroup of a regular fraction (all signs positive)."""

    subgroup: WordSubgroup

    @classmethod
    def from_words(cls, defining_words: Sequence[EffectWord]) -> "DefiningRelation":
        return cls(subgroup_closure(defining_words))

    @classmethod
    def from_generators(cls, generators: dict[str, str]) -> "DefiningRelation":
        """``{"f": "abcde"}`` -> relation with defining word ``abcdef``."""
        return cls.from_words([word(k) * word(v) for k, v in generators.items()])

    @property
    def words(self) -> tuple[EffectWord, ...]:
        return self.subgroup.closure

    def __iter__(self):
        return iter(self.subgroup.closure)

    def __len__(self) -> int:
        return len(self.subgroup.closure)

    def __str__(self) -> str:
        return "I = " + " = ".join(w.label for w in self.words) if self.words else "I"


FULL_FACTORIAL = DefiningRelation(EMPTY_SUBGROUP)


@dataclass(frozen=True)
class AliasClass:
    members: frozenset[EffectWord]

    @property
    def representative(self) -> EffectWord:
        return min(self.members)

    def sorted_members(self) -> list[EffectWord]:
        return sorted(self.members)

    def truncated(self, max_length: int = 3) -> list[EffectWord]:
        return [w for w in self.sorted_members() if len(w) <= max_length]

    def label(self, max_length: int = 3) -> str:
        shown = self.truncated(max_length) or [self.representative]
        return " + ".join(w.label for w in shown)

    def __contains__(self, w: EffectWord) -> bool:
        return w in self.members

    def __len__(self) -> int:
        return len(self.members)


def alias_class(w: EffectWord, rel: DefiningRelation) -> AliasClass:
    if not w:
        raise IdentityWord("the identity word has no alias class")
    return AliasClass(frozenset({w} | {w * d for d in rel}))


def all_words(n_factors: int) -> list[EffectWord]:
    return sorted(EffectWord(m) for m in range(1, 1 << n_factors))


def alias_classes(rel: DefiningRelation, n_factors: int) -> list[AliasClass]:
    """Partition of every nonidentity word on ``n_factors`` letters (not in the relation)."""
    seen: set[EffectWord] = set(rel)
    out = []
    for w in all_words(n_factors):
        if w in seen:
            continue
        cls = alias_class(w, rel)
        seen |= cls.members
        out.append(cls)
    return out


@dataclass(frozen=True)
class WordLengthPattern:
    counts: tuple[int, ...]  # counts[i] = number of words of length i

    @property
    def resolution(self) -> Optional[int]:
        """Shortest word length, or ``None`` when unbounded (no defining words)."""
        for i, c in enumerate(self.counts):
            if i and c:
                return i
        return None

    def __getitem__(self, length: int) -> int:
        return self.counts[length] if length < len(self.counts) else 0


def wordlength_pattern(
    rel: DefiningRelation,
    extra: Optional[WordSubgroup] = None,
    n_factors: Optional[int] = None,
) -> WordLengthPattern:
    gens = [w.mask for w in rel.subgroup.generators]
    if extra is not None:
        gens += [w.mask for w in extra.generators]
    members = [EffectWord(m) for m in set(span_masks(gens)) if m]
    if n_factors is None:
        n_factors = max((max(w.letters) + 1 for w in members), default=0)
    counts = [0] * (n_factors + 1)
    for w in members:
        counts[len(w)] += 1
    return WordLengthPattern(tuple(counts))


def roman(n: Optional[int]) -> str:
    if n is None:
        return "unbounded"
    table = [(10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I")]
    out = ""
    for value, sym in table:
        while n >= value:
            out += sym
            n -= value
    return out
