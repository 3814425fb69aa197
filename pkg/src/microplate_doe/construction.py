"""Regular fractions, blocking, four-level extensions and unit assignment.

Effects live in the run space of a ``2**n_base`` design: every factor letter
maps to a word over the base letters, and two letter words are aliased iff
they map to the same base word.  Base words therefore index alias classes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, permutations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .effects import (
    IDENTITY,
    LETTERS,
    AliasClass,
    DefiningRelation,
    EffectWord,
    WordSubgroup,
    gf2_rank,
    span_masks,
    subgroup_closure,
    word,
)
from .errors import InfeasibleBlocking, InvalidGenerator, TubeCountViolation

# Column position of each sign pattern of (p1, p2, p3) = (ab, ce, acf) on a plate.
PAPER_COLUMN_LOOKUP = {
    (-1, +1, -1): 1,
    (-1, -1, +1): 2,
    (-1, -1, -1): 3,
    (-1, +1, +1): 4,
    (+1, -1, -1): 5,
    (+1, -1, +1): 6,
    (+1, +1, -1): 7,
    (+1, +1, +1): 8,
}


def _as_word(w) -> EffectWord:
    return w if isinstance(w, EffectWord) else word(w)


@dataclass(frozen=True)
class RegularDesign:
    """A ``2**(k-p)`` regular fraction.

    The first ``n_base`` letters are base factors run as a full factorial in
    standard order (``a`` alternates fastest); every added letter is the
    product of the base letters in its generator word.
    """

    n_base: int
    generators: tuple[tuple[str, EffectWord], ...] = ()

    def __post_init__(self):
        base = LETTERS[: self.n_base]
        seen = set(base)
        cols = {1 << i for i in range(self.n_base)}
        for letter, gen in self.generators:
            if letter in seen:
                raise InvalidGenerator(f"factor {letter!r} defined twice")
            if any(LETTERS[i] not in base for i in gen.letters):
                raise InvalidGenerator(
                    f"generator {letter}={gen.label} uses a non-base factor"
                )
            if len(gen) < 2 or gen.mask in cols:
                raise InvalidGenerator(
                    f"generator {letter}={gen.label} duplicates an existing column"
                )
            seen.add(letter)
            cols.add(gen.mask)

    @classmethod
    def build(cls, k: int, p: int, generators: Mapping[str, str] | None = None):
        """``build(6, 1, {"f": "abcde"})``: the 32-run resolution VI half fraction."""
        generators = dict(generators or {})
        if len(generators) != p:
            raise InvalidGenerator(f"expected {p} generators, got {len(generators)}")
        n_base = k - p
        if 2**n_base < k:
            raise InvalidGenerator(f"2^{n_base} runs cannot hold {k} factors")
        added = LETTERS[n_base:k]
        if sorted(generators) != sorted(added):
            raise InvalidGenerator(
                f"added factors must be {', '.join(added)}; got {', '.join(sorted(generators))}"
            )
        gens = tuple((lt, _as_word(generators[lt])) for lt in added)
        return cls(n_base, gens)

    @property
    def n_runs(self) -> int:
        return 1 << self.n_base

    @property
    def factors(self) -> str:
        return LETTERS[: self.n_base] + "".join(lt for lt, _ in self.generators)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @cached_property
    def _letter_base(self) -> dict[int, int]:
        out = {i: 1 << i for i in range(self.n_base)}
        for lt, gen in self.generators:
            out[LETTERS.index(lt)] = gen.mask
        return out

    def base_word(self, w) -> EffectWord:
        """Base word (alias class index) of a word over this design's letters."""
        w = _as_word(w)
        mask = 0
        for i in w.letters:
            if i not in self._letter_base:
                raise ValueError(f"letter {LETTERS[i]!r} is not a factor of this design")
            mask ^= self._letter_base[i]
        return EffectWord(mask)

    @cached_property
    def relation(self) -> DefiningRelation:
        return DefiningRelation.from_words(
            [word(lt) * gen for lt, gen in self.generators]
        )

    @cached_property
    def _members_by_base(self) -> dict[int, tuple[EffectWord, ...]]:
        table: dict[int, list[EffectWord]] = {}
        idx = [LETTERS.index(c) for c in self.factors]
        for sub in range(1, 1 << self.n_factors):
            mask = 0
            for j, i in enumerate(idx):
                if sub >> j & 1:
                    mask |= 1 << i
            w = EffectWord(mask)
            table.setdefault(self.base_word(w).mask, []).append(w)
        return {k: tuple(sorted(v)) for k, v in table.items()}

    def alias_class_of(self, w) -> AliasClass:
        """Alias class of a letter word (or of a base word given as one)."""
        b = self.base_word(w)
        if not b:
            raise ValueError(f"{_as_word(w).label} is in the defining relation")
        return AliasClass(frozenset(self._members_by_base[b.mask]))

    def class_members(self, base: EffectWord) -> tuple[EffectWord, ...]:
        return self._members_by_base[base.mask]

    def effect_space(self) -> list[EffectWord]:
        """All nonidentity base words, i.e. one entry per alias class."""
        return [EffectWord(m) for m in range(1, self.n_runs)]

    def main_effect_bases(self) -> set[int]:
        return {self._letter_base[LETTERS.index(c)] for c in self.factors}

    def min_length(self, base: EffectWord) -> int:
        return len(self.class_members(base)[0])

    def count_length(self, base: EffectWord, length: int) -> int:
        return sum(len(w) == length for w in self.class_members(base))

    @property
    def resolution(self) -> Optional[int]:
        return min((len(w) for w in self.relation), default=None)

    def column(self, w) -> np.ndarray:
        """±1 column of a word over the runs in standard order."""
        mask = self.base_word(w).mask
        runs = np.arange(self.n_runs)
        # level of base factor i is +1 when bit i of the run index is set
        minus = np.zeros(self.n_runs, dtype=np.int64)
        for i in range(self.n_base):
            if mask >> i & 1:
                minus += 1 - (runs >> i & 1)
        return np.where(minus % 2, -1, 1).astype(np.int64)

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.column(c) for c in self.factors])

    def extend(self, generators: Mapping[str, str | EffectWord]) -> "RegularDesign":
        """Add factors defined by words over the existing letters (e.g. g=ace)."""
        gens = list(self.generators)
        for lt, w in generators.items():
            gens.append((lt, self.base_word(w)))
        letters = [lt for lt, _ in gens]
        expected = list(LETTERS[self.n_base : self.n_base + len(gens)])
        if letters != expected:
            raise InvalidGenerator(f"added factors must be {', '.join(expected)} in order")
        return RegularDesign(self.n_base, tuple(gens))


def build_fraction(k: int, p: int, generators: Mapping[str, str] | None = None) -> RegularDesign:
    return RegularDesign.build(k, p, generators)


# ---------------------------------------------------------------- blocking


def pseudo_factor_words(generators: Sequence[EffectWord]) -> list[EffectWord]:
    """p1..p(2**b-1): singletons first, then pairs, then triples, ..."""
    b = len(generators)
    out = []
    for r in range(1, b + 1):
        for combo in combinations(range(b), r):
            w = IDENTITY
            for i in combo:
                w = w * generators[i]
            out.append(w)
    return out


def yates_lookup(b: int) -> dict[tuple[int, ...], int]:
    """Default block numbering: sign patterns in standard order, first generator slowest."""
    out = {}
    for n in range(1 << b):
        signs = tuple(+1 if n >> (b - 1 - i) & 1 else -1 for i in range(b))
        out[signs] = n + 1
    return out


@dataclass(frozen=True)
class BlockingScheme:
    """Blocks defined by the sign pattern of ``b`` independent base words."""

    generators: tuple[EffectWord, ...]
    lookup: Optional[tuple[tuple[tuple[int, ...], int], ...]] = None
    n_2fi_classes: int = 0
    n_3fi_classes: int = 0
    n_2fi_words: int = 0
    n_3fi_words: int = 0

    @cached_property
    def subgroup(self) -> WordSubgroup:
        return subgroup_closure(self.generators)

    @property
    def n_blocks(self) -> int:
        return 1 << len(self.generators)

    @property
    def pseudo_factors(self) -> list[EffectWord]:
        return pseudo_factor_words(self.generators)

    def pseudo_label(self, base: EffectWord) -> Optional[str]:
        for i, w in enumerate(self.pseudo_factors, 1):
            if w == base:
                return f"p{i}"
        return None

    @property
    def score(self) -> tuple[int, int, int, int]:
        return (self.n_2fi_classes, self.n_3fi_classes, self.n_2fi_words, self.n_3fi_words)

    @property
    def block_lookup(self) -> dict[tuple[int, ...], int]:
        if self.lookup is None:
            return yates_lookup(len(self.generators))
        return dict(self.lookup)

    def with_lookup(self, lookup: Mapping[tuple[int, ...], int]) -> "BlockingScheme":
        return BlockingScheme(
            self.generators,
            tuple(sorted(lookup.items())),
            self.n_2fi_classes,
            self.n_3fi_classes,
            self.n_2fi_words,
            self.n_3fi_words,
        )

    def generator_labels(self, design: RegularDesign) -> list[str]:
        return [design.class_members(g)[0].label for g in self.generators]


def _score(design: RegularDesign, closure: Iterable[EffectWord]) -> dict[str, int]:
    closure = list(closure)
    return dict(
        n_2fi_classes=sum(design.min_length(w) == 2 for w in closure),
        n_3fi_classes=sum(design.min_length(w) == 3 for w in closure),
        n_2fi_words=sum(design.count_length(w, 2) for w in closure),
        n_3fi_words=sum(design.count_length(w, 3) for w in closure),
    )


def make_blocking(design: RegularDesign, generators: Sequence[str | EffectWord], lookup=None) -> BlockingScheme:
    """Blocking scheme from explicit generator words (letters of ``design``)."""
    gens = tuple(design.base_word(g) for g in generators)
    sub = subgroup_closure(gens)
    mains = design.main_effect_bases()
    bad = [w for w in sub if w.mask in mains]
    if bad:
        raise InfeasibleBlocking(
            "blocking confounds main effect(s): "
            + ", ".join(design.class_members(w)[0].label for w in bad)
        )
    scheme = BlockingScheme(gens, **_score(design, sub))
    return scheme.with_lookup(lookup) if lookup is not None else scheme


def canonical_generators(design: RegularDesign, closure: Sequence[EffectWord]) -> tuple[EffectWord, ...]:
    """Greedy independent basis from the closure ordered by shortest alias."""
    ordered = sorted(closure, key=lambda b: design.class_members(b)[0].sort_key())
    basis: list[EffectWord] = []
    for w in ordered:
        if gf2_rank([x.mask for x in basis] + [w.mask]) > len(basis):
            basis.append(w)
    return tuple(basis)


def search_blocking(design: RegularDesign, n_blocks: int) -> list[BlockingScheme]:
    """Exhaustively rank every blocking subgroup that spares the main effects.

    Ranking: fewest alias classes holding a two-factor interaction, then fewest
    whose shortest word has length three, then fewest 2fi and 3fi words in
    total, then the lexicographically smallest sorted generator labels.
    """
    b = n_blocks.bit_length() - 1
    if n_blocks < 2 or 1 << b != n_blocks or b > design.n_base:
        raise InfeasibleBlocking(f"{n_blocks} blocks cannot be formed in {design.n_runs} runs")
    mains = design.main_effect_bases()
    candidates = [m for m in range(1, design.n_runs) if m not in mains]
    seen: set[frozenset[int]] = set()
    schemes = []
    for combo in combinations(candidates, b):
        if gf2_rank(combo) < b:
            continue
        closure = frozenset(span_masks(list(combo))[1:])
        if closure in seen:
            continue
        seen.add(closure)
        if closure & mains:
            continue
        words_ = [EffectWord(m) for m in closure]
        gens = canonical_generators(design, words_)
        schemes.append(BlockingScheme(gens, **_score(design, words_)))
    if not schemes:
        raise InfeasibleBlocking(f"no {n_blocks}-block scheme avoids the main effects")

    def key(s: BlockingScheme):
        return (s.score, sorted(s.generator_labels(design)))

    schemes.sort(key=key)
    return schemes


def assign_blocks(design: RegularDesign, scheme: BlockingScheme) -> np.ndarray:
    """Block number (1-based) of every run in standard order."""
    cols = np.column_stack([design.column(g) for g in scheme.generators])
    lookup = scheme.block_lookup
    return np.array([lookup[tuple(int(v) for v in row)] for row in cols], dtype=np.int64)


# ------------------------------------------------------ four-level extensions


@dataclass(frozen=True)
class FourLevelExtension:
    """Two independent words carrying a four-level factor, plus their product."""

    first: EffectWord
    second: EffectWord

    @property
    def product(self) -> EffectWord:
        return self.first * self.second

    @property
    def words(self) -> tuple[EffectWord, EffectWord, EffectWord]:
        return (self.first, self.second, self.product)

    @property
    def subgroup(self) -> frozenset[EffectWord]:
        return frozenset(self.words)

    def level(self, design: RegularDesign) -> np.ndarray:
        """Four-level column: 0..3 from the signs of the two words."""
        return (design.column(self.first) > 0) * 2 + (design.column(self.second) > 0)


@dataclass
class ExtensionClass:
    """Equivalence class of extension subgroups under design automorphisms."""

    members: list[frozenset[EffectWord]]
    n_2fi_words: int
    per_word_2fi: tuple[int, ...]
    representative: FourLevelExtension
    labels: tuple[str, str, str] = ()

    def contains(self, design: RegularDesign, triple: Sequence[str | EffectWord]) -> bool:
        sub = frozenset(design.base_word(w) for w in triple)
        return sub in self.members


def design_automorphisms(design: RegularDesign, scheme: Optional[BlockingScheme] = None) -> list[tuple[int, ...]]:
    """Letter permutations preserving the defining relation and blocking subgroup.

    Returned as tuples ``p`` with letter ``j`` (position in ``design.factors``)
    sent to position ``p[j]``.
    """
    n = design.n_factors
    factor_idx = [LETTERS.index(c) for c in design.factors]

    def local(w: EffectWord) -> int:
        return sum(1 << j for j, i in enumerate(factor_idx) if w.mask >> i & 1)

    defining = {local(w) for w in design.relation}
    block_bases = set() if scheme is None else {w.mask for w in scheme.subgroup}
    blocked = set()
    if block_bases:
        for b in block_bases:
            blocked |= {local(w) for w in design.class_members(EffectWord(b))}

    def image(m: int, p) -> int:
        out = 0
        for j in range(n):
            if m >> j & 1:
                out |= 1 << p[j]
        return out

    # word lengths are invariant, so only permutations preserving the
    # length-sorted defining words need full checking
    out = []
    for p in permutations(range(n)):
        if all(image(m, p) in defining for m in defining) and all(
            image(m, p) in blocked for m in blocked
        ):
            out.append(p)
    return out


def _apply_perm(design: RegularDesign, base: EffectWord, p) -> EffectWord:
    factor_idx = [LETTERS.index(c) for c in design.factors]
    w = design.class_members(base)[0]
    mask = 0
    for j, i in enumerate(factor_idx):
        if w.mask >> i & 1:
            mask |= 1 << factor_idx[p[j]]
    return design.base_word(EffectWord(mask))


def enumerate_four_level_extensions(
    design: RegularDesign, scheme: Optional[BlockingScheme]
) -> list[ExtensionClass]:
    """All regular ways to add a four-level factor orthogonal to the design.

    Admissible subgroups {w1, w2, w1w2} avoid every main-effect class and every
    blocking word.  They are grouped into orbits of the automorphism group of
    (defining relation, blocking subgroup) and ranked by the number of
    two-factor interactions aliased with the three words.
    """
    mains = design.main_effect_bases()
    blocked = set() if scheme is None else {w.mask for w in scheme.subgroup}
    bad = mains | blocked
    subs: set[frozenset[int]] = set()
    for x, y in combinations(range(1, design.n_runs), 2):
        g = frozenset((x, y, x ^ y))
        if not g & bad:
            subs.add(g)
    auts = design_automorphisms(design, scheme)
    remaining = set(subs)
    classes: list[ExtensionClass] = []
    while remaining:
        start = min(remaining, key=lambda g: sorted(g))
        orbit = set()
        for p in auts:
            orbit.add(frozenset(_apply_perm(design, EffectWord(m), p).mask for m in start))
        remaining -= orbit
        members = sorted(
            (frozenset(EffectWord(m) for m in g) for g in orbit),
            key=lambda g: sorted(design.class_members(w)[0].label for w in g),
        )
        rep_words = sorted(members[0], key=lambda w: (design.count_length(w, 2), design.class_members(w)[0].sort_key()))
        rep = FourLevelExtension(rep_words[0], rep_words[1])
        per_word = tuple(sorted(design.count_length(w, 2) for w in rep.words))
        classes.append(
            ExtensionClass(
                members=members,
                n_2fi_words=sum(per_word),
                per_word_2fi=per_word,
                representative=rep,
                labels=tuple(alias_label(design, w, max_length=3) for w in rep.words),
            )
        )
    classes.sort(
        key=lambda c: (
            c.n_2fi_words,
            c.per_word_2fi,
            sorted(design.class_members(w)[0].label for w in c.representative.words),
        )
    )
    return classes


# ------------------------------------------------------------ alias labels


def alias_label(
    design: RegularDesign,
    base: EffectWord,
    scheme: Optional[BlockingScheme] = None,
    max_length: int = 3,
) -> str:
    """Label of an alias class, e.g. ``"p1 + ab + ch"``.

    Members longer than ``max_length`` are omitted; a class left with nothing
    to show falls back to its shortest member.
    """
    parts = []
    if scheme is not None:
        p = scheme.pseudo_label(base)
        if p:
            parts.append(p)
    members = design.class_members(base)
    parts += [w.label for w in members if len(w) <= max_length]
    if not parts:
        parts.append(members[0].label)
    return " + ".join(parts)


# ------------------------------------------------------------ run tables


@dataclass
class RunTable:
    """Experimental layout: one record per run, ordered by week, plate, column."""

    factors: str
    week: np.ndarray
    plate: np.ndarray  # numbered across weeks: 1..n_plates
    column: np.ndarray
    tube: np.ndarray
    levels: np.ndarray  # runs x factors, ±1

    def __post_init__(self):
        order = np.lexsort((self.column, self.plate, self.week))
        for name in ("week", "plate", "column", "tube"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64)[order])
        self.levels = np.asarray(self.levels, dtype=np.int64)[order]

    @property
    def n_runs(self) -> int:
        return len(self.week)

    def factor(self, letter: str) -> np.ndarray:
        return self.levels[:, self.factors.index(letter)]

    def word_column(self, w) -> np.ndarray:
        w = _as_word(w)
        col = np.ones(self.n_runs, dtype=np.int64)
        for i in w.letters:
            col = col * self.factor(LETTERS[i])
        return col

    @property
    def plate_in_week(self) -> np.ndarray:
        out = np.zeros_like(self.plate)
        for wk in np.unique(self.week):
            sel = self.week == wk
            _, inv = np.unique(self.plate[sel], return_inverse=True)
            out[sel] = inv + 1
        return out

    def tubes_per_week(self) -> dict[int, int]:
        return {int(w): len(np.unique(self.tube[self.week == w])) for w in np.unique(self.week)}

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunTable):
            return NotImplemented
        return self.factors == other.factors and all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("week", "plate", "column", "tube", "levels")
        )


def tube_numbers(week: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Number tubes within each week by their level pattern (first key slowest, - before +)."""
    tube = np.zeros(len(week), dtype=np.int64)
    offset = 0
    for wk in sorted(np.unique(week)):
        sel = np.flatnonzero(week == wk)
        patterns = sorted({tuple(keys[i]) for i in sel})
        number = {pat: offset + n + 1 for n, pat in enumerate(patterns)}
        for i in sel:
            tube[i] = number[tuple(keys[i])]
        offset += len(patterns)
    return tube


def physical_columns(plate: np.ndarray, position: np.ndarray) -> np.ndarray:
    """Plate column of every run from its column-position block.

    With one block per column the two coincide.  With half as many blocks,
    block k stands for the mirrored pair k and n + 1 - k (same distance from
    the plate edges); its first run on a plate takes column k.
    """
    n_blocks = int(position.max())
    per_plate = len(plate) // len(np.unique(plate))
    if per_plate == n_blocks:
        return position.copy()
    if per_plate != 2 * n_blocks:
        raise InfeasibleBlocking(
            f"{n_blocks} column positions cannot be laid out on plates of {per_plate} columns"
        )
    column = position.copy()
    for p in np.unique(plate):
        for k in range(1, n_blocks + 1):
            runs = np.flatnonzero((plate == p) & (position == k))
            column[runs[1]] = per_plate + 1 - k
    return column


def assign_units(
    design: RegularDesign,
    scheme: BlockingScheme,
    week_word: str | EffectWord,
    plate_word: str | EffectWord,
    tube_factors: str = "abcd",
    tubes_per_week: Optional[int] = 8,
) -> RunTable:
    """Lay the runs out on weeks, plates, plate columns and tubes.

    The week is the sign of ``week_word`` (- is week 1) and the plate within
    week the sign of ``plate_word``.  A tube is one level combination of the
    ``tube_factors`` within a week.
    """
    wk = design.column(week_word)
    pl = design.column(plate_word)
    week = np.where(wk < 0, 1, 2)
    plate = (week - 1) * 2 + np.where(pl < 0, 1, 2)
    column = physical_columns(plate, assign_blocks(design, scheme))
    levels = design.matrix()
    keys = np.column_stack([design.column(c) for c in tube_factors])
    tube = tube_numbers(week, keys)
    rt = RunTable(design.factors, week, plate, column, tube, levels)
    if tubes_per_week is not None:
        counts = rt.tubes_per_week()
        bad = {w: c for w, c in counts.items() if c != tubes_per_week}
        if bad:
            raise TubeCountViolation(
                f"weeks defined by {_as_word(week_word).label} need "
                + ", ".join(f"{c} tubes in week {w}" for w, c in sorted(bad.items()))
                + f"; the constraint is {tubes_per_week} per week"
            )
    return rt


RUN_TABLE_HEADER = ["Week", "Plate", "Column", "Tube"]


def emit_run_table(rt: RunTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_TABLE_HEADER + list(rt.factors))
    for i in range(rt.n_runs):
        writer.writerow(
            [rt.week[i], rt.plate[i], rt.column[i], rt.tube[i]] + [int(v) for v in rt.levels[i]]
        )
    return buf.getvalue()


def parse_run_table(text: str) -> RunTable:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[:4] != RUN_TABLE_HEADER:
        raise ValueError(f"run table header must start with {RUN_TABLE_HEADER}, got {header[:4]}")
    factors = "".join(header[4:])
    data = np.array([[int(v) for v in r] for r in body], dtype=np.int64)
    return RunTable(factors, data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4:])
