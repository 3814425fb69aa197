"""Randomization units as word subgroups and allocation of effects to strata.

A unit factor (week, plate, tube, ...) is described by the subgroup of
effects whose contrast is constant on each of its units.  An alias class
belongs to the coarsest unit whose subgroup contains it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .construction import BlockingScheme, RegularDesign, RunTable, alias_label
from .effects import EffectWord, span_masks
from .errors import InconsistentLattice


@dataclass(frozen=True)
class UnitFactor:
    """A unit factor given by words that are constant on each unit.

    ``nested_in`` names coarser units; ``crossed_with`` names units that are
    crossed with this one inside their common parent.
    """

    name: str
    generators: tuple[str, ...]
    nested_in: tuple[str, ...] = ()
    crossed_with: tuple[str, ...] = ()


@dataclass(frozen=True)
class Stratum:
    name: str
    subgroup: frozenset[int]  # base-word masks, identity included
    merged: tuple[str, ...] = ()

    @property
    def dimension(self) -> int:
        return len(self.subgroup).bit_length() - 1


@dataclass
class UnitStructure:
    design: RegularDesign
    units: dict[str, UnitFactor]
    strata: list[Stratum]

    def stratum(self, name: str) -> Stratum:
        for s in self.strata:
            if s.name == name or name in s.merged:
                return s
        raise KeyError(name)


def _subgroup(design: RegularDesign, gens: Sequence[str]) -> frozenset[int]:
    return frozenset(span_masks([design.base_word(g).mask for g in gens]))


def _full_space(design: RegularDesign) -> frozenset[int]:
    return frozenset(range(design.n_runs))


def build_unit_structure(
    design: RegularDesign, units: Sequence[UnitFactor], finest: str = "Unit"
) -> UnitStructure:
    """Validate a unit lattice and collapse units with identical subgroups.

    The finest unit (one run each) is appended automatically when missing.
    Merged units keep the name of the finer one.
    """
    units = list(units)
    names = [u.name for u in units]
    if finest not in names:
        units.append(UnitFactor(finest, tuple(design.factors[: design.n_base]), tuple(names)))
    by_name = {u.name: u for u in units}
    groups = {
        u.name: _full_space(design) if u.name == finest else _subgroup(design, u.generators)
        for u in units
    }

    for u in units:
        for parent in u.nested_in:
            if parent not in groups:
                raise InconsistentLattice(f"{u.name} is nested in unknown unit {parent}")
            if not groups[parent] <= groups[u.name]:
                missing = sorted(groups[parent] - groups[u.name])
                raise InconsistentLattice(
                    f"{u.name} nested in {parent} but its subgroup lacks "
                    + ", ".join(design.class_members(EffectWord(m))[0].label for m in missing)
                )
        for other in u.crossed_with:
            if other not in groups:
                raise InconsistentLattice(f"{u.name} is crossed with unknown unit {other}")
            common = set(u.nested_in) & set(by_name[other].nested_in)
            parent = frozenset({0}).union(*(groups[p] for p in common))
            meet = groups[u.name] & groups[other]
            if meet != parent:
                raise InconsistentLattice(
                    f"{u.name} and {other} are crossed but their subgroups meet in "
                    f"{len(meet) - 1} effect(s) instead of the {len(parent) - 1} of their common parent"
                )

    # coarsest first; identical subgroups collapse into the finer unit
    declared = [u.name for u in units]
    order = sorted(units, key=lambda u: (len(groups[u.name]), declared.index(u.name)))
    strata: list[Stratum] = []
    for u in order:
        g = groups[u.name]
        if strata and strata[-1].subgroup == g:
            prev = strata.pop()
            strata.append(Stratum(u.name, g, prev.merged + (prev.name,)))
        else:
            strata.append(Stratum(u.name, g))
    return UnitStructure(design, by_name, strata)


def assign_stratum(base: EffectWord, us: UnitStructure) -> str:
    """Coarsest stratum whose subgroup contains the class of ``base``."""
    hits = [s for s in us.strata if base.mask in s.subgroup]
    return min(hits, key=lambda s: len(s.subgroup)).name


@dataclass
class StratumEntry:
    base: EffectWord
    label: str  # pseudo label plus members of length <= 2
    aliases: str  # members of length <= 3


@dataclass
class StratumReport:
    strata: list[str]
    entries: dict[str, list[StratumEntry]]

    def df(self, name: str) -> int:
        return len(self.entries[name])

    @property
    def dfs(self) -> dict[str, int]:
        return {s: self.df(s) for s in self.strata}

    def stratum_of(self, label_or_base) -> str:
        for s in self.strata:
            for e in self.entries[s]:
                if e.base == label_or_base or e.label == label_or_base:
                    return s
        raise KeyError(label_or_base)

    def labels(self, name: str) -> list[str]:
        return [e.label for e in self.entries[name]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stratum", "effect", "aliases", "df"])
        for s in self.strata:
            for e in self.entries[s]:
                w.writerow([s, e.label, e.aliases, self.df(s)])
        return buf.getvalue()

    def to_text(self) -> str:
        """Side-by-side columns, one per stratum, df on the last line."""
        cols = [[s] + self.labels(s) for s in self.strata]
        depth = max(len(c) for c in cols)
        foot = [f"{self.df(s)} df" for s in self.strata]
        widths = [max(max(len(x) for x in c), len(f)) + 2 for c, f in zip(cols, foot)]
        lines = []
        for i in range(depth):
            lines.append("".join((c[i] if i < len(c) else "").ljust(wd) for c, wd in zip(cols, widths)).rstrip())
            if i == 0:
                lines.append("-" * sum(widths))
        lines.append("-" * sum(widths))
        lines.append("".join(f.ljust(wd) for f, wd in zip(foot, widths)).rstrip())
        return "\n".join(lines) + "\n"


def _entry_key(design: RegularDesign, scheme: Optional[BlockingScheme], base: EffectWord):
    shortest = design.class_members(base)[0]
    if len(shortest) == 1:
        return (0, 0, shortest.sort_key())
    p = scheme.pseudo_label(base) if scheme is not None else None
    if p:
        return (1, int(p[1:]), ())
    return (2, 0, shortest.sort_key())


def stratum_report(
    design: RegularDesign, scheme: Optional[BlockingScheme], us: UnitStructure
) -> StratumReport:
    """Allocate every alias class to its stratum; df = number of classes."""
    entries: dict[str, list[StratumEntry]] = {s.name: [] for s in us.strata}
    for base in design.effect_space():
        entries[assign_stratum(base, us)].append(
            StratumEntry(
                base,
                alias_label(design, base, scheme, max_length=2),
                alias_label(design, base, scheme, max_length=3),
            )
        )
    for name in entries:
        entries[name].sort(key=lambda e: _entry_key(design, scheme, e.base))
    return StratumReport([s.name for s in us.strata], entries)


def unit_labels(rt: RunTable, name: str) -> np.ndarray:
    """Unit id of every run for the standard unit names (used as a column oracle)."""
    if name == "Week":
        return rt.week
    if name == "Plate":
        return rt.plate
    if name == "Tube":
        return rt.tube
    if name == "Unit":
        return np.arange(rt.n_runs)
    raise KeyError(name)
