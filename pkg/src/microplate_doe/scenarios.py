"""Built-in experiment layouts and the pipeline that turns one into a design."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional

from .construction import (
    PAPER_COLUMN_LOOKUP,
    BlockingScheme,
    RegularDesign,
    RunTable,
    assign_units,
    build_fraction,
    make_blocking,
    search_blocking,
)
from .effects import span_masks
from .errors import DesignError
from .mixed import MixedModelSpec
from .strata import StratumReport, UnitFactor, UnitStructure, build_unit_structure, stratum_report


@dataclass(frozen=True)
class ScenarioPreset:
    """Everything needed to rebuild one layout.

    ``extension`` adds the plate/week factors as words of the base fraction;
    leave it empty when those factors are already in the fraction.  When
    ``blocking`` is empty the best scheme from the exhaustive search is used.
    """

    id: str
    description: str
    k: int
    p: int
    generators: Mapping[str, str]
    n_blocks: int
    week_word: str
    plate_word: str
    tube_factors: str = "abcd"
    tubes_per_week: Optional[int] = 8
    blocking: tuple[str, ...] = ()
    column_lookup: Optional[Mapping[tuple[int, ...], int]] = None
    extension: Mapping[str, str] = field(default_factory=dict)
    treatment_terms: tuple[str, ...] = ("a", "c", "d", "g", "h", "ah", "cd", "gh")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioPreset":
        d = dict(d)
        try:
            d["blocking"] = tuple(d.get("blocking", ()))
            if "treatment_terms" in d:
                d["treatment_terms"] = tuple(d["treatment_terms"])
            if d.get("column_lookup") is not None:
                d["column_lookup"] = {
                    tuple(int(s) for s in k.split(",")) if isinstance(k, str) else tuple(k): int(v)
                    for k, v in d["column_lookup"].items()
                }
            d.setdefault("description", "user scenario")
            return cls(**d)
        except TypeError as exc:
            raise DesignError(f"bad scenario config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "ScenarioPreset":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DesignError(f"scenario config is not valid JSON: {exc}") from None


PRESETS: dict[str, ScenarioPreset] = {
    p.id: p
    for p in [
        ScenarioPreset(
            "paper",
            "2^(6-1) in 8 column blocks; g, h vary between plates and weeks; 8 tubes per week",
            6, 1, {"f": "abcde"}, 8, "h", "g",
            blocking=("ab", "ce", "acf"),
            column_lookup=PAPER_COLUMN_LOOKUP,
            extension={"g": "ace", "h": "abc"},
        ),
        ScenarioPreset(
            "alt1",
            "each tube used twice on a single plate (tubes defined by a, b, c, e)",
            6, 1, {"f": "abcde"}, 8, "h", "g",
            tube_factors="abce",
            blocking=("ab", "ce", "acf"),
            column_lookup=PAPER_COLUMN_LOOKUP,
            extension={"g": "ace", "h": "abc"},
        ),
        ScenarioPreset(
            "alt2",
            "32 tubes, one per column; g defines the weeks and h the plates",
            6, 1, {"f": "abcde"}, 8, "g", "h",
            tubes_per_week=16,
            blocking=("ab", "ce", "acf"),
            column_lookup=PAPER_COLUMN_LOOKUP,
            extension={"g": "ace", "h": "abc"},
        ),
        ScenarioPreset(
            "alt3",
            "2^(8-3) with every factor varied between columns; weeks by abd, plates by ade",
            8, 3, {"f": "abcd", "g": "abe", "h": "ace"}, 8, "abd", "ade",
            blocking=("abc", "ad", "ae"),
        ),
        ScenarioPreset(
            "alt4",
            "four symmetric column positions; g=abe, h=abc",
            6, 1, {"f": "abcde"}, 4, "h", "g",
            blocking=("ab", "acd"),
            extension={"g": "abe", "h": "abc"},
        ),
    ]
}


def default_units(design: RegularDesign, preset: ScenarioPreset) -> list[UnitFactor]:
    """Week, Plate within Week, Tube within Week.

    Tubes are crossed with plates unless every tube sits on a single plate,
    in which case they are nested in it.
    """
    week = (preset.week_word,)
    plate = (preset.week_word, preset.plate_word)
    tube = tuple(preset.tube_factors) + (preset.week_word,)
    plate_set = {design.base_word(w).mask for w in plate}
    tube_span = set(span_masks([design.base_word(w).mask for w in tube]))
    if plate_set <= tube_span:
        return [
            UnitFactor("Week", week),
            UnitFactor("Plate", plate, ("Week",)),
            UnitFactor("Tube", tube + (preset.plate_word,), ("Plate",)),
        ]
    return [
        UnitFactor("Week", week),
        UnitFactor("Plate", plate, ("Week",), ("Tube",)),
        UnitFactor("Tube", tube, ("Week",), ("Plate",)),
    ]


@dataclass
class Scenario:
    preset: ScenarioPreset

    @cached_property
    def base_design(self) -> RegularDesign:
        return build_fraction(self.preset.k, self.preset.p, self.preset.generators)

    @cached_property
    def base_scheme(self) -> BlockingScheme:
        if self.preset.blocking:
            return make_blocking(self.base_design, self.preset.blocking, self.preset.column_lookup)
        return search_blocking(self.base_design, self.preset.n_blocks)[0]

    @cached_property
    def design(self) -> RegularDesign:
        if self.preset.extension:
            return self.base_design.extend(self.preset.extension)
        return self.base_design

    @cached_property
    def scheme(self) -> BlockingScheme:
        """The blocking scheme expressed in the final design."""
        gens = [self.base_design.class_members(g)[0] for g in self.base_scheme.generators]
        lookup = None if self.base_scheme.lookup is None else self.base_scheme.block_lookup
        return make_blocking(self.design, gens, lookup)

    @cached_property
    def run_table(self) -> RunTable:
        return assign_units(
            self.design,
            self.scheme,
            self.preset.week_word,
            self.preset.plate_word,
            self.preset.tube_factors,
            self.preset.tubes_per_week,
        )

    @cached_property
    def units(self) -> UnitStructure:
        return build_unit_structure(self.design, default_units(self.design, self.preset))

    @cached_property
    def strata(self) -> StratumReport:
        return stratum_report(self.design, self.scheme, self.units)

    @property
    def column_words(self) -> tuple[str, ...]:
        return tuple(self.design.class_members(w)[0].label for w in self.scheme.pseudo_factors)

    def model_spec(self) -> MixedModelSpec:
        terms = tuple(t for t in self.preset.treatment_terms if all(c in self.design.factors for c in t))
        return MixedModelSpec(treatment_terms=terms, column_words=self.column_words)


def load_scenario(preset_id: str) -> Scenario:
    if preset_id not in PRESETS:
        raise DesignError(f"unknown preset {preset_id!r}; choose from {', '.join(PRESETS)}")
    return Scenario(PRESETS[preset_id])


# Leading effects of the fibrosity screening, as coefficients per unit of the
# ±1 coding (half the high-minus-low difference), and the overall level.
PAPER_EFFECTS = {
    "h": -13.83 / 2,
    "gh": 16.27 / 2,
    "g": 5.39 / 2,
    "cd": -5.45 / 2,
    "a": -4.89 / 2,
    "d": -4.55 / 2,
    "ah": -3.02 / 2,
    "c": 2.27 / 2,
    "p5": 5.20 / 2,
    "p3": -2.77 / 2,
}
PAPER_INTERCEPT = 329.0
PAPER_COMPONENTS = {"week": 0.0, "plate": 0.0, "tube": 2.5, "column": 6.2, "row": 1.9, "residual": 179.8}


def usable_effects(sc: Scenario, effects: Mapping[str, float]) -> dict[str, float]:
    """Drop effects that do not exist in a scenario (e.g. p5 with four blocks)."""
    out = {}
    for name, b in effects.items():
        if name[0] in "pq" and name[1:].isdigit():
            limit = len(sc.column_words) if name[0] == "p" else 7
            if int(name[1:]) <= limit:
                out[name] = b
        elif all(c in sc.design.factors for c in name):
            out[name] = b
    return out


def alias_report(sc: Scenario) -> str:
    """Plain-text summary of the fraction, its blocking and extension options."""
    from .construction import alias_label, enumerate_four_level_extensions
    from .effects import roman, wordlength_pattern

    lines = []
    base, d = sc.base_design, sc.design
    gens = ", ".join(f"{lt}={g.label}" for lt, g in base.generators) or "none"
    lines.append(f"fraction: 2^({base.n_factors}-{base.n_factors - base.n_base}) generators {gens}")
    lines.append(f"defining relation: {base.relation}")
    wlp = wordlength_pattern(base.relation, n_factors=base.n_factors)
    lines.append(f"resolution: {roman(wlp.resolution)}  wordlength pattern: {list(wlp.counts[3:])}")
    lines.append("")
    s = sc.base_scheme
    labels = list(sc.preset.blocking) or s.generator_labels(base)
    lines.append(f"blocking into {s.n_blocks} column positions: " + ", ".join(labels))
    for i, w in enumerate(s.pseudo_factors, 1):
        lines.append(f"  p{i}  {alias_label(base, w, max_length=3)}")
    lines.append("")
    lines.append("four-level extension options:")
    if sc.preset.extension:
        target_design, target_scheme = base, s
        first = base.base_word(sc.preset.extension["g"])
        second = base.base_word(sc.preset.extension["h"])
    else:
        target_design, target_scheme = d, sc.scheme
        first, second = d.base_word(sc.preset.plate_word), d.base_word(sc.preset.week_word)
    chosen = frozenset((first, second, first * second))
    for n, cls in enumerate(enumerate_four_level_extensions(target_design, target_scheme), 1):
        # show the scenario's own choice when it falls in this class
        words = [first, second, first * second] if chosen in cls.members else list(cls.representative.words)
        labels = [alias_label(target_design, w, max_length=3) for w in words]
        lines.append(
            f"  option {n} ({len(cls.members)} equivalent choices, {cls.n_2fi_words} two-factor "
            + ("alias" if cls.n_2fi_words == 1 else "aliases")
            + "): "
            + " | ".join(labels)
        )
    lines.append("")
    lines.append("alias classes of the final design:")
    for w in d.effect_space():
        lines.append("  " + alias_label(d, w, sc.scheme, max_length=3))
    return "\n".join(lines) + "\n"
