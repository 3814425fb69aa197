"""Effect estimation per stratum and PSE(50) screening of active effects."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .construction import RegularDesign, RunTable
from .errors import LengthMismatch, MissingInSelectedRows, TooFewEffects
from .strata import StratumReport

TRIM = 2.5
SCALE = 1.5


@dataclass(frozen=True)
class ScreeningConfig:
    alpha: float = 0.10
    replicates: int = 100_000
    seed: int = 20240101
    min_df: int = 7

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if self.replicates < 10_000:
            raise ValueError("at least 10000 Monte Carlo replicates are required")


@dataclass
class EffectEstimate:
    label: str
    estimate: float
    active: bool = False


@dataclass
class EffectEstimateSet:
    stratum: str
    effects: list[EffectEstimate]
    pse: Optional[float] = None
    multiplier: Optional[float] = None

    @property
    def critical(self) -> Optional[float]:
        if self.pse is None:
            return None
        return self.multiplier * self.pse

    @property
    def active(self) -> list[str]:
        return [e.label for e in self.effects if e.active]

    def estimate(self, label: str) -> float:
        for e in self.effects:
            if e.label == label:
                return e.estimate
        raise KeyError(label)


def row_average(
    chips: Sequence[Mapping],
    rows: Iterable[int],
    n_runs: Optional[int] = None,
    skip_missing: bool = False,
) -> dict[tuple[int, int, int], float]:
    """Mean response per (week, plate, column) over the selected plate rows.

    ``chips`` are mappings with keys week, plate, column, row, response
    (``None`` or NaN for a missing chip).  Missing chips in the selection are
    an error unless ``skip_missing`` is set.
    """
    rows = set(rows)
    sums: dict[tuple[int, int, int], list[float]] = {}
    missing = []
    for c in chips:
        if c["row"] not in rows:
            continue
        key = (c["week"], c["plate"], c["column"])
        y = c["response"]
        if y is None or (isinstance(y, float) and np.isnan(y)):
            if skip_missing:
                continue
            missing.append((c["week"], c["plate"], c["column"], c["row"]))
            continue
        sums.setdefault(key, []).append(float(y))
    if missing:
        raise MissingInSelectedRows(sorted(missing))
    if n_runs is not None and len(sums) != n_runs:
        raise LengthMismatch(f"selected rows cover {len(sums)} runs, expected {n_runs}")
    return {k: float(np.mean(v)) for k, v in sorted(sums.items())}


def run_values(rt: RunTable, averages: Mapping[tuple[int, int, int], float]) -> np.ndarray:
    """Align (week, plate, column) averages with the run table order."""
    out = np.empty(rt.n_runs)
    for i in range(rt.n_runs):
        key = (int(rt.week[i]), int(rt.plate[i]), int(rt.column[i]))
        if key not in averages:
            raise LengthMismatch(f"no response for week {key[0]}, plate {key[1]}, column {key[2]}")
        out[i] = averages[key]
    return out


def contrast(values: np.ndarray, column: np.ndarray) -> float:
    """High-minus-low difference of means."""
    return float(values[column > 0].mean() - values[column < 0].mean())


def pse50(estimates: Sequence[float]) -> float:
    e = np.abs(np.asarray(estimates, dtype=float))
    if len(e) < 7:
        raise TooFewEffects(f"PSE needs at least 7 effects, got {len(e)}")
    s0 = SCALE * np.median(e)
    kept = e[e < TRIM * s0]
    if len(kept) == 0:
        return 0.0
    return float(SCALE * np.median(kept))


@lru_cache(maxsize=64)
def _null_ratios(m: int, replicates: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = np.abs(rng.standard_normal((replicates, m)))
    s0 = SCALE * np.median(z, axis=1, keepdims=True)
    trimmed = np.where(z < TRIM * s0, z, np.nan)
    pse = SCALE * np.nanmedian(trimmed, axis=1, keepdims=True)
    ratios = np.sort((z / pse).ravel())
    ratios.setflags(write=False)
    return ratios


@lru_cache(maxsize=256)
def _multiplier(m: int, alpha: float, replicates: int, seed: int) -> float:
    return float(np.quantile(_null_ratios(m, replicates, seed), 1 - alpha))


def critical_multiplier(m: int, alpha: float, cfg: ScreeningConfig = ScreeningConfig()) -> float:
    """(1 - alpha) quantile of |e / PSE| for m null effects, by seeded Monte Carlo."""
    if m < 7:
        raise TooFewEffects(f"PSE needs at least 7 effects, got {m}")
    return _multiplier(m, float(alpha), cfg.replicates, cfg.seed)


def critical_value(
    m: int, alpha: float, cfg: ScreeningConfig = ScreeningConfig(), pse: float = 1.0
) -> float:
    return critical_multiplier(m, alpha, cfg) * pse


def estimate_effects(
    values: Sequence[float],
    design: RegularDesign,
    report: StratumReport,
    cfg: ScreeningConfig = ScreeningConfig(),
    rt: Optional[RunTable] = None,
) -> list[EffectEstimateSet]:
    """Estimate every alias class and flag actives within each large enough stratum.

    ``values`` follow the standard run order of ``design`` unless a run table
    is given, in which case they follow the run table's rows.
    """
    values = np.asarray(values, dtype=float)
    if len(values) != design.n_runs:
        raise LengthMismatch(f"expected {design.n_runs} values, got {len(values)}")
    out = []
    for name in report.strata:
        effects = []
        for entry in report.entries[name]:
            if rt is None:
                col = design.column(entry.base)
            else:
                col = rt.word_column(design.class_members(entry.base)[0])
            effects.append(EffectEstimate(entry.label, contrast(values, col)))
        effects.sort(key=lambda e: -abs(e.estimate))
        es = EffectEstimateSet(name, effects)
        if len(effects) >= cfg.min_df:
            es.pse = pse50([e.estimate for e in effects])
            es.multiplier = critical_multiplier(len(effects), cfg.alpha, cfg)
            for e in effects:
                e.active = es.pse > 0 and abs(e.estimate) > es.critical
        out.append(es)
    return out


def screening_csv(sets: Sequence[EffectEstimateSet]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stratum", "effect", "estimate", "pse", "critical", "active"])
    for es in sets:
        pse = "" if es.pse is None else f"{es.pse:.6g}"
        crit = "" if es.pse is None else f"{es.critical:.6g}"
        for e in es.effects:
            w.writerow([es.stratum, e.label, f"{e.estimate:.6g}", pse, crit, int(e.active)])
    return buf.getvalue()
