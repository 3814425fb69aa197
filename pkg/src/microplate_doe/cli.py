"""Command-line entry point: ``microplate-doe <command> [options]``.

Exit status: 0 success, 2 validation error, 3 numerical non-convergence,
4 I/O error.  Output files go to ``--out``, else ``$MICROPLATE_OUT``, else
the current directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .construction import emit_run_table
from .errors import DesignError, NonConvergence, UnknownTerm
from .mixed import (
    ChipDataset,
    f_tests,
    fitted_means_and_lsd,
    fixed_csv,
    ftest_csv,
    reml_fit,
    simulate_response,
    variance_csv,
)
from .scenarios import (
    PAPER_COMPONENTS,
    PAPER_EFFECTS,
    PAPER_INTERCEPT,
    PRESETS,
    Scenario,
    ScenarioPreset,
    alias_report,
    load_scenario,
    usable_effects,
)
from .screening import ScreeningConfig, estimate_effects, row_average, run_values, screening_csv

OUT_ENV = "MICROPLATE_OUT"
MEANS_TERMS = ("column", "row", "ah", "cd", "gh")


def _scenario(args) -> Scenario:
    if getattr(args, "config", None):
        return Scenario(ScenarioPreset.from_json(Path(args.config).read_text(encoding="utf-8")))
    return load_scenario(args.preset)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _pairs(items: Sequence[str], what: str) -> dict[str, float]:
    out = {}
    for item in items:
        if "=" not in item:
            raise DesignError(f"{what} must look like name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise DesignError(f"{what} {k!r} has a non-numeric value {v!r}") from None
    return out


def _load_chips(path: str) -> ChipDataset:
    return ChipDataset.from_csv(Path(path).read_text(encoding="utf-8"))


def cmd_construct(args) -> int:
    sc = _scenario(args)
    out = _out_dir(args)
    _write(out / "run_table.csv", emit_run_table(sc.run_table))
    _write(out / "aliases.txt", alias_report(sc))
    _write(out / "strata.csv", sc.strata.to_csv())
    _write(out / "strata.txt", sc.strata.to_text())
    print(f"{sc.preset.id}: {sc.run_table.n_runs} runs; strata " + ", ".join(f"{k} {v} df" for k, v in sc.strata.dfs.items()))
    for name in ("run_table.csv", "aliases.txt", "strata.csv", "strata.txt"):
        print(out / name)
    return 0


def cmd_alias(args) -> int:
    sys.stdout.write(alias_report(_scenario(args)))
    return 0


def cmd_strata(args) -> int:
    sc = _scenario(args)
    sys.stdout.write(sc.strata.to_csv() if args.csv else sc.strata.to_text())
    return 0


def _complete_rows(data: ChipDataset) -> list[int]:
    bad = set(int(r) for r in data.row[np.isnan(data.response)])
    return sorted(set(int(r) for r in data.row) - bad)


def cmd_screen(args) -> int:
    sc = _scenario(args)
    data = _load_chips(args.data)
    if args.rows:
        rows = [int(r) for r in args.rows.split(",")]
        avg = row_average(data.records(), rows, sc.run_table.n_runs)
        note = ",".join(map(str, rows))
    elif _complete_rows(data):
        rows = _complete_rows(data)
        avg = row_average(data.records(), rows, sc.run_table.n_runs)
        note = ",".join(map(str, rows))
    else:
        # every row has a gap somewhere: average the chips each column still has
        avg = row_average(data.records(), set(int(r) for r in data.row), sc.run_table.n_runs, skip_missing=True)
        note = "all (no complete row; observed chips per column)"
    cfg = ScreeningConfig(alpha=args.alpha, seed=args.seed, replicates=args.replicates)
    values = run_values(sc.run_table, avg)
    sets = estimate_effects(values, sc.design, sc.strata, cfg, rt=sc.run_table)
    text = screening_csv(sets)
    _write(_out_dir(args) / "screening.csv", text)
    sys.stdout.write(f"# rows averaged: {note}\n")
    sys.stdout.write(text)
    return 0


def cmd_fit(args) -> int:
    sc = _scenario(args)
    data = _load_chips(args.data)
    fit = reml_fit(sc.model_spec(), data)
    tests = f_tests(fit)
    out = _out_dir(args)
    _write(out / "variance_components.csv", variance_csv(fit))
    _write(out / "f_tests.csv", ftest_csv(tests))
    _write(out / "fixed_effects.csv", fixed_csv(fit))
    for term in MEANS_TERMS:
        if term in fit.mm.terms or all(c in fit.mm.terms for c in term):
            _write(out / f"means_{term}.csv", fitted_means_and_lsd(fit, term, args.alpha).to_csv())
    sys.stdout.write(variance_csv(fit))
    sys.stdout.write("\n")
    sys.stdout.write(ftest_csv(tests))
    return 0


def cmd_means(args) -> int:
    sc = _scenario(args)
    fit = reml_fit(sc.model_spec(), _load_chips(args.data))
    table = fitted_means_and_lsd(fit, args.term, args.alpha)
    text = table.to_csv()
    if args.out or os.environ.get(OUT_ENV):
        _write(_out_dir(args) / f"means_{args.term}.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    user = _pairs(args.effect, "effect")
    unknown = set(user) - set(usable_effects(sc, user))
    if unknown:
        raise UnknownTerm(f"{', '.join(sorted(unknown))} not in preset {sc.preset.id}")
    effects = usable_effects(sc, PAPER_EFFECTS)
    effects.update(user)
    comps = dict(PAPER_COMPONENTS)
    comps.update(_pairs(args.var, "variance"))
    data = simulate_response(
        sc.run_table,
        effects,
        comps,
        seed=args.seed,
        intercept=args.intercept,
        column_words=sc.column_words,
        missing=args.missing,
    )
    text = data.to_csv()
    if args.out or os.environ.get(OUT_ENV):
        _write(_out_dir(args) / "chips.csv", text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_scenarios(args) -> int:
    for p in PRESETS.values():
        print(f"{p.id:6s} {p.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microplate-doe",
        description="Construct and analyse blocked split-strip-plot two-level designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", default="paper", choices=sorted(PRESETS))
        src.add_argument("--config", help="JSON scenario file instead of a preset")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        if data:
            p.add_argument("--data", required=True, help="chip data CSV")
            p.add_argument("--alpha", type=float, default=0.10)
        return p

    p = common(sub.add_parser("construct", help="write run table, alias and stratum reports"))
    p.set_defaults(func=cmd_construct)
    p = common(sub.add_parser("alias", help="print the alias report"))
    p.set_defaults(func=cmd_alias)
    p = common(sub.add_parser("strata", help="print the stratum allocation"))
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_strata)

    p = common(sub.add_parser("screen", help="row-average and screen effects with PSE(50)"), data=True)
    p.add_argument("--rows", help="comma-separated plate rows (default: rows with no missing chip, "
        "else every observed chip)")
    p.add_argument("--seed", type=int, default=ScreeningConfig.seed)
    p.add_argument("--replicates", type=int, default=ScreeningConfig.replicates)
    p.set_defaults(func=cmd_screen)

    p = common(sub.add_parser("fit", help="REML fit, F-tests, means and LSDs"), data=True)
    p.set_defaults(func=cmd_fit)
    p = common(sub.add_parser("means", help="fitted means and LSD for one term"), data=True)
    p.add_argument("--term", required=True)
    p.set_defaults(func=cmd_means)

    p = common(sub.add_parser("simulate", help="simulate chip responses"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing", type=int, default=0, help="number of chips to blank")
    p.add_argument("--intercept", type=float, default=PAPER_INTERCEPT)
    p.add_argument("--effect", action="append", default=[], metavar="TERM=COEF")
    p.add_argument("--var", action="append", default=[], metavar="TERM=VARIANCE")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenarios", help="list built-in presets")
    p.add_argument("action", nargs="?", default="list", choices=["list"])
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DesignError, NonConvergence) as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IOError: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: ValueError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
