"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 verification mismatch.
"""
from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from .clickstream import ParseError, PolicyError, load_robot_policy
from .cohort import EntityMap, UsageAggregate
from .config import ConfigError, RunConfig, load_config
from .corpus import Corpus, CorpusError, load_corpus
from .indicators import DENOMINATORS, IndicatorError, load_aux_series
from .pipeline import IngestSummary, ingest_files
from .reports import INDICATOR_REPORTS, Analysis, fig2_cohorts, sets_jsonl, to_csv, write_reports
from .synth import CommunityModel, default_model, write_synthetic_dataset
from .verify import CORRELATION_TOLERANCE, verify_analysis

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_MISMATCH = 0, 1, 2, 3


class DataError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--logs", nargs="+", help="clickstream log files (TSV)")
    p.add_argument("--corpus", help="publication corpus (JSON lines)")
    p.add_argument("--robot-policy", help="robot filter policy file")
    p.add_argument("--entity-map", help="hostname-suffix to institute map")
    p.add_argument("--aux-series", help="auxiliary series CSV (entity,kind,year,value)")
    p.add_argument("--output-dir", help="directory for report files")
    p.add_argument("--lower", type=int, help="frequent-user lower bound (inclusive)")
    p.add_argument("--upper", type=int, help="frequent-user upper bound (inclusive)")
    p.add_argument("--base-year", type=int, help="normalization base year")
    p.add_argument("--overlap-denominator", choices=DENOMINATORS)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="random-baseline samples per entity-year")
    p.add_argument("--correlation", choices=("pearson", "spearman"))
    p.add_argument("--workers", type=int, help="ingest worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usagemetrics", description="Download-based research-activity indicators.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "parse, filter and accumulate logs; emit per-year stats"),
        ("cohorts", "user counts per frequency category and year"),
        ("sets", "dump R/P/C sets per entity-year"),
        ("indicators", "emit per-figure indicator CSVs"),
    ):
        _common(sub.add_parser(name, help=help_text))
    for name, help_text in (
        ("synth", "generate a synthetic dataset with planted ground truth"),
        ("verify", "generate, run the pipeline and compare with the ground truth"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", help="community model YAML (default: built-in five-country model)")
        p.add_argument("--seed", type=int, help="model seed (overrides the model file)")
        p.add_argument("--researchers", type=int, default=1000, help="researchers in the built-in model")
        p.add_argument("--output-dir", help="dataset directory" + (" (default: temporary)" if name == "verify" else ""))
        p.add_argument("--workers", type=int, default=1, help="ingest worker processes")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("logs", "corpus", "robot_policy", "entity_map", "aux_series", "output_dir", "lower", "upper",
            "base_year", "overlap_denominator", "seed", "samples", "correlation", "workers")
    return {k: getattr(args, k, None) for k in keys}


def _load_optional(cfg: RunConfig):
    try:
        policy = load_robot_policy(cfg.robot_policy) if cfg.robot_policy else None
        entity_map = EntityMap.load(cfg.entity_map) if cfg.entity_map else None
        aux = load_aux_series(cfg.aux_series) if cfg.aux_series else {}
    except (PolicyError, ValueError, KeyError) as exc:
        raise DataError(str(exc)) from None
    return policy, entity_map, aux


def _ingest(cfg: RunConfig, corpus: Corpus | None, entity_map: EntityMap | None, policy):
    journals = cfg.journal_sets() if corpus is not None else []
    return ingest_files(cfg.logs, policy, journals, corpus, entity_map, workers=cfg.workers)


def build_analysis(cfg: RunConfig, need_corpus: bool = True) -> tuple[Analysis, IngestSummary]:
    """Load every input named by ``cfg``, ingest the logs and wrap the result."""
    optional = [n for n in ("corpus", "robot_policy", "entity_map", "aux_series") if getattr(cfg, n) is not None]
    cfg.require("logs", *(["corpus"] if need_corpus and cfg.corpus is None else []), *optional)
    policy, entity_map, aux = _load_optional(cfg)
    corpus = load_corpus(cfg.corpus) if cfg.corpus is not None else None
    agg, summary = _ingest(cfg, corpus, entity_map, policy)
    analysis = Analysis(
        corpus=corpus if corpus is not None else Corpus(), agg=agg, entities=list(cfg.entities),
        years=cfg.year_range(), main=cfg.main_journals(),
        journal_sets=cfg.journal_sets() if corpus is not None else [], cohort=cfg.cohort(),
        entity_map=entity_map, aux=aux, window_start=cfg.window_start, denominator=cfg.overlap_denominator,
        samples=cfg.samples, seed=cfg.seed, correlation_kind=cfg.correlation, base_year=cfg.base_year,
        fig7_entity=cfg.fig7_entity, fig7_year=cfg.fig7_year,
    )
    return analysis, summary


def _print_summary(title: str, items: Sequence[tuple[str, object]]) -> None:
    print(f"[{title}]")
    for k, v in items:
        print(f"{k}={v}")


def _ingest_items(summary: IngestSummary, agg: UsageAggregate) -> list[tuple[str, object]]:
    return [("lines", summary.lines), ("comments", summary.comments), ("records", summary.records),
            ("robots_filtered", summary.robots), ("unidentified_skipped", summary.unidentified),
            ("downloads", summary.downloads), ("user_years", len(agg.stats))]


def _ingest_stats_csv(agg: UsageAggregate) -> str:
    rows = []
    for year in agg.years():
        users = agg.for_year(year)
        rows.append((year, len(users), sum(s.interactions for s in users), sum(s.downloads_total for s in users)))
    return to_csv(("year", "users", "interactions", "downloads"), rows)


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def cmd_ingest(cfg: RunConfig) -> int:
    a, summary = build_analysis(cfg, need_corpus=False)
    path = _write(cfg.output_dir, "ingest_stats.csv", _ingest_stats_csv(a.agg))
    _print_summary("ingest", _ingest_items(summary, a.agg) + [("wrote", path.name)])
    return EXIT_OK


def cmd_cohorts(cfg: RunConfig) -> int:
    a, summary = build_analysis(cfg, need_corpus=False)
    path = _write(cfg.output_dir, "fig2_cohorts.csv", fig2_cohorts(a))
    _print_summary("cohorts", _ingest_items(summary, a.agg) + [("wrote", path.name)])
    return EXIT_OK


def cmd_sets(cfg: RunConfig) -> int:
    a, summary = build_analysis(cfg)
    path = _write(cfg.output_dir, "sets.jsonl", sets_jsonl(a))
    _print_summary("sets", _ingest_items(summary, a.agg) + [("entity_years", len(a.entity_years())),
                                                             ("wrote", path.name)])
    return EXIT_OK


def cmd_indicators(cfg: RunConfig) -> int:
    a, summary = build_analysis(cfg)
    writers = dict(INDICATOR_REPORTS)
    writers["fig2_cohorts.csv"] = fig2_cohorts
    paths = write_reports(a, cfg.output_dir, writers)
    _print_summary("indicators", _ingest_items(summary, a.agg) + [
        ("entities", len(a.entities)), ("entity_years", len(a.entity_years())),
        ("overlap_denominator", a.denominator), ("samples", a.samples), ("seed", a.seed),
        ("wrote", ",".join(p.name for p in paths))])
    return EXIT_OK


def _model(args: argparse.Namespace) -> CommunityModel:
    if args.model:
        path = Path(args.model)
        if not path.is_file():
            raise ConfigError(f"model file not found: {path}")
        try:
            model = CommunityModel.load(path)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if args.seed is not None:
            model.seed = args.seed
        return model
    return default_model(seed=args.seed or 0, researchers=args.researchers)


def cmd_synth(args: argparse.Namespace) -> int:
    model = _model(args)
    out = Path(args.output_dir or "synthetic")
    paths, truth = write_synthetic_dataset(model, out)
    researchers = sum(e.researchers for e in model.entities)
    _print_summary("synth", [("seed", model.seed), ("entities", len(model.entities)),
                             ("researchers", researchers), ("entity_years", len(truth.entries)),
                             ("config", paths.config.name)])
    return EXIT_OK


def run_verify(model: CommunityModel, out_dir: Path, workers: int = 1):
    """Write a synthetic dataset into ``out_dir``, analyze it and compare with the truth."""
    paths, truth = write_synthetic_dataset(model, out_dir)
    cfg = load_config(paths.config, {"workers": workers, "output_dir": str(out_dir / "reports")})
    a, summary = build_analysis(cfg)
    return verify_analysis(a, truth), summary, a


def cmd_verify(args: argparse.Namespace) -> int:
    model = _model(args)
    if args.output_dir:
        result, summary, a = run_verify(model, Path(args.output_dir), args.workers)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            result, summary, a = run_verify(model, Path(tmp), args.workers)
    items = _ingest_items(summary, a.agg) + [
        ("checked", result.checked), ("mismatches", len(result.mismatches)),
        ("planted_r", _r(result.planted_r)), ("recovered_r", _r(result.recovered_r)),
        ("overlap_above_baseline", f"{result.overlap_wins}/{result.overlap_compared}")]
    _print_summary("verify", items)
    if result.mismatches:
        m = result.mismatches[0]
        print(f"first mismatch: {m.describe()}", file=sys.stderr)
        return EXIT_MISMATCH
    if not result.correlation_ok:
        print(f"first mismatch: (ALL, ALL, pearson_r) differs from planted by more than {CORRELATION_TOLERANCE}",
              file=sys.stderr)
        return EXIT_MISMATCH
    print("verify: OK")
    return EXIT_OK


def _r(x: float | None) -> str:
    return "" if x is None else format(x, ".6f")


COMMANDS = {"ingest": cmd_ingest, "cohorts": cmd_cohorts, "sets": cmd_sets, "indicators": cmd_indicators}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "verify":
            return cmd_verify(args)
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ParseError, CorpusError, IndicatorError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
