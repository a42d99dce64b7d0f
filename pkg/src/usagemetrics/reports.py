"""Per-figure CSV reports computed from an ingested aggregate and a corpus.

Every writer emits UTF-8 CSV with LF line endings, fixed column order, rows in
sorted order and floats rendered by :func:`indicators.fmt`, so identical
inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .clickstream import Channel
from .cohort import (CohortCategory, CohortConfig, Entity, EntityMap, UsageAggregate, UserYearStats,
                     cohort_counts, frequent_by_entity)
from .corpus import Corpus, JournalSet
from .indicators import (AuxKind, AuxSeries, EntityYearSets, IndicatorError, IndicatorReport,
                         baseline_pool, build_entity_year_sets, citation_events, correlation, download_events,
                         fit_gdp_power_law, fmt, indicator_report, normalize_to_base_year,
                         obsolescence_curve)

ALL_JOURNALS = "ALL"


def baseline_seed(seed: int, entity: str, year: int) -> list[int]:
    """Per entity-year seed material, independent of processing order."""
    return [seed, year, zlib.crc32(entity.encode("utf-8"))]


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else ("" if v is None else v) for v in row])
    return buf.getvalue()


@dataclass
class Analysis:
    """Cached view over one ingest run; every report is derived from it."""

    corpus: Corpus
    agg: UsageAggregate
    entities: list[Entity]
    years: range
    main: JournalSet
    journal_sets: list[JournalSet] = field(default_factory=list)
    cohort: CohortConfig = field(default_factory=CohortConfig)
    entity_map: EntityMap | None = None
    aux: dict[tuple[str, AuxKind], AuxSeries] = field(default_factory=dict)
    window_start: int = 1980
    denominator: str = "cited"
    samples: int = 10
    seed: int = 0
    correlation_kind: str = "pearson"
    base_year: int = 2005
    fig7_entity: str | None = None
    fig7_year: int | None = None

    def __post_init__(self):
        self._frequent: dict[int, dict] = {}
        self._sets: dict[tuple[str, int], EntityYearSets] = {}
        self._reports: dict[tuple[str, int], IndicatorReport] = {}
        self._pools: dict[int, list[str]] = {}

    def pool(self, year: int) -> list[str]:
        if year not in self._pools:
            self._pools[year] = baseline_pool(self.corpus, self.main, (self.window_start, year))
        return self._pools[year]

    def frequent(self, year: int) -> dict[tuple[str, str], list[UserYearStats]]:
        if year not in self._frequent:
            self._frequent[year] = frequent_by_entity(self.agg, year, self.cohort)
        return self._frequent[year]

    def sets(self, entity: Entity, year: int) -> EntityYearSets:
        key = (entity.id, year)
        if key not in self._sets:
            self._sets[key] = build_entity_year_sets(self.corpus, self.agg, entity, year, self.main,
                                                     self.cohort, self.entity_map, frequent=self.frequent(year))
        return self._sets[key]

    def report(self, entity: Entity, year: int) -> IndicatorReport:
        key = (entity.id, year)
        if key not in self._reports:
            self._reports[key] = indicator_report(
                self.corpus, self.sets(entity, year), self.main, self.window_start, self.denominator,
                self.samples, baseline_seed(self.seed, entity.id, year), pool=self.pool(year))
        return self._reports[key]

    def entity_years(self) -> list[tuple[Entity, int]]:
        return [(e, y) for e in sorted(self.entities, key=lambda e: e.id) for y in self.years]

    def aux_values(self, entity: str, kind: AuxKind) -> dict[int, float]:
        s = self.aux.get((entity, kind))
        return dict(s.values) if s else {}


# --- figure writers: each returns the CSV text -------------------------------------------------

def fig2_cohorts(a: Analysis) -> str:
    rows = []
    restrictions = [(ALL_JOURNALS, None)] + [(s.name, s.name) for s in a.journal_sets]
    for year in a.agg.years():
        if year not in a.years:
            continue
        for label, restriction in restrictions:
            cc = cohort_counts(a.agg, year, a.cohort, restriction)
            for cat in CohortCategory:
                rows.append((year, cat.value, cc.counts[cat], label))
            rows.append((year, "DOWNLOADERS", cc.downloaders, label))
            rows.append((year, "TOTAL", cc.total, label))
    return to_csv(("year", "category", "count", "journal_set"), rows)


def fig3_channels(a: Analysis) -> str:
    """Publication-year profiles of downloads by channel against citation rate and total citations.

    Each series is normalized to sum to 1 over the window, so only shapes are compared.
    """
    totals = a.corpus.year_totals(a.main)
    main_pubs = a.corpus.in_journals(a.main)
    rows = []
    for year in a.years:
        window = range(a.window_start, year + 1)
        series: dict[str, dict[int, float]] = {}
        for ch in (Channel.DIRECT, Channel.SEARCH_ENGINE):
            series[ch.value.lower()] = {
                p: float(a.agg.channel_downloads.get((year, ch.value, p), 0)) for p in window}
        citing = [p.pub_id for p in a.corpus.published_in(year)]
        made = Counter(y for _, y in citation_events(a.corpus, citing, a.main))
        series["citation_rate"] = {p: made.get(p, 0) / totals[p] if totals.get(p) else 0.0 for p in window}
        received: Counter = Counter()
        for pub in main_pubs:
            if pub.year in window:
                received[pub.year] += a.corpus.citations_received(pub.pub_id, year)
        series["total_citations"] = {p: float(received.get(p, 0)) for p in window}
        for name in sorted(series):
            s = sum(series[name].values())
            for p in window:
                rows.append((year, name, p, series[name][p] / s if s else 0.0))
    return to_csv(("year", "series", "publication_year", "value"), rows)


def fig4_first_authors(a: Analysis) -> str:
    rows = [(e.id, e.kind, y, a.report(e, y).frequent_users, a.report(e, y).first_authors)
            for e, y in a.entity_years()]
    return to_csv(("entity", "kind", "year", "frequent_users", "first_authors"), rows)


def fig5_iau(a: Analysis) -> str:
    rows = []
    for e, y in a.entity_years():
        iau = a.aux_values(e.id, AuxKind.IAU_MEMBERS)
        if e.kind == "country" and y in iau:
            r = a.report(e, y)
            rows.append((e.id, y, r.first_authors, iau[y], r.frequent_users))
    return to_csv(("entity", "year", "first_authors", "iau_members", "frequent_users"), rows)


def fig6_downloads(a: Analysis) -> str:
    rows = [(e.id, y, a.report(e, y).n_download_events, a.report(e, y).n_downloaded, a.report(e, y).n_any)
            for e, y in a.entity_years()]
    return to_csv(("entity", "year", "downloads_by_frequent_users", "unique_publications_downloaded",
                   "publications_any_author"), rows)


def fig7_target(a: Analysis) -> tuple[Entity, int] | None:
    if not a.entities:
        return None
    by_id = {e.id: e for e in a.entities}
    entity = by_id.get(a.fig7_entity) if a.fig7_entity else sorted(a.entities, key=lambda e: e.id)[0]
    if entity is None:
        raise IndicatorError("UNKNOWN_ENTITY", str(a.fig7_entity))
    return entity, a.fig7_year if a.fig7_year is not None else a.years[-1]


def fig7_obsolescence(a: Analysis) -> str:
    target = fig7_target(a)
    if target is None:
        return to_csv(FIG7_HEADER, [])
    entity, year = target
    sets = a.sets(entity, year)
    totals = a.corpus.year_totals(a.main)
    window = (a.window_start, year)
    down = obsolescence_curve(download_events(a.corpus, sets), totals, window)
    cite = obsolescence_curve(citation_events(a.corpus, sets.P_first, a.main), totals, window)
    rows = [(y, down.unique_fraction.get(y), cite.unique_fraction.get(y),
             down.normalized_count.get(y, 0.0), cite.normalized_count.get(y, 0.0))
            for y in range(window[0], window[1] + 1)]
    return to_csv(FIG7_HEADER, rows)


FIG7_HEADER = ("year", "unique_fraction_downloads", "unique_fraction_citations",
               "norm_count_downloads", "norm_count_citations")


def fig8_10_overlap(a: Analysis) -> str:
    rows = [(e.id, y, a.report(e, y).overlap, a.report(e, y).random_baseline) for e, y in a.entity_years()]
    return to_csv(("entity", "year", "overlap", "random_baseline"), rows)


def fig9_hindex(a: Analysis) -> str:
    rows = [(e.id, y, a.report(e, y).n_first, a.report(e, y).h_index_next_year) for e, y in a.entity_years()]
    return to_csv(("entity", "year", "publications_first_author", "h_index_next_year"), rows)


def fig11_gdp(a: Analysis) -> str:
    rows = []
    for e in sorted(a.entities, key=lambda e: e.id):
        gdp = a.aux_values(e.id, AuxKind.GDP_PER_CAPITA)
        downloads = {y: float(a.report(e, y).n_download_events) for y in a.years}
        try:
            g = normalize_to_base_year({y: v for y, v in gdp.items() if y in a.years}, a.base_year)
            d = normalize_to_base_year(downloads, a.base_year)
        except IndicatorError:
            continue
        rows.extend((e.id, y, g[y], d[y]) for y in a.years if y in g)
    return to_csv(("entity", "year", "gdp_per_capita_normalized", "downloads_normalized"), rows)


def gdp_power_law(a: Analysis) -> str:
    rows = []
    countries = [e for e in sorted(a.entities, key=lambda e: e.id) if e.kind == "country"]
    for y in a.years:
        downloads = {e.id: float(a.report(e, y).n_download_events) for e in countries}
        gdp = {e.id: v[y] for e in countries if y in (v := a.aux_values(e.id, AuxKind.GDP_TOTAL))}
        pop = {e.id: v[y] for e in countries if y in (v := a.aux_values(e.id, AuxKind.POPULATION))}
        try:
            fit = fit_gdp_power_law(downloads, gdp, pop)
        except IndicatorError:
            continue
        rows.append((y, fit.n, fit.intercept, fit.gdp_exponent, fit.population_exponent, fit.rms_residual))
    return to_csv(("year", "n", "intercept", "gdp_exponent", "population_exponent", "rms_residual"), rows)


CORRELATION_PAIRS: tuple[tuple[str, str, str], ...] = (
    ("fig4", "frequent_users", "first_authors"),
    ("fig6", "downloads_by_frequent_users", "publications_any_author"),
    ("fig9", "publications_first_author", "h_index_next_year"),
)


def _pair_values(a: Analysis, figure: str, e: Entity, y: int) -> tuple[float, float] | None:
    r = a.report(e, y)
    if figure == "fig4":
        return r.frequent_users, r.first_authors
    if figure == "fig6":
        return r.n_download_events, r.n_any
    if figure == "fig9":
        return r.n_first, r.h_index_next_year
    iau = a.aux_values(e.id, AuxKind.IAU_MEMBERS)
    if e.kind == "country" and y in iau:
        return r.first_authors, iau[y]
    return None


def correlations(a: Analysis) -> str:
    rows = []
    pairs = CORRELATION_PAIRS + (("fig5", "first_authors", "iau_members"),)
    for figure, x_name, y_name in sorted(pairs):
        for group in ("all", "country", "institute"):
            points = [_pair_values(a, figure, e, y) for e, y in a.entity_years() if group in ("all", e.kind)]
            points = [p for p in points if p is not None]
            if not points:
                continue
            try:
                r = correlation([p[0] for p in points], [p[1] for p in points], a.correlation_kind)
            except IndicatorError:
                r = None
            rows.append((figure, x_name, y_name, group, a.correlation_kind, len(points), r))
    return to_csv(("figure", "x", "y", "entities", "kind", "n", "r"), rows)


def sets_jsonl(a: Analysis) -> str:
    return "".join(json.dumps(a.sets(e, y).to_json(), sort_keys=True, separators=(",", ":")) + "\n"
                   for e, y in a.entity_years())


INDICATOR_REPORTS: dict[str, Callable[[Analysis], str]] = {
    "fig3_channels.csv": fig3_channels,
    "fig4_first_authors.csv": fig4_first_authors,
    "fig5_iau.csv": fig5_iau,
    "fig6_downloads.csv": fig6_downloads,
    "fig7_obsolescence.csv": fig7_obsolescence,
    "fig8_10_overlap.csv": fig8_10_overlap,
    "fig9_hindex.csv": fig9_hindex,
    "fig11_gdp.csv": fig11_gdp,
    "gdp_power_law.csv": gdp_power_law,
    "correlations.csv": correlations,
}


def write_reports(a: Analysis, out_dir: str | Path, writers: dict[str, Callable[[Analysis], str]]) -> list[Path]:
    """Compute every report first, then write them in name order."""
    out_dir = Path(out_dir)
    texts = {name: fn(a) for name, fn in sorted(writers.items())}
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in texts.items():
        path = out_dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        paths.append(path)
    return paths
