"""Research-activity indicators computed from entity-year publication sets.

For an entity E and year Y three sets drive everything here:

* ``R``: main-journal publications downloaded by E's frequent users in Y,
* ``P_first``: main-journal publications of Y whose first author is affiliated with E
  (``P_any`` relaxes this to any author),
* ``C``: main-journal publications cited by ``P_first``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .cohort import (CohortConfig, Entity, EntityMap, UsageAggregate, UserYearStats,
                     entity_is_known, frequent_by_entity)
from .corpus import MAIN_JOURNALS, Corpus, JournalSet

DENOMINATORS = ("cited", "downloaded", "union")


class IndicatorError(ValueError):
    """``code`` is one of UNKNOWN_ENTITY, EMPTY_REFERENCE_SET, SAMPLE_TOO_LARGE,
    DEGENERATE_INPUT, MISSING_BASE_YEAR, ZERO_BASE_VALUE."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


@dataclass
class EntityYearSets:
    entity: str
    year: int
    R: set[str] = field(default_factory=set)
    P_first: set[str] = field(default_factory=set)
    P_any: set[str] = field(default_factory=set)
    C: set[str] = field(default_factory=set)
    frequent_users: set[str] = field(default_factory=set)
    download_events: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "entity": self.entity,
            "year": self.year,
            "R": sorted(self.R),
            "P_first": sorted(self.P_first),
            "P_any": sorted(self.P_any),
            "C": sorted(self.C),
            "frequent_users": sorted(self.frequent_users),
        }


def build_entity_year_sets(
    corpus: Corpus,
    agg: UsageAggregate,
    entity: Entity,
    year: int,
    journals: JournalSet = MAIN_JOURNALS,
    config: CohortConfig = CohortConfig(),
    entity_map: EntityMap | None = None,
    journal_restriction: str | None = None,
    frequent: Mapping[tuple[str, str], Sequence[UserYearStats]] | None = None,
) -> EntityYearSets:
    """Assemble R, P_first, P_any and C for one entity-year.

    ``frequent`` may carry a precomputed :func:`frequent_by_entity` grouping for
    ``year``; it is recomputed otherwise.
    """
    p_first = corpus.query_bibliography(entity.affiliation, (year, year), True, journals)
    p_any = corpus.query_bibliography(entity.affiliation, (year, year), False, journals)
    if not entity_is_known(entity, entity_map) and not (
        entity.affiliation and corpus.query_bibliography(entity.affiliation, (-10**6, 10**6))
    ):
        raise IndicatorError("UNKNOWN_ENTITY", entity.id)
    if frequent is None:
        frequent = frequent_by_entity(agg, year, config, journal_restriction)
    users = frequent.get((entity.kind, entity.id), ())
    events: dict[str, int] = {}
    for st in users:
        for pub, n in st.download_counts.items():
            journal = corpus.journal_of(pub)
            if journal is not None and journal in journals:
                events[pub] = events.get(pub, 0) + n
    return EntityYearSets(
        entity=entity.id,
        year=year,
        R=set(events),
        P_first=p_first,
        P_any=p_any,
        C=corpus.cited_set(p_first, journals),
        frequent_users={st.user_id for st in users},
        download_events=events,
    )


def first_author_count_of(corpus: Corpus, pubs: Iterable[str]) -> int:
    return len({corpus[p].authors[0].name for p in pubs})


def first_author_count(corpus: Corpus, entity: Entity, year: int, journals: JournalSet = MAIN_JOURNALS) -> int:
    pubs = corpus.query_bibliography(entity.affiliation, (year, year), True, journals)
    return first_author_count_of(corpus, pubs)


def _overlap(hits: int, n_downloaded: int, n_cited: int, denominator: str) -> float:
    if denominator == "cited":
        base = n_cited
    elif denominator == "downloaded":
        base = n_downloaded
    elif denominator == "union":
        base = n_downloaded + n_cited - hits
    else:
        raise ValueError(f"denominator must be one of {DENOMINATORS}, got {denominator!r}")
    if base == 0:
        raise IndicatorError("EMPTY_REFERENCE_SET", f"{denominator} set is empty")
    return hits / base


def overlap_fraction(R: set[str], C: set[str], denominator: str = "cited") -> float:
    """|R ∩ C| over |C| (default), |R| or |R ∪ C|."""
    return _overlap(len(R & C), len(R), len(C), denominator)


def baseline_pool(corpus: Corpus, journals: JournalSet, window: tuple[int, int]) -> list[str]:
    """Sorted ids of journal-set publications with publication year inside ``window``."""
    lo, hi = window
    return sorted(p.pub_id for p in corpus.publications.values() if p.journal in journals and lo <= p.year <= hi)


def _sample_chunk(mask: np.ndarray, sample_size: int, n_cited: int, denominator: str,
                  seeds: Sequence[np.random.SeedSequence]) -> list[float]:
    out = []
    n = len(mask)
    for ss in seeds:
        idx = np.random.default_rng(ss).choice(n, size=sample_size, replace=False)
        hits = int(mask[idx].sum())
        out.append(_overlap(hits, sample_size, n_cited, denominator))
    return out


def baseline_samples(pool: Sequence[str], sample_size: int, C: set[str], n_samples: int = 10,
                     seed: int | Sequence[int] = 0,
                     denominator: str = "cited", workers: int = 1) -> list[float]:
    """Overlap of ``n_samples`` uniform without-replacement samples of ``pool`` with ``C``.

    Sample i draws from its own child of ``SeedSequence(seed)``, so the values
    do not depend on how samples are split across workers.
    """
    if sample_size > len(pool):
        raise IndicatorError("SAMPLE_TOO_LARGE", f"sample of {sample_size} from pool of {len(pool)}")
    if denominator == "cited" and not C:
        raise IndicatorError("EMPTY_REFERENCE_SET", "cited set is empty")
    mask = np.fromiter((p in C for p in pool), dtype=bool, count=len(pool))
    seeds = np.random.SeedSequence(seed).spawn(n_samples)
    if workers <= 1 or n_samples < 2 * workers:
        return _sample_chunk(mask, sample_size, len(C), denominator, seeds)
    bounds = np.linspace(0, n_samples, workers + 1).astype(int)
    chunks = [seeds[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = ex.map(_sample_chunk, *zip(*[(mask, sample_size, len(C), denominator, c) for c in chunks]))
        return [v for part in parts for v in part]


def random_overlap_baseline(pool: Sequence[str], sample_size: int, C: set[str], n_samples: int = 10,
                            seed: int | Sequence[int] = 0,
                            denominator: str = "cited", workers: int = 1) -> float:
    values = baseline_samples(pool, sample_size, C, n_samples, seed, denominator, workers)
    return math.fsum(values) / len(values)


@dataclass
class ObsolescenceCurve:
    window: tuple[int, int]
    unique_fraction: dict[int, float]
    normalized_count: dict[int, float]
    total_events: int

    @property
    def empty(self) -> bool:
        return self.total_events == 0


def obsolescence_curve(events: Iterable[tuple[str, int]], year_totals: Mapping[int, int],
                       window: tuple[int, int]) -> ObsolescenceCurve:
    """Distribution of events over the publication years of their targets.

    ``events`` holds one ``(pub_id, publication_year)`` pair per event (repeat a
    pair to count it twice). ``normalized_count[y]`` is the share of in-window
    events whose target appeared in ``y``; ``unique_fraction[y]`` is the number of
    distinct targets from ``y`` over ``year_totals[y]``.
    """
    lo, hi = window
    if lo > hi:
        raise ValueError(f"empty window {window}")
    counts: dict[int, int] = {}
    unique: dict[int, set[str]] = {}
    for pub_id, y in events:
        if lo <= y <= hi:
            counts[y] = counts.get(y, 0) + 1
            unique.setdefault(y, set()).add(pub_id)
    total = sum(counts.values())
    normalized = {y: counts[y] / total for y in sorted(counts)}
    fractions = {}
    for y in range(lo, hi + 1):
        denom = year_totals.get(y, 0)
        n = len(unique.get(y, ()))
        if denom == 0:
            if n:
                raise ValueError(f"{n} distinct targets in {y} but the year total is 0")
            continue
        if n > denom:
            raise ValueError(f"{n} distinct targets in {y} exceed the year total {denom}")
        fractions[y] = n / denom
    return ObsolescenceCurve((lo, hi), fractions, normalized, total)


def download_events(corpus: Corpus, sets: EntityYearSets) -> list[tuple[str, int]]:
    return [(p, corpus[p].year) for p, n in sorted(sets.download_events.items()) for _ in range(n)]


def citation_events(corpus: Corpus, pubs: Iterable[str], journals: JournalSet = MAIN_JOURNALS) -> list[tuple[str, int]]:
    """One event per (citing publication, cited journal-set publication) edge."""
    out = []
    for pub_id in sorted(pubs):
        for ref in dict.fromkeys(corpus[pub_id].references):
            target = corpus.publications.get(ref)
            if target is not None and target.journal in journals:
                out.append((ref, target.year))
    return out


def h_index(citation_counts: Iterable[int]) -> int:
    h = 0
    for i, c in enumerate(sorted(citation_counts, reverse=True), 1):
        if c < i:
            break
        h = i
    return h


def h_index_next_year(corpus: Corpus, pubs: Iterable[str], year: int) -> int:
    """h-index of ``pubs`` counting citing papers published up to ``year + 1``."""
    return h_index(corpus.citations_received(p, year + 1) for p in pubs)


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise IndicatorError("DEGENERATE_INPUT", "need at least two points")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise IndicatorError("DEGENERATE_INPUT", "zero variance")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    return pearson_r(list(rankdata(xs)), list(rankdata(ys)))


def correlation(xs: Sequence[float], ys: Sequence[float], kind: str = "pearson") -> float:
    if kind == "pearson":
        return pearson_r(xs, ys)
    if kind == "spearman":
        return spearman_r(xs, ys)
    raise ValueError(f"unknown correlation kind {kind!r}")


class AuxKind(str, enum.Enum):
    IAU_MEMBERS = "IAU_MEMBERS"
    GDP_PER_CAPITA = "GDP_PER_CAPITA"
    POPULATION = "POPULATION"
    GDP_TOTAL = "GDP_TOTAL"


@dataclass
class AuxSeries:
    entity: str
    kind: AuxKind
    values: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = AuxKind(self.kind)
        for y, v in self.values.items():
            if v < 0:
                raise ValueError(f"{self.entity} {self.kind.value} {y}: negative value {v}")


def load_aux_series(path: str | Path) -> dict[tuple[str, AuxKind], AuxSeries]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_aux_series(fh.read())


def parse_aux_series(text: str) -> dict[tuple[str, AuxKind], AuxSeries]:
    series: dict[tuple[str, AuxKind], AuxSeries] = {}
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["entity", "kind", "year", "value"]:
        raise ValueError(f"aux series header must be entity,kind,year,value; got {reader.fieldnames}")
    for row in reader:
        key = (row["entity"], AuxKind(row["kind"]))
        s = series.setdefault(key, AuxSeries(*key))
        value = float(row["value"])
        if value < 0:
            raise ValueError(f"negative aux value in row {row}")
        s.values[int(row["year"])] = value
    return series


def dump_aux_series(series: Iterable[AuxSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["entity", "kind", "year", "value"])
    for s in sorted(series, key=lambda s: (s.entity, s.kind.value)):
        for y in sorted(s.values):
            w.writerow([s.entity, s.kind.value, y, fmt(s.values[y])])
    return buf.getvalue()


def normalize_to_base_year(series: Mapping[int, float] | AuxSeries, base_year: int = 2005) -> dict[int, float]:
    values = series.values if isinstance(series, AuxSeries) else series
    if base_year not in values:
        raise IndicatorError("MISSING_BASE_YEAR", str(base_year))
    base = values[base_year]
    if base == 0:
        raise IndicatorError("ZERO_BASE_VALUE", str(base_year))
    return {y: values[y] / base for y in sorted(values)}


@dataclass
class PowerLawFit:
    intercept: float
    gdp_exponent: float
    population_exponent: float
    rms_residual: float
    n: int


def fit_gdp_power_law(downloads: Mapping[str, float], gdp_total: Mapping[str, float],
                      population: Mapping[str, float]) -> PowerLawFit:
    """Least-squares fit of log(downloads) = a + b log(GDP) + c log(population) across entities."""
    keys = sorted(k for k in downloads if k in gdp_total and k in population
                  and downloads[k] > 0 and gdp_total[k] > 0 and population[k] > 0)
    if len(keys) < 3:
        raise IndicatorError("DEGENERATE_INPUT", f"need >= 3 entities with positive values, got {len(keys)}")
    y = np.log([float(downloads[k]) for k in keys])
    X = np.column_stack([
        np.ones(len(keys)),
        np.log([float(gdp_total[k]) for k in keys]),
        np.log([float(population[k]) for k in keys]),
    ])
    if np.linalg.matrix_rank(X) < 3:
        raise IndicatorError("DEGENERATE_INPUT", "log GDP and log population are collinear")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return PowerLawFit(float(coef[0]), float(coef[1]), float(coef[2]),
                       float(math.sqrt(np.mean(resid ** 2))), len(keys))


def fmt(x: float | int | None) -> str:
    """Render a number for CSV output: integers as-is, floats with 9 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".9g")


@dataclass
class IndicatorReport:
    entity: str
    year: int
    n_downloaded: int
    n_download_events: int
    n_first: int
    n_any: int
    n_cited: int
    frequent_users: int
    first_authors: int
    overlap: float | None
    random_baseline: float | None
    h_index_next_year: int


def indicator_report(corpus: Corpus, sets: EntityYearSets, journals: JournalSet = MAIN_JOURNALS,
                     window_start: int = 1980, denominator: str = "cited", n_samples: int = 10,
                     seed: int | Sequence[int] = 0, workers: int = 1,
                     pool: Sequence[str] | None = None) -> IndicatorReport:
    """Per-entity-year figures; overlap and baseline are ``None`` when their denominator set is empty.

    ``pool`` may carry a precomputed :func:`baseline_pool` for ``sets.year``.
    """
    overlap = baseline = None
    try:
        overlap = overlap_fraction(sets.R, sets.C, denominator)
        if pool is None:
            pool = baseline_pool(corpus, journals, (window_start, sets.year))
        if len(sets.R) <= len(pool):
            baseline = random_overlap_baseline(pool, len(sets.R), sets.C, n_samples, seed, denominator, workers)
    except IndicatorError as exc:
        if exc.code != "EMPTY_REFERENCE_SET":
            raise
    return IndicatorReport(
        entity=sets.entity,
        year=sets.year,
        n_downloaded=len(sets.R),
        n_download_events=sum(sets.download_events.values()),
        n_first=len(sets.P_first),
        n_any=len(sets.P_any),
        n_cited=len(sets.C),
        frequent_users=len(sets.frequent_users),
        first_authors=first_author_count_of(corpus, sets.P_first),
        overlap=overlap,
        random_baseline=baseline,
        h_index_next_year=h_index_next_year(corpus, sets.P_first, sets.year),
    )
