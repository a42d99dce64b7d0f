"""Synthetic research communities with planted ground truth.

A :class:`CommunityModel` describes entities (countries or institutes) and their
populations: researchers who download main-journal papers at rates inside the
frequent-user band, amateurs and lay readers who mostly look at abstracts,
shared library terminals whose traffic exceeds the band, and robots. The
generator plans a whole publication corpus first, emits the clickstream, and
only then draws reference lists, so that researchers can cite what they
actually downloaded. Everything the analysis pipeline should recover is stored
in :class:`GroundTruth`.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import NormalDist
from typing import TextIO

import numpy as np
import yaml

from .clickstream import RobotPolicy, attribute_country
from .cohort import Entity, EntityMap
from .corpus import MAIN_JOURNALS, Author, Publication, dump_corpus
from .indicators import AuxKind, AuxSeries, pearson_r

OTHER_JOURNALS = ("PASP", "Nature", "Icarus", "SPIE")
MAIN_JOURNAL_ORDER = ("ApJ", "ApJL", "ApJS", "AJ", "MNRAS", "A&A")
HUMAN_AGENTS = (
    "Mozilla/5.0 (X11; Linux x86_64) Firefox/60.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_13) Safari/605.1",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) Chrome/70.0",
)
ROBOT_AGENT = "SynthCrawlerBot/2.0 (+http://crawler.example.org)"
ROBOT_IP_BLOCK = "66.249.64.0/19"
DEFAULT_POLICY = RobotPolicy(("bot", "crawler", "spider"), (ROBOT_IP_BLOCK,))


@dataclass
class EntitySpec:
    id: str
    kind: str = "country"
    affiliation: str = ""
    domain: str = ""
    researchers: int = 0
    robots: int = 0
    shared_terminals: int = 0
    population: float = 1e7
    gdp_per_capita: float = 3e4
    gdp_growth: float = 0.02

    @property
    def country(self) -> str:
        return attribute_country("host." + self.domain)

    def entity(self) -> Entity:
        return Entity(self.id, self.kind, self.affiliation)


@dataclass
class CommunityModel:
    entities: list[EntitySpec] = field(default_factory=list)
    years: tuple[int, int] = (2005, 2015)
    seed: int = 0
    # non-researcher populations per researcher, times population_scale
    amateur_ratio: float = 100.0
    lay_ratio: float = 10000.0
    practitioner_ratio: float = 0.0
    population_scale: float = 1.0
    # researcher download law: truncated log-normal whose median follows from monthly reads
    monthly_read_median: float = 21.0
    read_download_ratio: tuple[float, float] = (2.0, 3.0)
    rate_sigma: float = 0.5
    rate_bounds: tuple[int, int] = (100, 1000)
    tail_mass: float = 0.0
    nonmain_download_fraction: float = 0.08
    external_download_fraction: float = 0.02
    mobility: float = 0.05
    recency_scale: float = 8.0
    # casual readers
    amateur_downloads: float = 8.0
    amateur_views: float = 20.0
    amateur_active: float = 0.8
    lay_active: float = 0.7
    lay_extra_interactions: float = 0.5
    lay_download_probability: float = 0.25
    lay_unidentified: float = 0.1
    search_engine_share_researchers: float = 0.05
    search_engine_share_casual: float = 0.6
    other_action_share: float = 0.03
    robot_lines: int = 300
    # publications
    citation_follows_download: float = 0.3
    first_author_rate: float = 0.6
    references_mean: float = 20.0
    coauthors_mean: float = 2.0
    coauthor_researcher_share: float = 0.4
    window_start: int = 1980
    background_papers: tuple[int, int] = (300, 1000)
    background_main_share: float = 0.85
    background_references_mean: float = 12.0
    utc_render_share: float = 0.3
    iau_drift: tuple[float, float] = (0.75, 1.0)

    def __post_init__(self):
        self.entities = [e if isinstance(e, EntitySpec) else EntitySpec(**e) for e in self.entities]
        for name in ("years", "read_download_ratio", "rate_bounds", "background_papers", "iau_drift"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        lo, hi = self.years
        if lo > hi:
            raise ValueError(f"empty year range {self.years}")
        if not self.window_start <= lo:
            raise ValueError("window_start must not exceed the first modelled year")
        for name in ("tail_mass", "nonmain_download_fraction", "external_download_fraction", "mobility",
                     "amateur_active", "lay_active", "lay_download_probability", "lay_unidentified",
                     "search_engine_share_researchers", "search_engine_share_casual", "other_action_share",
                     "citation_follows_download", "coauthor_researcher_share", "background_main_share",
                     "utc_render_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.mobility > 0.3:
            raise ValueError("mobility above 0.3 would make home attribution ambiguous")
        if self.nonmain_download_fraction + self.external_download_fraction > 0.5:
            raise ValueError("researchers must mostly download main-journal papers")
        if self.rate_sigma < 0:
            raise ValueError("rate_sigma must be non-negative")
        if not 1 <= self.rate_bounds[0] <= self.rate_bounds[1]:
            raise ValueError(f"bad rate bounds {self.rate_bounds}")
        ids = [e.id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate entity ids")
        for e in self.entities:
            if min(e.researchers, e.robots, e.shared_terminals) < 0:
                raise ValueError(f"{e.id}: negative population")
            if e.kind not in ("country", "institute"):
                raise ValueError(f"{e.id}: bad kind {e.kind!r}")
            if not e.affiliation or not e.domain:
                raise ValueError(f"{e.id}: affiliation and domain are required")
            if e.kind == "country" and e.country != e.id:
                raise ValueError(f"{e.id}: domain {e.domain!r} attributes to {e.country}")
            if "farland" in e.affiliation.lower():
                raise ValueError(f"{e.id}: affiliation collides with background affiliations")

    @property
    def median_downloads(self) -> float:
        ratio = sum(self.read_download_ratio) / 2
        return self.monthly_read_median * 12 / ratio

    def to_yaml(self) -> str:
        data = asdict(self)
        for k, v in data.items():
            if isinstance(v, tuple):
                data[k] = list(v)
        return yaml.safe_dump(data, sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "CommunityModel":
        data = yaml.safe_load(text) or {}
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "CommunityModel":
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))

    def policy(self) -> RobotPolicy:
        return DEFAULT_POLICY

    def entity_map(self) -> EntityMap:
        return EntityMap({e.domain: e.id for e in self.entities if e.kind == "institute"})


DEFAULT_COUNTRIES = (
    # id, affiliation, domain, population, GDP per capita in the first year, growth
    ("NL", "The Netherlands", "nl", 17e6, 48e3, 0.015),
    ("GB", "United Kingdom", "uk", 65e6, 42e3, 0.010),
    ("DE", "Germany", "de", 82e6, 45e3, 0.012),
    ("JP", "Japan", "jp", 127e6, 38e3, 0.004),
    ("US", "USA", "edu", 320e6, 55e3, 0.018),
)


def researchers_from_gdp(total: int, gdp_total: list[float], population: list[float]) -> list[int]:
    """Split ``total`` researchers in proportion to GDP squared over population (largest remainder)."""
    weights = [g * g / p for g, p in zip(gdp_total, population)]
    shares = [total * w / sum(weights) for w in weights]
    counts = [int(s) for s in shares]
    order = sorted(range(len(shares)), key=lambda i: (counts[i] - shares[i], i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def default_model(seed: int = 0, researchers: int = 1000, population_scale: float = 0.01, **overrides) -> CommunityModel:
    """Five countries, ``researchers`` spread by GDP^2/population, casual readers at 1/100 of the usual ratios."""
    gdp = [pop * pc for _, _, _, pop, pc, _ in DEFAULT_COUNTRIES]
    pops = [pop for _, _, _, pop, _, _ in DEFAULT_COUNTRIES]
    counts = researchers_from_gdp(researchers, gdp, pops)
    entities = [
        EntitySpec(id=cid, affiliation=aff, domain=dom, researchers=n, robots=2, shared_terminals=1,
                   population=pop, gdp_per_capita=pc, gdp_growth=growth)
        for (cid, aff, dom, pop, pc, growth), n in zip(DEFAULT_COUNTRIES, counts)
    ]
    return CommunityModel(entities=entities, seed=seed, population_scale=population_scale, **overrides)


@dataclass
class EntityYearTruth:
    entity: str
    year: int
    researchers: set[str] = field(default_factory=set)
    frequent_expected: set[str] = field(default_factory=set)
    first_author_count: int = 0
    R: set[str] = field(default_factory=set)
    P_first: set[str] = field(default_factory=set)
    P_any: set[str] = field(default_factory=set)
    C: set[str] = field(default_factory=set)
    download_events: int = 0
    iau_members: int = 0
    population: float = 0.0
    gdp_per_capita: float = 0.0
    gdp_total: float = 0.0

    def to_json(self, overlap_probability: float) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = sorted(v) if isinstance(v, set) else v
        out["overlap_probability"] = overlap_probability
        return out


@dataclass
class _Researcher:
    uid: str
    name: str
    home: int
    members: frozenset[int]
    affiliation: str
    start: int
    ip: str
    host: str
    agent: str
    rates: dict[int, int] = field(default_factory=dict)
    downloads: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class _Plan:
    ids: list[str]
    years: np.ndarray
    journals: list[str]
    authors: list[tuple[Author, ...]]
    first_researcher: np.ndarray
    is_main: np.ndarray
    by_year_main: dict[int, np.ndarray]
    by_year_other: dict[int, np.ndarray]
    researchers: list[_Researcher]
    coauthor_researchers: list[tuple[int, ...]]


@dataclass
class GroundTruth:
    model: CommunityModel
    entries: dict[tuple[str, int], EntityYearTruth] = field(default_factory=dict)
    download_scale: float = 0.0
    plan: _Plan | None = field(default=None, repr=False, compare=False)
    corpus_done: bool = False

    def is_empty(self) -> bool:
        return all(not (t.researchers or t.R or t.P_first or t.P_any or t.C) for t in self.entries.values())

    def planted_correlation(self) -> float:
        keys = sorted(self.entries)
        return pearson_r([len(self.entries[k].frequent_expected) for k in keys],
                         [self.entries[k].first_author_count for k in keys])

    def dump(self) -> str:
        p = self.model.citation_follows_download
        return "".join(
            json.dumps(self.entries[k].to_json(p), sort_keys=True, separators=(",", ":")) + "\n"
            for k in sorted(self.entries)
        )

    def aux_series(self) -> list[AuxSeries]:
        out: dict[tuple[str, AuxKind], AuxSeries] = {}
        for (eid, year), t in sorted(self.entries.items()):
            values = {AuxKind.POPULATION: t.population, AuxKind.GDP_PER_CAPITA: t.gdp_per_capita,
                      AuxKind.GDP_TOTAL: t.gdp_total}
            spec = next(e for e in self.model.entities if e.id == eid)
            if spec.kind == "country":
                values[AuxKind.IAU_MEMBERS] = t.iau_members
            for kind, v in values.items():
                out.setdefault((eid, kind), AuxSeries(eid, kind)).values[year] = v
        return list(out.values())


def _ip(base: int, offset: int) -> str:
    n = base + offset
    return f"{(n >> 24) & 255}.{(n >> 16) & 255}.{(n >> 8) & 255}.{n & 255}"


_IP_BASE = {"researcher": 131 << 24, "amateur": 84 << 24, "lay": 82 << 24, "terminal": 130 << 24,
            "robot": 40 << 24, "robot_block": (66 << 24) | (249 << 16) | (64 << 8)}


def _bibstem(journal: str) -> str:
    return (journal.replace("&", "+") + ".....")[:5]


def _draw_rate(rng: np.random.Generator, model: CommunityModel) -> int:
    lo, hi = model.rate_bounds
    mu = math.log(model.median_downloads)
    if model.tail_mass and rng.random() < model.tail_mass:
        if lo > 1 and rng.random() < 0.5:
            return int(rng.integers(max(1, lo // 5), lo))
        return int(rng.integers(hi + 1, hi + hi // 2 + 2))
    # inverse-CDF draw from the log-normal truncated to the rounding cells of [lo, hi]
    if model.rate_sigma == 0:
        return min(hi, max(lo, int(round(model.median_downloads))))
    dist = NormalDist(mu, model.rate_sigma)
    u = rng.random()
    a = dist.cdf(math.log(lo - 0.5)) if lo > 0.5 else 0.0
    b = dist.cdf(math.log(hi + 0.5))
    q = a + (b - a) * u
    if not 0.0 < q < 1.0:
        return lo if q <= 0.0 else hi
    return min(hi, max(lo, int(round(math.exp(dist.inv_cdf(q))))))


def _drift(model: CommunityModel, year: int) -> float:
    lo, hi = model.years
    t = 0.0 if hi == lo else (year - lo) / (hi - lo)
    a, b = model.iau_drift
    return a + (b - a) * t


class _Generator:
    """Holds the random streams and the publication plan for one model."""

    def __init__(self, model: CommunityModel):
        self.model = model
        plan_ss, log_ss, self._ref_ss = np.random.SeedSequence(model.seed).spawn(3)
        self.rng_plan = np.random.default_rng(plan_ss)
        self.rng_log = np.random.default_rng(log_ss)
        self.rng_ref = np.random.default_rng(self._ref_ss)
        self.first_year, self.last_year = model.years

    # -- population and publication plan -------------------------------------------------
    def _members(self, home: int) -> frozenset[int]:
        specs = self.model.entities
        h = specs[home]
        return frozenset(i for i, e in enumerate(specs)
                         if i == home or (e.kind == "country" and e.id == h.country))

    def plan(self) -> _Plan:
        m, rng = self.model, self.rng_plan
        specs = m.entities
        researchers: list[_Researcher] = []
        for ei, spec in enumerate(specs):
            members = self._members(ei)
            aff_parts = [specs[i].affiliation for i in sorted(members, key=lambda i: specs[i].kind != "institute")]
            order = rng.permutation(spec.researchers)
            for j in range(spec.researchers):
                start = next((y for y in range(self.first_year, self.last_year + 1)
                              if order[j] < round(spec.researchers * _drift(m, y))), self.last_year)
                rid = len(researchers)
                researchers.append(_Researcher(
                    uid=f"r-{spec.id}-{j:05d}",
                    name=f"Researcher {spec.id}-{j:05d}",
                    home=ei,
                    members=members,
                    affiliation=f"Department {j % 7 + 1}, " + ", ".join(aff_parts),
                    start=start,
                    ip=_ip(_IP_BASE["researcher"], (ei << 16) + j),
                    host=f"ws{j}.inst{j % 3}.{spec.domain}",
                    agent=HUMAN_AGENTS[rid % len(HUMAN_AGENTS)],
                ))
        for r in researchers:
            for y in range(max(r.start, self.first_year), self.last_year + 1):
                r.rates[y] = _draw_rate(rng, m)

        ids: list[str] = []
        years: list[int] = []
        journals: list[str] = []
        authors: list[tuple[Author, ...]] = []
        first_researcher: list[int] = []
        coauthor_researchers: list[tuple[int, ...]] = []
        seq = 0
        n_years = self.last_year + 1 - m.window_start
        a, b = m.background_papers
        for k, y in enumerate(range(m.window_start, self.last_year + 2)):
            n_bg = int(round(a + (b - a) * k / max(1, n_years)))
            main = rng.random(n_bg) < m.background_main_share
            jm = rng.integers(0, len(MAIN_JOURNAL_ORDER), n_bg)
            jo = rng.integers(0, len(OTHER_JOURNALS), n_bg)
            n_auth = 1 + rng.poisson(m.coauthors_mean, n_bg)
            for i in range(n_bg):
                journal = MAIN_JOURNAL_ORDER[jm[i]] if main[i] else OTHER_JOURNALS[jo[i]]
                ids.append(f"{y}{_bibstem(journal)}{seq:08d}B")
                seq += 1
                years.append(y)
                journals.append(journal)
                authors.append(tuple(
                    Author(f"Author {int(x)}", f"Research Institute {int(x) % 500}, Farland")
                    for x in rng.integers(0, 200000, n_auth[i])
                ))
                first_researcher.append(-1)
                coauthor_researchers.append(())
            if not self.first_year <= y <= self.last_year:
                continue
            active = [i for i, r in enumerate(researchers) if y in r.rates]
            for ri in active:
                r = researchers[ri]
                for _ in range(int(rng.poisson(m.first_author_rate))):
                    journal = (MAIN_JOURNAL_ORDER[rng.integers(0, 6)] if rng.random() < 0.85
                               else OTHER_JOURNALS[rng.integers(0, len(OTHER_JOURNALS))])
                    ids.append(f"{y}{_bibstem(journal)}{seq:08d}{r.uid[2:4]}")
                    seq += 1
                    years.append(y)
                    journals.append(journal)
                    co = []
                    co_r = []
                    for _ in range(int(rng.poisson(m.coauthors_mean))):
                        if active and rng.random() < m.coauthor_researcher_share:
                            cj = active[int(rng.integers(0, len(active)))]
                            if cj != ri and cj not in co_r:
                                co_r.append(cj)
                                co.append(Author(researchers[cj].name, researchers[cj].affiliation))
                        else:
                            x = int(rng.integers(0, 200000))
                            co.append(Author(f"Author {x}", f"Research Institute {x % 500}, Farland"))
                    authors.append((Author(r.name, r.affiliation), *co))
                    first_researcher.append(ri)
                    coauthor_researchers.append(tuple(co_r))
        years_arr = np.array(years, dtype=np.int64)
        is_main = np.array([j in MAIN_JOURNALS for j in journals], dtype=bool)
        by_year_main = {y: np.flatnonzero((years_arr == y) & is_main) for y in range(m.window_start, self.last_year + 2)}
        by_year_other = {y: np.flatnonzero((years_arr == y) & ~is_main) for y in range(m.window_start, self.last_year + 2)}
        return _Plan(ids, years_arr, journals, authors, np.array(first_researcher, dtype=np.int64), is_main,
                     by_year_main, by_year_other, researchers, coauthor_researchers)

    # -- clickstream ---------------------------------------------------------------------
    def _pick(self, plan: _Plan, year: int, n: int, main: bool, recency: bool = True) -> np.ndarray:
        rng = self.rng_log
        table = plan.by_year_main if main else plan.by_year_other
        ys = [y for y in range(self.model.window_start, year + 1) if len(table[y])]
        if n == 0 or not ys:
            return np.empty(0, dtype=np.int64)
        sizes = np.array([len(table[y]) for y in ys], dtype=float)
        w = sizes * (np.exp(-(year - np.array(ys)) / self.model.recency_scale) if recency else 1.0)
        which = rng.choice(len(ys), size=n, p=w / w.sum())
        u = rng.random(n)
        out = np.empty(n, dtype=np.int64)
        for k, y in enumerate(ys):
            sel = which == k
            if sel.any():
                arr = table[y]
                out[sel] = arr[(u[sel] * len(arr)).astype(np.int64)]
        return out

    def _timestamps(self, year: int, n: int) -> list[str]:
        rng = self.rng_log
        start = np.datetime64(f"{year}-01-01T00:00:00")
        span = int((np.datetime64(f"{year + 1}-01-01T00:00:00") - start) / np.timedelta64(1, "s"))
        secs = rng.integers(0, span, n)
        utc = rng.random(n) < self.model.utc_render_share
        local = start + secs.astype("timedelta64[s]")
        as_utc = local + np.timedelta64(5, "h")
        s_local = np.datetime_as_string(local, unit="s")
        s_utc = np.datetime_as_string(as_utc, unit="s")
        return [s_utc[i] + "+00:00" if utc[i] else s_local[i] + "-05:00" for i in range(n)]

    def _channels(self, n: int, share: float) -> np.ndarray:
        return np.where(self.rng_log.random(n) < share, "SEARCH_ENGINE", "DIRECT")

    def _emit(self, out: TextIO, year: int, uid: str, ip: str, hosts: list[str] | str, agent: str,
              actions: list[str], pubs: list[str], channels) -> None:
        ts = self._timestamps(year, len(actions))
        if isinstance(hosts, str):
            out.write("".join(f"{t}\t{uid}\t{ip}\t{hosts}\t{agent}\t{a}\t{p}\t{c}\n"
                              for t, a, p, c in zip(ts, actions, pubs, channels)))
        else:
            out.write("".join(f"{t}\t{uid}\t{ip}\t{h}\t{agent}\t{a}\t{p}\t{c}\n"
                              for t, h, a, p, c in zip(ts, hosts, actions, pubs, channels)))

    def _casual_pubs(self, plan: _Plan, year: int, n: int) -> list[str]:
        n_main = int(self.rng_log.binomial(n, 0.7)) if n else 0
        idx = np.concatenate([self._pick(plan, year, n_main, True), self._pick(plan, year, n - n_main, False)])
        return [plan.ids[i] for i in idx]

    def write_logs(self, plan: _Plan, out: TextIO) -> None:
        m, rng = self.model, self.rng_log
        specs = m.entities
        foreign_hosts = [f"visitor.{e.domain}" for e in specs] + ["wifi.hotel-network.com"]
        for year in range(self.first_year, self.last_year + 1):
            for ri, r in enumerate(plan.researchers):
                n = r.rates.get(year)
                if n is None:
                    continue
                n_ext = int(rng.binomial(n, m.external_download_fraction))
                n_other = int(rng.binomial(n - n_ext, m.nonmain_download_fraction / (1 - m.external_download_fraction)))
                main_idx = self._pick(plan, year, n - n_ext - n_other, True)
                other_idx = self._pick(plan, year, n_other, False)
                r.downloads[year] = main_idx
                dl = [plan.ids[i] for i in main_idx] + [plan.ids[i] for i in other_idx]
                dl += [f"arXiv:{year % 100:02d}{int(x):02d}.{int(z):05d}"
                       for x, z in zip(rng.integers(1, 13, n_ext), rng.integers(0, 99999, n_ext))]
                ratio = rng.uniform(*m.read_download_ratio)
                n_views = int(round((ratio - 1) * n))
                views = self._casual_pubs(plan, year, n_views)
                n_oth = int(rng.binomial(n + n_views, m.other_action_share))
                actions = ["DOWNLOAD"] * n + ["ABSTRACT_VIEW"] * n_views + ["OTHER"] * n_oth
                pubs = dl + views + [""] * n_oth
                total = len(actions)
                n_foreign = min(int(rng.binomial(total, m.mobility)), (total - 1) // 3)
                hosts = [r.host] * total
                if n_foreign and len(foreign_hosts) > 1:
                    choices = [h for k, h in enumerate(foreign_hosts) if k != r.home]
                    for pos, k in zip(rng.choice(total, n_foreign, replace=False),
                                      rng.integers(0, len(choices), n_foreign)):
                        hosts[pos] = choices[k]
                self._emit(out, year, r.uid, r.ip, hosts, r.agent, actions, pubs,
                           self._channels(total, m.search_engine_share_researchers))
            for ei, spec in enumerate(specs):
                self._write_casual(plan, out, year, ei, spec)

    def _write_casual(self, plan: _Plan, out: TextIO, year: int, ei: int, spec: EntitySpec) -> None:
        m, rng = self.model, self.rng_log
        lo, hi = m.rate_bounds
        tld = spec.domain.rpartition(".")[2]
        n_amateur = int(round(spec.researchers * m.amateur_ratio * m.population_scale))
        n_lay = int(round(spec.researchers * m.lay_ratio * m.population_scale))
        n_pract = int(round(spec.researchers * m.practitioner_ratio * m.population_scale))
        agent = HUMAN_AGENTS[ei % len(HUMAN_AGENTS)]
        for j in range(n_amateur + n_pract):
            if rng.random() >= m.amateur_active:
                continue
            n_dl = min(int(rng.poisson(m.amateur_downloads)), lo - 1)
            n_v = int(rng.poisson(m.amateur_views))
            if n_dl + n_v == 0:
                continue
            kind = "a" if j < n_amateur else "p"
            self._emit(out, year, f"{kind}-{spec.id}-{j:06d}", _ip(_IP_BASE["amateur"], (ei << 20) + j),
                       f"dsl{j}.isp.{tld}", agent, ["DOWNLOAD"] * n_dl + ["ABSTRACT_VIEW"] * n_v,
                       self._casual_pubs(plan, year, n_dl + n_v), self._channels(n_dl + n_v, m.search_engine_share_casual))
        active = np.flatnonzero(rng.random(n_lay) < m.lay_active)
        if len(active):
            k = 1 + rng.poisson(m.lay_extra_interactions, len(active))
            total = int(k.sum())
            is_dl = rng.random(total) < m.lay_download_probability
            unid = rng.random(total) < m.lay_unidentified
            pubs = self._casual_pubs(plan, year, total)
            channels = self._channels(total, m.search_engine_share_casual)
            ts = self._timestamps(year, total)
            lines = []
            pos = 0
            for j, kk in zip(active, k):
                uid = f"l-{spec.id}-{j:07d}"
                host = f"cpe{j}.isp.{tld}" if j % 4 else f"cpe{j}.cable-provider.com"
                ip = _ip(_IP_BASE["lay"], (ei << 20) + int(j))
                for q in range(pos, pos + kk):
                    lines.append(f"{ts[q]}\t{'' if unid[q] else uid}\t{ip}\t{host}\t{agent}\t"
                                 f"{'DOWNLOAD' if is_dl[q] else 'ABSTRACT_VIEW'}\t{pubs[q]}\t{channels[q]}\n")
                pos += kk
            out.write("".join(lines))
        for j in range(spec.shared_terminals):
            n_dl = int(rng.integers(hi + 1, 2 * hi + 1))
            n_v = n_dl // 2
            self._emit(out, year, f"t-{spec.id}-{j:03d}", _ip(_IP_BASE["terminal"], (ei << 8) + j),
                       f"library{j}.{spec.domain}", agent, ["DOWNLOAD"] * n_dl + ["ABSTRACT_VIEW"] * n_v,
                       self._casual_pubs(plan, year, n_dl + n_v), ["DIRECT"] * (n_dl + n_v))
        for j in range(spec.robots):
            n = m.robot_lines
            by_block = j % 2 == 1
            ip = _ip(_IP_BASE["robot_block"], (ei * 97 + j) % 8192) if by_block else _ip(_IP_BASE["robot"], (ei << 8) + j)
            agent_r = "Mozilla/5.0 (compatible)" if by_block else ROBOT_AGENT
            actions = list(rng.choice(["DOWNLOAD", "ABSTRACT_VIEW"], n, p=[0.5, 0.5]))
            self._emit(out, year, f"b-{spec.id}-{j:03d}", ip, f"crawl{j}.{spec.domain}", agent_r, actions,
                       self._casual_pubs(plan, year, n), ["UNKNOWN"] * n)

    # -- references ------------------------------------------------------------------------
    def references(self, plan: _Plan) -> list[tuple[str, ...]]:
        self.rng_ref = np.random.default_rng(self._ref_ss)
        m, rng = self.model, self.rng_ref
        refs: list[tuple[str, ...]] = []
        main_pool_cache: dict[int, np.ndarray] = {}
        recent_cache: dict[int, tuple[list[int], np.ndarray]] = {}

        def main_pool(y: int) -> np.ndarray:
            if y not in main_pool_cache:
                main_pool_cache[y] = np.concatenate([plan.by_year_main[v] for v in range(m.window_start, y + 1)])
            return main_pool_cache[y]

        def recent(y: int) -> tuple[list[int], np.ndarray]:
            # publication years a background paper cites, with a recency-weighted CDF
            if y not in recent_cache:
                ys = [v for v in range(max(m.window_start, y - 40), y + 1) if len(plan.by_year_main[v])]
                w = np.array([len(plan.by_year_main[v]) * math.exp(-(y - v) / m.recency_scale) for v in ys])
                recent_cache[y] = (ys, np.cumsum(w) / w.sum() if ys else w)
            return recent_cache[y]

        for i, pid in enumerate(plan.ids):
            y = int(plan.years[i])
            ri = int(plan.first_researcher[i])
            chosen: dict[int, None] = {}
            if ri < 0:
                n = int(rng.poisson(m.background_references_mean))
                lower_ys, cdf = recent(y)
                if lower_ys and n:
                    picks = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(lower_ys) - 1)
                    for k, u in zip(picks, rng.random(n)):
                        arr = plan.by_year_main[lower_ys[k]]
                        j = int(arr[int(u * len(arr))])
                        if j != i:
                            chosen[j] = None
            else:
                n = max(1, int(rng.poisson(m.references_mean)))
                pool = main_pool(y)
                own = plan.researchers[ri].downloads.get(y)
                own = np.unique(own) if own is not None and len(own) else None
                for _ in range(n):
                    if own is not None and rng.random() < m.citation_follows_download:
                        j = int(own[rng.integers(0, len(own))])
                    else:
                        j = int(pool[rng.integers(0, len(pool))])
                    if j != i:
                        chosen[j] = None
            out = [plan.ids[j] for j in chosen]
            if rng.random() < 0.3:
                other = self._other_ref(plan, y)
                if other is not None and other != pid:
                    out.append(other)
            if rng.random() < 0.1:
                out.append(f"{y - 1}LostJ{int(rng.integers(0, 10**6)):08d}X")
            refs.append(tuple(out))
        return refs

    def _other_ref(self, plan: _Plan, y: int) -> str | None:
        ys = [v for v in range(self.model.window_start, y + 1) if len(plan.by_year_other[v])]
        if not ys:
            return None
        arr = plan.by_year_other[ys[int(self.rng_ref.integers(0, len(ys)))]]
        return plan.ids[int(arr[self.rng_ref.integers(0, len(arr))])]


def _truth_entries(model: CommunityModel, plan: _Plan) -> tuple[dict[tuple[str, int], EntityYearTruth], float]:
    lo, hi = model.rate_bounds
    entries: dict[tuple[str, int], EntityYearTruth] = {}
    # per researcher, entity membership drives every planted set
    pub_members_first: dict[int, frozenset[int]] = {}
    pub_members_any: dict[int, set[int]] = {}
    for i in range(len(plan.ids)):
        ri = int(plan.first_researcher[i])
        if ri < 0 or not plan.is_main[i]:
            continue
        first = plan.researchers[ri].members
        pub_members_first[i] = first
        any_members = set(first)
        for cj in plan.coauthor_researchers[i]:
            any_members |= plan.researchers[cj].members
        pub_members_any[i] = any_members
    gdp_tot, pops = [], []
    for ei, spec in enumerate(model.entities):
        for year in range(model.years[0], model.years[1] + 1):
            t = EntityYearTruth(spec.id, year)
            gpc = spec.gdp_per_capita * (1 + spec.gdp_growth) ** (year - model.years[0])
            t.population, t.gdp_per_capita, t.gdp_total = spec.population, gpc, gpc * spec.population
            members = [r for r in plan.researchers if ei in r.members]
            t.researchers = {r.uid for r in members if year in r.rates}
            t.iau_members = int(round(len(members) * _drift(model, year)))
            for r in members:
                rate = r.rates.get(year)
                if rate is not None and lo <= rate <= hi:
                    t.frequent_expected.add(r.uid)
                    idx = r.downloads.get(year)
                    if idx is not None:
                        t.R.update(plan.ids[j] for j in idx)
                        t.download_events += len(idx)
            firsts = set()
            for i, mem in pub_members_first.items():
                if plan.years[i] == year and ei in mem:
                    t.P_first.add(plan.ids[i])
                    firsts.add(int(plan.first_researcher[i]))
            t.first_author_count = len(firsts)
            t.P_any = {plan.ids[i] for i, mem in pub_members_any.items() if plan.years[i] == year and ei in mem}
            entries[(spec.id, year)] = t
        gdp_tot.append(spec.gdp_per_capita * spec.population)
        pops.append(spec.population)
    n_total = sum(s.researchers for s in model.entities)
    weights = sum(g * g / p for g, p in zip(gdp_tot, pops))
    scale = n_total / weights if weights else 0.0
    return entries, scale


def write_logs(model: CommunityModel, out: TextIO) -> GroundTruth:
    """Stream the synthetic clickstream to ``out`` and return the planted truth (without C)."""
    gen = _Generator(model)
    plan = gen.plan()
    out.write(f"# synthetic clickstream, seed {model.seed}\n")
    gen.write_logs(plan, out)
    entries, scale = _truth_entries(model, plan)
    return GroundTruth(model, entries, scale, plan)


def generate_logs(model: CommunityModel) -> tuple[str, GroundTruth]:
    buf = io.StringIO()
    truth = write_logs(model, buf)
    return buf.getvalue(), truth


def generate_corpus(model: CommunityModel, truth: GroundTruth) -> tuple[str, GroundTruth]:
    """Draw reference lists and emit the corpus; the returned truth has C filled in."""
    plan = truth.plan
    if plan is None:
        raise ValueError("ground truth carries no publication plan; run generate_logs first")
    refs = _Generator(model).references(plan)
    pubs = [
        Publication(plan.ids[i], int(plan.years[i]), plan.journals[i],
                    plan.journals[i] in MAIN_JOURNALS or i % 2 == 0, plan.authors[i], refs[i])
        for i in range(len(plan.ids))
    ]
    index = {pid: i for i, pid in enumerate(plan.ids)}
    entries = {}
    for key, t in truth.entries.items():
        c = set()
        for pid in t.P_first:
            for ref in refs[index[pid]]:
                j = index.get(ref)
                if j is not None and plan.is_main[j]:
                    c.add(ref)
        entries[key] = replace(t, C=c)
    return dump_corpus(pubs), GroundTruth(model, entries, truth.download_scale, plan, corpus_done=True)


@dataclass
class SynthOutputs:
    logs: Path
    corpus: Path
    truth: Path
    policy: Path
    entity_map: Path
    aux: Path
    model: Path
    config: Path


def write_synthetic_dataset(model: CommunityModel, out_dir: str | Path) -> tuple[SynthOutputs, GroundTruth]:
    """Write logs, corpus, ground truth, robot policy, entity map, aux series and a run config."""
    from .indicators import dump_aux_series

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = SynthOutputs(
        logs=out_dir / "logs.tsv", corpus=out_dir / "corpus.jsonl", truth=out_dir / "ground_truth.jsonl",
        policy=out_dir / "robots.txt", entity_map=out_dir / "entity_map.txt", aux=out_dir / "aux_series.csv",
        model=out_dir / "model.yaml", config=out_dir / "config.yaml",
    )
    with open(paths.logs, "w", encoding="utf-8", newline="\n") as fh:
        truth = write_logs(model, fh)
    corpus_text, truth = generate_corpus(model, truth)
    paths.corpus.write_text(corpus_text, encoding="utf-8", newline="\n")
    paths.truth.write_text(truth.dump(), encoding="utf-8", newline="\n")
    paths.policy.write_text(model.policy().dump(), encoding="utf-8", newline="\n")
    paths.entity_map.write_text(model.entity_map().dump(), encoding="utf-8", newline="\n")
    paths.aux.write_text(dump_aux_series(truth.aux_series()), encoding="utf-8", newline="\n")
    paths.model.write_text(model.to_yaml(), encoding="utf-8", newline="\n")
    config = {
        "logs": [paths.logs.name], "corpus": paths.corpus.name, "robot_policy": paths.policy.name,
        "entity_map": paths.entity_map.name, "aux_series": paths.aux.name,
        "years": list(model.years), "window_start": model.window_start,
        "lower": model.rate_bounds[0], "upper": model.rate_bounds[1], "seed": model.seed,
        "entities": [{"id": e.id, "kind": e.kind, "affiliation": e.affiliation} for e in model.entities],
    }
    paths.config.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8", newline="\n")
    return paths, truth
