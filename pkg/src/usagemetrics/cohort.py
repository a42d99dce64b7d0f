"""Per-user yearly download tallies and frequency-cohort classification.

Aggregates are mergeable: two partial :class:`UsageAggregate` objects built
from disjoint shards combine by pointwise addition, so the result does not
depend on shard order or grouping.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .clickstream import UNIDENTIFIED, Action, LogRecord, attribute_country
from .corpus import Corpus, JournalSet
from .countries import UNKNOWN, is_country_code


class CohortCategory(str, enum.Enum):
    ABSTRACT_ONLY = "ABSTRACT_ONLY"
    INFREQUENT = "INFREQUENT"
    FREQUENT = "FREQUENT"
    REMAINDER = "REMAINDER"


@dataclass(frozen=True)
class CohortConfig:
    lower: int = 100
    upper: int = 1000

    def __post_init__(self):
        if not 1 <= self.lower <= self.upper:
            raise ValueError(f"need 1 <= lower <= upper, got lower={self.lower} upper={self.upper}")


@dataclass(frozen=True)
class Entity:
    """A country (matched on request-origin country) or an institute (matched via an entity map)."""

    id: str
    kind: str = "country"
    affiliation: str = ""

    def __post_init__(self):
        if self.kind not in ("country", "institute"):
            raise ValueError(f"entity kind must be 'country' or 'institute', got {self.kind!r}")


def _majority(votes: dict[str, int]) -> str:
    best, best_n = UNKNOWN, 0
    for key in sorted(votes):
        if key != UNKNOWN and votes[key] > best_n:
            best, best_n = key, votes[key]
    return best


@dataclass(slots=True)
class UserYearStats:
    user_id: str
    year: int
    interactions: int = 0
    downloads_total: int = 0
    downloads_in_set: dict[str, int] = field(default_factory=dict)
    download_counts: dict[str, int] = field(default_factory=dict)
    country_votes: dict[str, int] = field(default_factory=dict)
    entity_votes: dict[str, int] = field(default_factory=dict)

    @property
    def downloaded_pubs(self) -> set[str]:
        return set(self.download_counts)

    @property
    def country(self) -> str:
        """Most frequent attributable origin country; ties go to the smallest code."""
        return _majority(self.country_votes)

    @property
    def entity(self) -> str:
        return _majority(self.entity_votes)

    def merge(self, other: "UserYearStats") -> None:
        self.interactions += other.interactions
        self.downloads_total += other.downloads_total
        for mine, theirs in (
            (self.downloads_in_set, other.downloads_in_set),
            (self.download_counts, other.download_counts),
            (self.country_votes, other.country_votes),
            (self.entity_votes, other.entity_votes),
        ):
            for k, v in theirs.items():
                mine[k] = mine.get(k, 0) + v


class EntityMap:
    """Hostname-suffix to entity-id mapping; the longest matching suffix wins."""

    def __init__(self, suffixes: dict[str, str] | None = None):
        self.suffixes = {k.lower().strip("."): v for k, v in (suffixes or {}).items()}
        self._cache: dict[str, str] = {}

    def __len__(self) -> int:
        return len(self.suffixes)

    def entities(self) -> set[str]:
        return set(self.suffixes.values())

    def lookup(self, hostname: str) -> str:
        hit = self._cache.get(hostname)
        if hit is not None:
            return hit
        labels = hostname.lower().rstrip(".").split(".")
        result = UNKNOWN
        for i in range(len(labels)):
            candidate = ".".join(labels[i:])
            if candidate in self.suffixes:
                result = self.suffixes[candidate]
                break
        self._cache[hostname] = result
        return result

    @classmethod
    def parse(cls, text: str) -> "EntityMap":
        table = {}
        for line_no, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"entity map line {line_no}: expected '<hostname-suffix> <entity-id>'")
            table[parts[0]] = parts[1]
        return cls(table)

    @classmethod
    def load(cls, path: str | Path) -> "EntityMap":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dump(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in sorted(self.suffixes.items()))


def journal_membership(corpus: Corpus | None,
                       journals: Sequence[JournalSet]) -> dict[str, tuple[tuple[str, ...], int]]:
    """Map each corpus publication in at least one journal set to (set names, publication year)."""
    if corpus is None or not journals:
        return {}
    out = {}
    for pub in corpus.publications.values():
        names = tuple(s.name for s in journals if pub.journal in s)
        if names:
            out[pub.pub_id] = (names, pub.year)
    return out


class UsageAggregate:
    """All :class:`UserYearStats` for a log, keyed by ``(user_id, year)``.

    ``channel_downloads`` counts journal-set downloads by every identified user,
    keyed by ``(year, channel, publication year)``.
    """

    def __init__(self, journals: Sequence[JournalSet] = (), corpus: Corpus | None = None,
                 entity_map: EntityMap | None = None,
                 pub_sets: dict[str, tuple[tuple[str, ...], int]] | None = None):
        self.journals = tuple(journals)
        self.entity_map = entity_map
        self.stats: dict[tuple[str, int], UserYearStats] = {}
        self.skipped_unidentified = 0
        self.channel_downloads: dict[tuple[int, str, int], int] = {}
        self._pub_sets = pub_sets if pub_sets is not None else journal_membership(corpus, journals)
        self._countries: dict[str, str] = {}
        self._by_year: dict[int, list[UserYearStats]] | None = None

    def add(self, record: LogRecord) -> None:
        if record.user_id == UNIDENTIFIED:
            self.skipped_unidentified += 1
            return
        key = (record.user_id, record.year)
        st = self.stats.get(key)
        if st is None:
            st = self.stats[key] = UserYearStats(record.user_id, key[1])
            self._by_year = None
        st.interactions += 1
        host = record.hostname
        country = self._countries.get(host)
        if country is None:
            country = self._countries[host] = attribute_country(host)
        st.country_votes[country] = st.country_votes.get(country, 0) + 1
        if self.entity_map is not None:
            ent = self.entity_map.lookup(host)
            st.entity_votes[ent] = st.entity_votes.get(ent, 0) + 1
        if record.action is Action.DOWNLOAD:
            st.downloads_total += 1
            pub = record.pub_id
            st.download_counts[pub] = st.download_counts.get(pub, 0) + 1
            member = self._pub_sets.get(pub)
            if member is not None:
                for name in member[0]:
                    st.downloads_in_set[name] = st.downloads_in_set.get(name, 0) + 1
                ck = (key[1], record.channel.value, member[1])
                self.channel_downloads[ck] = self.channel_downloads.get(ck, 0) + 1

    def merge(self, other: "UsageAggregate") -> "UsageAggregate":
        self.skipped_unidentified += other.skipped_unidentified
        self._by_year = None
        for k, v in other.channel_downloads.items():
            self.channel_downloads[k] = self.channel_downloads.get(k, 0) + v
        for key, st in other.stats.items():
            mine = self.stats.get(key)
            if mine is None:
                mine = self.stats[key] = UserYearStats(st.user_id, st.year)
            mine.merge(st)
        return self

    def _index(self) -> dict[int, list[UserYearStats]]:
        if self._by_year is None:
            index: dict[int, list[UserYearStats]] = {}
            for (_, y), st in self.stats.items():
                index.setdefault(y, []).append(st)
            self._by_year = index
        return self._by_year

    def years(self) -> list[int]:
        return sorted(self._index())

    def for_year(self, year: int) -> list[UserYearStats]:
        return self._index().get(year, [])

    def __eq__(self, other) -> bool:
        return (isinstance(other, UsageAggregate) and self.stats == other.stats
                and self.skipped_unidentified == other.skipped_unidentified
                and self.channel_downloads == other.channel_downloads)


def accumulate(records: Iterable[LogRecord], journals: Sequence[JournalSet] = (),
               corpus: Corpus | None = None, entity_map: EntityMap | None = None) -> UsageAggregate:
    """Tally records (assumed robot-filtered) into per-user-year statistics.

    Only DOWNLOAD actions increment download counts. Downloads of publications
    absent from the corpus count toward ``downloads_total`` but toward no
    journal set. Records with an UNIDENTIFIED user are counted and skipped.
    """
    agg = UsageAggregate(journals, corpus, entity_map)
    for record in records:
        agg.add(record)
    return agg


def restricted_downloads(stats: UserYearStats, journal_restriction: str | None) -> int:
    if journal_restriction is None:
        return stats.downloads_total
    return stats.downloads_in_set.get(journal_restriction, 0)


def classify(stats: UserYearStats, config: CohortConfig = CohortConfig(),
             journal_restriction: str | None = None) -> CohortCategory:
    d = restricted_downloads(stats, journal_restriction)
    if d == 0:
        return CohortCategory.ABSTRACT_ONLY
    if d < config.lower:
        return CohortCategory.INFREQUENT
    if d <= config.upper:
        return CohortCategory.FREQUENT
    return CohortCategory.REMAINDER


@dataclass
class CohortCounts:
    year: int
    counts: dict[CohortCategory, int]
    total: int

    @property
    def downloaders(self) -> int:
        return self.total - self.counts[CohortCategory.ABSTRACT_ONLY]


def cohort_counts(agg: UsageAggregate, year: int, config: CohortConfig = CohortConfig(),
                  journal_restriction: str | None = None) -> CohortCounts:
    counts = {c: 0 for c in CohortCategory}
    users = agg.for_year(year)
    for st in users:
        counts[classify(st, config, journal_restriction)] += 1
    return CohortCounts(year, counts, len(users))


def entity_of(stats: UserYearStats, entity: Entity) -> bool:
    if entity.kind == "country":
        return stats.country == entity.id
    return stats.entity == entity.id


def frequent_users(agg: UsageAggregate, year: int, entity: Entity, config: CohortConfig = CohortConfig(),
                   journal_restriction: str | None = None) -> set[str]:
    return {
        st.user_id for st in agg.for_year(year)
        if classify(st, config, journal_restriction) is CohortCategory.FREQUENT and entity_of(st, entity)
    }


def frequent_by_entity(agg: UsageAggregate, year: int, config: CohortConfig = CohortConfig(),
                       journal_restriction: str | None = None) -> dict[tuple[str, str], list[UserYearStats]]:
    """Group one year's FREQUENT users under ``("country", code)`` and ``("institute", id)`` keys."""
    groups: dict[tuple[str, str], list[UserYearStats]] = {}
    for st in agg.for_year(year):
        if classify(st, config, journal_restriction) is not CohortCategory.FREQUENT:
            continue
        groups.setdefault(("country", st.country), []).append(st)
        if st.entity_votes:
            groups.setdefault(("institute", st.entity), []).append(st)
    return groups


def entity_is_known(entity: Entity, entity_map: EntityMap | None) -> bool:
    if entity.kind == "country":
        return entity.id != UNKNOWN and is_country_code(entity.id)
    return entity_map is not None and entity.id in entity_map.entities()
