"""Publication corpus: loading, bibliography queries and citation inversion."""
from __future__ import annotations

import bisect
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

YEAR_RANGE = (1800, 2100)


class CorpusError(ValueError):
    """Raised for corpus problems; ``code`` is MALFORMED_LINE, DUPLICATE_PUB_ID or UNKNOWN_PUB_ID."""

    def __init__(self, code: str, message: str, line_no: int | None = None):
        self.code = code
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{code}: {prefix}{message}")


@dataclass(frozen=True)
class Author:
    name: str
    aff: str = ""


@dataclass(frozen=True)
class Publication:
    pub_id: str
    year: int
    journal: str
    refereed: bool
    authors: tuple[Author, ...]
    references: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.pub_id:
            raise ValueError("empty pub_id")
        if not self.authors:
            raise ValueError(f"{self.pub_id}: no authors")
        if not YEAR_RANGE[0] <= self.year <= YEAR_RANGE[1]:
            raise ValueError(f"{self.pub_id}: year {self.year} outside {YEAR_RANGE}")

    @classmethod
    def from_json(cls, obj: Mapping) -> "Publication":
        year = obj["year"]
        if not isinstance(year, int) or isinstance(year, bool):
            raise ValueError(f"year must be an integer, got {year!r}")
        return cls(
            pub_id=str(obj["pub_id"]),
            year=year,
            journal=str(obj["journal"]),
            refereed=bool(obj["refereed"]),
            authors=tuple(Author(a["name"], a.get("aff", "")) for a in obj["authors"]),
            references=tuple(obj.get("references", ())),
        )

    def to_json(self) -> dict:
        return {
            "pub_id": self.pub_id,
            "year": self.year,
            "journal": self.journal,
            "refereed": self.refereed,
            "authors": [{"name": a.name, "aff": a.aff} for a in self.authors],
            "references": list(self.references),
        }


@dataclass(frozen=True)
class JournalSet:
    name: str
    members: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise ValueError(f"journal set {self.name!r} is empty")

    def __contains__(self, journal: str) -> bool:
        return journal in self.members


MAIN_JOURNALS = JournalSet("main", frozenset({"ApJ", "ApJL", "ApJS", "AJ", "MNRAS", "A&A"}))


@dataclass
class Corpus:
    """Immutable-after-construction collection of publications."""

    publications: dict[str, Publication] = field(default_factory=dict)

    def __post_init__(self):
        citing_years: dict[str, list[int]] = defaultdict(list)
        dangling = 0
        for pub in self.publications.values():
            for ref in set(pub.references):
                if ref in self.publications:
                    citing_years[ref].append(pub.year)
                else:
                    dangling += 1
        for years in citing_years.values():
            years.sort()
        self._citing_years = dict(citing_years)
        self.dangling_references = dangling
        by_year: dict[int, list[tuple[Publication, tuple[str, ...]]]] = defaultdict(list)
        for pub in self.publications.values():
            by_year[pub.year].append((pub, tuple(a.aff.lower() for a in pub.authors)))
        self._by_year = dict(by_year)

    @classmethod
    def from_publications(cls, pubs: Iterable[Publication]) -> "Corpus":
        table: dict[str, Publication] = {}
        for pub in pubs:
            if pub.pub_id in table:
                raise CorpusError("DUPLICATE_PUB_ID", pub.pub_id)
            table[pub.pub_id] = pub
        return cls(table)

    def __len__(self) -> int:
        return len(self.publications)

    def __contains__(self, pub_id: str) -> bool:
        return pub_id in self.publications

    def __getitem__(self, pub_id: str) -> Publication:
        return self.publications[pub_id]

    def journal_of(self, pub_id: str) -> str | None:
        pub = self.publications.get(pub_id)
        return pub.journal if pub else None

    def in_journals(self, journals: JournalSet | None) -> list[Publication]:
        return [p for p in self.publications.values() if journals is None or p.journal in journals]

    def published_in(self, year: int) -> list[Publication]:
        return [pub for pub, _ in self._by_year.get(year, ())]

    def query_bibliography(
        self,
        affiliation: str,
        years: tuple[int, int],
        first_author_only: bool = False,
        journals: JournalSet | None = None,
        refereed_only: bool = False,
    ) -> set[str]:
        lo, hi = years
        if lo > hi:
            raise ValueError(f"empty year range {years}")
        needle = affiliation.lower()
        out = set()
        for year in sorted(y for y in self._by_year if lo <= y <= hi):
            for pub, affs in self._by_year[year]:
                if journals is not None and pub.journal not in journals:
                    continue
                if refereed_only and not pub.refereed:
                    continue
                if first_author_only:
                    affs = affs[:1]
                if any(needle in a for a in affs):
                    out.add(pub.pub_id)
        return out

    def cited_set(self, pubs: Iterable[str], journals: JournalSet | None = None) -> set[str]:
        out = set()
        for pub_id in pubs:
            for ref in self.publications[pub_id].references:
                target = self.publications.get(ref)
                if target is not None and (journals is None or target.journal in journals):
                    out.add(ref)
        return out

    def year_totals(self, journals: JournalSet | None = None) -> dict[int, int]:
        counts = Counter(p.year for p in self.publications.values() if journals is None or p.journal in journals)
        return dict(sorted(counts.items()))

    def citations_received(self, pub_id: str, up_to_year: int) -> int:
        if pub_id not in self.publications:
            raise CorpusError("UNKNOWN_PUB_ID", pub_id)
        years = self._citing_years.get(pub_id)
        if not years:
            return 0
        return bisect.bisect_right(years, up_to_year)


def corpus_year_totals(corpus: Corpus, journals: JournalSet | None) -> dict[int, int]:
    return corpus.year_totals(journals)


def parse_corpus(lines: Iterable[str]) -> Corpus:
    table: dict[str, Publication] = {}
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            pub = Publication.from_json(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorpusError("MALFORMED_LINE", str(exc), line_no) from None
        if pub.pub_id in table:
            raise CorpusError("DUPLICATE_PUB_ID", pub.pub_id, line_no)
        table[pub.pub_id] = pub
    return Corpus(table)


def load_corpus(path: str | Path) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def dump_corpus(pubs: Iterable[Publication]) -> str:
    return "".join(json.dumps(p.to_json(), ensure_ascii=False, separators=(",", ":")) + "\n" for p in pubs)
