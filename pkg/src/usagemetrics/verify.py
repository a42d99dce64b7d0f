"""Compare a pipeline run over synthetic data with the planted ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

from .indicators import pearson_r
from .reports import Analysis
from .synth import GroundTruth

CORRELATION_TOLERANCE = 0.05
QUANTITIES = ("frequent_users", "first_author_count", "R", "P_first", "P_any", "C")


@dataclass
class Mismatch:
    entity: str
    year: int
    quantity: str
    expected: object
    recovered: object

    def describe(self) -> str:
        return f"({self.entity}, {self.year}, {self.quantity})"


@dataclass
class VerifyResult:
    checked: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)
    planted_r: float | None = None
    recovered_r: float | None = None
    overlap_wins: int = 0
    overlap_compared: int = 0

    @property
    def correlation_ok(self) -> bool:
        if self.planted_r is None or self.recovered_r is None:
            return self.planted_r is None and self.recovered_r is None
        return abs(self.planted_r - self.recovered_r) <= CORRELATION_TOLERANCE

    @property
    def ok(self) -> bool:
        return not self.mismatches and self.correlation_ok


def _safe_r(xs, ys) -> float | None:
    try:
        return pearson_r(xs, ys)
    except ValueError:
        return None


def verify_analysis(a: Analysis, truth: GroundTruth) -> VerifyResult:
    """Check every entity-year of ``truth`` in sorted (entity, year) order."""
    result = VerifyResult()
    by_id = {e.id: e for e in a.entities}
    freq_counts, first_counts = [], []
    for entity_id, year in sorted(truth.entries):
        t = truth.entries[(entity_id, year)]
        sets = a.sets(by_id[entity_id], year)
        report = a.report(by_id[entity_id], year)
        recovered = {
            "frequent_users": sets.frequent_users, "first_author_count": report.first_authors,
            "R": sets.R, "P_first": sets.P_first, "P_any": sets.P_any, "C": sets.C,
        }
        expected = {
            "frequent_users": t.frequent_expected, "first_author_count": t.first_author_count,
            "R": t.R, "P_first": t.P_first, "P_any": t.P_any, "C": t.C,
        }
        for q in QUANTITIES:
            result.checked += 1
            if recovered[q] != expected[q]:
                result.mismatches.append(Mismatch(entity_id, year, q, expected[q], recovered[q]))
        freq_counts.append(len(sets.frequent_users))
        first_counts.append(report.first_authors)
        if report.overlap is not None and report.random_baseline is not None:
            result.overlap_compared += 1
            result.overlap_wins += report.overlap > report.random_baseline
    if truth.entries:
        result.planted_r = _safe_r([len(t.frequent_expected) for _, t in sorted(truth.entries.items())],
                                   [t.first_author_count for _, t in sorted(truth.entries.items())])
        result.recovered_r = _safe_r(freq_counts, first_counts)
    return result
