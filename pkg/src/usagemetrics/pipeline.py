"""Single-pass log ingest: parse, drop robots, accumulate per-user-year stats.

Large files can be split into byte-range shards processed by separate worker
processes; partial aggregates merge into the same result a sequential run
produces.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .clickstream import Action, LogRecord, RobotPolicy, parse_log_line
from .cohort import EntityMap, UsageAggregate, journal_membership
from .corpus import Corpus, JournalSet


@dataclass
class IngestSummary:
    lines: int = 0
    comments: int = 0
    records: int = 0
    robots: int = 0
    unidentified: int = 0
    downloads: int = 0

    def merge(self, other: "IngestSummary") -> "IngestSummary":
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)
        return self


class _RobotCheck:
    def __init__(self, policy: RobotPolicy | None):
        self.policy = policy
        self._agents: dict[str, bool] = {}
        self._ips: dict[str, bool] = {}

    def __call__(self, record: LogRecord) -> bool:
        if self.policy is None:
            return False
        hit = self._agents.get(record.user_agent)
        if hit is None:
            hit = self._agents[record.user_agent] = self.policy.agent_matches(record.user_agent)
        if hit:
            return True
        hit = self._ips.get(record.ip)
        if hit is None:
            hit = self._ips[record.ip] = self.policy.ip_matches(record.ip)
        return hit


def _ingest(lines: Iterable[str], agg: UsageAggregate, policy: RobotPolicy | None,
            first_line_no: int = 1) -> IngestSummary:
    summary = IngestSummary()
    robot = _RobotCheck(policy)
    add = agg.add
    download = Action.DOWNLOAD
    skipped_before = agg.skipped_unidentified
    comments = robots = records = downloads = 0
    line_no = first_line_no - 1
    for line_no, line in enumerate(lines, first_line_no):
        if not line or line[0] == "#" or line == "\n":
            comments += 1
            continue
        record = parse_log_line(line, line_no)
        if robot(record):
            robots += 1
            continue
        records += 1
        if record.action is download:
            downloads += 1
        add(record)
    summary.lines = line_no - first_line_no + 1
    summary.comments, summary.robots, summary.records, summary.downloads = comments, robots, records, downloads
    summary.unidentified = agg.skipped_unidentified - skipped_before
    return summary


def ingest_lines(lines: Iterable[str], policy: RobotPolicy | None = None, journals: Sequence[JournalSet] = (),
                 corpus: Corpus | None = None, entity_map: EntityMap | None = None,
                 first_line_no: int = 1) -> tuple[UsageAggregate, IngestSummary]:
    agg = UsageAggregate(journals, corpus, entity_map)
    summary = _ingest(lines, agg, policy, first_line_no)
    return agg, summary


def shard_offsets(path: str | Path, n_shards: int) -> list[tuple[int, int, int]]:
    """Split a file into ``(start, end, first_line_no)`` byte ranges aligned on line starts."""
    size = os.path.getsize(path)
    n_shards = max(1, min(n_shards, size or 1))
    cuts = [0]
    with open(path, "rb") as fh:
        for i in range(1, n_shards):
            fh.seek(max(cuts[-1], size * i // n_shards))
            if fh.tell() > 0:
                fh.seek(fh.tell() - 1)
                fh.readline()
            cuts.append(max(cuts[-1], fh.tell()))
        cuts.append(size)
        shards, line_no = [], 1
        for a, b in zip(cuts[:-1], cuts[1:]):
            shards.append((a, b, line_no))
            fh.seek(a)
            remaining = b - a
            while remaining > 0:
                block = fh.read(min(remaining, 1 << 20))
                line_no += block.count(b"\n")
                remaining -= len(block)
    return [s for s in shards if s[1] > s[0]]


def _iter_range(path: str | Path, start: int, end: int):
    with open(path, "rb") as fh:
        fh.seek(start)
        pos = start
        for raw in fh:
            if pos >= end:
                break
            pos += len(raw)
            yield raw.decode("utf-8")


def _ingest_shard(path, start, end, first_line_no, policy, journals, pub_sets, entity_map):
    agg = UsageAggregate(journals, None, entity_map, pub_sets=pub_sets)
    summary = _ingest(_iter_range(path, start, end), agg, policy, first_line_no)
    return agg.stats, agg.skipped_unidentified, agg.channel_downloads, summary


def ingest_files(paths: Sequence[str | Path], policy: RobotPolicy | None = None,
                 journals: Sequence[JournalSet] = (), corpus: Corpus | None = None,
                 entity_map: EntityMap | None = None, workers: int = 1,
                 shards_per_file: int | None = None) -> tuple[UsageAggregate, IngestSummary]:
    """Ingest one or more log files.

    With ``workers > 1`` (or an explicit ``shards_per_file``) every file is cut
    into byte-range shards whose partial aggregates are merged in shard order.
    """
    pub_sets = journal_membership(corpus, journals)
    total = UsageAggregate(journals, None, entity_map, pub_sets=pub_sets)
    summary = IngestSummary()
    n_shards = shards_per_file or workers
    if n_shards <= 1:
        for path in paths:
            with open(path, encoding="utf-8", newline="\n") as fh:
                summary.merge(_ingest(fh, total, policy))
        return total, summary
    jobs = [(str(p), *s) for p in paths for s in shard_offsets(p, n_shards)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_ingest_shard, *job, policy, journals, pub_sets, entity_map) for job in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_ingest_shard(*job, policy, journals, pub_sets, entity_map) for job in jobs]
    for stats, skipped, channels, part_summary in results:
        part = UsageAggregate(journals, None, entity_map, pub_sets=pub_sets)
        part.stats, part.skipped_unidentified, part.channel_downloads = stats, skipped, channels
        total.merge(part)
        summary.merge(part_summary)
    return total, summary
