import pytest
from synthutil import report_bytes, with_robots

from usagemetrics.clickstream import ParseError, RobotPolicy, load_robot_policy
from usagemetrics.config import load_config
from usagemetrics.pipeline import ingest_files, ingest_lines, shard_offsets
from usagemetrics.synth import default_model, write_synthetic_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    model = default_model(seed=11, researchers=30, population_scale=0.001, years=(2013, 2015),
                          background_papers=(60, 200))
    paths, _ = write_synthetic_dataset(model, tmp_path_factory.mktemp("synthetic"))
    return paths


def test_planted_robot_lines_leave_reports_unchanged(dataset, tmp_path):
    clean, clean_summary = report_bytes(dataset.config, tmp_path / "clean")
    mixed = with_robots(dataset.logs.read_text(), 10_000)
    noisy_log = tmp_path / "noisy.tsv"
    noisy_log.write_text(mixed)
    noisy, noisy_summary = report_bytes(dataset.config, tmp_path / "noisy", logs=[str(noisy_log)])
    assert noisy_summary.robots == clean_summary.robots + 10_000
    assert noisy_summary.records == clean_summary.records
    assert noisy == clean


def test_worker_and_shard_runs_equal_sequential(dataset, tmp_path):
    sequential, s1 = report_bytes(dataset.config, tmp_path / "seq")
    parallel, s2 = report_bytes(dataset.config, tmp_path / "par", workers=3)
    assert parallel == sequential
    assert s1 == s2
    cfg = load_config(dataset.config)
    policy = load_robot_policy(cfg.robot_policy)
    seq_agg, seq_summary = ingest_files(cfg.logs, policy)
    assert seq_summary == s1
    for shards in (2, 7, 50):
        agg, summary = ingest_files(cfg.logs, policy, shards_per_file=shards)
        assert agg == seq_agg
        assert summary == seq_summary


def test_split_log_files_equal_single_file(dataset, tmp_path):
    lines = dataset.logs.read_text().splitlines(True)
    cut = len(lines) // 3
    (tmp_path / "a.tsv").write_text("".join(lines[:cut]))
    (tmp_path / "b.tsv").write_text("".join(lines[cut:]))
    whole, _ = report_bytes(dataset.config, tmp_path / "one")
    split, _ = report_bytes(dataset.config, tmp_path / "two", logs=[str(tmp_path / "a.tsv"), str(tmp_path / "b.tsv")])
    assert split == whole


def test_shard_offsets_cover_file_on_line_boundaries(tmp_path):
    lines = [f"line {i} " + "x" * (i % 17) + "\n" for i in range(500)]
    path = tmp_path / "f.txt"
    path.write_text("".join(lines))
    data = path.read_bytes()
    for n in (1, 2, 3, 10, 499, 500, 2000):
        shards = shard_offsets(path, n)
        assert shards[0][0] == 0 and shards[-1][1] == len(data)
        for (a, b, first), nxt in zip(shards, shards[1:] + [None]):
            assert a == 0 or data[a - 1:a] == b"\n"
            assert first == data[:a].count(b"\n") + 1
            if nxt:
                assert nxt[0] == b
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert shard_offsets(empty, 4) == []


def test_parse_error_line_numbers_survive_sharding(tmp_path):
    good = "2010-06-01T12:00:00-05:00\tu1\t1.2.3.4\ta.nl\tMozilla\tDOWNLOAD\tp1\tDIRECT\n"
    path = tmp_path / "bad.tsv"
    path.write_text(good * 300 + "broken\n" + good * 100)
    for shards in (1, 4):
        with pytest.raises(ParseError) as exc:
            ingest_files([path], shards_per_file=shards)
        assert exc.value.line_no == 301


def test_ingest_summary_counts():
    good = "2010-06-01T12:00:00-05:00\t{u}\t1.2.3.4\ta.nl\t{agent}\t{action}\t{pub}\tDIRECT\n"
    lines = ["# comment\n", "\n",
             good.format(u="u1", agent="Mozilla", action="DOWNLOAD", pub="p1"),
             good.format(u="u1", agent="Mozilla", action="ABSTRACT_VIEW", pub="p1"),
             good.format(u="", agent="Mozilla", action="DOWNLOAD", pub="p2"),
             good.format(u="u2", agent="Googlebot", action="DOWNLOAD", pub="p3")]
    agg, s = ingest_lines(lines, RobotPolicy(("bot",), ()))
    assert (s.lines, s.comments, s.records, s.robots, s.unidentified, s.downloads) == (6, 2, 3, 1, 1, 2)
    assert list(agg.stats) == [("u1", 2010)]
