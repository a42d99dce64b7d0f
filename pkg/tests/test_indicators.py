import itertools
import math
import random
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from usagemetrics.clickstream import Action, Channel, LogRecord
from usagemetrics.cohort import CohortConfig, Entity, accumulate
from usagemetrics.corpus import MAIN_JOURNALS, Author, Corpus, Publication
from usagemetrics.indicators import (AuxKind, AuxSeries, IndicatorError, baseline_pool, baseline_samples,
                                     build_entity_year_sets, correlation, dump_aux_series, first_author_count,
                                     fit_gdp_power_law, fmt, h_index, h_index_next_year, normalize_to_base_year,
                                     obsolescence_curve, overlap_fraction, parse_aux_series, pearson_r,
                                     random_overlap_baseline, spearman_r)


# --- h-index -------------------------------------------------------------------------------

def brute_h(counts):
    return max(h for h in range(len(counts) + 1) if sum(c >= h for c in counts) >= h)


def test_h_index_examples():
    assert h_index([]) == 0
    assert h_index([0, 0, 0]) == 0
    assert h_index([10, 5, 3, 1]) == 3


def test_h_index_exhaustive_small_multisets():
    for n in range(7):
        for counts in itertools.combinations_with_replacement(range(7), n):
            assert h_index(counts) == brute_h(counts)


def test_h_index_permutation_invariant_and_monotone():
    rng = random.Random(0)
    for _ in range(500):
        counts = [rng.randrange(20) for _ in range(rng.randrange(12))]
        shuffled = counts[:]
        rng.shuffle(shuffled)
        assert h_index(shuffled) == h_index(counts)
        if counts:
            bumped = counts[:]
            bumped[rng.randrange(len(bumped))] += 1
            assert h_index(bumped) >= h_index(counts)


def _pub(pid, year, journal="ApJ", affs=("Leiden",), names=None, refs=()):
    names = names or [f"{pid}-{i}" for i in range(len(affs))]
    return Publication(pid, year, journal, True, tuple(Author(n, a) for n, a in zip(names, affs)), tuple(refs))


def test_h_index_next_year_counts_citations_through_following_year():
    pubs = [_pub("a", 2010), _pub("b", 2010), _pub("c1", 2011, refs=("a", "b")), _pub("c2", 2011, refs=("a",)),
            _pub("c3", 2012, refs=("b",))]
    c = Corpus.from_publications(pubs)
    assert h_index_next_year(c, {"a", "b"}, 2010) == 1
    assert h_index_next_year(c, {"a", "b"}, 2011) == 2
    assert h_index_next_year(Corpus.from_publications([_pub("z", 2010)]), {"z"}, 2010) == 0


def test_h_index_next_year_matches_brute_force_graph():
    rng = random.Random(5)
    pubs = []
    for i in range(1000):
        year = 1990 + i // 50
        refs = tuple(f"p{rng.randrange(i)}" for _ in range(rng.randrange(6))) if i else ()
        pubs.append(_pub(f"p{i}", year, refs=refs))
    c = Corpus.from_publications(pubs)
    for year in (1995, 2000, 2005):
        chosen = [p.pub_id for p in pubs if p.year == year]
        counts = [sum(1 for q in pubs if q.year <= year + 1 and pid in q.references) for pid in chosen]
        assert h_index_next_year(c, chosen, year) == brute_h(counts)


# --- overlap and baseline -----------------------------------------------------------------

def test_overlap_examples():
    assert overlap_fraction({"a", "b"}, {"a", "b"}) == 1.0
    assert overlap_fraction({"a"}, {"b"}) == 0.0
    assert overlap_fraction({"a", "b", "c"}, {"b", "c", "d"}) == pytest.approx(2 / 3, abs=0)
    assert overlap_fraction({"a", "b", "c"}, {"b", "c", "d"}, "downloaded") == 2 / 3
    assert overlap_fraction({"a", "b", "c"}, {"b", "c", "d"}, "union") == 2 / 4
    with pytest.raises(IndicatorError) as exc:
        overlap_fraction({"a"}, set())
    assert exc.value.code == "EMPTY_REFERENCE_SET"
    with pytest.raises(ValueError):
        overlap_fraction({"a"}, {"a"}, "jaccard")


def test_overlap_monotone_in_download_set():
    rng = random.Random(1)
    universe = [f"p{i}" for i in range(100)]
    for _ in range(300):
        C = set(rng.sample(universe, rng.randint(1, 40)))
        R = set(rng.sample(universe, rng.randint(0, 60)))
        sub = set(rng.sample(sorted(R), rng.randint(0, len(R))))
        assert overlap_fraction(sub, C) <= overlap_fraction(R, C)


def test_baseline_forced_cases():
    pool = [f"p{i}" for i in range(200)]
    assert random_overlap_baseline(pool, 50, set(pool), 10, seed=3) == pytest.approx(50 / 200, abs=1e-15)
    assert random_overlap_baseline(pool, 200, {"p1", "p7"}, 10, seed=3) == 1.0
    with pytest.raises(IndicatorError) as exc:
        random_overlap_baseline(pool, 201, {"p1"}, 10)
    assert exc.value.code == "SAMPLE_TOO_LARGE"
    with pytest.raises(IndicatorError) as exc:
        random_overlap_baseline(pool, 5, set(), 10)
    assert exc.value.code == "EMPTY_REFERENCE_SET"


def test_baseline_reproducible_and_worker_independent():
    pool = [f"p{i}" for i in range(1000)]
    C = set(pool[::7])
    one = baseline_samples(pool, 60, C, 40, seed=[1, 2, 3], workers=1)
    two = baseline_samples(pool, 60, C, 40, seed=[1, 2, 3], workers=2)
    assert one == two
    assert one == baseline_samples(pool, 60, C, 40, seed=[1, 2, 3])
    assert one != baseline_samples(pool, 60, C, 40, seed=[1, 2, 4])


def test_baseline_hypergeometric_expectation():
    N, n, k, reps = 2000, 40, 300, 4000
    pool = [f"p{i}" for i in range(N)]
    C = set(random.Random(2).sample(pool, k))
    values = np.array(baseline_samples(pool, n, C, reps, seed=11))
    se = values.std(ddof=1) / math.sqrt(reps)
    assert abs(values.mean() - n / N) < 3 * se


# --- obsolescence -------------------------------------------------------------------------

def test_obsolescence_examples():
    c = obsolescence_curve([("a", 1990), ("b", 1990)], {1990: 10}, (1980, 2000))
    assert c.normalized_count == {1990: 1.0}
    c = obsolescence_curve([("a", 1990), ("b", 1990), ("c", 2000), ("c", 2000)], {1990: 4, 2000: 2}, (1980, 2000))
    assert c.normalized_count == {1990: 0.5, 2000: 0.5}
    assert c.unique_fraction[1990] == 0.5 and c.unique_fraction[2000] == 0.5
    empty = obsolescence_curve([], {1990: 4}, (1980, 2000))
    assert empty.empty and empty.normalized_count == {} and empty.unique_fraction[1990] == 0.0


def test_obsolescence_excludes_out_of_window_events():
    c = obsolescence_curve([("a", 1970), ("b", 1990), ("z", 2020)], {1990: 1}, (1980, 2015))
    assert c.total_events == 1 and c.normalized_count == {1990: 1.0}


def test_obsolescence_rejects_inconsistent_totals():
    with pytest.raises(ValueError):
        obsolescence_curve([("a", 1990), ("b", 1990)], {1990: 1}, (1980, 2000))


@pytest.mark.parametrize("seed", range(20))
def test_obsolescence_brute_force(seed):
    rng = random.Random(seed)
    pubs = {f"p{i}": rng.randint(1975, 2015) for i in range(300)}
    totals = {}
    for y in pubs.values():
        totals[y] = totals.get(y, 0) + 1
    events = [(p, pubs[p]) for p in rng.choices(sorted(pubs), k=rng.randint(1, 500))]
    window = (1980, rng.randint(1995, 2015))
    c = obsolescence_curve(events, totals, window)
    inside = [(p, y) for p, y in events if window[0] <= y <= window[1]]
    for y in range(window[0], window[1] + 1):
        if totals.get(y):
            assert c.unique_fraction[y] == len({p for p, py in inside if py == y}) / totals[y]
            assert 0.0 <= c.unique_fraction[y] <= 1.0
        if inside:
            assert c.normalized_count.get(y, 0.0) == sum(1 for _, py in inside if py == y) / len(inside)
    if inside:
        assert abs(math.fsum(c.normalized_count.values()) - 1.0) <= 1e-9


# --- correlation --------------------------------------------------------------------------

def textbook_pearson(xs, ys):
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxy = sum(x * y for x, y in zip(xs, ys))
    sxx, syy = sum(x * x for x in xs), sum(y * y for y in ys)
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))


def test_pearson_examples():
    xs = [1.0, 2.0, 3.0, 4.0]
    assert pearson_r(xs, [2 * x + 1 for x in xs]) == 1.0
    assert pearson_r(xs, [-x for x in xs]) == -1.0
    assert pearson_r(xs, [1, 3, 2, 4]) == pytest.approx(textbook_pearson(xs, [1, 3, 2, 4]), abs=1e-15)
    assert pearson_r(xs, [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)


@pytest.mark.parametrize("xs, ys", [([1], [2]), ([1, 1, 1], [1, 2, 3]), ([1, 2, 3], [5, 5, 5])])
def test_pearson_degenerate(xs, ys):
    with pytest.raises(IndicatorError) as exc:
        pearson_r(xs, ys)
    assert exc.value.code == "DEGENERATE_INPUT"


def test_pearson_affine_invariance_and_antisymmetry():
    rng = random.Random(4)
    for _ in range(200):
        xs = [rng.uniform(-10, 10) for _ in range(rng.randint(3, 30))]
        ys = [x + rng.gauss(0, 5) for x in xs]
        r = pearson_r(xs, ys)
        assert r == pytest.approx(textbook_pearson(xs, ys), abs=1e-9)
        a, b = rng.uniform(0.1, 10), rng.uniform(-100, 100)
        assert abs(pearson_r([a * x + b for x in xs], ys) - r) <= 1e-12
        assert abs(pearson_r(xs, [-y for y in ys]) + r) <= 1e-12


def test_spearman_matches_rank_formula_without_ties():
    rng = random.Random(8)
    for _ in range(100):
        n = rng.randint(3, 20)
        xs = rng.sample(range(1000), n)
        ys = rng.sample(range(1000), n)
        rx = {v: i for i, v in enumerate(sorted(xs))}
        ry = {v: i for i, v in enumerate(sorted(ys))}
        d2 = sum((rx[x] - ry[y]) ** 2 for x, y in zip(xs, ys))
        assert spearman_r(xs, ys) == pytest.approx(1 - 6 * d2 / (n * (n * n - 1)), abs=1e-12)
    assert correlation([1, 2, 3], [1, 4, 9], "spearman") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        correlation([1, 2], [1, 2], "kendall")


# --- aux series, normalization and power law ----------------------------------------------

def test_normalize_examples_and_errors():
    assert normalize_to_base_year({2005: 200, 2010: 300}) == {2005: 1.0, 2010: 1.5}
    assert set(normalize_to_base_year({2005: 7, 2006: 7}).values()) == {1.0}
    with pytest.raises(IndicatorError) as exc:
        normalize_to_base_year({2006: 1.0})
    assert exc.value.code == "MISSING_BASE_YEAR"
    with pytest.raises(IndicatorError) as exc:
        normalize_to_base_year({2005: 0.0, 2006: 1.0})
    assert exc.value.code == "ZERO_BASE_VALUE"


def test_normalize_preserves_ratios():
    rng = random.Random(9)
    for _ in range(100):
        raw = {y: rng.uniform(0.01, 1e6) for y in range(2005, 2016)}
        norm = normalize_to_base_year(AuxSeries("X", AuxKind.GDP_PER_CAPITA, raw))
        assert norm[2005] == 1.0
        for y1, y2 in itertools.combinations(raw, 2):
            assert abs(norm[y1] / norm[y2] - raw[y1] / raw[y2]) <= 1e-12 * raw[y1] / raw[y2]


def test_aux_series_round_trip_and_validation():
    series = [AuxSeries("NL", AuxKind.IAU_MEMBERS, {2008: 230.0, 2009: 241.0}),
              AuxSeries("NL", "GDP_PER_CAPITA", {2008: 52000.5})]
    text = dump_aux_series(series)
    back = parse_aux_series(text)
    assert back[("NL", AuxKind.IAU_MEMBERS)].values == {2008: 230.0, 2009: 241.0}
    with pytest.raises(ValueError):
        parse_aux_series("country,kind,year,value\n")
    with pytest.raises(ValueError):
        parse_aux_series("entity,kind,year,value\nNL,IAU_MEMBERS,2008,-1\n")


def test_power_law_noise_free():
    rng = random.Random(3)
    gdp = {f"E{i}": rng.uniform(1e10, 1e13) for i in range(20)}
    pop = {f"E{i}": rng.uniform(1e6, 1e9) for i in range(20)}
    downloads = {k: 3.7e-15 * gdp[k] ** 2 / pop[k] for k in gdp}
    fit = fit_gdp_power_law(downloads, gdp, pop)
    assert fit.gdp_exponent == pytest.approx(2.0, abs=1e-9)
    assert fit.population_exponent == pytest.approx(-1.0, abs=1e-9)
    assert fit.rms_residual <= 1e-9


def test_power_law_degenerate():
    same = {k: 1.0 for k in "abcd"}
    with pytest.raises(IndicatorError):
        fit_gdp_power_law(same, same, same)
    with pytest.raises(IndicatorError):
        fit_gdp_power_law({"a": 1, "b": 2}, {"a": 1, "b": 2}, {"a": 3, "b": 1})


def test_fmt():
    assert fmt(3) == "3"
    assert fmt(np.int64(3)) == "3"
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(None) == ""
    assert fmt(1.0) == "1"


# --- entity-year sets ---------------------------------------------------------------------

TZ = timezone(timedelta(hours=-5))


def _download(user, pub, host, year=2010):
    return LogRecord(datetime(year, 3, 1, tzinfo=TZ), user, "", host, "Mozilla", Action.DOWNLOAD, pub,
                     Channel.DIRECT)


def test_build_entity_year_sets_against_brute_force():
    rng = random.Random(12)
    pubs = []
    for i in range(500):
        year = rng.randint(2000, 2011)
        affs = tuple(rng.choice(["Leiden Observatory", "Kyoto University", "Yale"]) for _ in range(rng.randint(1, 3)))
        names = [f"A{rng.randrange(60)}" for _ in affs]
        refs = tuple(f"p{rng.randrange(500)}" for _ in range(rng.randrange(8)))
        pubs.append(_pub(f"p{i}", year, rng.choice(["ApJ", "MNRAS", "PASP"]), affs, names, refs))
    c = Corpus.from_publications(pubs)
    records = []
    for u in range(6):
        host = "h.uni.nl" if u < 4 else "h.uni.jp"
        n = 150 if u != 3 else 50
        records += [_download(f"u{u}", f"p{rng.randrange(500)}", host) for _ in range(n)]
    agg = accumulate(records, [MAIN_JOURNALS], c)
    nl = Entity("NL", "country", "leiden")
    sets = build_entity_year_sets(c, agg, nl, 2010, MAIN_JOURNALS, CohortConfig())
    assert sets.frequent_users == {"u0", "u1", "u2"}
    main = {p.pub_id for p in pubs if p.journal in ("ApJ", "MNRAS")}
    r_brute = {r.pub_id for r in records if r.user_id in {"u0", "u1", "u2"} and r.pub_id in main}
    p_first = {p.pub_id for p in pubs if p.year == 2010 and p.pub_id in main and "leiden" in p.authors[0].aff.lower()}
    p_any = {p.pub_id for p in pubs if p.year == 2010 and p.pub_id in main
             and any("leiden" in a.aff.lower() for a in p.authors)}
    c_brute = {r for p in p_first for r in c[p].references if r in main}
    assert sets.R == r_brute
    assert sets.P_first == p_first and sets.P_any == p_any
    assert sets.C == c_brute
    assert sum(sets.download_events.values()) == sum(1 for r in records
                                                      if r.user_id in {"u0", "u1", "u2"} and r.pub_id in main)
    assert first_author_count(c, nl, 2010) == len({c[p].authors[0].name for p in p_first})


def test_entity_without_activity_and_unknown_entity():
    c = Corpus.from_publications([_pub("a", 2010, affs=("Leiden",))])
    agg = accumulate([])
    sets = build_entity_year_sets(c, agg, Entity("DE", "country", "Heidelberg"), 2010)
    assert not (sets.R or sets.P_first or sets.P_any or sets.C)
    with pytest.raises(IndicatorError) as exc:
        build_entity_year_sets(c, agg, Entity("NOWHERE", "institute", "Atlantis"), 2010)
    assert exc.value.code == "UNKNOWN_ENTITY"


def test_first_author_count_examples():
    pubs = [_pub("a", 2010, names=["Smith"]), _pub("b", 2010, names=["Smith"]), _pub("c", 2010, names=["Jones"])]
    c = Corpus.from_publications(pubs)
    assert first_author_count(c, Entity("NL", "country", "Leiden"), 2010) == 2
    assert first_author_count(c, Entity("NL", "country", "Leiden"), 2011) == 0


def test_baseline_pool_window():
    pubs = [_pub("old", 1975), _pub("in", 1990), _pub("late", 2012), _pub("other", 1990, journal="PASP")]
    assert baseline_pool(Corpus.from_publications(pubs), MAIN_JOURNALS, (1980, 2010)) == ["in"]
