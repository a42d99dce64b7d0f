import random
from datetime import datetime, timedelta, timezone

import pytest

from usagemetrics.clickstream import UNIDENTIFIED, Action, Channel, LogRecord
from usagemetrics.cohort import (CohortCategory, CohortConfig, Entity, EntityMap, UsageAggregate, UserYearStats,
                                 accumulate, classify, cohort_counts, frequent_by_entity, frequent_users)
from usagemetrics.corpus import Author, Corpus, JournalSet, Publication

TZ = timezone(timedelta(hours=-5))
MAIN = JournalSet("main", frozenset({"ApJ", "MNRAS"}))
ASTRO = JournalSet("astro", frozenset({"ApJ", "MNRAS", "PASP"}))


def rec(user="u1", year=2010, action=Action.DOWNLOAD, pub="p1", host="h.inst.nl", channel=Channel.DIRECT):
    return LogRecord(datetime(year, 6, 1, tzinfo=TZ), user, "", host, "Mozilla", action,
                     "" if action is Action.OTHER else pub, channel)


def stats(d, d_main=None):
    st = UserYearStats("u", 2010, interactions=d or 1, downloads_total=d)
    if d_main is not None:
        st.downloads_in_set["main"] = d_main
    return st


def small_corpus():
    pubs = [Publication(f"p{i}", 2000 + i % 10, ("ApJ", "MNRAS", "PASP", "Icarus")[i % 4], True,
                        (Author("x", "y"),)) for i in range(40)]
    return Corpus.from_publications(pubs)


@pytest.mark.parametrize("d, cat", [(0, "ABSTRACT_ONLY"), (1, "INFREQUENT"), (99, "INFREQUENT"),
                                    (100, "FREQUENT"), (1000, "FREQUENT"), (1001, "REMAINDER")])
def test_boundaries(d, cat):
    assert classify(stats(d)) is CohortCategory(cat)


def test_exhaustive_sweep_matches_piecewise_definition():
    cfg = CohortConfig()
    for d in range(0, 2001):
        want = ("ABSTRACT_ONLY" if d == 0 else "INFREQUENT" if d < 100 else "FREQUENT" if d <= 1000
                else "REMAINDER")
        assert classify(stats(d), cfg).value == want


def test_custom_bounds_and_validation():
    cfg = CohortConfig(5, 5)
    assert classify(stats(5), cfg) is CohortCategory.FREQUENT
    assert classify(stats(6), cfg) is CohortCategory.REMAINDER
    for lo, hi in [(0, 10), (11, 10)]:
        with pytest.raises(ValueError):
            CohortConfig(lo, hi)


def test_restriction_uses_set_count():
    st = stats(500, d_main=50)
    assert classify(st) is CohortCategory.FREQUENT
    assert classify(st, journal_restriction="main") is CohortCategory.INFREQUENT
    assert classify(stats(500), journal_restriction="main") is CohortCategory.ABSTRACT_ONLY


def test_accumulate_counts_only_downloads():
    records = [rec()] * 3 + [rec(action=Action.ABSTRACT_VIEW)] * 2
    agg = accumulate(records)
    st = agg.stats[("u1", 2010)]
    assert st.downloads_total == 3
    assert st.interactions == 5
    assert st.downloaded_pubs == {"p1"}


def test_repeat_download_is_one_unique_pub():
    st = accumulate([rec(pub="p1"), rec(pub="p1")]).stats[("u1", 2010)]
    assert st.downloads_total == 2 and len(st.downloaded_pubs) == 1


def test_unknown_pubs_count_toward_total_only():
    c = small_corpus()
    agg = accumulate([rec(pub="p0"), rec(pub="p2"), rec(pub="not-in-corpus")], [MAIN, ASTRO], c)
    st = agg.stats[("u1", 2010)]
    assert st.downloads_total == 3
    assert st.downloads_in_set == {"main": 1, "astro": 2}


def test_unidentified_users_are_skipped():
    agg = accumulate([rec(user=UNIDENTIFIED), rec()])
    assert agg.skipped_unidentified == 1
    assert list(agg.stats) == [("u1", 2010)]


def test_majority_country_ignores_unknown_and_breaks_ties_lexicographically():
    records = [rec(host="a.com")] * 5 + [rec(host="a.nl"), rec(host="b.de")]
    assert accumulate(records).stats[("u1", 2010)].country == "DE"
    assert accumulate([rec(host="a.com")]).stats[("u1", 2010)].country == "UNKNOWN"
    records = [rec(host="a.nl")] * 2 + [rec(host="b.de")]
    assert accumulate(records).stats[("u1", 2010)].country == "NL"


def test_entity_map_longest_suffix():
    em = EntityMap.parse("# map\nuni.nl UNI\nastro.uni.nl ASTRO\n")
    assert em.lookup("pc1.astro.uni.nl") == "ASTRO"
    assert em.lookup("pc1.chem.uni.nl") == "UNI"
    assert em.lookup("notuni.nl") == "UNKNOWN"
    assert EntityMap.parse(em.dump()).suffixes == em.suffixes
    with pytest.raises(ValueError):
        EntityMap.parse("only-one-token\n")


def random_records(n, seed, users=30):
    rng = random.Random(seed)
    actions = [Action.DOWNLOAD] * 6 + [Action.ABSTRACT_VIEW] * 3 + [Action.OTHER]
    hosts = ["a.nl", "b.de", "c.edu", "d.com", "e.uni.nl", "f.jp"]
    return [rec(f"u{rng.randrange(users)}", rng.randint(2008, 2010), rng.choice(actions), f"p{rng.randrange(50)}",
                rng.choice(hosts), rng.choice(list(Channel))) for _ in range(n)]


def _agg(records, corpus, em):
    return accumulate(records, [MAIN, ASTRO], corpus, em)


@pytest.mark.parametrize("seed", range(5))
def test_merge_is_order_and_grouping_independent(seed):
    c, em = small_corpus(), EntityMap({"uni.nl": "UNI"})
    records = random_records(3000, seed)
    whole = _agg(records, c, em)
    rng = random.Random(seed)
    cuts = sorted(rng.sample(range(1, len(records)), 4))
    parts = [records[a:b] for a, b in zip([0] + cuts, cuts + [len(records)])]
    left = UsageAggregate([MAIN, ASTRO], c, em)
    for p in parts:
        left.merge(_agg(p, c, em))
    shuffled = parts[:]
    rng.shuffle(shuffled)
    grouped = UsageAggregate([MAIN, ASTRO], c, em)
    grouped.merge(_agg(shuffled[0] + shuffled[1], c, em))
    rest = _agg(shuffled[2], c, em).merge(_agg(shuffled[3] + shuffled[4], c, em))
    grouped.merge(rest)
    assert left == whole
    assert grouped == whole


def test_merge_on_1e5_line_fixture():
    records = random_records(100_000, 99, users=500)
    c = small_corpus()
    whole = accumulate(records, [MAIN], c)
    merged = accumulate(records[:37_000], [MAIN], c).merge(accumulate(records[37_000:], [MAIN], c))
    assert merged == whole


@pytest.mark.parametrize("seed", range(5))
def test_partition_and_restriction_monotonicity(seed):
    c = small_corpus()
    agg = _agg(random_records(5000, seed), c, None)
    cfg = CohortConfig(20, 60)
    for year in agg.years():
        full = cohort_counts(agg, year, cfg)
        assert sum(full.counts.values()) == full.total == len({u for u, y in agg.stats if y == year})
        assert full.downloaders == full.total - full.counts[CohortCategory.ABSTRACT_ONLY]
        for restriction in ("main", "astro"):
            part = cohort_counts(agg, year, cfg, restriction)
            assert sum(part.counts.values()) == full.total
        for st in agg.for_year(year):
            assert st.downloads_in_set.get("main", 0) <= st.downloads_in_set.get("astro", 0) <= st.downloads_total
            assert len(st.downloaded_pubs) <= st.downloads_total


def test_restricted_frequent_is_subset_without_upper_cut():
    c = small_corpus()
    agg = _agg(random_records(5000, 3), c, None)
    cfg = CohortConfig(20, 10**9)
    year = agg.years()[0]
    everyone = {st.user_id for st in agg.for_year(year) if classify(st, cfg) is CohortCategory.FREQUENT}
    restricted = {st.user_id for st in agg.for_year(year) if classify(st, cfg, "main") is CohortCategory.FREQUENT}
    assert restricted <= everyone


def test_cohort_counts_empty():
    cc = cohort_counts(UsageAggregate(), 2010)
    assert cc.total == 0 and all(v == 0 for v in cc.counts.values())


def test_frequent_users_by_country_and_institute():
    em = EntityMap({"uni.nl": "UNI"})
    records = [rec("a", host="x.uni.nl", pub=f"p{i}") for i in range(100)]
    records += [rec("b", host="y.nl", pub=f"p{i}") for i in range(150)]
    records += [rec("c", host="z.de", pub=f"p{i}") for i in range(99)]
    agg = accumulate(records, entity_map=em)
    assert frequent_users(agg, 2010, Entity("NL")) == {"a", "b"}
    assert frequent_users(agg, 2010, Entity("UNI", "institute")) == {"a"}
    assert frequent_users(agg, 2010, Entity("DE")) == set()
    assert frequent_users(agg, 2011, Entity("NL")) == set()
    groups = frequent_by_entity(agg, 2010)
    assert {st.user_id for st in groups[("country", "NL")]} == {"a", "b"}
    assert {st.user_id for st in groups[("institute", "UNI")]} == {"a"}
    frequent = {st.user_id for st in agg.for_year(2010) if classify(st) is CohortCategory.FREQUENT}
    assert frequent_users(agg, 2010, Entity("NL")) <= frequent


def test_restriction_can_move_a_remainder_user_into_frequent():
    # the per-user count only shrinks, but a finite upper bound makes membership non-monotone
    st = stats(1500, d_main=500)
    assert classify(st) is CohortCategory.REMAINDER
    assert classify(st, journal_restriction="main") is CohortCategory.FREQUENT
