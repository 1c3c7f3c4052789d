"""Bias metric tests against a brute-force pair enumerator."""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deface_bench.errors import ParseError
from deface_bench.fairness import (
    EPS_GRID,
    RateTable,
    average_bias,
    bias_table,
    demographic_bias,
    emit_rate_tables,
    eo_bias,
    load_rate_tables,
)


# --- the pair test ----------------------------------------------------------


def test_worked_example_half_vs_point_four():
    # 0.4 / 0.5 = 0.8 sits exactly on 1 - 0.2: inclusive boundary -> biased
    res = eo_bias(0.5, 0.4, eps=0.2)
    assert res.biased is True
    assert res.against == "b"


def test_worked_example_point_nine_vs_point_eight():
    # 0.8 / 0.9 ~ 0.889 > 0.8 -> within tolerance
    res = eo_bias(0.9, 0.8, eps=0.2)
    assert res.biased is False
    assert res.against is None


def test_eo_bias_is_symmetric_in_magnitude():
    a = eo_bias(0.3, 0.9, eps=0.1)
    b = eo_bias(0.9, 0.3, eps=0.1)
    assert a.biased and b.biased
    assert a.against == "a" and b.against == "b"


def test_two_zero_rates_are_unbiased():
    assert eo_bias(0.0, 0.0, eps=0.02).biased is False


def test_zero_against_positive_is_always_biased():
    for eps in EPS_GRID:
        res = eo_bias(0.0, 0.7, eps)
        assert res.biased and res.against == "a"


def test_eo_bias_validation():
    with pytest.raises(ValueError):
        eo_bias(1.2, 0.5, 0.1)
    with pytest.raises(ValueError):
        eo_bias(0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        eo_bias(0.5, 0.5, 1.0)


@given(
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.sampled_from(EPS_GRID),
)
@settings(max_examples=300, deadline=None)
def test_eo_bias_matches_ratio_definition(ra, rb, eps):
    res = eo_bias(ra, rb, eps)
    hi, lo = max(ra, rb), min(ra, rb)
    r = 1.0 if hi == 0.0 else lo / hi
    assert res.biased == (r <= 1.0 - eps)
    if res.biased:
        assert res.against == ("a" if ra < rb else "b")


# --- aggregates vs brute force ----------------------------------------------


def brute_force(table, eps):
    """Independent AB/DB: literal loops over every unordered pair."""
    groups = sorted(table.rates)
    biased_pairs = 0
    against_count = {g: 0 for g in groups}
    n_pairs = 0
    for i, a in enumerate(groups):
        for b in groups[i + 1 :]:
            n_pairs += 1
            ra, rb = table.rates[a], table.rates[b]
            hi, lo = max(ra, rb), min(ra, rb)
            r = 1.0 if hi == 0.0 else lo / hi
            if r <= 1.0 - eps:
                biased_pairs += 1
                against_count[a if ra < rb else b] += 1
    ab = 100.0 * biased_pairs / n_pairs
    db = {g: 100.0 * against_count[g] / (len(groups) - 1) for g in groups}
    return ab, db


def random_table(rng, max_groups=10):
    n = rng.randint(2, max_groups)
    # mix smooth rates with deliberate 0s, 1s, and near-boundary ratios
    pool = [0.0, 1.0, 0.5, 0.4, 0.8, rng.random(), rng.random(), round(rng.random(), 2)]
    rates = {f"g{i:02d}": rng.choice(pool) for i in range(n)}
    return RateTable(metric_name="m", rates=rates)


def test_aggregates_match_brute_force():
    rng = random.Random(12)
    for _ in range(300):
        table = random_table(rng)
        for eps in EPS_GRID:
            ab_expect, db_expect = brute_force(table, eps)
            assert average_bias(table, eps) == ab_expect
            for g in table.groups():
                assert demographic_bias(table, g, eps) == db_expect[g]


def test_bias_is_monotone_in_eps():
    # a pair biased at small eps stays biased at every larger eps
    rng = random.Random(13)
    for _ in range(200):
        table = random_table(rng, max_groups=6)
        report = bias_table(table, EPS_GRID)
        for a, b in itertools.combinations(table.groups(), 2):
            flags = [report.pair_flags[(a, b, eps)].biased for eps in report.eps_grid]
            # eps_grid is descending, so flags must be nondecreasing
            assert flags == sorted(flags)


def test_bias_report_vectors_follow_grid_order():
    table = RateTable(metric_name="m", rates={"A": 0.9, "B": 0.45})
    report = bias_table(table, (0.05, 0.2, 0.1, 0.15, 0.02))  # scrambled on purpose
    assert report.eps_grid == (0.2, 0.15, 0.1, 0.05, 0.02)
    # 0.45 / 0.9 = 0.5: biased everywhere on the grid
    assert report.ab_vector() == [100.0] * 5
    assert report.db_vector("B") == [100.0] * 5
    assert report.db_vector("A") == [0.0] * 5


def test_rate_table_validation():
    with pytest.raises(ValueError):
        RateTable(metric_name="m", rates={"A": 0.5})
    with pytest.raises(ValueError):
        RateTable(metric_name="m", rates={"A": 0.5, "B": 1.5})


# --- rates csv --------------------------------------------------------------


def test_rate_tables_roundtrip(tmp_path):
    tables = {
        "pr": RateTable(metric_name="pr", rates={"A": 0.25, "B": 1.0}, counts={"A": 4, "B": 8}),
        "osr": RateTable(metric_name="osr", rates={"A": 0.0, "B": 0.125}),
    }
    p = tmp_path / "rates.csv"
    emit_rate_tables(tables, p)
    back = load_rate_tables(p)
    assert set(back) == {"pr", "osr"}
    assert back["pr"].rates == tables["pr"].rates
    assert back["pr"].counts == {"A": 4, "B": 8}
    assert back["osr"].counts == {"A": 0, "B": 0}


def test_rate_tables_reject_duplicates_and_bad_rates(tmp_path):
    p = tmp_path / "rates.csv"
    p.write_text("metric,demographic,rate,count\npr,A,0.5,1\npr,A,0.6,1\n")
    with pytest.raises(ParseError):
        load_rate_tables(p)
    p.write_text("metric,demographic,rate,count\npr,A,1.5,1\npr,B,0.5,1\n")
    with pytest.raises(ParseError):
        load_rate_tables(p)
    p.write_text("metric,demographic,rate,count\npr,A,0.5,1\n")  # one group only
    with pytest.raises(ParseError):
        load_rate_tables(p)
