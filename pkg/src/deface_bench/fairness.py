"""Equality-of-opportunity bias test and its two aggregates.

Any per-demographic success rates can be tested: a pair of groups is
biased at tolerance eps when the ratio of the lower to the higher rate
is at or below 1 - eps.  Average Bias is the percentage of biased group
pairs; Demographic Bias is the percentage of a group's pairings in
which it is the disadvantaged side.  Both are swept over a fixed grid
of eps values and rendered largest-eps first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ParseError

#: Tolerance grid for bias sweeps, rendered in this (descending) order.
EPS_GRID: tuple[float, ...] = (0.2, 0.15, 0.1, 0.05, 0.02)


@dataclass
class RateTable:
    """Per-demographic success rates for one metric, with sample counts."""

    metric_name: str
    rates: dict[str, float]
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.rates) < 2:
            raise ValueError(f"{self.metric_name!r} needs at least 2 demographics")
        for group, rate in self.rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate for {group!r} out of [0, 1]: {rate}")
        self.counts = {g: int(self.counts.get(g, 0)) for g in self.rates}

    def groups(self) -> list[str]:
        return sorted(self.rates)


@dataclass(frozen=True)
class EoResult:
    biased: bool
    against: str | None  # "a" / "b", or a group name when produced from a table


def eo_bias(rate_a: float, rate_b: float, eps: float) -> EoResult:
    """Test one pair of success rates for an opportunity gap.

    The ratio r = min/max is compared against 1 - eps, inclusively; two
    zero rates count as r = 1 (no gap).  When biased, ``against`` names
    the lower-rate side ("a" or "b").
    """
    for rate in (rate_a, rate_b):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"rate out of [0, 1]: {rate}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    hi = max(rate_a, rate_b)
    lo = min(rate_a, rate_b)
    r = 1.0 if hi == 0.0 else lo / hi
    if r > 1.0 - eps:
        return EoResult(biased=False, against=None)
    return EoResult(biased=True, against="a" if rate_a < rate_b else "b")


def _pair_bias(table: RateTable, a: str, b: str, eps: float) -> EoResult:
    res = eo_bias(table.rates[a], table.rates[b], eps)
    if not res.biased:
        return res
    return EoResult(biased=True, against=a if res.against == "a" else b)


def average_bias(table: RateTable, eps: float) -> float:
    """Percentage of demographic pairs that are biased at eps."""
    groups = table.groups()
    pairs = list(combinations(groups, 2))
    biased = sum(_pair_bias(table, a, b, eps).biased for a, b in pairs)
    return 100.0 * biased / len(pairs)


def demographic_bias(table: RateTable, demographic: str, eps: float) -> float:
    """Percentage of a group's pairings where it is the lower side."""
    if demographic not in table.rates:
        raise ValueError(f"unknown demographic {demographic!r} in {table.metric_name!r}")
    others = [g for g in table.groups() if g != demographic]
    hit = sum(
        _pair_bias(table, demographic, g, eps).against == demographic for g in others
    )
    return 100.0 * hit / len(others)


@dataclass
class BiasReport:
    """Full bias sweep of one RateTable over the eps grid."""

    metric_name: str
    eps_grid: tuple[float, ...]
    pair_flags: dict[tuple[str, str, float], EoResult]
    ab: dict[float, float]
    db: dict[tuple[str, float], float]

    def ab_vector(self) -> list[float]:
        return [self.ab[eps] for eps in self.eps_grid]

    def db_vector(self, demographic: str) -> list[float]:
        return [self.db[(demographic, eps)] for eps in self.eps_grid]


def bias_table(table: RateTable, eps_grid: Sequence[float] = EPS_GRID) -> BiasReport:
    """Sweep every pair over the eps grid and aggregate AB and DB."""
    grid = tuple(sorted(eps_grid, reverse=True))
    groups = table.groups()
    pair_flags: dict[tuple[str, str, float], EoResult] = {}
    ab: dict[float, float] = {}
    db: dict[tuple[str, float], float] = {}
    for eps in grid:
        for a, b in combinations(groups, 2):
            pair_flags[(a, b, eps)] = _pair_bias(table, a, b, eps)
        ab[eps] = average_bias(table, eps)
        for group in groups:
            db[(group, eps)] = demographic_bias(table, group, eps)
    return BiasReport(
        metric_name=table.metric_name, eps_grid=grid, pair_flags=pair_flags, ab=ab, db=db
    )


RATES_HEADER = ["metric", "demographic", "rate", "count"]


def load_rate_tables(path: str | Path) -> dict[str, RateTable]:
    """Read a rates CSV (metric,demographic,rate,count) into RateTables."""
    path = Path(path)
    rates: dict[str, dict[str, float]] = {}
    counts: dict[str, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RATES_HEADER:
            raise ParseError(path, 1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(row)}")
            metric, demographic, rate_s, count_s = row
            if not metric or not demographic:
                raise ParseError(path, lineno, "empty metric or demographic")
            try:
                rate = float(rate_s)
                count = int(count_s)
            except ValueError:
                raise ParseError(path, lineno, "non-numeric rate or count") from None
            if not 0.0 <= rate <= 1.0:
                raise ParseError(path, lineno, f"rate {rate} out of [0, 1]")
            if demographic in rates.setdefault(metric, {}):
                raise ParseError(path, lineno, f"duplicate row for {metric}/{demographic}")
            rates[metric][demographic] = rate
            counts.setdefault(metric, {})[demographic] = count
    tables = {}
    for metric in rates:
        try:
            tables[metric] = RateTable(
                metric_name=metric, rates=rates[metric], counts=counts[metric]
            )
        except ValueError as exc:
            raise ParseError(path, None, str(exc)) from None
    return tables


def emit_rate_tables(tables: Mapping[str, RateTable], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATES_HEADER)
        for metric in sorted(tables):
            table = tables[metric]
            for group in table.groups():
                writer.writerow(
                    [metric, group, format(table.rates[group], ".9g"), table.counts[group]]
                )
