"""Descriptive bibliometric indicators: adoption/engagement series, growth,
topic concentration, entropy, citation visibility, retraction rates, and
country-level geography."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional, Sequence

from .corpus import WorkRecord
from .errors import MissingPopulation, SingleTopicUniverse, ZeroBase
from .lexicon import MatchResult
from .semclass import ClassificationResult, MethodLabel

YEAR_MIN, YEAR_MAX = 1960, 2024
CITED_ONCE_THRESHOLD = 1
HIGHLY_CITED_THRESHOLD = 7
MIN_COUNTRY_POPULATION = 1_000_000
MIN_COUNTRY_PUBLICATIONS = 100

METHOD_LABELS = (MethodLabel.AI_METHODS, MethodLabel.NON_AI_METHODS)


@dataclass
class IndicatorSeries:
    group: Hashable
    points: dict[int, tuple[int, int]] = field(default_factory=dict)  # year -> (num, den)

    def add(self, year: int, numerator: int, denominator: int) -> None:
        n0, d0 = self.points.get(year, (0, 0))
        self.points[year] = (n0 + numerator, d0 + denominator)

    def value(self, year: int) -> Optional[float]:
        point = self.points.get(year)
        if point is None or point[1] == 0:
            return None
        return 100.0 * point[0] / point[1]

    def values(self) -> dict[int, float]:
        return {y: v for y in sorted(self.points) if (v := self.value(y)) is not None}


def _group_key(work: WorkRecord, level: str) -> Optional[str]:
    if level == "domain":
        return work.domain_id
    if level == "field":
        return work.field_id
    raise ValueError(f"unknown level {level!r}")


def adoption_series(
    results: Iterable[ClassificationResult],
    works: Mapping[str, WorkRecord],
    level: str = "domain",
) -> dict[str, IndicatorSeries]:
    """AI-methods share among works using any method, per group per year.

    Unclassifiable and NoMethods works enter neither numerator nor
    denominator.
    """
    series: dict[str, IndicatorSeries] = {}
    for result in results:
        work = works.get(result.work_id)
        if work is None or result.label not in METHOD_LABELS:
            continue
        group = _group_key(work, level)
        if group is None:
            continue
        s = series.setdefault(group, IndicatorSeries(group))
        s.add(work.pub_year, int(result.label is MethodLabel.AI_METHODS), 1)
    return series


def engagement_series(
    matches: Iterable[MatchResult],
    results: Iterable[ClassificationResult],
    works: Mapping[str, WorkRecord],
    level: str = "domain",
) -> dict[str, IndicatorSeries]:
    """AI-engaged works over the same any-method denominator as adoption."""
    engaged = {m.work_id for m in matches if m.engaged_ai}
    series: dict[str, IndicatorSeries] = {}
    for result in results:
        work = works.get(result.work_id)
        if work is None:
            continue
        group = _group_key(work, level)
        if group is None:
            continue
        s = series.setdefault(group, IndicatorSeries(group))
        s.add(
            work.pub_year,
            int(result.work_id in engaged),
            int(result.label in METHOD_LABELS),
        )
    return series


def discussion_series(
    engagement: Mapping[str, IndicatorSeries],
    adoption: Mapping[str, IndicatorSeries],
) -> dict[str, dict[int, float]]:
    """Engagement minus adoption, pointwise; may be negative."""
    out: dict[str, dict[int, float]] = {}
    for group, eng in engagement.items():
        ado = adoption.get(group)
        if ado is None:
            continue
        diffs = {}
        for year, e_val in eng.values().items():
            a_val = ado.value(year)
            if a_val is not None:
                diffs[year] = e_val - a_val
        out[group] = diffs
    return out


GROWTH_ONSET_FLOOR = 2004
GROWTH_ONSET_RUN = 5


def growth_onset(series: IndicatorSeries) -> Optional[int]:
    """Smallest year after 2004 followed by five consecutive increases."""
    values = series.values()
    for year in sorted(values):
        if year <= GROWTH_ONSET_FLOOR:
            continue
        run = [values.get(year + k) for k in range(GROWTH_ONSET_RUN + 1)]
        if any(v is None for v in run):
            continue
        if all(run[k + 1] > run[k] for k in range(GROWTH_ONSET_RUN)):
            return year
    return None


@dataclass(frozen=True)
class GrowthMultiple:
    ratio: float
    intervals: int
    annual_rate: float  # compounded over y1 - y0 intervals
    annual_rate_inclusive: float  # compounded over y1 - y0 + 1 periods

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "intervals": self.intervals,
            "annual_rate": self.annual_rate,
            "annual_rate_inclusive": self.annual_rate_inclusive,
        }


def growth_multiple(series: IndicatorSeries, y0: int, y1: int) -> GrowthMultiple:
    """Growth ratio and implied annual rate between two years.

    Both compounding conventions are reported because the interval count
    is a modelling choice, not a property of the data.
    """
    base = series.value(y0)
    end = series.value(y1)
    if base is None or base == 0.0:
        raise ZeroBase(f"no positive value at {y0}")
    if end is None:
        raise ValueError(f"no value at {y1}")
    ratio = end / base
    intervals = y1 - y0
    return GrowthMultiple(
        ratio=ratio,
        intervals=intervals,
        annual_rate=ratio ** (1.0 / intervals) - 1.0,
        annual_rate_inclusive=ratio ** (1.0 / (intervals + 1)) - 1.0,
    )


@dataclass
class TopicDistribution:
    group: Hashable
    counts: Counter = field(default_factory=Counter)

    def add(self, topic_id: str, n: int = 1) -> None:
        self.counts[topic_id] += n

    def merge(self, other: "TopicDistribution") -> "TopicDistribution":
        return TopicDistribution(self.group, self.counts + other.counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def top5_share(dist: TopicDistribution) -> float:
    """Share of the five most frequent topics; 5th-rank ties break by id."""
    if dist.total == 0:
        raise ValueError("empty distribution")
    ranked = sorted(dist.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    top = sum(count for _, count in ranked[:5])
    return 100.0 * top / dist.total


def normalized_entropy(dist: TopicDistribution, universe_size: int) -> float:
    """Shannon entropy over observed proportions, normalized by ln K where
    K is the group's topic-universe size (not just observed topics)."""
    if universe_size < 2:
        raise SingleTopicUniverse(f"K={universe_size}")
    total = dist.total
    if total == 0:
        raise ValueError("empty distribution")
    h = -sum((c / total) * math.log(c / total) for c in dist.counts.values() if c > 0)
    return h / math.log(universe_size)


def topic_distributions(
    results: Iterable[ClassificationResult],
    works: Mapping[str, WorkRecord],
    level: str = "field",
) -> dict[tuple[str, MethodLabel], TopicDistribution]:
    """Topic counts per (group, method label)."""
    dists: dict[tuple[str, MethodLabel], TopicDistribution] = {}
    for result in results:
        work = works.get(result.work_id)
        if work is None or work.topic_id is None:
            continue
        group = _group_key(work, level)
        if group is None:
            continue
        key = (group, result.label)
        dists.setdefault(key, TopicDistribution(key)).add(work.topic_id)
    return dists


@dataclass(frozen=True)
class VisibilityFlags:
    cited_once: bool
    highly_cited: bool


def visibility_flags(work: WorkRecord) -> VisibilityFlags:
    return VisibilityFlags(
        cited_once=work.citations_3y >= CITED_ONCE_THRESHOLD,
        highly_cited=work.citations_3y >= HIGHLY_CITED_THRESHOLD,
    )


def retraction_rate(retracted: int, publications: int) -> float:
    """Retracted works per 1,000 publications."""
    if publications <= 0:
        raise ValueError("publications must be positive")
    return 1000.0 * retracted / publications


@dataclass(frozen=True)
class CountryAggregate:
    country: str
    population: int
    publications: int
    ai_publications: int

    @property
    def rate_per_100k(self) -> float:
        return 100_000.0 * self.ai_publications / self.population

    @property
    def pct_ai(self) -> float:
        return 100.0 * self.ai_publications / self.publications


@dataclass
class GeoStats:
    excluded_works: int = 0
    excluded_countries: int = 0
    missing_population_countries: int = 0
    missing_country_works: int = 0


def country_stats(
    works: Iterable[WorkRecord],
    ai_work_ids: set[str],
    population: Mapping[str, int],
    stats: Optional[GeoStats] = None,
) -> list[CountryAggregate]:
    """Per-country publication and AI-adoption aggregates.

    Countries below one million people or 100 publications are excluded;
    their works are counted in the exclusion stats, as are works with no
    first-author country and countries missing from the population table.
    """
    if stats is None:
        stats = GeoStats()
    pubs: Counter = Counter()
    ai_pubs: Counter = Counter()
    for work in works:
        country = work.first_author_country
        if country is None:
            stats.missing_country_works += 1
            continue
        pubs[country] += 1
        if work.work_id in ai_work_ids:
            ai_pubs[country] += 1
    out: list[CountryAggregate] = []
    for country in sorted(pubs):
        pop = population.get(country)
        if pop is None:
            stats.missing_population_countries += 1
            stats.excluded_works += pubs[country]
            continue
        if pop < MIN_COUNTRY_POPULATION or pubs[country] < MIN_COUNTRY_PUBLICATIONS:
            stats.excluded_countries += 1
            stats.excluded_works += pubs[country]
            continue
        out.append(CountryAggregate(country, pop, pubs[country], ai_pubs[country]))
    return out


def merge_series(shards: Sequence[Mapping[str, IndicatorSeries]]) -> dict[str, IndicatorSeries]:
    """Associative merge of per-shard series (order-independent)."""
    merged: dict[str, IndicatorSeries] = {}
    for shard in shards:
        for group, series in shard.items():
            target = merged.setdefault(group, IndicatorSeries(group))
            for year, (num, den) in series.points.items():
                target.add(year, num, den)
    return merged
