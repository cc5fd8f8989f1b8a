"""Exact-covariate matching of retracted papers to never-retracted controls.

A control matches when it shares publication year, venue, discipline and
the number of citations received from publication through the retracted
paper's retraction year.  Post-retraction citations are counted over the
following ``horizon_years`` years for both papers.
"""

from __future__ import annotations

import math
import statistics
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import PaperRecord

EPSILON = 1e-5
DEFAULT_BOUNDARIES = (0, 1, 9, 31)


class YearOrderViolation(ValueError):
    pass


@dataclass(frozen=True)
class MatchKey:
    pub_year: int
    venue: str
    discipline: str
    pre_citations: int


@dataclass(frozen=True)
class MatchedSet:
    retracted_id: str
    control_ids: tuple[str, ...]
    retraction_year: int
    key: MatchKey

    @property
    def n_controls(self) -> int:
        return len(self.control_ids)


@dataclass(frozen=True)
class OutcomeRow:
    retracted_id: str
    tier: str
    pre_citations: int
    outcome1: float
    outcome2: float
    n_controls: int


@dataclass(frozen=True)
class TierSpec:
    """Half-open citation intervals [b0, b1), [b1, b2), ..., [bk, inf) with b0 = 0."""

    boundaries: tuple[int, ...] = DEFAULT_BOUNDARIES

    def __post_init__(self):
        b = tuple(int(x) for x in self.boundaries)
        if not b or b[0] != 0 or any(x >= y for x, y in zip(b, b[1:])):
            raise ValueError(f"tier boundaries must start at 0 and strictly increase: {b}")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def from_percentiles(
        cls, pre_citations: Sequence[int], percentiles: Sequence[float] = (25, 50, 75, 90)
    ) -> "TierSpec":
        """Cut points at the given percentiles of the sample (rounded up, deduplicated)."""
        x = np.asarray(pre_citations, dtype=float)
        cuts = sorted({int(math.ceil(v)) for v in np.percentile(x, percentiles) if v > 0})
        return cls((0, *cuts))

    @property
    def labels(self) -> list[str]:
        b = self.boundaries
        out = [f"[{lo},{hi})" for lo, hi in zip(b, b[1:])]
        out.append(f"[{b[-1]},inf)")
        return out

    def index(self, count: int) -> int:
        if count < 0:
            raise ValueError("citation counts are non-negative")
        return bisect_right(self.boundaries, count) - 1

    def label(self, count: int) -> str:
        return self.labels[self.index(count)]


def pre_retraction_citations(record: PaperRecord, retraction_year: int) -> int:
    if record.pub_year > retraction_year:
        raise YearOrderViolation(
            f"{record.paper_id}: pub_year {record.pub_year} after retraction year {retraction_year}"
        )
    return sum(c for y, c in record.citations_by_year.items() if record.pub_year <= y <= retraction_year)


def post_retraction_citations(record: PaperRecord, retraction_year: int, horizon_years: int = 5) -> int:
    if horizon_years < 1:
        raise ValueError("horizon_years must be at least 1")
    lo, hi = retraction_year + 1, retraction_year + horizon_years
    return sum(c for y, c in record.citations_by_year.items() if lo <= y <= hi)


def _norm(s: str) -> str:
    return s.strip().casefold()


class ControlIndex:
    """Never-retracted papers grouped by (year, venue, discipline).

    Pre-citation totals depend on the retracted paper's retraction year, so
    the per-count lookup is built lazily for each (group, year) pair.
    """

    def __init__(self, corpus: Iterable[PaperRecord]):
        self.records: dict[str, PaperRecord] = {}
        self._groups: dict[tuple[int, str, str], list[PaperRecord]] = defaultdict(list)
        self._by_count: dict[tuple, dict[int, list[str]]] = {}
        for rec in corpus:
            self.records[rec.paper_id] = rec
            if not rec.retracted:
                self._groups[(rec.pub_year, _norm(rec.venue), _norm(rec.discipline))].append(rec)

    def lookup(self, pub_year: int, venue: str, discipline: str, retraction_year: int, pre: int) -> list[str]:
        gkey = (pub_year, _norm(venue), _norm(discipline))
        ckey = (gkey, retraction_year)
        table = self._by_count.get(ckey)
        if table is None:
            table = defaultdict(list)
            for rec in self._groups.get(gkey, ()):
                table[pre_retraction_citations(rec, retraction_year)].append(rec.paper_id)
            self._by_count[ckey] = table
        return list(table.get(pre, ()))


def match_key(record: PaperRecord, retraction_year: int) -> MatchKey:
    return MatchKey(
        record.pub_year,
        _norm(record.venue),
        _norm(record.discipline),
        pre_retraction_citations(record, retraction_year),
    )


def find_controls(
    retracted: PaperRecord, corpus: Iterable[PaperRecord] | ControlIndex
) -> MatchedSet | None:
    """All never-retracted papers sharing the full match key, or None when there are none."""
    if retracted.retraction_date is None:
        raise ValueError(f"{retracted.paper_id} has no retraction date")
    index = corpus if isinstance(corpus, ControlIndex) else ControlIndex(corpus)
    ry = retracted.retraction_date[0]
    key = match_key(retracted, ry)
    ids = [
        cid for cid in index.lookup(retracted.pub_year, retracted.venue, retracted.discipline, ry, key.pre_citations)
        if cid != retracted.paper_id
    ]
    if not ids:
        return None
    return MatchedSet(retracted.paper_id, tuple(sorted(ids)), ry, key)


def match_all(
    retracted: Iterable[PaperRecord], corpus: Iterable[PaperRecord]
) -> tuple[list[MatchedSet], list[str]]:
    """Match every retracted paper; returns (matched sets, ids with no match)."""
    corpus = list(corpus)
    index = ControlIndex(corpus)
    matched, unmatched = [], []
    for rec in retracted:
        ms = find_controls(rec, index)
        if ms is None:
            unmatched.append(rec.paper_id)
        else:
            matched.append(ms)
    return matched, unmatched


def _records(corpus) -> Mapping[str, PaperRecord]:
    if isinstance(corpus, ControlIndex):
        return corpus.records
    if isinstance(corpus, Mapping):
        return corpus
    return {r.paper_id: r for r in corpus}


def pair_outcome1(post_r: float, post_m: float) -> float:
    return float(post_r - post_m)


def pair_outcome2(post_r: float, post_m: float, epsilon: float = EPSILON) -> float:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return math.log((post_r + epsilon) / (post_m + epsilon))


def _posts(matched: MatchedSet, corpus, horizon_years: int):
    recs = _records(corpus)
    ry = matched.retraction_year
    post_r = post_retraction_citations(recs[matched.retracted_id], ry, horizon_years)
    post_m = [post_retraction_citations(recs[c], ry, horizon_years) for c in matched.control_ids]
    return post_r, post_m


def outcome1(matched: MatchedSet, corpus, horizon_years: int = 5) -> float:
    """Mean over controls of Post_r - Post_m; negative means a citation penalty."""
    post_r, post_m = _posts(matched, corpus, horizon_years)
    return statistics.fmean(pair_outcome1(post_r, m) for m in post_m)


def outcome2(matched: MatchedSet, corpus, epsilon: float = EPSILON, horizon_years: int = 5) -> float:
    """Mean over controls of log((Post_r + eps) / (Post_m + eps)), natural log."""
    post_r, post_m = _posts(matched, corpus, horizon_years)
    return statistics.fmean(pair_outcome2(post_r, m, epsilon) for m in post_m)


def compute_outcomes(
    matched: Sequence[MatchedSet],
    corpus,
    tier_spec: TierSpec = TierSpec(),
    epsilon: float = EPSILON,
    horizon_years: int = 5,
) -> list[OutcomeRow]:
    recs = _records(corpus)
    rows = []
    for ms in matched:
        rows.append(
            OutcomeRow(
                retracted_id=ms.retracted_id,
                tier=tier_spec.label(ms.key.pre_citations),
                pre_citations=ms.key.pre_citations,
                outcome1=outcome1(ms, recs, horizon_years),
                outcome2=outcome2(ms, recs, epsilon, horizon_years),
                n_controls=ms.n_controls,
            )
        )
    return rows


def stratify(rows: Iterable[OutcomeRow], tier_spec: TierSpec = TierSpec()) -> dict[str, list[OutcomeRow]]:
    """Group rows by the tier of their pre-retraction citations; every tier is present."""
    out: dict[str, list[OutcomeRow]] = {label: [] for label in tier_spec.labels}
    for row in rows:
        out[tier_spec.label(row.pre_citations)].append(row)
    return out


@dataclass(frozen=True)
class TierSummary:
    tier: str
    n: int
    outcome1_mean: float | None
    outcome2_median: float | None
    outcome2_mean: float | None
    outcome2_max: float | None


def summarize_tiers(stratified: Mapping[str, Sequence[OutcomeRow]]) -> list[TierSummary]:
    out = []
    for tier, rows in stratified.items():
        if not rows:
            out.append(TierSummary(tier, 0, None, None, None, None))
            continue
        o1 = [r.outcome1 for r in rows]
        o2 = [r.outcome2 for r in rows]
        out.append(
            TierSummary(
                tier=tier,
                n=len(rows),
                outcome1_mean=statistics.fmean(o1),
                outcome2_median=statistics.median(o2),
                outcome2_mean=statistics.fmean(o2),
                outcome2_max=max(o2),
            )
        )
    return out
