"""Attention around the retraction date: windowed totals, monthly series, regression data."""

from __future__ import annotations

import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import MentionEvent, PaperRecord
from .matching import TierSpec, pre_retraction_citations

# retraction-month offsets covered by each window convention
WINDOWS = {
    "centered": tuple(range(-6, 6)),  # -6..+5, includes the retraction month
    "figure": tuple(o for o in range(-6, 7) if o != 0),  # -6..+6 without month 0
}
SERIES_OFFSETS = tuple(o for o in range(-6, 7) if o != 0)
NUMERIC_CONTROLS = ("pub_year", "years_to_retraction", "journal_rank", "n_authors")
CATEGORICAL_CONTROLS = ("reason", "subject_area")


class MissingRetractionDate(ValueError):
    pass


class EmptyAfterFiltering(ValueError):
    pass


@dataclass(frozen=True)
class AttentionRow:
    paper_id: str
    window_score: float
    window_mentions: int
    pre_citations: int
    pub_year: int
    years_to_retraction: int
    journal_rank: float | None
    reason: str | None
    n_authors: int | None
    subject_area: str | None


def month_index(year: int, month: int) -> int:
    return year * 12 + (month - 1)


def _offset(paper: PaperRecord, ev: MentionEvent) -> int:
    return month_index(*ev.timestamp) - month_index(*paper.retraction_date)


def _require_date(paper: PaperRecord) -> None:
    if paper.retraction_date is None:
        raise MissingRetractionDate(f"{paper.paper_id} has no retraction date")


def group_mentions(mentions: Iterable[MentionEvent]) -> dict[str, list[MentionEvent]]:
    out: dict[str, list[MentionEvent]] = defaultdict(list)
    for ev in mentions:
        out[ev.paper_id].append(ev)
    return out


def window_attention(
    paper: PaperRecord,
    mentions: Iterable[MentionEvent],
    window: str | Sequence[int] = "centered",
) -> AttentionRow:
    """Sum mention counts and weights over the retraction window.

    ``mentions`` may contain events for other papers; they are ignored.
    """
    _require_date(paper)
    offsets = set(WINDOWS[window] if isinstance(window, str) else window)
    score = 0.0
    count = 0
    for ev in mentions:
        if ev.paper_id == paper.paper_id and _offset(paper, ev) in offsets:
            score += ev.weight
            count += 1
    ry = paper.retraction_date[0]
    return AttentionRow(
        paper_id=paper.paper_id,
        window_score=score,
        window_mentions=count,
        pre_citations=pre_retraction_citations(paper, ry),
        pub_year=paper.pub_year,
        years_to_retraction=ry - paper.pub_year,
        journal_rank=paper.journal_rank,
        reason=paper.retraction_reason,
        n_authors=paper.n_authors,
        subject_area=paper.subject_area,
    )


def monthly_scores(paper: PaperRecord, mentions: Iterable[MentionEvent], span: int = 6) -> dict[int, float]:
    """Raw weight totals for every offset in [-span, span], month 0 included."""
    _require_date(paper)
    out = {o: 0.0 for o in range(-span, span + 1)}
    for ev in mentions:
        if ev.paper_id != paper.paper_id:
            continue
        o = _offset(paper, ev)
        if o in out:
            out[o] += ev.weight
    return out


def monthly_series(paper: PaperRecord, mentions: Iterable[MentionEvent]) -> dict[int, float]:
    """log(1 + score) per month offset -6..+6, with the retraction month left out."""
    raw = monthly_scores(paper, mentions)
    return {o: math.log1p(raw[o]) for o in SERIES_OFFSETS}


def attention_rows(
    papers: Iterable[PaperRecord],
    mentions: Iterable[MentionEvent],
    window: str | Sequence[int] = "centered",
) -> list[AttentionRow]:
    by_paper = group_mentions(mentions)
    return [window_attention(p, by_paper.get(p.paper_id, ()), window) for p in papers]


@dataclass(frozen=True)
class TierAttention:
    tier: str
    n: int
    mean_score: float | None
    mean_mentions: float | None


def tier_attention_summary(rows: Iterable[AttentionRow], tier_spec: TierSpec = TierSpec()) -> list[TierAttention]:
    grouped: dict[str, list[AttentionRow]] = {label: [] for label in tier_spec.labels}
    for r in rows:
        grouped[tier_spec.label(r.pre_citations)].append(r)
    out = []
    for tier, rs in grouped.items():
        if not rs:
            out.append(TierAttention(tier, 0, None, None))
        else:
            out.append(
                TierAttention(
                    tier,
                    len(rs),
                    statistics.fmean(r.window_score for r in rs),
                    statistics.fmean(r.window_mentions for r in rs),
                )
            )
    return out


@dataclass
class RegressionDataset:
    y_score: np.ndarray
    y_mentions: np.ndarray
    design: np.ndarray
    columns: list[str]
    dropped_count: int
    paper_ids: list[str]


def _complete(row: AttentionRow) -> bool:
    return all(getattr(row, c) is not None for c in NUMERIC_CONTROLS + CATEGORICAL_CONTROLS)


def _reference_level(values: Sequence[str]) -> str:
    counts = Counter(values)
    # most frequent; ties resolved alphabetically for determinism
    return min(counts, key=lambda v: (-counts[v], v))


def build_regression_dataset(rows: Sequence[AttentionRow]) -> RegressionDataset:
    """Complete-case design: intercept, pre_citations, numeric controls, dummies.

    Each categorical control with k observed levels contributes k - 1
    indicator columns; its most frequent level is the omitted reference.
    """
    kept = [r for r in rows if _complete(r)]
    dropped = len(rows) - len(kept)
    if not kept:
        raise EmptyAfterFiltering("no complete cases remain")

    columns = ["intercept", "pre_citations", *NUMERIC_CONTROLS]
    cols = [
        np.ones(len(kept)),
        np.array([r.pre_citations for r in kept], dtype=float),
        *[np.array([float(getattr(r, c)) for r in kept]) for c in NUMERIC_CONTROLS],
    ]
    for cat in CATEGORICAL_CONTROLS:
        values = [getattr(r, cat) for r in kept]
        ref = _reference_level(values)
        for level in sorted(set(values) - {ref}):
            columns.append(f"{cat}[{level}]")
            cols.append(np.array([v == level for v in values], dtype=float))

    return RegressionDataset(
        y_score=np.array([r.window_score for r in kept], dtype=float),
        y_mentions=np.array([r.window_mentions for r in kept], dtype=float),
        design=np.column_stack(cols),
        columns=columns,
        dropped_count=dropped,
        paper_ids=[r.paper_id for r in kept],
    )
