"""Bibliographic records, mention events, file I/O, filters and synthetic corpora."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CORPUS_FIELDS = [
    "paper_id", "doi", "title", "pub_year", "venue", "discipline",
    "retraction_year", "retraction_month", "retraction_reason", "n_authors",
    "journal_rank", "subject_area", "citations_by_year",
]
MENTION_FIELDS = ["paper_id", "year", "month", "source_type", "weight"]
SOURCE_TYPES = ("news", "blog", "social", "repository", "other")


class IngestError(Exception):
    pass


class SchemaViolation(IngestError, ValueError):
    def __init__(self, row: int, field: str, reason: str):
        self.row = row
        self.field = field
        self.reason = reason
        super().__init__(f"row {row}: {field}: {reason}")


class CorpusLoadError(IngestError):
    """Raised when a file has malformed rows; carries every violation found."""

    def __init__(self, path, violations: list[SchemaViolation]):
        self.path = path
        self.violations = violations
        lines = "\n".join(f"  {v}" for v in violations[:20])
        more = f"\n  ... {len(violations) - 20} more" if len(violations) > 20 else ""
        super().__init__(f"{path}: {len(violations)} malformed row(s)\n{lines}{more}")


class InvalidConfig(IngestError, ValueError):
    pass


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    title: str
    pub_year: int
    venue: str
    discipline: str
    citations_by_year: dict[int, int] = field(default_factory=dict)
    doi: str | None = None
    retraction_date: tuple[int, int] | None = None
    retraction_reason: str | None = None
    n_authors: int | None = None
    journal_rank: float | None = None
    subject_area: str | None = None

    @property
    def retracted(self) -> bool:
        return self.retraction_date is not None

    @property
    def retraction_year(self) -> int | None:
        return None if self.retraction_date is None else self.retraction_date[0]

    def validate(self) -> None:
        if self.retraction_date is not None:
            year, month = self.retraction_date
            if not 1 <= month <= 12:
                raise ValueError(f"retraction_month {month} not in 1..12")
            if year < self.pub_year:
                raise ValueError(f"retraction year {year} precedes pub_year {self.pub_year}")
        for y, c in self.citations_by_year.items():
            if y < self.pub_year:
                raise ValueError(f"citations in {y} precede pub_year {self.pub_year}")
            if c < 0:
                raise ValueError(f"negative citation count in {y}")
        if self.n_authors is not None and self.n_authors < 1:
            raise ValueError("n_authors must be positive")


@dataclass(frozen=True)
class MentionEvent:
    paper_id: str
    timestamp: tuple[int, int]
    source_type: str = "other"
    weight: float = 1.0

    def validate(self) -> None:
        if not self.weight >= 0:
            raise ValueError("weight must be non-negative")
        if not 1 <= self.timestamp[1] <= 12:
            raise ValueError(f"month {self.timestamp[1]} not in 1..12")


# --- encoding ---------------------------------------------------------------

def encode_citations(cites: dict[int, int]) -> str:
    return ";".join(f"{y}:{c}" for y, c in sorted(cites.items()))


def decode_citations(text: str) -> dict[int, int]:
    out: dict[int, int] = {}
    text = text.strip()
    if not text:
        return out
    for part in text.split(";"):
        if not part.strip():
            continue
        y, _, c = part.partition(":")
        year = int(y)
        if year in out:
            raise ValueError(f"duplicate year {year}")
        out[year] = int(c)
    return out


def _opt(value) -> str | None:
    if value is None:
        return None
    s = str(value).strip()
    return s or None


def _opt_int(value) -> int | None:
    s = _opt(value)
    return None if s is None else int(float(s)) if "." in s else int(s)


def _opt_float(value) -> float | None:
    s = _opt(value)
    return None if s is None else float(s)


def record_from_row(row: dict, index: int = 0) -> PaperRecord:
    """Build and validate a record from a CSV/JSON row; raises SchemaViolation."""

    def req(name):
        v = _opt(row.get(name))
        if v is None:
            raise SchemaViolation(index, name, "required field missing")
        return v

    def conv(name, fn):
        try:
            return fn(row.get(name))
        except (TypeError, ValueError) as exc:
            raise SchemaViolation(index, name, f"cannot parse {row.get(name)!r}: {exc}")

    paper_id = req("paper_id")
    req("pub_year")
    pub_year = conv("pub_year", lambda v: int(str(v).strip()))
    ry = conv("retraction_year", _opt_int)
    rm = conv("retraction_month", _opt_int)
    if (ry is None) != (rm is None):
        raise SchemaViolation(index, "retraction_month", "retraction year and month must both be set")
    cites_raw = row.get("citations_by_year")
    if isinstance(cites_raw, dict):
        cites = conv("citations_by_year", lambda v: {int(k): int(c) for k, c in v.items()})
    else:
        cites = conv("citations_by_year", lambda v: decode_citations(v or ""))
    doi = _opt(row.get("doi"))
    rec = PaperRecord(
        paper_id=paper_id,
        doi=doi,
        title=str(row.get("title") or ""),
        pub_year=pub_year,
        venue=req("venue"),
        discipline=req("discipline"),
        retraction_date=None if ry is None else (ry, rm),
        retraction_reason=_opt(row.get("retraction_reason")),
        n_authors=conv("n_authors", _opt_int),
        journal_rank=conv("journal_rank", _opt_float),
        subject_area=_opt(row.get("subject_area")),
        citations_by_year=cites,
    )
    try:
        rec.validate()
    except ValueError as exc:
        msg = str(exc)
        fld = "retraction_year" if "retraction" in msg else "citations_by_year"
        if "n_authors" in msg:
            fld = "n_authors"
        raise SchemaViolation(index, fld, msg)
    return rec


def record_to_row(rec: PaperRecord) -> dict:
    ry, rm = rec.retraction_date if rec.retraction_date else ("", "")
    return {
        "paper_id": rec.paper_id,
        "doi": rec.doi or "",
        "title": rec.title,
        "pub_year": rec.pub_year,
        "venue": rec.venue,
        "discipline": rec.discipline,
        "retraction_year": ry,
        "retraction_month": rm,
        "retraction_reason": rec.retraction_reason or "",
        "n_authors": "" if rec.n_authors is None else rec.n_authors,
        "journal_rank": "" if rec.journal_rank is None else repr(float(rec.journal_rank)),
        "subject_area": rec.subject_area or "",
        "citations_by_year": encode_citations(rec.citations_by_year),
    }


def mention_from_row(row: dict, index: int = 0) -> MentionEvent:
    try:
        pid = _opt(row.get("paper_id"))
        if pid is None:
            raise SchemaViolation(index, "paper_id", "required field missing")
        ev = MentionEvent(
            paper_id=pid,
            timestamp=(int(row["year"]), int(row["month"])),
            source_type=_opt(row.get("source_type")) or "other",
            weight=float(row.get("weight") if _opt(row.get("weight")) is not None else 1.0),
        )
        ev.validate()
    except SchemaViolation:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(index, "mention", str(exc))
    return ev


def mention_to_row(ev: MentionEvent) -> dict:
    return {
        "paper_id": ev.paper_id,
        "year": ev.timestamp[0],
        "month": ev.timestamp[1],
        "source_type": ev.source_type,
        "weight": repr(float(ev.weight)),
    }


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower()
        if fmt in ("csv",):
            return "csv"
        if fmt in ("jsonl", "json-lines", "ndjson"):
            return "jsonl"
        raise ValueError(f"unknown format {fmt!r}")
    return "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"


def _read_rows(path: Path, fmt: str, required: Sequence[str]) -> Iterable[tuple[int, dict]]:
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return
            missing = [c for c in required if c not in reader.fieldnames]
            if missing:
                raise CorpusLoadError(
                    path, [SchemaViolation(0, c, "column missing from header") for c in missing]
                )
            for i, row in enumerate(reader, start=2):  # header is line 1
                yield i, row
    else:
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if line.strip():
                    yield i, json.loads(line)


def _load(path, fmt, required, parse):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    fmt = _detect_format(path, fmt)
    out, errors = [], []
    for i, row in _read_rows(path, fmt, required):
        try:
            out.append(parse(row, i))
        except SchemaViolation as exc:
            errors.append(exc)
    if errors:
        raise CorpusLoadError(path, errors)
    return out


def load_corpus(path, format: str | None = None) -> list[PaperRecord]:
    """Read a corpus file.  All malformed rows are reported together."""
    return _load(path, format, ["paper_id", "pub_year", "venue", "discipline"], record_from_row)


def load_mentions(path, format: str | None = None) -> list[MentionEvent]:
    return _load(path, format, ["paper_id", "year", "month"], mention_from_row)


def _write(path, rows: list[dict], fields: list[str], fmt: str | None):
    path = Path(path)
    fmt = _detect_format(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=False) + "\n")


def write_corpus(path, records: Iterable[PaperRecord], format: str | None = None) -> None:
    _write(path, [record_to_row(r) for r in records], CORPUS_FIELDS, format)


def write_mentions(path, events: Iterable[MentionEvent], format: str | None = None) -> None:
    _write(path, [mention_to_row(e) for e in events], MENTION_FIELDS, format)


# --- filters ----------------------------------------------------------------

def filter_bulk_retractions(
    records: Sequence[PaperRecord], cluster_threshold: int = 50
) -> tuple[list[PaperRecord], list[PaperRecord]]:
    """Drop every (venue, retraction year-month) cluster larger than the threshold."""
    sizes = Counter(
        (r.venue, r.retraction_date) for r in records if r.retraction_date is not None
    )
    kept, removed = [], []
    for r in records:
        if r.retraction_date is not None and sizes[(r.venue, r.retraction_date)] > cluster_threshold:
            removed.append(r)
        else:
            kept.append(r)
    return kept, removed


def filter_retraction_window(
    records: Sequence[PaperRecord], first_year: int = 1990, last_year: int = 2015
) -> list[PaperRecord]:
    if first_year > last_year:
        raise ValueError("first_year must not exceed last_year")
    return [
        r for r in records
        if r.retraction_date is not None and first_year <= r.retraction_date[0] <= last_year
    ]


# --- synthetic corpora ------------------------------------------------------

DEFAULT_TIERS = (0, 1, 9, 31)
SOURCE_WEIGHTS = {"news": 8.0, "blog": 5.0, "social": 1.0, "repository": 0.5, "other": 0.25}


@dataclass(frozen=True)
class SynthConfig:
    n_retracted: int = 1000
    n_controls_per_cell: int = 5
    tier_penalties: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    attention_beta: float = 0.0
    rng_seed: int = 0
    tier_boundaries: tuple[int, ...] = DEFAULT_TIERS
    top_tier_max: int = 120
    # post-retraction citations per year, per pre-retraction citation
    citation_growth: float = 3.0
    attention_base: float = 2.0
    missing_rate: float = 0.02
    n_venues: int = 40
    n_disciplines: int = 6
    first_pub_year: int = 1990
    last_retraction_year: int = 2015
    horizon_years: int = 5
    n_noise_mentions: int = 2

    def validate(self) -> None:
        if self.n_retracted < 1 or self.n_controls_per_cell < 1:
            raise InvalidConfig("n_retracted and n_controls_per_cell must be positive")
        if len(self.tier_penalties) != len(self.tier_boundaries):
            raise InvalidConfig("need one penalty per tier")
        if any(not 0.0 <= p <= 1.0 for p in self.tier_penalties):
            raise InvalidConfig("tier penalties must lie in [0, 1]")
        b = self.tier_boundaries
        if b[0] != 0 or any(x >= y for x, y in zip(b, b[1:])):
            raise InvalidConfig("tier boundaries must start at 0 and increase")
        if self.top_tier_max < b[-1]:
            raise InvalidConfig("top_tier_max below the last tier boundary")
        if self.citation_growth <= 0 or self.attention_base < 0:
            raise InvalidConfig("rates must be positive")
        if not 0 <= self.missing_rate < 1:
            raise InvalidConfig("missing_rate must lie in [0, 1)")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidConfig("rng_seed must be a 64-bit unsigned integer")


def _spread(total: int, years: Sequence[int], rng: np.random.Generator) -> dict[int, int]:
    if total == 0:
        return {}
    counts = rng.multinomial(total, np.full(len(years), 1.0 / len(years)))
    return {y: int(c) for y, c in zip(years, counts) if c}


def gen_synthetic(config: SynthConfig):
    """Generate a corpus with exactly matched cells and injected effects.

    Each cell holds one retracted paper and ``n_controls_per_cell`` controls
    sharing its publication year, venue, discipline and pre-retraction
    citation total.  Post-retraction citations are Poisson with yearly rate
    ``citation_growth * pre_citations``; the retracted paper's rate is scaled
    by its tier penalty.  Mentions inside the retraction window are Poisson
    with mean ``attention_base + attention_beta * pre_citations``.

    Returns ``(corpus, mentions, truth)``.
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([config.rng_seed, 0x5EED]))
    bounds = list(config.tier_boundaries)
    upper = bounds[1:] + [config.top_tier_max + 1]
    n_tiers = len(bounds)
    venues = [f"Journal of Synthetic Studies {i:03d}" for i in range(config.n_venues)]
    disciplines = [f"discipline-{i}" for i in range(config.n_disciplines)]
    reasons = ["misconduct", "error", "plagiarism", "duplication", "other"]
    reason_p = np.array([0.4, 0.25, 0.15, 0.12, 0.08])
    subjects = ["biomedicine", "physics", "social science", "engineering"]
    source_names = list(SOURCE_WEIGHTS)
    source_p = np.array([0.1, 0.15, 0.6, 0.1, 0.05])
    h = config.horizon_years

    corpus: list[PaperRecord] = []
    mentions: list[MentionEvent] = []
    cells = []
    for i in range(config.n_retracted):
        tier = int(rng.integers(n_tiers))
        pre = int(rng.integers(bounds[tier], upper[tier]))
        gap = int(rng.integers(0, 6))
        ret_year = int(rng.integers(config.first_pub_year + gap, config.last_retraction_year + 1))
        pub_year = ret_year - gap
        ret_month = int(rng.integers(1, 13))
        venue = venues[int(rng.integers(len(venues)))]
        disc = disciplines[int(rng.integers(len(disciplines)))]
        pre_years = list(range(pub_year, ret_year + 1))
        post_years = list(range(ret_year + 1, ret_year + h + 1))
        rate = config.citation_growth * pre
        penalty = config.tier_penalties[tier]

        def citations(multiplier: float) -> dict[int, int]:
            cites = _spread(pre, pre_years, rng)
            for y in post_years:
                c = int(rng.poisson(rate * multiplier))
                if c:
                    cites[y] = c
            return cites

        rid = f"R{i:06d}"

        def missing() -> bool:
            return bool(rng.random() < config.missing_rate)

        n_authors = int(rng.integers(1, 15))
        journal_rank = round(float(rng.uniform(0.0, 10.0)), 3)
        reason = reasons[int(rng.choice(len(reasons), p=reason_p))]
        subject = subjects[int(rng.integers(len(subjects)))]
        rec = PaperRecord(
            paper_id=rid,
            doi=f"10.5555/synth.{config.rng_seed}.{i:06d}",
            title=f"Synthetic retracted study {i}",
            pub_year=pub_year,
            venue=venue,
            discipline=disc,
            citations_by_year=citations(penalty),
            retraction_date=(ret_year, ret_month),
            retraction_reason=None if missing() else reason,
            n_authors=None if missing() else n_authors,
            journal_rank=None if missing() else journal_rank,
            subject_area=None if missing() else subject,
        )
        corpus.append(rec)
        control_ids = []
        for j in range(config.n_controls_per_cell):
            cid = f"C{i:06d}_{j:02d}"
            control_ids.append(cid)
            corpus.append(
                PaperRecord(
                    paper_id=cid,
                    doi=f"10.5555/synth.{config.rng_seed}.{i:06d}.{j:02d}",
                    title=f"Synthetic control study {i}-{j}",
                    pub_year=pub_year,
                    venue=venue,
                    discipline=disc,
                    citations_by_year=citations(1.0),
                    n_authors=int(rng.integers(1, 15)),
                    journal_rank=round(float(rng.uniform(0.0, 10.0)), 3),
                )
            )

        # attention: in-window events plus a few far outside the window
        n_events = int(rng.poisson(config.attention_base + config.attention_beta * pre))
        base_month = ret_year * 12 + (ret_month - 1)
        offsets = list(rng.integers(-6, 6, size=n_events))
        offsets += [int(o) * int(s) for o, s in zip(
            rng.integers(8, 36, size=config.n_noise_mentions),
            rng.choice([-1, 1], size=config.n_noise_mentions),
        )]
        for off in offsets:
            m = base_month + int(off)
            src = source_names[int(rng.choice(len(source_names), p=source_p))]
            mentions.append(MentionEvent(rid, (m // 12, m % 12 + 1), src, SOURCE_WEIGHTS[src]))

        cells.append(
            {
                "retracted_id": rid,
                "control_ids": control_ids,
                "tier": tier,
                "pre_citations": pre,
                "penalty": penalty,
                "expected_outcome1": (penalty - 1.0) * rate * h,
                "expected_outcome2": math.log(penalty) if penalty > 0 and pre > 0 else (0.0 if pre == 0 else None),
                "expected_mentions": config.attention_base + config.attention_beta * pre,
            }
        )

    mean_weight = float(sum(SOURCE_WEIGHTS[s] * p for s, p in zip(source_names, source_p)))
    truth = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "tier_boundaries": bounds,
        "tier_penalties": list(config.tier_penalties),
        "tier_log_penalty": [math.log(p) if p > 0 else None for p in config.tier_penalties],
        "attention_beta_mentions": config.attention_beta,
        "attention_beta_score": config.attention_beta * mean_weight,
        "mean_source_weight": mean_weight,
        "cells": cells,
    }
    return corpus, mentions, truth
