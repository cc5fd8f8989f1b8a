"""DOI join with a fuzzy-title fallback for merging two bibliographic sources."""

from __future__ import annotations

import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .ingest import PaperRecord

_DOI_PREFIX = re.compile(r"^(?:https?://)?(?:dx\.)?(?:doi\.org/)|^doi:\s*", re.IGNORECASE)
_PUNCT = re.compile(r"[^\w\s]|_")
_SPACE = re.compile(r"\s+")


def normalize_title(s: str) -> str:
    """Casefold, strip diacritics, delete punctuation, squeeze whitespace."""
    s = unicodedata.normalize("NFKD", s)
    s = "".join(ch for ch in s if not unicodedata.combining(ch))
    s = s.casefold()
    s = _PUNCT.sub("", s)
    return _SPACE.sub(" ", s).strip()


def normalize_doi(doi: str | None) -> str | None:
    if doi is None:
        return None
    d = _DOI_PREFIX.sub("", doi.strip()).strip().lower()
    return d or None


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit-cost insert, delete and substitute (two-row DP)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def jaccard_tokens(a: str, b: str) -> float:
    ta = set(normalize_title(a).split())
    tb = set(normalize_title(b).split())
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def title_similarity(a: str, b: str) -> float:
    na, nb = normalize_title(a), normalize_title(b)
    return max(levenshtein_similarity(na, nb), jaccard_tokens(na, nb))


@dataclass(frozen=True)
class LinkPair:
    left_id: str
    right_id: str
    method: str
    similarity: float


@dataclass
class LinkResult:
    pairs: list[LinkPair] = field(default_factory=list)
    unmatched_left: list[str] = field(default_factory=list)
    unmatched_right: list[str] = field(default_factory=list)


def link_records(
    left: Sequence[PaperRecord],
    right: Sequence[PaperRecord],
    sim_threshold: float = 0.90,
) -> LinkResult:
    """One-to-one merge: exact normalised DOI first, then year-blocked fuzzy titles.

    Fuzzy candidates are accepted greedily from the highest similarity down;
    ties go to the lexicographically smaller left id, then right id.
    """
    result = LinkResult()
    used_left: set[str] = set()
    used_right: set[str] = set()

    right_by_doi: dict[str, PaperRecord] = {}
    for r in right:
        d = normalize_doi(r.doi)
        if d is not None and d not in right_by_doi:
            right_by_doi[d] = r
    for l in sorted(left, key=lambda rec: rec.paper_id):
        d = normalize_doi(l.doi)
        r = right_by_doi.get(d) if d is not None else None
        if r is not None and r.paper_id not in used_right and l.paper_id not in used_left:
            result.pairs.append(LinkPair(l.paper_id, r.paper_id, "doi", 1.0))
            used_left.add(l.paper_id)
            used_right.add(r.paper_id)

    right_blocks: dict[int, list[tuple[str, str]]] = defaultdict(list)
    for r in right:
        if r.paper_id not in used_right:
            right_blocks[r.pub_year].append((r.paper_id, normalize_title(r.title)))

    candidates = []
    for l in left:
        if l.paper_id in used_left:
            continue
        nl = normalize_title(l.title)
        for rid, nr in right_blocks.get(l.pub_year, ()):
            sim = max(levenshtein_similarity(nl, nr), jaccard_tokens(nl, nr))
            if sim >= sim_threshold:
                candidates.append((-sim, l.paper_id, rid))
    candidates.sort()
    for neg_sim, lid, rid in candidates:
        if lid in used_left or rid in used_right:
            continue
        result.pairs.append(LinkPair(lid, rid, "fuzzy", -neg_sim))
        used_left.add(lid)
        used_right.add(rid)

    result.unmatched_left = [l.paper_id for l in left if l.paper_id not in used_left]
    result.unmatched_right = [r.paper_id for r in right if r.paper_id not in used_right]
    return result
