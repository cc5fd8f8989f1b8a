"""Group-comparison tests: Welch t / ANOVA, Kruskal-Wallis, Dunn with Holm."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .distributions import chi2_sf, f_sf, normal_sf, t_sf_two_sided


class StatsError(ValueError):
    pass


class DegenerateGroup(StatsError):
    pass


class OutOfRangeP(StatsError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float | tuple[float, float]
    p_value: float
    method: str
    flags: tuple[str, ...] = ()

    __test__ = False  # keep pytest from collecting this

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "df": list(self.df) if isinstance(self.df, tuple) else self.df,
            "p": self.p_value,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class PairwiseRow:
    group_a: str
    group_b: str
    statistic: float
    p_raw: float
    p_adjusted: float


@dataclass
class PairwiseTable:
    method: str
    rows: list[PairwiseRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "pairs": [
                {
                    "group_a": r.group_a,
                    "group_b": r.group_b,
                    "statistic": r.statistic,
                    "p_raw": r.p_raw,
                    "p_adjusted": r.p_adjusted,
                }
                for r in self.rows
            ],
        }


Groups = Sequence[Sequence[float]] | Mapping[str, Sequence[float]]


def _named_groups(groups: Groups) -> tuple[list[str], list[np.ndarray]]:
    if isinstance(groups, Mapping):
        names = [str(k) for k in groups]
        arrays = [np.asarray(v, dtype=float) for v in groups.values()]
    else:
        names = [str(i) for i in range(len(groups))]
        arrays = [np.asarray(v, dtype=float) for v in groups]
    return names, arrays


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def welch_t(a: Sequence[float], b: Sequence[float]) -> TestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateGroup("each sample needs at least 2 observations")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    se2 = va + vb
    diff = a.mean() - b.mean()
    if se2 == 0.0:
        if diff == 0.0:
            raise DegenerateGroup("both samples are constant and equal")
        raise DegenerateGroup("both samples have zero variance")
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return TestResult(float(t), float(df), _clip_p(t_sf_two_sided(t, df)), "welch_t")


def welch_anova(groups: Groups) -> TestResult:
    """Welch's heteroscedastic one-way ANOVA."""
    _, arrays = _named_groups(groups)
    k = len(arrays)
    if k < 2:
        raise DegenerateGroup("need at least 2 groups")
    for g in arrays:
        if g.size < 2:
            raise DegenerateGroup("every group needs at least 2 observations")
        if g.var(ddof=1) == 0.0:
            raise DegenerateGroup("a group has zero variance")
    n = np.array([g.size for g in arrays], dtype=float)
    means = np.array([g.mean() for g in arrays])
    w = n / np.array([g.var(ddof=1) for g in arrays])
    sw = w.sum()
    grand = (w * means).sum() / sw
    between = (w * (means - grand) ** 2).sum() / (k - 1)
    lam = ((1.0 - w / sw) ** 2 / (n - 1)).sum()
    denom = 1.0 + 2.0 * (k - 2) / (k * k - 1) * lam
    f = between / denom
    df1 = float(k - 1)
    df2 = float((k * k - 1) / (3.0 * lam))
    return TestResult(float(f), (df1, df2), _clip_p(f_sf(f, df1, df2)), "welch_anova")


def rankdata(x: Sequence[float]) -> np.ndarray:
    """Midranks (1-based) with ties sharing the average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size, dtype=float)
    i = 0
    n = x.size
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_sum(x: np.ndarray) -> float:
    _, counts = np.unique(x, return_counts=True)
    counts = counts.astype(float)
    return float((counts**3 - counts).sum())


def _pooled_ranks(arrays: list[np.ndarray]):
    pooled = np.concatenate(arrays)
    ranks = rankdata(pooled)
    bounds = np.cumsum([0] + [g.size for g in arrays])
    rank_groups = [ranks[bounds[i] : bounds[i + 1]] for i in range(len(arrays))]
    return pooled, rank_groups


def kruskal_wallis(groups: Groups) -> TestResult:
    """Kruskal-Wallis H with midranks and the usual tie correction.

    When every observation is tied the statistic is undefined; the result is
    reported as H = 0, p = 1 with the ``all_tied`` flag instead of raising.
    """
    _, arrays = _named_groups(groups)
    k = len(arrays)
    if k < 2:
        raise DegenerateGroup("need at least 2 groups")
    if any(g.size == 0 for g in arrays):
        raise DegenerateGroup("empty group")
    pooled, rank_groups = _pooled_ranks(arrays)
    n = pooled.size
    if n < 3:
        raise DegenerateGroup("need at least 3 observations in total")
    df = float(k - 1)
    correction = 1.0 - _tie_sum(pooled) / (n**3 - n)
    if correction <= 0.0:
        return TestResult(0.0, df, 1.0, "kruskal_wallis", ("all_tied",))
    h = 12.0 / (n * (n + 1)) * sum(r.sum() ** 2 / r.size for r in rank_groups) - 3.0 * (n + 1)
    h /= correction
    h = max(h, 0.0)
    return TestResult(float(h), df, _clip_p(chi2_sf(h, df)), "kruskal_wallis")


def holm_adjust(p_values: Sequence[float]) -> list[float]:
    p = np.asarray(p_values, dtype=float)
    if p.size and (np.any(~np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0):
        raise OutOfRangeP("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * (m - np.arange(m))
    adjusted = np.minimum(np.maximum.accumulate(scaled), 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out.tolist()


def dunn_posthoc(groups: Groups, adjust: str = "holm") -> PairwiseTable:
    """Dunn's pairwise z tests on pooled midranks.

    z = (mean rank a - mean rank b) / sqrt(s2 * (1/n_a + 1/n_b)) where
    s2 = N(N+1)/12 - sum(t^3 - t) / (12(N-1)).
    """
    names, arrays = _named_groups(groups)
    if len(arrays) < 2:
        raise DegenerateGroup("need at least 2 groups")
    if any(g.size == 0 for g in arrays):
        raise DegenerateGroup("empty group")
    pooled, rank_groups = _pooled_ranks(arrays)
    n = pooled.size
    if n < 3:
        raise DegenerateGroup("need at least 3 observations in total")
    s2 = n * (n + 1) / 12.0 - _tie_sum(pooled) / (12.0 * (n - 1))
    pairs = list(itertools.combinations(range(len(arrays)), 2))
    stats, raw = [], []
    for i, j in pairs:
        diff = rank_groups[i].mean() - rank_groups[j].mean()
        if s2 <= 0.0:
            z, p = 0.0, 1.0
        else:
            z = diff / math.sqrt(s2 * (1.0 / arrays[i].size + 1.0 / arrays[j].size))
            p = _clip_p(2.0 * normal_sf(abs(z)))
        stats.append(float(z))
        raw.append(p)
    if adjust == "holm":
        adj = holm_adjust(raw)
    elif adjust in ("none", None):
        adj = list(raw)
    else:
        raise ValueError(f"unknown adjustment {adjust!r}")
    table = PairwiseTable(f"dunn_{adjust or 'none'}")
    for (i, j), z, p, pa in zip(pairs, stats, raw, adj):
        table.rows.append(PairwiseRow(names[i], names[j], z, p, pa))
    return table


def welch_t_pairwise(groups: Groups, adjust: str = "holm") -> PairwiseTable:
    names, arrays = _named_groups(groups)
    pairs = list(itertools.combinations(range(len(arrays)), 2))
    results = [welch_t(arrays[i], arrays[j]) for i, j in pairs]
    raw = [r.p_value for r in results]
    adj = holm_adjust(raw) if adjust == "holm" else list(raw)
    table = PairwiseTable(f"welch_t_{adjust or 'none'}")
    for (i, j), r, pa in zip(pairs, results, adj):
        table.rows.append(PairwiseRow(names[i], names[j], r.statistic, r.p_value, pa))
    return table
