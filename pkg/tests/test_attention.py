import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from retractsim.attention import (
    SERIES_OFFSETS,
    EmptyAfterFiltering,
    MissingRetractionDate,
    attention_rows,
    build_regression_dataset,
    monthly_scores,
    monthly_series,
    tier_attention_summary,
    window_attention,
)
from retractsim.ingest import MentionEvent, PaperRecord, SynthConfig, gen_synthetic
from retractsim.stats import ols

PAPER = PaperRecord(
    "p", "t", 2008, "v", "d", {2008: 3, 2009: 2}, retraction_date=(2010, 1),
    retraction_reason="error", n_authors=3, journal_rank=1.5, subject_area="bio",
)


def at(offset: int, weight: float = 1.0, pid: str = "p") -> MentionEvent:
    m = 2010 * 12 + offset
    return MentionEvent(pid, (m // 12, m % 12 + 1), "news", weight)


class TestWindow:
    def test_no_mentions(self):
        row = window_attention(PAPER, [])
        assert (row.window_score, row.window_mentions) == (0.0, 0)
        assert row.pre_citations == 5
        assert row.years_to_retraction == 2

    def test_retraction_month(self):
        row = window_attention(PAPER, [at(0, 8.0)])
        assert (row.window_score, row.window_mentions) == (8.0, 1)

    def test_boundaries(self):
        assert window_attention(PAPER, [at(7)]).window_mentions == 0
        assert window_attention(PAPER, [at(-6)]).window_mentions == 1
        assert window_attention(PAPER, [at(5)]).window_mentions == 1
        assert window_attention(PAPER, [at(6)]).window_mentions == 0
        assert window_attention(PAPER, [at(-7)]).window_mentions == 0

    def test_figure_window(self):
        events = [at(0, 2.0), at(6, 1.0), at(-6, 1.0)]
        row = window_attention(PAPER, events, window="figure")
        assert (row.window_score, row.window_mentions) == (2.0, 2)

    def test_other_papers_ignored(self):
        assert window_attention(PAPER, [at(0, 3.0, pid="q")]).window_mentions == 0

    def test_missing_date(self):
        p = PaperRecord("x", "t", 2000, "v", "d")
        with pytest.raises(MissingRetractionDate):
            window_attention(p, [])
        with pytest.raises(MissingRetractionDate):
            monthly_series(p, [])

    @given(st.lists(st.tuples(st.integers(-20, 20), st.floats(0, 50)), max_size=30))
    def test_additivity(self, events):
        evs = [at(o, w) for o, w in events]
        raw = monthly_scores(PAPER, evs)
        row = window_attention(PAPER, evs)
        assert row.window_score == pytest.approx(sum(raw[o] for o in range(-6, 6)), abs=1e-9)

    @given(st.lists(st.tuples(st.integers(-20, 20), st.floats(0, 50)), max_size=20), st.integers(-100, 100))
    def test_shift_invariance(self, events, shift):
        evs = [at(o, w) for o, w in events]
        base = 2010 * 12 + shift
        moved_paper = PaperRecord(
            "p", "t", 1900, "v", "d", retraction_date=(base // 12, base % 12 + 1)
        )
        moved = [MentionEvent("p", ((base + o) // 12, (base + o) % 12 + 1), "news", w) for o, w in events]
        a, b = window_attention(PAPER, evs), window_attention(moved_paper, moved)
        assert (a.window_score, a.window_mentions) == (b.window_score, b.window_mentions)
        assert monthly_series(PAPER, evs) == monthly_series(moved_paper, moved)

    @given(st.integers(-6, 5), st.floats(0.001, 100))
    def test_monotone(self, offset, weight):
        before = window_attention(PAPER, [at(0, 1.0)]).window_score
        after = window_attention(PAPER, [at(0, 1.0), at(offset, weight)]).window_score
        assert after > before


class TestSeries:
    def test_zero(self):
        s = monthly_series(PAPER, [])
        assert all(v == 0.0 for v in s.values())

    def test_single_mention(self):
        s = monthly_series(PAPER, [at(1, 1.0)])
        assert s[1] == pytest.approx(math.log(2), abs=1e-12)
        assert abs(s[1] - 0.6931) < 1e-4
        assert all(v == 0.0 for o, v in s.items() if o != 1)

    def test_offsets(self):
        s = monthly_series(PAPER, [at(0, 5.0)])
        assert list(s) == list(SERIES_OFFSETS)
        assert len(s) == 12 and 0 not in s
        assert all(v >= 0 for v in s.values())


def _row(pid, pre, score, **kw):
    p = PaperRecord(
        pid, "t", 2005, "v", "d", {2005: pre}, retraction_date=(2008, 4),
        retraction_reason=kw.get("reason", "error"), n_authors=kw.get("n_authors", 2),
        journal_rank=kw.get("journal_rank", 1.0), subject_area=kw.get("subject", "bio"),
    )
    return window_attention(p, [MentionEvent(pid, (2008, 4), "news", score)])


class TestTierSummary:
    def test_single_and_empty(self):
        rows = [_row("a", 0, 3.0)]
        out = {t.tier: t for t in tier_attention_summary(rows)}
        assert out["[0,1)"].n == 1 and out["[0,1)"].mean_score == 3.0 and out["[0,1)"].mean_mentions == 1
        assert out["[31,inf)"].n == 0 and out["[31,inf)"].mean_score is None

    def test_synthetic_tiers_increase(self):
        corpus, mentions, _ = gen_synthetic(SynthConfig(n_retracted=800, attention_beta=0.3, rng_seed=5))
        rows = attention_rows([p for p in corpus if p.retracted], mentions)
        means = [t.mean_mentions for t in tier_attention_summary(rows)]
        assert means == sorted(means) and means[-1] > means[0]


class TestRegressionDataset:
    def test_drops_incomplete(self):
        rows = [_row("a", 1, 1.0), _row("b", 2, 2.0, journal_rank=None), _row("c", 3, 1.0), _row("d", 4, 2.0)]
        object.__setattr__(rows[1], "journal_rank", None)
        ds = build_regression_dataset(rows)
        assert ds.dropped_count == 1
        assert ds.paper_ids == ["a", "c", "d"]

    def test_dummy_coding(self):
        reasons = ["error", "error", "fraud", "plagiarism", "error"]
        rows = [_row(str(i), i, 1.0, reason=r) for i, r in enumerate(reasons)]
        ds = build_regression_dataset(rows)
        dummies = [c for c in ds.columns if c.startswith("reason[")]
        assert dummies == ["reason[fraud]", "reason[plagiarism]"]
        col = ds.columns.index("reason[fraud]")
        assert ds.design[:, col].tolist() == [0, 0, 1, 0, 0]
        assert ds.columns[:2] == ["intercept", "pre_citations"]
        assert (ds.design[:, 0] == 1).all()

    def test_empty(self):
        r = _row("a", 1, 1.0)
        object.__setattr__(r, "n_authors", None)
        with pytest.raises(EmptyAfterFiltering):
            build_regression_dataset([r])

    def test_recovers_beta(self):
        corpus, mentions, truth = gen_synthetic(SynthConfig(n_retracted=1500, attention_beta=0.25, rng_seed=31))
        rows = attention_rows([p for p in corpus if p.retracted], mentions)
        ds = build_regression_dataset(rows)
        fit = ols(ds.y_mentions, ds.design, ds.columns)
        est = fit.row("pre_citations")
        assert abs(est["coef"] - 0.25) < 3 * est["se"]
        score = ols(ds.y_score, ds.design, ds.columns).row("pre_citations")
        assert abs(score["coef"] - truth["attention_beta_score"]) < 3 * score["se"]
        assert np.isfinite(fit.r_squared)
