"""Command-line entry point: ``retractsim <subcommand> [options]``.

Every subcommand writes its outputs plus ``manifest.json`` into ``--out-dir``.
The manifest holds the fully resolved configuration and SHA-256 digests of
all inputs and outputs; passing it back through ``--config`` repeats the run.
Precedence is flags > config file > built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any

from . import __version__

log = logging.getLogger("retractsim")

COMMON_DEFAULTS = {"seed": 0, "threads": 1, "out_dir": "."}

DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {
        "n": 100, "topology": "complete", "share_window": 200, "delay": 0,
        "max_steps": 2000, "reps": 1, "transmission_prob": 1.0,
    },
    "sweep": {
        "n": 100, "topology": "complete", "share_window": 200,
        "delays": "0,50,100,200", "max_steps": 2000, "reps": 500, "transmission_prob": 1.0,
    },
    "link": {"left": None, "right": None, "threshold": 0.90},
    "match": {
        "corpus": None, "bulk_threshold": 50, "first_year": 1990, "last_year": 2015,
    },
    "outcomes": {
        "corpus": None, "matched": None, "bulk_threshold": 50, "first_year": 1990,
        "last_year": 2015, "epsilon": 1e-5, "horizon": 5, "tiers": "0,1,9,31",
        "tier_percentiles": None,
    },
    "stats": {"outcomes": None, "outcome": "both", "tests": "default"},
    "attention": {
        "corpus": None, "mentions": None, "window": "centered", "bulk_threshold": 50,
        "first_year": 1990, "last_year": 2015, "tiers": "0,1,9,31",
    },
    "synth": {
        "n_retracted": 1000, "controls": 5, "penalties": "1.0,0.8,0.5,0.2",
        "beta": 0.2, "citation_growth": 3.0, "missing_rate": 0.02,
    },
}

REQUIRED = {
    "link": ["left", "right"],
    "match": ["corpus"],
    "outcomes": ["corpus"],
    "stats": ["outcomes"],
    "attention": ["corpus", "mentions"],
}


# --- helpers ----------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    import numpy as np

    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


class Run:
    """Collects inputs/outputs for the manifest."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out_dir = Path(cfg["out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []

    def input(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"no such file: {p}")
        self.inputs.append(p)
        return p

    def out(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def finish(self) -> None:
        manifest = {
            "tool": "retractsim",
            "version": __version__,
            "command": self.command,
            "config": self.cfg,
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "outputs": {p.name: _sha256(p) for p in self.outputs},
        }
        _write_json(self.out_dir / "manifest.json", manifest)


def _load_corpus_filtered(run: Run, cfg: dict):
    from .ingest import filter_bulk_retractions, filter_retraction_window, load_corpus

    corpus = load_corpus(run.input(cfg["corpus"]))
    kept, removed = filter_bulk_retractions(corpus, int(cfg["bulk_threshold"]))
    retracted = filter_retraction_window(kept, int(cfg["first_year"]), int(cfg["last_year"]))
    log.info(
        "%d records, %d removed as bulk retractions, %d retracted in window",
        len(corpus), len(removed), len(retracted),
    )
    return corpus, retracted


def _tier_spec(cfg: dict, pre_counts=None):
    from .matching import TierSpec

    if cfg.get("tier_percentiles"):
        return TierSpec.from_percentiles(pre_counts or [0], _float_list(cfg["tier_percentiles"]))
    return TierSpec(tuple(_int_list(cfg["tiers"])))


# --- subcommands --------------------------------------------------------------

def _sim_params(cfg: dict, delay: int):
    from .sim import SimParams

    return SimParams(
        n_agents=int(cfg["n"]),
        topology=str(cfg["topology"]),
        share_window=int(cfg["share_window"]),
        retraction_delay=delay,
        max_steps=int(cfg["max_steps"]),
        n_replicates=int(cfg["reps"]),
        rng_seed=int(cfg["seed"]),
        transmission_prob=float(cfg["transmission_prob"]),
    )


REPLICATE_HEADER = ["delay", "replicate", "final_neutral", "final_false", "final_retracted"]
SWEEP_HEADER = [
    "delay", "mean_retracted", "sd_retracted", "mean_false", "sd_false", "mean_neutral", "sd_neutral",
]


def cmd_simulate(run: Run, cfg: dict) -> None:
    from .sim import sweep_delay

    params = _sim_params(cfg, int(cfg["delay"]))
    result = sweep_delay(params, [params.retraction_delay], workers=int(cfg["threads"]))
    _write_csv(run.out("replicates.csv"), REPLICATE_HEADER, result.replicates)


def cmd_sweep(run: Run, cfg: dict) -> None:
    from .sim import sweep_delay

    delays = _int_list(cfg["delays"])
    params = _sim_params(cfg, 0)
    result = sweep_delay(params, delays, workers=int(cfg["threads"]))
    _write_csv(run.out("replicates.csv"), REPLICATE_HEADER, result.replicates)
    _write_csv(
        run.out("sweep.csv"),
        SWEEP_HEADER,
        [
            [r.delay, *map(_fmt, (r.mean_retracted, r.sd_retracted, r.mean_false,
                                  r.sd_false, r.mean_neutral, r.sd_neutral))]
            for r in result.rows
        ],
    )


def cmd_link(run: Run, cfg: dict) -> None:
    from .ingest import load_corpus
    from .linkage import link_records

    left = load_corpus(run.input(cfg["left"]))
    right = load_corpus(run.input(cfg["right"]))
    res = link_records(left, right, float(cfg["threshold"]))
    _write_csv(
        run.out("links.csv"),
        ["left_id", "right_id", "method", "similarity"],
        [[p.left_id, p.right_id, p.method, _fmt(p.similarity)] for p in res.pairs],
    )
    _write_csv(run.out("unmatched_left.csv"), ["paper_id"], [[i] for i in res.unmatched_left])
    _write_csv(run.out("unmatched_right.csv"), ["paper_id"], [[i] for i in res.unmatched_right])


def cmd_match(run: Run, cfg: dict) -> None:
    from .matching import match_all

    corpus, retracted = _load_corpus_filtered(run, cfg)
    matched, unmatched = match_all(retracted, corpus)
    _write_csv(
        run.out("matched_sets.csv"),
        ["retracted_id", "control_id"],
        [[ms.retracted_id, c] for ms in matched for c in ms.control_ids],
    )
    _write_csv(run.out("unmatched.csv"), ["retracted_id"], [[i] for i in unmatched])


def _read_matched(path: Path, corpus) -> list:
    from .matching import MatchedSet, match_key

    recs = {r.paper_id: r for r in corpus}
    controls: dict[str, list[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.DictReader(fh), start=2):
            rid, cid = row["retracted_id"], row["control_id"]
            for pid in (rid, cid):
                if pid not in recs:
                    raise ValueError(f"{path}: row {i}: unknown paper id {pid!r}")
            controls.setdefault(rid, []).append(cid)
    out = []
    for rid, cids in controls.items():
        rec = recs[rid]
        ry = rec.retraction_year
        out.append(MatchedSet(rid, tuple(cids), ry, match_key(rec, ry)))
    return out


def cmd_outcomes(run: Run, cfg: dict) -> None:
    from .matching import compute_outcomes, match_all, stratify, summarize_tiers

    corpus, retracted = _load_corpus_filtered(run, cfg)
    if cfg.get("matched"):
        matched = _read_matched(run.input(cfg["matched"]), corpus)
    else:
        matched, _ = match_all(retracted, corpus)
    spec = _tier_spec(cfg, [ms.key.pre_citations for ms in matched])
    rows = compute_outcomes(
        matched, corpus, spec, epsilon=float(cfg["epsilon"]), horizon_years=int(cfg["horizon"])
    )
    _write_csv(
        run.out("outcomes.csv"),
        ["retracted_id", "tier", "pre_citations", "outcome1", "outcome2", "n_controls"],
        [[r.retracted_id, r.tier, r.pre_citations, _fmt(r.outcome1), _fmt(r.outcome2), r.n_controls]
         for r in rows],
    )
    summary = summarize_tiers(stratify(rows, spec))
    _write_csv(
        run.out("tier_summary.csv"),
        ["tier", "n", "outcome1_mean", "outcome2_median", "outcome2_mean", "outcome2_max"],
        [[s.tier, s.n, *map(_fmt, (s.outcome1_mean, s.outcome2_median, s.outcome2_mean, s.outcome2_max))]
         for s in summary],
    )


def _read_outcomes(path: Path) -> dict[str, dict[str, list[float]]]:
    groups: dict[str, dict[str, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.DictReader(fh), start=2):
            try:
                g = groups.setdefault(row["tier"], {"outcome1": [], "outcome2": []})
                g["outcome1"].append(float(row["outcome1"]))
                g["outcome2"].append(float(row["outcome2"]))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: row {i}: {exc}") from exc
    return groups


def _tier_order(label: str) -> float:
    try:
        return float(label.strip("[").split(",")[0])
    except ValueError:
        return float("inf")


def stats_report(groups: dict[str, dict[str, list[float]]], outcome: str = "both", tests: str = "default") -> dict:
    """Omnibus and pairwise tests per outcome.

    ``tests='default'`` runs Welch ANOVA + pairwise Welch t on outcome 1 and
    Kruskal-Wallis + Dunn on outcome 2; ``tests='all'`` runs both families
    on every requested outcome.  Pairwise p-values are Holm-adjusted.
    """
    from .stats import StatsError, dunn_posthoc, kruskal_wallis, welch_anova, welch_t_pairwise

    tiers = sorted(groups, key=_tier_order)
    outcomes = ["outcome1", "outcome2"] if outcome == "both" else [outcome]
    report: dict[str, Any] = {"groups": {t: len(groups[t]["outcome1"]) for t in tiers}}
    for name in outcomes:
        data = {t: groups[t][name] for t in tiers if groups[t][name]}
        families = []
        if tests == "all" or (tests == "default" and name == "outcome1") or tests == "welch":
            families.append(("welch", welch_anova, welch_t_pairwise))
        if tests == "all" or (tests == "default" and name == "outcome2") or tests == "rank":
            families.append(("rank", kruskal_wallis, dunn_posthoc))
        section = {}
        for label, omnibus, pairwise in families:
            try:
                section[label] = {
                    "omnibus": omnibus(data).to_dict(),
                    "pairwise": pairwise(data).to_dict(),
                }
            except StatsError as exc:
                section[label] = {"error": str(exc)}
        report[name] = section
    return report


def cmd_stats(run: Run, cfg: dict) -> None:
    groups = _read_outcomes(run.input(cfg["outcomes"]))
    report = stats_report(groups, cfg["outcome"], cfg["tests"])
    _write_json(run.out("stats_report.json"), report)


def cmd_attention(run: Run, cfg: dict) -> None:
    from .attention import (
        SERIES_OFFSETS,
        attention_rows,
        build_regression_dataset,
        group_mentions,
        monthly_series,
        tier_attention_summary,
    )
    from .ingest import load_mentions
    from .stats import ols

    _, retracted = _load_corpus_filtered(run, cfg)
    mentions = load_mentions(run.input(cfg["mentions"]))
    by_paper = group_mentions(mentions)
    rows = attention_rows(retracted, mentions, cfg["window"])
    _write_csv(
        run.out("attention_rows.csv"),
        ["paper_id", "window_score", "window_mentions", "pre_citations", "pub_year",
         "years_to_retraction", "journal_rank", "reason", "n_authors", "subject_area"],
        [[r.paper_id, _fmt(r.window_score), r.window_mentions, r.pre_citations, r.pub_year,
          r.years_to_retraction, _fmt(r.journal_rank), _fmt(r.reason), _fmt(r.n_authors),
          _fmt(r.subject_area)] for r in rows],
    )
    series_rows = []
    for p in retracted:
        s = monthly_series(p, by_paper.get(p.paper_id, ()))
        series_rows.extend([p.paper_id, o, _fmt(s[o])] for o in SERIES_OFFSETS)
    _write_csv(run.out("monthly_series.csv"), ["paper_id", "offset", "log_score"], series_rows)

    spec = _tier_spec(cfg)
    _write_csv(
        run.out("attention_tiers.csv"),
        ["tier", "n", "mean_score", "mean_mentions"],
        [[t.tier, t.n, _fmt(t.mean_score), _fmt(t.mean_mentions)] for t in tier_attention_summary(rows, spec)],
    )
    ds = build_regression_dataset(rows)
    report = {
        "n_rows": len(rows),
        "dropped_incomplete": ds.dropped_count,
        "columns": ds.columns,
        "score": ols(ds.y_score, ds.design, ds.columns).to_dict(),
        "mentions": ols(ds.y_mentions, ds.design, ds.columns).to_dict(),
    }
    _write_json(run.out("regression.json"), report)


def cmd_synth(run: Run, cfg: dict) -> None:
    from .ingest import SynthConfig, gen_synthetic, write_corpus, write_mentions

    conf = SynthConfig(
        n_retracted=int(cfg["n_retracted"]),
        n_controls_per_cell=int(cfg["controls"]),
        tier_penalties=tuple(_float_list(cfg["penalties"])),
        attention_beta=float(cfg["beta"]),
        rng_seed=int(cfg["seed"]),
        citation_growth=float(cfg["citation_growth"]),
        missing_rate=float(cfg["missing_rate"]),
    )
    corpus, mentions, truth = gen_synthetic(conf)
    write_corpus(run.out("corpus.csv"), corpus)
    write_mentions(run.out("mentions.csv"), mentions)
    _write_json(run.out("truth.json"), truth)


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "link": cmd_link,
    "match": cmd_match,
    "outcomes": cmd_outcomes,
    "stats": cmd_stats,
    "attention": cmd_attention,
    "synth": cmd_synth,
}


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="64-bit RNG seed (default 0)")
    common.add_argument("--threads", type=int, help="worker processes (default 1)")
    common.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
    common.add_argument("--config", help="JSON config file or a previous run's manifest.json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="retractsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, argument_default=argparse.SUPPRESS)

    def sim_flags(p, sweep: bool):
        p.add_argument("--n", type=int, help="number of agents")
        p.add_argument("--topology", help="complete | ring(k) | erdos-renyi(p)")
        p.add_argument("--share-window", dest="share_window", type=int)
        if sweep:
            p.add_argument("--delays", help="comma-separated retraction delays")
        else:
            p.add_argument("--delay", type=int, help="retraction delay in steps")
        p.add_argument("--max-steps", dest="max_steps", type=int)
        p.add_argument("--reps", type=int, help="replicates per delay")
        p.add_argument("--transmission-prob", dest="transmission_prob", type=float)

    sim_flags(add("simulate", "run replicates at one retraction delay"), sweep=False)
    sim_flags(add("sweep", "run replicates over a grid of retraction delays"), sweep=True)

    p = add("link", "merge two corpora by DOI, then fuzzy title")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--threshold", type=float, help="fuzzy similarity cut-off (default 0.90)")

    def filters(p):
        p.add_argument("--corpus", help="corpus CSV or JSON-lines file")
        p.add_argument("--bulk-threshold", dest="bulk_threshold", type=int)
        p.add_argument("--first-year", dest="first_year", type=int)
        p.add_argument("--last-year", dest="last_year", type=int)

    filters(add("match", "find exactly matched controls for retracted papers"))

    p = add("outcomes", "compute per-paper outcomes and tier summaries")
    filters(p)
    p.add_argument("--matched", help="matched_sets.csv from `match` (recomputed if omitted)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--horizon", type=int, help="post-retraction window in years")
    p.add_argument("--tiers", help="comma-separated tier cut points, starting at 0")
    p.add_argument("--tier-percentiles", dest="tier_percentiles",
                   help="derive cut points from these percentiles instead")

    p = add("stats", "omnibus and pairwise tests over citation tiers")
    p.add_argument("--outcomes", help="outcomes.csv from `outcomes`")
    p.add_argument("--outcome", choices=["outcome1", "outcome2", "both"])
    p.add_argument("--tests", choices=["default", "welch", "rank", "all"])

    p = add("attention", "retraction-window attention, series, tiers and regression")
    filters(p)
    p.add_argument("--mentions")
    p.add_argument("--window", choices=["centered", "figure"])
    p.add_argument("--tiers")

    p = add("synth", "generate a synthetic corpus with known effects")
    p.add_argument("--n-retracted", dest="n_retracted", type=int)
    p.add_argument("--controls", type=int, help="controls per matched cell")
    p.add_argument("--penalties", help="comma-separated per-tier post-citation multipliers")
    p.add_argument("--beta", type=float, help="mentions per pre-retraction citation")
    p.add_argument("--citation-growth", dest="citation_growth", type=float)
    p.add_argument("--missing-rate", dest="missing_rate", type=float)

    return parser


def resolve_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> dict:
    given = vars(args).copy()
    command = given.pop("command")
    given.pop("verbose", None)
    cfg = {**COMMON_DEFAULTS, **DEFAULTS[command]}
    config_path = given.pop("config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if "config" in loaded and "command" in loaded:
            loaded = loaded["config"]
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    cfg.update(given)
    missing = [k for k in REQUIRED.get(command, []) if cfg.get(k) in (None, "")]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        parser.error(f"{command}: missing required option(s): {flags}")
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = resolve_config(parser, args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"retractsim: error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        run = Run(args.command, cfg)
        COMMANDS[args.command](run, cfg)
        run.finish()
    except FileNotFoundError as exc:
        print(f"retractsim: error: FileNotFound: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"retractsim: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        from .ingest import IngestError
        from .sim import SimulationError

        if isinstance(exc, (IngestError, SimulationError)):
            print(f"retractsim: error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
