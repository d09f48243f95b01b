"""Chick-reference comparison and population report emission."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from ..harness.config import config_from_dict
from ..harness.manifest import MANIFEST, read_manifest
from ..harness.testing import INDEX, read_records
from ..stats import (CHANCE, NoiseBand, ScoredTrial, agent_summary, classify_agent, imprinted, noise_band,
                     population_report, trial_preference)
from .svg import PALETTE, Bar, bar_chart, scatter
from .tsne import tsne

log = logging.getLogger(__name__)

REPORT = "report.json"
AGENTS_CSV = "agents.csv"
GROUPS_CSV = "groups.csv"
FIGURES = ("imprinting.svg", "recognition.svg", "tsne.svg")
FORMAT_VERSION = 1
METRICS = ("imprinting", "recognition")
# Mean absolute deviation of a normal variable, as a multiple of its sd.
MAD_PER_SD = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class GroupSummary:
    mean: float
    sd: float
    n: int
    range: tuple[float, float] | None = None


@dataclass(frozen=True)
class ChickReference:
    imprinting: GroupSummary
    fraction_view_invariant: float
    recognition: GroupSummary | None = None
    individuals: tuple[tuple[float, ...], ...] | None = None
    imprinting_individuals: tuple[float, ...] | None = None
    synthetic: bool = False
    source: str = ""

    def __post_init__(self):
        if not 0.0 <= self.fraction_view_invariant <= 1.0:
            raise ValueError("fraction_view_invariant must be in [0, 1]")
        for g in (self.imprinting, self.recognition):
            if g is not None and g.n < 1:
                raise ValueError("group n must be >= 1")
        if self.individuals is not None and any(len(v) != 12 for v in self.individuals):
            raise ValueError("each individual behavior vector needs 12 entries")


def _group(d: dict) -> GroupSummary:
    rng = d.get("range")
    return GroupSummary(float(d["mean"]), float(d["sd"]), int(d["n"]),
                        (float(rng[0]), float(rng[1])) if rng is not None else None)


def reference_from_dict(doc: dict, source: str = "") -> ChickReference:
    group = doc["group"]
    indiv = doc.get("individuals")
    imp_indiv = doc.get("imprinting_individuals")
    return ChickReference(
        imprinting=_group(group["imprinting"]),
        fraction_view_invariant=float(group["fraction_view_invariant"]),
        recognition=_group(group["recognition"]) if "recognition" in group else None,
        individuals=tuple(tuple(float(x) for x in v) for v in indiv) if indiv is not None else None,
        imprinting_individuals=tuple(float(x) for x in imp_indiv) if imp_indiv is not None else None,
        synthetic=bool(doc.get("synthetic", False)),
        source=source,
    )


def load_reference(path) -> ChickReference:
    path = Path(path)
    return reference_from_dict(json.loads(path.read_text()), source=path.name)


def synthetic_reference_path() -> Path:
    """Bundled synthetic chick reference; for pipeline demonstration only."""
    return Path(str(resources.files("nettwin") / "data" / "chick_reference_synthetic.json"))


def report_schema() -> dict:
    return json.loads((resources.files("nettwin") / "data" / "report.schema.json").read_text())


def reference_band(ref: ChickReference, metric: str) -> tuple[NoiseBand | None, str]:
    """Chick noise band for ``metric`` and where its halfwidth came from."""
    if metric == "imprinting":
        if ref.imprinting_individuals:
            return noise_band(ref.imprinting_individuals), "individuals"
        g = ref.imprinting
    elif metric == "recognition":
        if ref.individuals:
            return noise_band([float(np.mean(v)) for v in ref.individuals]), "individuals"
        g = ref.recognition
    else:
        raise ValueError(f"unknown metric {metric!r}")
    if g is None:
        return None, "unavailable"
    return NoiseBand(g.mean, g.sd * MAD_PER_SD), "normal_approximation"


def compare_metric(machine_mean: float | None, band: NoiseBand | None) -> dict:
    if machine_mean is None or band is None:
        return {"machine_mean": machine_mean, "chick_center": band.center if band else None,
                "chick_halfwidth": band.halfwidth if band else None, "adequate": None, "gap": None}
    return {"machine_mean": machine_mean, "chick_center": band.center, "chick_halfwidth": band.halfwidth,
            "adequate": band.contains(machine_mean), "gap": abs(machine_mean - band.center)}


def _group_mean(group: dict, metric: str) -> float | None:
    s = group.get(metric, {}).get("summary")
    return None if s is None else s["mean"]


def compare_to_reference(group: dict, ref: ChickReference) -> dict:
    """Noise-band adequacy of one population-report group for each metric."""
    out = {}
    for metric in METRICS:
        band, source = reference_band(ref, metric)
        out[metric] = {**compare_metric(_group_mean(group, metric), band), "halfwidth_source": source}
    return out


# ---------------------------------------------------------------------------
# Run discovery and scoring

def discover_runs(runs_dir) -> tuple[list[Path], list[dict]]:
    """Complete test-run directories, plus entries for runs that are missing or unfinished.

    Train and test runs are paired by checkpoint checksum, so trees can be moved.
    """
    runs_dir = Path(runs_dir)
    tests, absent, trained, tested = [], [], {}, set()
    for mpath in sorted(runs_dir.rglob(MANIFEST)):
        d = mpath.parent
        m = read_manifest(d)
        rel = d.relative_to(runs_dir).as_posix()
        if m.get("phase") == "train":
            if not m.get("complete"):
                absent.append({"run": rel, "reason": "training incomplete"})
            else:
                trained[m["files"].get(m["checkpoint"])] = rel
        elif m.get("phase") == "test":
            if not m.get("complete") or not (d / INDEX).exists():
                absent.append({"run": rel, "reason": "test incomplete"})
            else:
                tests.append(d)
                tested.add(m.get("checkpoint_sha256"))
    absent += [{"run": rel, "reason": "no test run"} for sha, rel in trained.items() if sha not in tested]
    absent.sort(key=lambda a: a["run"])
    return tests, absent


def score_run(test_dir, runs_dir) -> dict:
    m = read_manifest(test_dir)
    config = config_from_dict(m["config"])
    records = read_records(test_dir)
    trials = [ScoredTrial(r.kind, r.viewpoint_index, trial_preference(r, config.chamber)) for r in records]
    summary = agent_summary(trials)
    return {
        "run": Path(test_dir).relative_to(runs_dir).as_posix(),
        "algorithm": config.algorithm,
        "condition": config.condition,
        "seed": config.seed,
        "summary": summary,
        "classification": classify_agent(summary.recognition_trials),
    }


def _agent_row(a: dict) -> dict:
    s = a["summary"]
    return {
        "run": a["run"], "algorithm": a["algorithm"], "condition": a["condition"], "seed": a["seed"],
        "imprinting": s.imprinting, "recognition": s.recognition, "behavior": list(s.behavior),
        "imputed_viewpoints": [i for i, b in enumerate(s.behavior) if b is None],
        "classification": a["classification"], "imprinted": imprinted(s.imprinting_trials),
        "imprinting_sem": s.imprinting_sem, "recognition_sem": s.recognition_sem,
        "n_scored_imprinting": len(s.imprinting_trials), "n_scored_recognition": len(s.recognition_trials),
    }


def _embedding(agents: Sequence[dict], ref: ChickReference, perplexity: float, seed: int,
               iterations: int) -> tuple[dict | None, list[str]]:
    vectors, groups, subjects = [], [], []
    for a in agents:
        vectors.append([CHANCE if b is None else b for b in a["behavior"]])
        groups.append(a["algorithm"])
        subjects.append(a["run"])
    for i, v in enumerate(ref.individuals or ()):
        vectors.append(list(v))
        groups.append("chick")
        subjects.append(f"chick_{i:02d}")
    n = len(vectors)
    if n < 3:
        return None, [f"t-SNE skipped: {n} subjects (need at least 3)"]
    warnings = []
    # Keep the bandwidth search feasible for small populations.
    eff = min(perplexity, (n - 1) / 3.0)
    if eff != perplexity:
        warnings.append(f"t-SNE perplexity reduced from {perplexity} to {eff:.4g} for {n} subjects")
    res = tsne(np.array(vectors), perplexity=eff, iterations=iterations, seed=seed)
    points = [{"subject": s, "group": g, "x": float(x), "y": float(y)}
              for s, g, (x, y) in zip(subjects, groups, res.coords)]
    return {"perplexity": eff, "iterations": res.iterations, "seed": seed, "kl": res.kl,
            "initial_kl": res.initial_kl, "n_chick": groups.count("chick"),
            "n_machine": n - groups.count("chick"), "points": points}, warnings


def _write_csvs(out_dir: Path, rows: list[dict], population: dict) -> None:
    with open(out_dir / AGENTS_CSV, "w", newline="") as fh:
        cols = ["run", "algorithm", "condition", "seed", "imprinting", "recognition", "classification",
                "imprinted", "imprinting_sem", "recognition_sem", *[f"view_{i:02d}" for i in range(12)]]
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols[:10]] + ["" if b is None else b for b in r["behavior"]])
    with open(out_dir / GROUPS_CSV, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "metric", "n", "mean", "sd", "sem", "t", "df", "p"])
        for name, g in population.items():
            for metric in METRICS:
                s, t = g[metric]["summary"], g[metric]["ttest"]
                w.writerow([name, metric, g[metric]["n"],
                            *(("", "", "") if s is None else (s["mean"], s["sd"], s["sem"])),
                            *(("", "", "") if t is None else (t["t"], t["df"], t["p"]))])


def _figures(out_dir: Path, rows: list[dict], population: dict, comparison: dict, ref: ChickReference,
             embedding: dict | None) -> None:
    algos = sorted({r["algorithm"] for r in rows})
    for metric, fname, title in [("imprinting", FIGURES[0], "Imprinting"),
                                 ("recognition", FIGURES[1], "View-invariant recognition")]:
        band = comparison["all"][metric]
        bars = []
        if band["chick_center"] is not None:
            chick_points = (ref.imprinting_individuals if metric == "imprinting"
                            else [float(np.mean(v)) for v in ref.individuals or ()]) or ()
            bars.append(Bar("chicks", band["chick_center"], 0.0, list(chick_points), "#d62728"))
        for i, algo in enumerate(algos):
            s = population[algo][metric]["summary"]
            bars.append(Bar(algo, None if s is None else s["mean"], 0.0 if s is None else s["sem"],
                            [r[metric] for r in rows if r["algorithm"] == algo], PALETTE[i % len(PALETTE)]))
        s = population["all"][metric]["summary"]
        bars.append(Bar("all machines", None if s is None else s["mean"], 0.0 if s is None else s["sem"],
                        (), "#7f7f7f"))
        lohi = None
        if band["chick_halfwidth"] is not None:
            lohi = (band["chick_center"] - band["chick_halfwidth"], band["chick_center"] + band["chick_halfwidth"])
        (out_dir / fname).write_text(bar_chart(title, bars, lohi))
    pts = embedding["points"] if embedding else []
    (out_dir / FIGURES[2]).write_text(scatter("Behavior embedding (t-SNE)", [(p["x"], p["y"]) for p in pts],
                                              [p["group"] for p in pts]))


def emit_report(runs_dir, ref: ChickReference, out_dir, perplexity: float = 10.0, seed: int = 0,
                iterations: int = 1000) -> dict:
    """Score every finished test run under ``runs_dir`` and write report, CSVs and figures."""
    runs_dir = Path(runs_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tests, absent = discover_runs(runs_dir)
    warnings = []
    agents = []
    for d in tests:
        try:
            agents.append(score_run(d, runs_dir))
        except ValueError as exc:
            absent.append({"run": d.relative_to(runs_dir).as_posix(), "reason": f"unscorable: {exc}"})
    absent.sort(key=lambda a: a["run"])
    if absent:
        warnings.append(f"{len(absent)} run(s) absent or unscorable")
    rows = [_agent_row(a) for a in agents]
    population = population_report(agents)
    comparison = {name: compare_to_reference(g, ref) for name, g in population.items()}
    imputed = sum(len(r["imputed_viewpoints"]) for r in rows)
    if imputed:
        warnings.append(f"{imputed} missing viewpoint entries imputed as {CHANCE:g} for t-SNE")
    embedding, tsne_warnings = _embedding(rows, ref, perplexity, seed, iterations)
    warnings += tsne_warnings
    report = {
        "format_version": FORMAT_VERSION,
        "reference": {
            "source": ref.source, "synthetic": ref.synthetic,
            "imprinting": {"mean": ref.imprinting.mean, "sd": ref.imprinting.sd, "n": ref.imprinting.n},
            "fraction_view_invariant": 100.0 * ref.fraction_view_invariant,
            "n_individuals": len(ref.individuals or ()),
        },
        "agents": rows,
        "absent": absent,
        "population": population,
        "comparison": comparison,
        "imputed_entries": imputed,
        "tsne": embedding,
        "warnings": warnings,
    }
    (out_dir / REPORT).write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n")
    _write_csvs(out_dir, rows, population)
    _figures(out_dir, rows, population, comparison, ref, embedding)
    for w in warnings:
        log.warning(w)
    return report
