"""Behavioral metrics and one-sample t statistics.

Percent scale (0-100) throughout.  A trial whose agent never left the
midline has no defined preference and is reported as ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .world import WALL_X0, ChamberSpec, Pose, TrialRecord, Zone, zone_of

CHANCE = 50.0
ALPHA = 0.05


# ---------------------------------------------------------------------------
# Special functions

def _betacf(a: float, b: float, x: float, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


# ---------------------------------------------------------------------------
# Summaries and tests

@dataclass(frozen=True)
class StatsSummary:
    n: int
    mean: float
    sd: float
    sem: float


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float


def summarize(values: Sequence[float]) -> StatsSummary:
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise ValueError("cannot summarize an empty sample")
    mean = float(x.mean())
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    return StatsSummary(n, mean, sd, sd / math.sqrt(n))


def t_from_summary(mean: float, sd: float, n: int, mu0: float = CHANCE) -> TTestResult:
    if n < 2:
        raise ValueError("a t-test needs at least two values")
    df = n - 1
    if sd == 0:
        if mean == mu0:
            return TTestResult(0.0, df, 1.0)
        return TTestResult(math.copysign(math.inf, mean - mu0), df, 0.0)
    t = (mean - mu0) / (sd / math.sqrt(n))
    return TTestResult(t, df, t_two_sided_p(t, df))


def one_sample_t(values: Sequence[float], mu0: float = CHANCE) -> TTestResult:
    """Two-sided one-sample t-test.

    With zero spread the test degenerates: t = 0, p = 1 when every value equals
    ``mu0``; otherwise t = +/-inf and p = 0.
    """
    s = summarize(values)
    if s.n < 2:
        raise ValueError("a t-test needs at least two values")
    return t_from_summary(s.mean, s.sd, s.n, mu0)


@dataclass(frozen=True)
class NoiseBand:
    center: float
    halfwidth: float

    def contains(self, value: float) -> bool:
        return self.center - self.halfwidth <= value <= self.center + self.halfwidth


def noise_band(values: Sequence[float]) -> NoiseBand:
    """Mean plus/minus the mean absolute deviation from the mean."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("noise band needs at least one value")
    center = float(x.mean())
    return NoiseBand(center, float(np.abs(x - center).mean()))


# ---------------------------------------------------------------------------
# Trial scoring

def zone_counts(trace: Iterable[tuple[float, float]], chamber: ChamberSpec) -> dict[Zone, int]:
    counts = {z: 0 for z in Zone}
    for x, y in trace:
        counts[zone_of(Pose(x, y, 0.0), chamber)] += 1
    return counts


def preference_from_counts(imprint_side: int, opposite_side: int) -> float | None:
    total = imprint_side + opposite_side
    if total == 0:
        return None
    return 100.0 * imprint_side / total


def trial_preference(record: TrialRecord, chamber: ChamberSpec) -> float | None:
    """Percent of non-neutral steps spent on the imprint wall's half of the chamber."""
    counts = zone_counts(((x, y) for x, y, _ in record.trace), chamber)
    near, far = counts[Zone.SIDE_X0], counts[Zone.SIDE_XL]
    if record.imprint_wall != WALL_X0:
        near, far = far, near
    return preference_from_counts(near, far)


@dataclass(frozen=True)
class ScoredTrial:
    kind: str
    viewpoint_index: int | None
    preference: float | None


@dataclass
class AgentSummary:
    imprinting: float
    behavior: list[float | None]
    recognition: float
    imprinting_trials: list[float] = field(default_factory=list)
    recognition_trials: list[float] = field(default_factory=list)

    @property
    def imprinting_sem(self) -> float:
        return summarize(self.imprinting_trials).sem if len(self.imprinting_trials) > 1 else 0.0

    @property
    def recognition_sem(self) -> float:
        return summarize(self.recognition_trials).sem if len(self.recognition_trials) > 1 else 0.0


def agent_summary(trials: Sequence[ScoredTrial], n_viewpoints: int = 12) -> AgentSummary:
    imp = [t.preference for t in trials if t.kind == "imprinting" and t.preference is not None]
    if not imp:
        raise ValueError("no scored imprinting trials")
    per_view: list[list[float]] = [[] for _ in range(n_viewpoints)]
    rec = []
    for t in trials:
        if t.kind == "recognition" and t.preference is not None:
            per_view[t.viewpoint_index].append(t.preference)
            rec.append(t.preference)
    behavior = [float(np.mean(v)) if v else None for v in per_view]
    scored = [b for b in behavior if b is not None]
    if not scored:
        raise ValueError("no scored recognition trials")
    return AgentSummary(float(np.mean(imp)), behavior, float(np.mean(scored)), imp, rec)


VIEW_INVARIANT = "view_invariant"
VIEW_DEPENDENT = "view_dependent"
NEITHER = "neither"


def classify_agent(trial_preferences: Sequence[float], alpha: float = ALPHA) -> str:
    """Label an agent from a one-sample t-test of its trial preferences against chance."""
    vals = [v for v in trial_preferences if v is not None]
    if len(vals) < 2:
        raise ValueError("classification needs at least two scored trials")
    res = one_sample_t(vals, CHANCE)
    mean = float(np.mean(vals))
    if res.p < alpha and mean > CHANCE:
        return VIEW_INVARIANT
    if res.p < alpha and mean < CHANCE:
        return VIEW_DEPENDENT
    return NEITHER


def imprinted(trial_preferences: Sequence[float], alpha: float = ALPHA) -> bool:
    vals = [v for v in trial_preferences if v is not None]
    if len(vals) < 2:
        return False
    return classify_agent(vals, alpha) == VIEW_INVARIANT


# ---------------------------------------------------------------------------
# Population

def _group_stats(values: list[float]) -> dict:
    out: dict = {"n": len(values)}
    if values:
        s = summarize(values)
        out["summary"] = {"n": s.n, "mean": s.mean, "sd": s.sd, "sem": s.sem}
    else:
        out["summary"] = None
    if len(values) >= 2:
        t = one_sample_t(values, CHANCE)
        out["ttest"] = {"t": _finite_or_str(t.t), "df": t.df, "p": t.p}
    else:
        out["ttest"] = None
    return out


def _finite_or_str(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def population_report(agents: Sequence[dict]) -> dict:
    """Group statistics per algorithm and pooled.

    Each agent dict carries ``algorithm``, ``summary`` (AgentSummary) and
    ``classification``.
    """
    groups: dict[str, list[dict]] = {}
    for a in agents:
        groups.setdefault(a["algorithm"], []).append(a)
    report = {}
    for name, members in [*sorted(groups.items()), ("all", list(agents))]:
        n = len(members)
        labels = [m["classification"] for m in members]
        imp_vals = [m["summary"].imprinting for m in members]
        rec_vals = [m["summary"].recognition for m in members]
        report[name] = {
            "n_agents": n,
            "imprinting": _group_stats(imp_vals),
            "recognition": _group_stats(rec_vals),
            "fraction_imprinted": (100.0 * sum(imprinted(m["summary"].imprinting_trials) for m in members) / n)
            if n else None,
            "fraction_view_invariant": 100.0 * labels.count(VIEW_INVARIANT) / n if n else None,
            "fraction_view_dependent": 100.0 * labels.count(VIEW_DEPENDENT) / n if n else None,
            "fraction_neither": 100.0 * labels.count(NEITHER) / n if n else None,
            "mean_sem_imprinting": float(np.mean([m["summary"].imprinting_sem for m in members])) if n else None,
            "mean_sem_recognition": float(np.mean([m["summary"].recognition_sem for m in members])) if n else None,
        }
    return report
