"""Estimation and reporting: latency CCDFs, exact binomial intervals,
supported-load search and CSV emitters."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class ConfInterval:
    lower: float
    upper: float
    confidence: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"invalid interval [{self.lower}, {self.upper}]")

    def __contains__(self, p: float) -> bool:
        return self.lower <= p <= self.upper


def cp_interval(losses: int, trials: int, confidence: float = 0.95) -> ConfInterval:
    """Exact two-sided Clopper-Pearson interval for a binomial proportion."""
    if trials < 1 or not 0 <= losses <= trials:
        raise ValueError(f"need 0 <= losses <= trials and trials >= 1, got {losses}/{trials}")
    a = 1.0 - confidence
    lo = 0.0 if losses == 0 else float(sps.beta.ppf(a / 2, losses, trials - losses + 1))
    hi = 1.0 if losses == trials else float(sps.beta.ppf(1 - a / 2, losses + 1, trials - losses))
    return ConfInterval(lo, hi, confidence)


@dataclass(frozen=True)
class Ccdf:
    """Empirical latency survival function ``P(L > t)``.

    Misses (packets never delivered, or delivered past the deadline) count as
    infinite latency and so sit in the tail at every ``t``.
    """

    support: np.ndarray
    counts: np.ndarray
    misses: int = 0

    @property
    def n(self) -> int:
        return int(self.counts.sum()) + self.misses

    @property
    def survival(self) -> np.ndarray:
        """Survival evaluated at each support point (right-continuous)."""
        tail = self.counts[::-1].cumsum()[::-1] - self.counts
        return (tail + self.misses) / self.n

    def survival_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        above = self.counts.sum() - np.concatenate(([0], self.counts.cumsum()))
        idx = np.searchsorted(self.support, t, side="right")
        return ((above[idx] + self.misses) / self.n)[()]

    def merge(self, other: "Ccdf") -> "Ccdf":
        support, inv = np.unique(np.concatenate([self.support, other.support]), return_inverse=True)
        counts = np.zeros(support.size, dtype=np.int64)
        np.add.at(counts, inv, np.concatenate([self.counts, other.counts]))
        return Ccdf(support, counts, self.misses + other.misses)

    def rows(self):
        return list(zip(self.support.tolist(), self.counts.tolist()))


def ccdf(latency_samples, miss_count: int = 0) -> Ccdf:
    samples = np.asarray(latency_samples, dtype=float).ravel()
    if samples.size == 0 and miss_count == 0:
        raise ValueError("ccdf needs at least one sample or miss")
    support, counts = np.unique(samples, return_counts=True)
    return Ccdf(support, counts.astype(np.int64), int(miss_count))


def outage_at(c: Ccdf, budget_ms: float) -> float:
    return float(c.survival_at(budget_ms))


@dataclass(frozen=True)
class PlrPoint:
    load_g: float
    losses: int
    trials: int
    confidence: float = 0.95
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def plr(self) -> float:
        return self.losses / self.trials

    @property
    def ci(self) -> ConfInterval:
        return cp_interval(self.losses, self.trials, self.confidence)

    def below(self, target: float) -> bool:
        return self.ci.upper < target

    def above(self, target: float) -> bool:
        return self.ci.lower > target


@dataclass
class PlrCurve:
    points: list[PlrPoint] = field(default_factory=list)

    def add(self, point: PlrPoint):
        self.points.append(point)
        self.points.sort(key=lambda p: p.load_g)

    def rows(self):
        return [(p.load_g, p.plr, p.ci.lower, p.ci.upper, p.trials) for p in self.points]


class LoadNotFoundError(RuntimeError):
    def __init__(self, message: str, points: Sequence[PlrPoint]):
        super().__init__(message)
        self.points = list(points)


@dataclass(frozen=True)
class SupportedLoad:
    g_star: float
    g_lo: float  # largest load certified below target
    g_hi: float  # smallest load certified above target
    resolved: bool  # False when bisection stopped on a point whose interval straddles the target
    points: tuple[PlrPoint, ...]


def supported_load(
    runner: Callable[[float], PlrPoint],
    target_plr: float,
    rel_tol: float = 0.05,
    bracket: tuple[float, float] = (0.25, 4.0),
    max_evals: int = 40,
) -> SupportedLoad:
    """Largest load whose PLR stays below ``target_plr``, found by bisection.

    A load is classified only when its Clopper-Pearson interval lies entirely
    on one side of the target. The bracket ends must classify as below and
    above respectively, otherwise :class:`LoadNotFoundError` is raised with
    the boundary points. Bisection stops once ``g_hi - g_lo <= rel_tol *
    g_star`` or when a midpoint cannot be classified at the runner's sample
    budget.
    """
    lo, hi = bracket
    if not 0 <= lo < hi:
        raise ValueError(f"bad bracket {bracket}")
    p_lo, p_hi = runner(lo), runner(hi)
    points = [p_lo, p_hi]
    if not p_lo.below(target_plr):
        raise LoadNotFoundError(
            f"PLR at G={lo} is {p_lo.plr:.3g} [{p_lo.ci.lower:.3g}, {p_lo.ci.upper:.3g}], "
            f"not certified below {target_plr:g}",
            points,
        )
    if not p_hi.above(target_plr):
        raise LoadNotFoundError(
            f"PLR at G={hi} is {p_hi.plr:.3g} [{p_hi.ci.lower:.3g}, {p_hi.ci.upper:.3g}], "
            f"not certified above {target_plr:g}",
            points,
        )
    resolved = True
    for _ in range(max_evals):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rel_tol * mid:
            break
        p = runner(mid)
        points.append(p)
        if p.below(target_plr):
            lo = mid
        elif p.above(target_plr):
            hi = mid
        else:
            resolved = False
            return SupportedLoad(mid, lo, hi, resolved, tuple(points))
    return SupportedLoad(0.5 * (lo + hi), lo, hi, resolved, tuple(points))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return format(float(v), ".10g")
    return str(v)


def write_csv(target, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write ``rows`` with a header line; returns the CSV text.

    ``target`` may be a path, an open text file or ``None`` (text only).
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    elif target is not None:
        target.write(text)
    return text


CCDF_HEADER = ("scheme", "latency_ms", "count")
OUTAGE_HEADER = ("scheme", "deadline_ms", "outage", "ci_lo", "ci_hi")
PLR_CURVE_HEADER = ("load_g", "plr", "ci_lo", "ci_hi", "trials")
