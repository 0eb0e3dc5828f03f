"""Grant-based and grant-free HARQ timelines and their latency distributions.

Every attempt occupies one mini-slot. Schedules are integer mini-slot
offsets from the first transmission opportunity:

* ``Reactive``: the next attempt starts one RTT after the previous one
  (TX + BS processing + feedback + UE processing).
* ``GrantBased``: reactive schedule delayed by the scheduling handshake.
* ``KRepetition``: ``K`` back-to-back attempts, no feedback in between.
* ``Proactive``: back-to-back attempts, each acknowledged; a positive
  feedback stops attempts the UE has not started once it has processed it.
* ``ReactiveBoost``: reactive schedule with per-attempt power boost.

Decoding uses one uniform ``U`` per packet: attempt ``j`` succeeds when
``U >= eps_j``, with ``eps_j`` the residual error after the first ``j``
attempts. Combining can therefore only help.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Union

import numpy as np

from gfra.core import RngPlan, TimingConfig, run_blocks
from gfra.phy import (
    FblCodeSpec,
    LinkBudget,
    PowerControlConfig,
    db_to_linear,
    per_normal_approx,
    tx_power_dbm,
)
from gfra.stats import Ccdf, ccdf, cp_interval


@dataclass(frozen=True)
class Reactive:
    name = "reactive"


@dataclass(frozen=True)
class ReactiveBoost:
    name = "reactive_boost"


@dataclass(frozen=True)
class GrantBased:
    scheduling_delay_minislots: int = 7
    name = "grant_based"

    def __post_init__(self):
        if self.scheduling_delay_minislots < 0:
            raise ValueError("scheduling_delay_minislots must be >= 0")


@dataclass(frozen=True)
class KRepetition:
    K: int = 2
    name = "k_repetition"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")


@dataclass(frozen=True)
class Proactive:
    max_tx: int = 4
    name = "proactive"

    def __post_init__(self):
        if self.max_tx < 1:
            raise ValueError(f"max_tx must be >= 1, got {self.max_tx}")


HarqScheme = Union[Reactive, ReactiveBoost, GrantBased, KRepetition, Proactive]


class Combining(str, Enum):
    NONE = "none"
    CHASE = "chase"


@dataclass(frozen=True)
class FixedProbs:
    """Success probability of attempt ``j`` given everything received so far.

    Under the coupled draw a packet is delivered by attempt ``j`` with
    probability ``max(p_1..p_j)``. Attempts past the end hold the last value.
    """

    success_probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.success_probs)
        if not probs or any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError(f"success probabilities must lie in [0, 1], got {probs}")
        object.__setattr__(self, "success_probs", probs)


@dataclass(frozen=True)
class FblLinked:
    """Per-attempt error rate from the finite-blocklength link abstraction.

    ``link.avg_snr_db`` is the mean SNR at the unboosted first-attempt power;
    boosted attempts add ``tx_power(k) - tx_power(1)`` dB. Fading is drawn
    independently per attempt. With Chase combining the SINRs of all
    attempts so far add up; without combining each attempt is decoded on its
    own with a fresh uniform.
    """

    spec: FblCodeSpec = field(default_factory=FblCodeSpec)
    link: LinkBudget = field(default_factory=LinkBudget)
    power: PowerControlConfig = field(default_factory=PowerControlConfig)
    combining: Combining = Combining.CHASE
    m_rb: int = 1
    pathloss_db: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "combining", Combining(self.combining))


AttemptModel = Union[FixedProbs, FblLinked]


def chase_combined_eps(attempt_sinrs_so_far, spec: FblCodeSpec):
    """Error rate after maximum-ratio combining identical retransmissions."""
    s = np.asarray(attempt_sinrs_so_far, dtype=float)
    if s.shape[-1:] == (0,):
        raise ValueError("need at least one attempt")
    return per_normal_approx(spec, s.sum(axis=-1))


def n_attempts(scheme: HarqScheme, max_attempts: int) -> int:
    if isinstance(scheme, KRepetition):
        return min(scheme.K, max_attempts)
    if isinstance(scheme, Proactive):
        return min(scheme.max_tx, max_attempts)
    return max_attempts


def attempt_schedule(scheme: HarqScheme, timing: TimingConfig, max_attempts: int) -> list[tuple[int, int]]:
    """``(start, feedback_ready)`` per attempt, in mini-slots.

    ``feedback_ready`` is when an ACK/NACK for the attempt reaches the UE
    (end of TX + BS processing + feedback transmission). For K-repetition it
    is informational only: the UE does not act on it within the bundle.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    a = n_attempts(scheme, max_attempts)
    if isinstance(scheme, (KRepetition, Proactive)):
        starts = list(range(a))
    else:
        offset = scheme.scheduling_delay_minislots if isinstance(scheme, GrantBased) else 0
        starts = [offset + j * timing.rtt_minislots for j in range(a)]
    fb = timing.bs_proc_minislots + timing.feedback_minislots
    return [(s, s + 1 + fb) for s in starts]


def resources_if_delivered(scheme: HarqScheme, timing: TimingConfig, max_attempts: int) -> np.ndarray:
    """Attempts transmitted when the packet is first decoded at attempt ``j``."""
    sched = attempt_schedule(scheme, timing, max_attempts)
    a = len(sched)
    if isinstance(scheme, KRepetition):
        return np.full(a, a)
    if isinstance(scheme, Proactive):
        starts = np.array([s for s, _ in sched])
        stop = np.array([f + timing.ue_proc_minislots for _, f in sched])
        return np.array([max(j + 1, int((starts < stop[j]).sum())) for j in range(a)])
    return np.arange(1, a + 1)


def attempt_eps(scheme: HarqScheme, model: AttemptModel, rng: np.random.Generator, n: int, a: int):
    """Residual error ``eps[packet, attempt]`` and whether draws are coupled.

    Always consumes the same random numbers for a given ``(n, a, model)``,
    whatever the scheme, so schemes can be compared on identical draws.
    """
    if isinstance(model, FixedProbs):
        p = np.array(model.success_probs)
        p = p[np.minimum(np.arange(a), p.size - 1)]
        return np.broadcast_to(1.0 - p, (n, a)), True
    gains = model.link.gains(rng, (n, a))
    boost = np.zeros(a)
    if isinstance(scheme, ReactiveBoost):
        p1 = tx_power_dbm(model.power, model.m_rb, model.pathloss_db, 1)
        boost = np.array(
            [tx_power_dbm(model.power, model.m_rb, model.pathloss_db, k) - p1 for k in range(1, a + 1)]
        )
    snr = model.link.avg_snr * db_to_linear(boost) * gains
    if model.combining is Combining.CHASE:
        return per_normal_approx(model.spec, np.cumsum(snr, axis=1)), True
    return per_normal_approx(model.spec, snr), False


@dataclass
class HarqResult:
    scheme: str
    minislot_ms: float
    latency_minislots: np.ndarray  # -1 marks a miss
    attempts_used: np.ndarray
    resources: np.ndarray
    deadline_ms: float | None = None

    @property
    def n_packets(self) -> int:
        return self.latency_minislots.size

    @property
    def delivered(self) -> np.ndarray:
        return self.latency_minislots >= 0

    @property
    def misses(self) -> int:
        return int((~self.delivered).sum())

    @property
    def latencies_ms(self) -> np.ndarray:
        return self.latency_minislots[self.delivered] * self.minislot_ms

    def ccdf(self) -> Ccdf:
        return ccdf(self.latencies_ms, self.misses)

    def histogram_rows(self):
        vals, counts = np.unique(self.latency_minislots[self.delivered], return_counts=True)
        return [(self.scheme, v * self.minislot_ms, int(c)) for v, c in zip(vals, counts)]

    def outage_row(self, deadline_ms: float, confidence: float = 0.95):
        late = int((self.latencies_ms > deadline_ms * (1 + 1e-12)).sum()) + self.misses
        ci = cp_interval(late, self.n_packets, confidence)
        return (self.scheme, deadline_ms, late / self.n_packets, ci.lower, ci.upper)


def _harq_block(scheme, model, timing, a, deadline_minislots, rng, start, count):
    wait = timing.arrival_wait(rng, count)
    u = rng.random(count)
    eps, coupled = attempt_eps(scheme, model, rng, count, a)
    if coupled:
        ok = u[:, None] >= eps
    else:
        ok = rng.random((count, a)) >= eps
    hit = ok.any(axis=1)
    first = np.argmax(ok, axis=1)
    starts = np.array([s for s, _ in attempt_schedule(scheme, timing, a)])
    latency = wait + starts[first] + 1 + timing.bs_proc_minislots
    if deadline_minislots is not None:
        hit &= latency <= deadline_minislots
    latency = np.where(hit, latency, -1)
    used = resources_if_delivered(scheme, timing, a)
    attempts = np.where(hit, first + 1, a)
    resources = np.where(ok.any(axis=1), used[first], len(starts))
    return latency, attempts, resources


def simulate_harq(
    scheme: HarqScheme,
    attempt_model: AttemptModel,
    timing: TimingConfig,
    n_packets: int,
    deadline_ms: float | None = None,
    seed: int | RngPlan = 1,
    max_attempts: int = 4,
    workers: int = 1,
) -> HarqResult:
    """Monte Carlo latency of ``n_packets`` independent packets.

    Latency runs from packet arrival to the end of BS processing of the
    first successful attempt. Packets not decoded within the schedule, or
    decoded after ``deadline_ms``, are misses.
    """
    if n_packets < 1:
        raise ValueError("n_packets must be >= 1")
    plan = seed if isinstance(seed, RngPlan) else RngPlan(seed)
    a = n_attempts(scheme, max_attempts)
    deadline = None
    if deadline_ms is not None:
        deadline = int(np.floor(deadline_ms / timing.minislot_ms + 1e-9))
    fn = partial(_harq_block, scheme, attempt_model, timing, a, deadline)
    parts = run_blocks(fn, plan, n_packets, workers)
    lat, att, res = (np.concatenate(x) for x in zip(*parts))
    return HarqResult(scheme.name, timing.minislot_ms, lat, att, res, deadline_ms)
