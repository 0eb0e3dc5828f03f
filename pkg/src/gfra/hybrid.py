"""Dedicated initial transmission plus blind repetitions over a shared pool.

Every user owns a dedicated resource for its first attempt. Attempts
``2..d`` go out in consecutive mini-slots, each on one of ``R`` shared
resources. After each round the receiver runs SIC over everything received
so far: replicas of decoded users are cancelled, which can leave other
replicas interference-free.

Shared-resource decoding rules:

``collision_channel``  a replica is usable iff it is the only uncancelled one
                       on its resource; it then fails with ``eps_shared``
``sinr_based``         interference is treated as noise and error rates come
                       from the finite-blocklength abstraction

With Chase combining a user keeps one uniform ``U`` for the whole frame and
is decoded once its combined residual error drops to ``eps <= U``. Under the
collision channel the residual after the dedicated attempt and ``m`` usable
replicas is ``eps1 * eps_shared**m``. Without combining each replica is
decoded on its own with a fresh uniform.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import partial

import numpy as np

from gfra.core import ConfigError, RngPlan, TimingConfig, coerce_enum, run_blocks
from gfra.phy import FblCodeSpec, InfeasibleError, db_to_linear, per_normal_approx, required_blocklength
from gfra.stats import cp_interval


class DecodeRule(str, Enum):
    COLLISION_CHANNEL = "collision_channel"
    SINR_BASED = "sinr_based"


class RetxSelection(str, Enum):
    UNIFORM_RANDOM = "uniform_random"
    FIXED_SEQUENCE = "fixed_sequence"


class HybridCombining(str, Enum):
    NONE = "none"
    CHASE = "chase"


@dataclass(frozen=True)
class HybridConfig:
    n_users: int = 10
    pool_size: int = 1
    attempts: int = 2
    eps1: float = 0.1
    eps_shared: float = 0.0
    decode_rule: DecodeRule = DecodeRule.COLLISION_CHANNEL
    blind: bool = True
    combining: HybridCombining = HybridCombining.CHASE
    retx_selection: RetxSelection = RetxSelection.UNIFORM_RANDOM
    # sinr_based only: every replica is one codeword of this size
    k_bits: int = 256
    n_re: int = 100
    avg_snr_db: float = 9.0
    fading: bool = True

    def __post_init__(self):
        object.__setattr__(self, "decode_rule", coerce_enum(DecodeRule, self.decode_rule, "decode_rule"))
        object.__setattr__(self, "combining", coerce_enum(HybridCombining, self.combining, "combining"))
        object.__setattr__(self, "retx_selection", coerce_enum(RetxSelection, self.retx_selection, "retx_selection"))
        if self.n_users < 1 or self.attempts < 1:
            raise ConfigError("n_users and attempts must be >= 1")
        if self.pool_size < 1 and not (self.pool_size == 0 and self.attempts == 1):
            raise ConfigError("pool_size must be >= 1 (0 only allowed with attempts = 1)")
        for name in ("eps1", "eps_shared"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")

    @property
    def spec(self) -> FblCodeSpec:
        return FblCodeSpec(self.k_bits, self.n_re)


@dataclass
class HybridDraws:
    """Random inputs for ``F`` frames; any field may be pinned in tests."""

    u: np.ndarray  # (F, N) coupled decode uniform
    choices: np.ndarray  # (F, d-1, N) shared resource per retransmission round
    u_rep: np.ndarray  # (F, d-1, N) per-replica uniforms (no combining)
    g0: np.ndarray  # (F, N) dedicated-resource fading gain
    g_shared: np.ndarray  # (F, d-1, N)
    wait: np.ndarray  # (F, N) arrival-to-first-TX wait in mini-slots


def draw_inputs(cfg: HybridConfig, timing: TimingConfig, rng: np.random.Generator, frames: int) -> HybridDraws:
    n, rounds = cfg.n_users, cfg.attempts - 1
    u = rng.random((frames, n))
    if cfg.retx_selection is RetxSelection.UNIFORM_RANDOM:
        choices = rng.integers(0, max(cfg.pool_size, 1), size=(frames, rounds, n))
    else:
        r = np.arange(1, rounds + 1)[:, None]
        seq = (np.arange(n)[None, :] + r - 1) % max(cfg.pool_size, 1)
        choices = np.broadcast_to(seq, (frames, rounds, n)).copy()
    u_rep = rng.random((frames, rounds, n))
    if cfg.decode_rule is DecodeRule.SINR_BASED and cfg.fading:
        g0 = rng.standard_exponential((frames, n))
        g_shared = rng.standard_exponential((frames, rounds, n))
    else:
        g0 = np.ones((frames, n))
        g_shared = np.ones((frames, rounds, n))
    wait = timing.arrival_wait(rng, frames * n).reshape(frames, n)
    return HybridDraws(u, choices, u_rep, g0, g_shared, wait)


def _replica_state(cfg, draws, decoded, transmitted, r):
    """Usable-replica mask (collision) or per-replica SINR (sinr_based) for rounds ``1..r``."""
    f, n = decoded.shape
    q = max(cfg.pool_size, 1)
    choice = draws.choices[:, :r]
    live = transmitted[:, :r] & ~decoded[:, None, :]
    cell = (np.arange(f)[:, None, None] * r + np.arange(r)[None, :, None]) * q + choice
    if cfg.decode_rule is DecodeRule.COLLISION_CHANNEL:
        occ = np.bincount(cell.ravel(), weights=live.ravel(), minlength=f * r * q)
        return live & (occ[cell] == 1)
    snr = db_to_linear(cfg.avg_snr_db)
    rx = snr * draws.g_shared[:, :r] * transmitted[:, :r]
    load = np.bincount(cell.ravel(), weights=(rx * live).ravel(), minlength=f * r * q)
    interference = np.maximum(load[cell] - rx * live, 0.0)
    return np.where(transmitted[:, :r], rx / (1.0 + interference), 0.0)


def _newly_decoded(cfg, draws, decoded, transmitted, r):
    if r == 0:
        if cfg.decode_rule is DecodeRule.COLLISION_CHANNEL:
            eps = cfg.eps1
        else:
            eps = per_normal_approx(cfg.spec, db_to_linear(cfg.avg_snr_db) * draws.g0)
        return draws.u >= eps
    state = _replica_state(cfg, draws, decoded, transmitted, r)
    if cfg.decode_rule is DecodeRule.COLLISION_CHANNEL:
        if cfg.combining is HybridCombining.CHASE:
            m = state.sum(axis=1)
            ok = (m > 0) & (draws.u >= cfg.eps1 * cfg.eps_shared**m)
        else:
            ok = (state & (draws.u_rep[:, :r] >= cfg.eps_shared)).any(axis=1)
    else:
        if cfg.combining is HybridCombining.CHASE:
            total = db_to_linear(cfg.avg_snr_db) * draws.g0 + state.sum(axis=1)
            ok = draws.u >= per_normal_approx(cfg.spec, total)
        else:
            ok = (transmitted[:, :r] & (draws.u_rep[:, :r] >= per_normal_approx(cfg.spec, state))).any(axis=1)
    return ok & ~decoded


def resolve_frames(cfg: HybridConfig, draws: HybridDraws):
    """Run all rounds with SIC to a fixed point after each one.

    Returns ``(deliver_round, transmitted, sic_iterations)``: the round in
    which each user was decoded (-1 if never), the shared-replica
    transmission mask and the number of SIC passes per round.
    """
    f, n = draws.u.shape
    rounds = cfg.attempts - 1
    decoded = _newly_decoded(cfg, draws, np.zeros((f, n), dtype=bool), None, 0)
    deliver = np.where(decoded, 0, -1)
    transmitted = np.zeros((f, rounds, n), dtype=bool)
    passes = []
    for r in range(1, rounds + 1):
        transmitted[:, r - 1] = True if cfg.blind else ~decoded
        it = 0
        while True:
            it += 1
            new = _newly_decoded(cfg, draws, decoded, transmitted, r)
            if not new.any():
                break
            decoded |= new
            deliver[new] = r
        passes.append(it)
    return deliver, transmitted, passes


@dataclass
class HybridFrameResult:
    delivered: np.ndarray  # (N,) bool
    delivering_attempt: np.ndarray  # 1-based, 0 when not delivered
    latency_minislots: np.ndarray  # -1 when not delivered
    resources_consumed: np.ndarray  # dedicated + shared replicas sent
    sic_passes: list


def _latency(deliver, wait, timing):
    return np.where(deliver >= 0, wait + deliver + 1 + timing.bs_proc_minislots, -1)


def simulate_hybrid_frame(
    cfg: HybridConfig,
    timing: TimingConfig,
    rng: np.random.Generator | None = None,
    draws: HybridDraws | None = None,
) -> HybridFrameResult:
    """One frame of ``cfg.n_users`` packets; pass ``draws`` to pin the randomness."""
    if draws is None:
        draws = draw_inputs(cfg, timing, rng, 1)
    deliver, transmitted, passes = resolve_frames(cfg, draws)
    deliver, wait = deliver[0], draws.wait[0]
    return HybridFrameResult(
        delivered=deliver >= 0,
        delivering_attempt=np.where(deliver >= 0, deliver + 1, 0),
        latency_minislots=_latency(deliver, wait, timing),
        resources_consumed=1 + transmitted[0].sum(axis=0),
        sic_passes=passes,
    )


@dataclass(frozen=True)
class HybridEstimate:
    cfg: HybridConfig
    minislot_ms: float
    frames: int
    packets: int
    losses: int
    latency_counts: dict  # latency in mini-slots -> delivered packets
    resources: int

    @property
    def plr(self) -> float:
        return self.losses / self.packets

    def ci(self, confidence: float = 0.95):
        return cp_interval(self.losses, self.packets, confidence)

    @property
    def mean_latency_ms(self) -> float:
        delivered = sum(self.latency_counts.values())
        if not delivered:
            return float("nan")
        return sum(k * c for k, c in self.latency_counts.items()) / delivered * self.minislot_ms

    def latency_quantile_ms(self, q: float) -> float:
        """Latency quantile over all packets; lost packets count as infinite."""
        need = q * self.packets
        seen = 0
        for lat in sorted(self.latency_counts):
            seen += self.latency_counts[lat]
            if seen >= need:
                return lat * self.minislot_ms
        return float("inf")

    def row(self, bits_per_re: float = float("nan")):
        ci = self.ci()
        c = self.cfg
        return (
            c.n_users,
            c.pool_size,
            c.attempts,
            c.eps1,
            self.plr,
            ci.lower,
            ci.upper,
            self.mean_latency_ms,
            self.latency_quantile_ms(0.99999),
            bits_per_re,
        )


HYBRID_HEADER = ("N", "R", "d", "eps1", "plr", "ci_lo", "ci_hi", "mean_latency_ms", "p99999_latency_ms", "bits_per_re")


def _hybrid_block(cfg, timing, rng, start, count):
    draws = draw_inputs(cfg, timing, rng, count)
    deliver, transmitted, _ = resolve_frames(cfg, draws)
    lat = _latency(deliver, draws.wait, timing)
    values, counts = np.unique(lat[lat >= 0], return_counts=True)
    losses = int((deliver < 0).sum())
    resources = int(deliver.size + transmitted.sum())
    return dict(zip(values.tolist(), counts.tolist())), losses, resources


def hybrid_outage(
    cfg: HybridConfig,
    n_frames: int,
    seed: int | RngPlan = 1,
    timing: TimingConfig | None = None,
    workers: int = 1,
) -> HybridEstimate:
    """Fraction of packets not delivered within ``cfg.attempts`` attempts."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    timing = timing or TimingConfig()
    plan = seed if isinstance(seed, RngPlan) else RngPlan(seed)
    parts = run_blocks(partial(_hybrid_block, cfg, timing), plan, n_frames, workers)
    hist: dict = {}
    losses = resources = 0
    for h, lost, res in parts:
        for k, v in h.items():
            hist[k] = hist.get(k, 0) + v
        losses += lost
        resources += res
    return HybridEstimate(cfg, timing.minislot_ms, n_frames, n_frames * cfg.n_users, losses, hist, resources)


@dataclass(frozen=True)
class ResourceEfficiency:
    n_users: int
    n_single: int  # REs per single-shot packet sized for the end-to-end target
    n_initial: int  # REs of the dedicated attempt, sized for eps1
    n_shared: int  # REs of one shared-pool resource, sized for eps_shared
    provisioned_single: int
    provisioned_hybrid: int
    provisioned_reactive: float  # expected REs per cycle, retransmission on demand
    hybrid_plr: float
    bits_per_re_hybrid: float
    bits_per_re_single: float
    bits_per_re_reactive: float
    retx_delay_hybrid_minislots: int
    retx_delay_reactive_minislots: int

    @property
    def ratio(self) -> float:
        """Hybrid / single-shot provisioned resources per cycle."""
        return self.provisioned_hybrid / self.provisioned_single

    @property
    def provisioned_per_user_hybrid(self) -> float:
        return self.provisioned_hybrid / self.n_users

    @property
    def provisioned_per_user_single(self) -> float:
        return self.provisioned_single / self.n_users

    @property
    def retx_delay_reduction(self) -> float:
        return 1.0 - self.retx_delay_hybrid_minislots / self.retx_delay_reactive_minislots


def resource_efficiency(
    cfg: HybridConfig,
    snr_db: float,
    target_e2e: float,
    n_frames: int = 20_000,
    seed: int | RngPlan = 1,
    timing: TimingConfig | None = None,
    sizing_eps_shared: float | None = None,
) -> ResourceEfficiency:
    """Provisioned resources of the hybrid scheme against single-shot and reactive HARQ.

    Blocklengths come from the inverse finite-blocklength approximation on an
    AWGN link at ``snr_db``. Single shot provisions ``N*n(target_e2e)``; the
    hybrid scheme ``N*n(eps1) + R*(d-1)*n(eps_shared)``; reactive HARQ
    ``N*(n(eps1) + eps1*n(eps_shared))`` on average. Delivered fractions for
    the hybrid scheme are estimated by Monte Carlo with ``cfg``.
    ``sizing_eps_shared`` overrides ``cfg.eps_shared`` for sizing only (a
    zero residual error cannot be sized).
    """
    timing = timing or TimingConfig()
    s = float(db_to_linear(snr_db))
    k, n_users = cfg.k_bits, cfg.n_users
    eps_sh = cfg.eps_shared if sizing_eps_shared is None else sizing_eps_shared
    try:
        n_single = required_blocklength(k, target_e2e, s)
        n_init = required_blocklength(k, cfg.eps1, s)
        n_shared = required_blocklength(k, eps_sh, s) if cfg.attempts > 1 else 0
    except (InfeasibleError, ValueError) as exc:
        raise InfeasibleError(f"resource sizing infeasible: {exc}") from exc
    prov_single = n_users * n_single
    prov_hybrid = n_users * n_init + cfg.pool_size * (cfg.attempts - 1) * n_shared
    prov_reactive = n_users * (n_init + cfg.eps1 * n_shared)
    est = hybrid_outage(cfg, n_frames, seed, timing)
    delivered_bits = k * n_users * (1.0 - est.plr)
    return ResourceEfficiency(
        n_users=n_users,
        n_single=n_single,
        n_initial=n_init,
        n_shared=n_shared,
        provisioned_single=prov_single,
        provisioned_hybrid=prov_hybrid,
        provisioned_reactive=prov_reactive,
        hybrid_plr=est.plr,
        bits_per_re_hybrid=delivered_bits / prov_hybrid,
        bits_per_re_single=k * n_users * (1.0 - target_e2e) / prov_single,
        bits_per_re_reactive=k * n_users * (1.0 - cfg.eps1 * eps_sh) / prov_reactive,
        retx_delay_hybrid_minislots=1,
        retx_delay_reactive_minislots=timing.rtt_minislots,
    )
