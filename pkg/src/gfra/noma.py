"""Sparse NOMA contention frames with multi-slot combining and SIC.

Each active user picks ``d`` distinct slots out of ``S`` and sends its packet
in all of them. Every (user, slot) pair sees an independent unit-mean
Rayleigh block-fading power gain. The receiver treats undecoded interference
as noise, combines the user's slots according to the strategy, and cancels
decoded users perfectly before trying again.

Strategies, for the user's per-slot SINRs ``s_1..s_d``:

``selection``  repetition, decode from the best slot only (``best_slot_only``)
               or try each slot separately (``any_slot``)
``chase``      repetition with maximum-ratio combining, SINRs add up
``lowrate``    one low-rate codeword spread over ``d`` slots, decoded jointly

Each user draws one uniform ``U`` per frame and is decoded once its error
probability at the current cancellation state drops to ``eps <= U``.
Cancellation never lowers anyone's SINR, so the decoded set grows
monotonically to a unique fixed point regardless of processing order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import partial

import numpy as np

from gfra.core import ConfigError, RngPlan, coerce_enum, run_blocks
from gfra.phy import FblCodeSpec, db_to_linear, per_joint, per_normal_approx
from gfra.stats import PlrPoint, cp_interval


class Strategy(str, Enum):
    SELECTION = "selection"
    CHASE = "chase"
    LOWRATE = "lowrate"


class SelectionMode(str, Enum):
    BEST_SLOT_ONLY = "best_slot_only"
    ANY_SLOT = "any_slot"


class Arrival(str, Enum):
    POISSON_USERS = "poisson_users"
    FIXED_USERS = "fixed_users"


@dataclass(frozen=True)
class NomaConfig:
    slots_per_frame: int = 14
    re_per_slot: int = 240
    k_bits: int = 256
    d: int = 4
    avg_snr_db: float = 9.0
    load_g: float = 1.0
    arrival: Arrival = Arrival.FIXED_USERS
    n_users: int | None = None  # fixed_users only; None derives K from load_g
    strategy: Strategy = Strategy.LOWRATE
    selection_mode: SelectionMode = SelectionMode.BEST_SLOT_ONLY
    max_sic_iters: int | None = None
    snr_spread_db: float = 0.0  # per-user offset, uniform in +-spread/2

    def __post_init__(self):
        object.__setattr__(self, "strategy", coerce_enum(Strategy, self.strategy, "strategy"))
        object.__setattr__(self, "selection_mode", coerce_enum(SelectionMode, self.selection_mode, "selection_mode"))
        object.__setattr__(self, "arrival", coerce_enum(Arrival, self.arrival, "arrival"))
        if self.slots_per_frame < 1 or self.re_per_slot < 1 or self.k_bits < 1:
            raise ConfigError("slots_per_frame, re_per_slot and k_bits must be >= 1")
        if not 1 <= self.d <= self.slots_per_frame:
            raise ConfigError(f"d must be in 1..{self.slots_per_frame}, got {self.d}")
        if self.load_g < 0:
            raise ConfigError(f"load_g must be >= 0, got {self.load_g}")
        if self.n_users is not None and self.n_users < 0:
            raise ConfigError("n_users must be >= 0")
        if self.max_sic_iters is not None and self.max_sic_iters < 1:
            raise ConfigError("max_sic_iters must be >= 1")
        if self.snr_spread_db < 0:
            raise ConfigError("snr_spread_db must be >= 0")

    @property
    def spec(self) -> FblCodeSpec:
        return FblCodeSpec(self.k_bits, self.re_per_slot)

    @property
    def avg_snr(self) -> float:
        return float(db_to_linear(self.avg_snr_db))

    @property
    def mean_users(self) -> float:
        if self.arrival is Arrival.FIXED_USERS and self.n_users is not None:
            return float(self.n_users)
        return self.load_g * self.slots_per_frame


@dataclass
class FrameAllocation:
    slots: np.ndarray  # (K, d) distinct slot indices per user
    gains: np.ndarray  # (K, d) power gains in the chosen slots
    snr: np.ndarray  # (K,) linear average SNR per user

    @property
    def n_users(self) -> int:
        return self.slots.shape[0]


def _draw_user_counts(cfg: NomaConfig, rng, size):
    """Active users per frame.

    ``fixed_users`` without ``n_users`` puts ``G*S`` users in every frame,
    rounding stochastically between the two neighbouring integers so that
    the mean stays exactly ``G*S``.
    """
    mean = cfg.load_g * cfg.slots_per_frame
    if cfg.arrival is Arrival.POISSON_USERS:
        return rng.poisson(mean, size=size)
    if cfg.n_users is not None:
        return np.full(size, cfg.n_users, dtype=np.int64)
    base = int(np.floor(mean + 1e-9))
    frac = mean - base
    counts = np.full(size, base, dtype=np.int64)
    if frac > 1e-9:
        counts += rng.random(size) < frac
    return counts


def _draw_slots(cfg: NomaConfig, rng, shape):
    """Uniform ``d``-subsets of the frame's slots, sorted, for each entry of ``shape``."""
    s, d = cfg.slots_per_frame, cfg.d
    if d == s:
        return np.broadcast_to(np.arange(s), (*shape, s)).copy()
    if d == 1:
        return rng.integers(0, s, size=(*shape, 1))
    keys = rng.random((*shape, s))
    return np.sort(np.argpartition(keys, d - 1, axis=-1)[..., :d], axis=-1)


def _draw_snr(cfg: NomaConfig, rng, shape):
    if cfg.snr_spread_db == 0:
        return np.full(shape, cfg.avg_snr)
    offset = rng.uniform(-cfg.snr_spread_db / 2, cfg.snr_spread_db / 2, size=shape)
    return db_to_linear(cfg.avg_snr_db + offset)


def build_frame(cfg: NomaConfig, rng: np.random.Generator) -> FrameAllocation:
    k = int(_draw_user_counts(cfg, rng, 1)[0])
    slots = _draw_slots(cfg, rng, (k,))
    gains = rng.standard_exponential((k, cfg.d))
    return FrameAllocation(slots, gains, _draw_snr(cfg, rng, (k,)))


def user_sinr_per_slot(alloc: FrameAllocation, decoded_set, user: int) -> np.ndarray:
    """SINR of ``user`` in each of its slots, cancelling ``decoded_set``. Noise power is 1."""
    decoded = set(decoded_set)
    out = np.empty(alloc.slots.shape[1])
    for j, t in enumerate(alloc.slots[user]):
        interference = 0.0
        for v in range(alloc.n_users):
            if v == user or v in decoded:
                continue
            hit = np.flatnonzero(alloc.slots[v] == t)
            if hit.size:
                interference += alloc.snr[v] * alloc.gains[v, hit[0]]
        out[j] = alloc.snr[user] * alloc.gains[user, j] / (1.0 + interference)
    return out


def strategy_eps(strategy, slot_sinrs, cfg: NomaConfig, selection_mode=None):
    """Error probability for each user given its slot SINRs (last axis)."""
    strategy = Strategy(strategy)
    s = np.asarray(slot_sinrs, dtype=float)
    spec = cfg.spec
    if strategy is Strategy.CHASE:
        return per_normal_approx(spec, s.sum(axis=-1))
    if strategy is Strategy.LOWRATE:
        return per_joint(np.full(s.shape[-1], cfg.re_per_slot), s, cfg.k_bits)
    mode = SelectionMode(selection_mode or cfg.selection_mode)
    if mode is SelectionMode.BEST_SLOT_ONLY:
        return per_normal_approx(spec, s.max(axis=-1))
    return np.prod(per_normal_approx(spec, s), axis=-1)[()]


@dataclass
class SicResult:
    decoded: np.ndarray  # (K,) bool
    iterations: int
    decode_iteration: np.ndarray  # (K,) iteration in which each user was decoded, 0 if never


def sic_decode(
    alloc: FrameAllocation,
    cfg: NomaConfig,
    rng: np.random.Generator | None = None,
    draws=None,
) -> SicResult:
    """Synchronous SIC on one frame.

    Each pass evaluates every undecoded user against the current decoded
    set and admits all users with ``U >= eps`` at once. ``draws`` pins the
    per-user uniforms; otherwise they come from ``rng``.
    """
    k = alloc.n_users
    u = np.asarray(draws, dtype=float) if draws is not None else rng.random(k)
    decoded = np.zeros(k, dtype=bool)
    when = np.zeros(k, dtype=np.int64)
    limit = cfg.max_sic_iters or max(k, 1)
    it = 0
    while it < limit and not decoded.all():
        it += 1
        current = set(np.flatnonzero(decoded).tolist())
        new = [
            v
            for v in np.flatnonzero(~decoded)
            if u[v] >= strategy_eps(cfg.strategy, user_sinr_per_slot(alloc, current, v), cfg)
        ]
        if not new:
            break
        decoded[new] = True
        when[new] = it
    return SicResult(decoded, it, when)


@dataclass
class FrameBatch:
    """Padded arrays for ``B`` frames of up to ``Kmax`` users."""

    slots: np.ndarray  # (B, Kmax, d)
    gains: np.ndarray  # (B, Kmax, d)
    snr: np.ndarray  # (B, Kmax)
    active: np.ndarray  # (B, Kmax) bool

    @classmethod
    def from_frames(cls, frames: list[FrameAllocation]) -> "FrameBatch":
        b = len(frames)
        kmax = max([f.n_users for f in frames] + [1])
        d = frames[0].slots.shape[1]
        slots = np.zeros((b, kmax, d), dtype=np.int64)
        gains = np.zeros((b, kmax, d))
        snr = np.zeros((b, kmax))
        active = np.zeros((b, kmax), dtype=bool)
        for i, f in enumerate(frames):
            n = f.n_users
            slots[i, :n], gains[i, :n], snr[i, :n], active[i, :n] = f.slots, f.gains, f.snr, True
        return cls(slots, gains, snr, active)


def build_batch(cfg: NomaConfig, rng: np.random.Generator, n_frames: int) -> FrameBatch:
    counts = _draw_user_counts(cfg, rng, n_frames)
    kmax = max(int(counts.max(initial=0)), 1)
    active = np.arange(kmax) < counts[:, None]
    slots = _draw_slots(cfg, rng, (n_frames, kmax))
    gains = rng.standard_exponential((n_frames, kmax, cfg.d))
    snr = _draw_snr(cfg, rng, (n_frames, kmax))
    return FrameBatch(slots, gains, snr, active)


def sic_decode_batch(batch: FrameBatch, cfg: NomaConfig, draws: np.ndarray):
    """Vectorised :func:`sic_decode` over a batch of frames.

    Returns ``(decoded, iterations)`` with shapes ``(B, Kmax)`` and ``(B,)``.
    Only frames whose decoded set changed in the previous pass are
    re-evaluated; the rest are already at their fixed point.
    """
    b, kmax, d = batch.slots.shape
    s = cfg.slots_per_frame
    rx = batch.snr[..., None] * batch.gains * batch.active[..., None]
    decoded = np.zeros((b, kmax), dtype=bool)
    iterations = np.zeros(b, dtype=np.int64)
    work = np.flatnonzero(batch.active.any(axis=1))
    limit = cfg.max_sic_iters or kmax
    it = 0
    while work.size and it < limit:
        it += 1
        w = work.size
        slots = batch.slots[work]
        undecoded = batch.active[work] & ~decoded[work]
        own = rx[work] * undecoded[..., None]
        flat = (np.arange(w)[:, None, None] * s + slots).ravel()
        per_slot = np.bincount(flat, weights=own.ravel(), minlength=w * s).reshape(w, s)
        total = per_slot[np.arange(w)[:, None, None], slots]
        interference = np.maximum(total - own, 0.0)
        eps = strategy_eps(cfg.strategy, rx[work] / (1.0 + interference), cfg)
        new = undecoded & (draws[work] >= eps)
        iterations[work] = it
        decoded[work] |= new
        still = (batch.active[work] & ~decoded[work]).any(axis=1)
        work = work[new.any(axis=1) & still]
    return decoded, iterations


@dataclass(frozen=True)
class NomaEstimate:
    cfg: NomaConfig
    frames: int
    packets: int
    losses: int
    sic_iterations: int  # summed over frames with at least one user
    busy_frames: int

    @property
    def plr(self) -> float:
        return self.losses / self.packets if self.packets else 0.0

    def ci(self, confidence: float = 0.95):
        return cp_interval(self.losses, max(self.packets, 1), confidence)

    @property
    def mean_sic_iters(self) -> float:
        return self.sic_iterations / self.busy_frames if self.busy_frames else 0.0

    def point(self) -> PlrPoint:
        return PlrPoint(self.cfg.load_g, self.losses, max(self.packets, 1), extra={"frames": self.frames})

    def row(self):
        ci = self.ci()
        return (
            self.cfg.strategy.value,
            self.cfg.d,
            self.cfg.load_g,
            self.frames,
            self.packets,
            self.losses,
            self.plr,
            ci.lower,
            ci.upper,
            self.mean_sic_iters,
        )


PLR_HEADER = ("strategy", "d", "load_g", "frames", "packets", "losses", "plr", "ci_lo", "ci_hi", "mean_sic_iters")


def _noma_block(cfg, rng, start, count):
    batch = build_batch(cfg, rng, count)
    draws = rng.random(batch.active.shape)
    decoded, iterations = sic_decode_batch(batch, cfg, draws)
    packets = int(batch.active.sum())
    losses = packets - int(decoded.sum())
    busy = batch.active.any(axis=1)
    return packets, losses, int(iterations[busy].sum()), int(busy.sum())


def estimate_plr(cfg: NomaConfig, n_frames: int, seed: int | RngPlan = 1, workers: int = 1) -> NomaEstimate:
    """Packet loss rate over ``n_frames`` independent frames."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    plan = seed if isinstance(seed, RngPlan) else RngPlan(seed)
    parts = run_blocks(partial(_noma_block, cfg), plan, n_frames, workers)
    packets, losses, iters, busy = (sum(x) for x in zip(*parts))
    return NomaEstimate(cfg, n_frames, packets, losses, iters, busy)
