"""Numerology, timing configuration and deterministic random streams.

Time inside every engine is an integer number of mini-slots. Conversion to
milliseconds happens only when results are reported, so latency staircases
are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

VALID_SCS_KHZ = (15, 30, 60, 120, 240)
SYMBOLS_PER_REFERENCE_SLOT = 14  # normal cyclic prefix


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


def minislot_duration_ms(scs_khz: int, symbols: int) -> float:
    """Duration of a mini-slot of ``symbols`` OFDM symbols at ``scs_khz``.

    A 15 kHz reference slot lasts 1 ms and carries 14 symbols; the symbol
    duration scales inversely with the subcarrier spacing.

    >>> round(minislot_duration_ms(60, 2), 6)
    0.035714
    """
    if scs_khz not in VALID_SCS_KHZ:
        raise ConfigError(f"scs_khz must be one of {VALID_SCS_KHZ}, got {scs_khz!r}")
    if isinstance(symbols, bool) or not isinstance(symbols, (int, np.integer)) or not 1 <= symbols <= 14:
        raise ConfigError(f"symbols must be an integer in 1..14, got {symbols!r}")
    return symbols / (SYMBOLS_PER_REFERENCE_SLOT * (scs_khz / 15))


def coerce_enum(enum_cls, value, name):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"{name} must be one of {choices}, got {value!r}") from None


class Alignment(str, Enum):
    IMMEDIATE = "immediate"
    NEXT_BOUNDARY = "next_boundary"


@dataclass(frozen=True)
class TimingConfig:
    """Mini-slot numerology and HARQ processing delays (in mini-slots).

    ``alignment`` controls the wait between packet arrival and the first
    transmission. ``immediate`` transmits in the arrival mini-slot. With
    ``next_boundary`` the packet arrives during a mini-slot and waits for
    the next transmission opportunity; opportunities recur every
    ``tx_period_minislots`` mini-slots and the arrival mini-slot is uniform
    within the period, so the wait is uniform on ``1..tx_period_minislots``.
    """

    scs_khz: int = 60
    symbols_per_minislot: int = 2
    ue_proc_minislots: int = 1
    bs_proc_minislots: int = 1
    feedback_minislots: int = 1
    alignment: Alignment = Alignment.IMMEDIATE
    tx_period_minislots: int = 1

    def __post_init__(self):
        if self.scs_khz not in VALID_SCS_KHZ:
            raise ConfigError(f"scs_khz must be one of {VALID_SCS_KHZ}, got {self.scs_khz!r}")
        if not 1 <= self.symbols_per_minislot <= 13:
            raise ConfigError(
                f"symbols_per_minislot must be in 1..13, got {self.symbols_per_minislot!r}"
            )
        for name in ("ue_proc_minislots", "bs_proc_minislots", "feedback_minislots"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if self.tx_period_minislots < 1:
            raise ConfigError(f"tx_period_minislots must be >= 1, got {self.tx_period_minislots!r}")
        object.__setattr__(self, "alignment", coerce_enum(Alignment, self.alignment, "alignment"))

    @property
    def minislot_ms(self) -> float:
        return minislot_duration_ms(self.scs_khz, self.symbols_per_minislot)

    @property
    def rtt_minislots(self) -> int:
        """Start-to-start spacing of reactive HARQ attempts (one-mini-slot TX)."""
        return 1 + self.bs_proc_minislots + self.feedback_minislots + self.ue_proc_minislots

    def to_ms(self, minislots):
        return np.asarray(minislots) * self.minislot_ms

    def arrival_wait(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Mini-slots between packet arrival and the first transmission."""
        if self.alignment is Alignment.IMMEDIATE:
            return np.zeros(size, dtype=np.int64)
        return rng.integers(1, self.tx_period_minislots + 1, size=size, dtype=np.int64)


def derive_stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for stream ``index`` of ``master_seed``.

    The seed material is hashed through :class:`numpy.random.SeedSequence`
    into a Philox key; Philox is counter based, so each stream has a
    2**256 period and distinct keys never overlap in practice.
    """
    if master_seed < 0 or index < 0:
        raise ConfigError("master_seed and index must be non-negative")
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class RngPlan:
    master_seed: int = 1
    block_size: int = 4096

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed!r}")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")

    def stream(self, index: int) -> np.random.Generator:
        return derive_stream(self.master_seed, index)

    def blocks(self, n_items: int):
        """Yield ``(block_index, start, count)`` covering ``n_items`` items.

        Block boundaries depend only on ``block_size``; results computed per
        block are therefore independent of how blocks are spread over
        workers.
        """
        start = 0
        index = 0
        while start < n_items:
            count = min(self.block_size, n_items - start)
            yield index, start, count
            start += count
            index += 1


def _call_block(args):
    fn, plan, index, start, count = args
    return fn(plan.stream(index), start, count)


def run_blocks(fn, plan: RngPlan, n_items: int, workers: int = 1) -> list:
    """Apply ``fn(rng, start, count)`` to every block of ``n_items``.

    Each block draws from its own derived stream, so the returned list (in
    block order) is identical for any ``workers``. ``fn`` must be picklable
    when ``workers > 1``.
    """
    jobs = [(fn, plan, i, s, c) for i, s, c in plan.blocks(n_items)]
    if workers <= 1 or len(jobs) <= 1:
        return [_call_block(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call_block, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
