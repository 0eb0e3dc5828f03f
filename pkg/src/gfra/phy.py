"""Link abstraction: power control, block fading, SINR and finite-blocklength
packet error probabilities.

Error probabilities use the normal approximation for the complex AWGN
channel with Gaussian inputs::

    eps = Q((n*C(s) - k + 0.5*log2(n)) / sqrt(n*V(s)))
    C(s) = log2(1 + s)
    V(s) = (1 - (1 + s)**-2) * log2(e)**2

``n`` is the blocklength in complex channel uses (resource elements), ``k``
the payload in bits and ``s`` the linear SINR. Over several blocks with
different SINRs (joint decoding of one codeword spread over slots) the
information densities add::

    eps = Q((sum n_i*C(s_i) - k + 0.5*log2(sum n_i)) / sqrt(sum n_i*V(s_i)))
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import special

from gfra.core import coerce_enum

LOG2E = math.log2(math.e)
Q_CLAMP = 38.0
MAX_BLOCKLENGTH = 2**20


class InfeasibleError(ValueError):
    """No blocklength up to ``MAX_BLOCKLENGTH`` reaches the target error rate."""


@dataclass(frozen=True)
class FblCodeSpec:
    k_bits: int = 256
    n_re: int = 240

    def __post_init__(self):
        if self.k_bits < 1 or self.n_re < 1:
            raise ValueError(f"k_bits and n_re must be >= 1, got {self.k_bits}, {self.n_re}")


@dataclass(frozen=True)
class PowerControlConfig:
    """Open-loop fractional power control with per-attempt boost.

    ``boost_steps_db[k-1]`` is the boost applied on attempt ``k``; attempts
    past the end of the sequence hold the last step.
    """

    p_max_dbm: float = 23.0
    p0_dbm: float = -90.0
    alpha: float = 1.0
    boost_steps_db: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        steps = tuple(float(g) for g in self.boost_steps_db) or (0.0,)
        if any(b < a for a, b in zip(steps, steps[1:])):
            raise ValueError(f"boost_steps_db must be non-decreasing, got {steps}")
        object.__setattr__(self, "boost_steps_db", steps)

    def boost_db(self, attempt_k: int) -> float:
        return self.boost_steps_db[min(attempt_k, len(self.boost_steps_db)) - 1]


class Fading(str, Enum):
    RAYLEIGH_BLOCK = "rayleigh_block"
    NONE = "none"


@dataclass(frozen=True)
class LinkBudget:
    avg_snr_db: float = 9.0
    fading: Fading = Fading.RAYLEIGH_BLOCK

    def __post_init__(self):
        object.__setattr__(self, "fading", coerce_enum(Fading, self.fading, "fading"))

    @property
    def avg_snr(self) -> float:
        return db_to_linear(self.avg_snr_db)

    def gains(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.fading is Fading.NONE:
            return np.ones(size)
        return channel_gain_sample(rng, size)


def db_to_linear(x_db):
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)[()]


def linear_to_db(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("linear_to_db requires strictly positive input")
    return (10.0 * np.log10(x))[()]


def tx_power_dbm(pc: PowerControlConfig, m_rb: int, pl_db: float, attempt_k: int) -> float:
    """``min(P_max, P0 + 10*log10(M) + alpha*PL + g(k))`` in dBm."""
    if m_rb < 1:
        raise ValueError(f"m_rb must be >= 1, got {m_rb}")
    if attempt_k < 1:
        raise ValueError(f"attempt_k must be >= 1, got {attempt_k}")
    open_loop = pc.p0_dbm + 10.0 * math.log10(m_rb) + pc.alpha * pl_db + pc.boost_db(attempt_k)
    return min(pc.p_max_dbm, open_loop)


def channel_gain_sample(rng: np.random.Generator, size=None):
    """Rayleigh block-fading power gain |h|^2 ~ Exp(1)."""
    return rng.standard_exponential(size)


def sinr(desired_rx_power, interferer_rx_powers: Sequence[float] = (), noise_power: float = 1.0):
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    return desired_rx_power / (noise_power + float(np.sum(interferer_rx_powers)))


def q_function(x):
    """Standard normal tail probability, clamped to {1, 0} outside +-38."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(x / math.sqrt(2.0))
    out = np.where(x > Q_CLAMP, 0.0, out)
    out = np.where(x < -Q_CLAMP, 1.0, out)
    return out[()]


def capacity(s):
    return np.log2(1.0 + np.asarray(s, dtype=float))


def dispersion(s):
    s = np.asarray(s, dtype=float)
    return (1.0 - (1.0 + s) ** -2) * LOG2E**2


def _eps_from_sums(info, disp, k_bits, n_total):
    info = np.asarray(info, dtype=float)
    disp = np.asarray(disp, dtype=float)
    positive = disp > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (info - k_bits + 0.5 * np.log2(n_total)) / np.sqrt(np.where(positive, disp, 1.0))
    eps = np.where(positive, q_function(arg), 1.0)
    return np.clip(eps, 0.0, 1.0)[()]


def per_normal_approx(spec: FblCodeSpec, s):
    """Packet error probability of one ``spec`` codeword at linear SINR ``s``.

    Vectorised over ``s``. Zero SINR (no capacity) returns exactly 1.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("sinr must be non-negative")
    n = spec.n_re
    return _eps_from_sums(n * capacity(s), n * dispersion(s), spec.k_bits, n)


def per_joint(slot_lengths, slot_sinrs, k_bits: int):
    """Error probability of one codeword spread over parallel blocks.

    ``slot_sinrs`` may carry leading batch axes; the last axis runs over
    blocks and must match ``slot_lengths``.
    """
    lengths = np.asarray(slot_lengths, dtype=float)
    s = np.asarray(slot_sinrs, dtype=float)
    if lengths.ndim != 1 or lengths.size == 0:
        raise ValueError("slot_lengths must be a non-empty 1-D sequence")
    if s.shape[-1:] != lengths.shape:
        raise ValueError(f"slot_sinrs last axis {s.shape} does not match {lengths.shape[0]} slots")
    if np.any(s < 0):
        raise ValueError("sinr must be non-negative")
    info = (lengths * capacity(s)).sum(axis=-1)
    disp = (lengths * dispersion(s)).sum(axis=-1)
    return _eps_from_sums(info, disp, k_bits, lengths.sum())


def required_blocklength(k_bits: int, target_eps: float, s: float) -> int:
    """Smallest ``n`` with ``per_normal_approx((k_bits, n), s) <= target_eps``.

    Doubling search for a feasible bracket followed by integer bisection.
    Raises :class:`InfeasibleError` when even ``MAX_BLOCKLENGTH`` is not
    enough.
    """
    if not 0.0 < target_eps < 1.0:
        raise ValueError(f"target_eps must be in (0, 1), got {target_eps}")
    if s <= 0:
        raise InfeasibleError(f"sinr {s} leaves no capacity")

    def ok(n):
        return per_normal_approx(FblCodeSpec(k_bits, n), s) <= target_eps

    hi = 1
    while not ok(hi):
        if hi >= MAX_BLOCKLENGTH:
            raise InfeasibleError(
                f"k={k_bits} bits at eps={target_eps} needs more than {MAX_BLOCKLENGTH} REs at sinr {s}"
            )
        hi = min(2 * hi, MAX_BLOCKLENGTH)
    lo = hi // 2  # not ok (or 0)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
