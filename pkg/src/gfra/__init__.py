"""Monte Carlo simulation of uplink grant-free random access for URLLC.

The package is organised by layer:

* :mod:`gfra.core`    numerology, timing configuration and random streams
* :mod:`gfra.phy`     power control, fading, SINR and finite-blocklength error rates
* :mod:`gfra.harq`    reactive / K-repetition / proactive / boosted HARQ timelines
* :mod:`gfra.hybrid`  dedicated initial transmission + shared-pool blind repetitions with SIC
* :mod:`gfra.noma`    sparse NOMA contention frames with multi-slot combining and SIC
* :mod:`gfra.stats`   CCDFs, Clopper-Pearson intervals, supported-load search, CSV writers
* :mod:`gfra.config`  ``key = value`` scenario files
* :mod:`gfra.cli`     command line entry point (``gfra-sim``)
"""

from gfra.core import (
    ConfigError,
    RngPlan,
    TimingConfig,
    derive_stream,
    minislot_duration_ms,
)
from gfra.phy import (
    FblCodeSpec,
    LinkBudget,
    PowerControlConfig,
    db_to_linear,
    linear_to_db,
    per_joint,
    per_normal_approx,
    required_blocklength,
    sinr,
    tx_power_dbm,
)
from gfra.stats import Ccdf, ConfInterval, ccdf, cp_interval, outage_at, supported_load

__version__ = "0.1.0"

__all__ = [
    "Ccdf",
    "ConfInterval",
    "ConfigError",
    "FblCodeSpec",
    "LinkBudget",
    "PowerControlConfig",
    "RngPlan",
    "TimingConfig",
    "ccdf",
    "cp_interval",
    "db_to_linear",
    "derive_stream",
    "linear_to_db",
    "minislot_duration_ms",
    "outage_at",
    "per_joint",
    "per_normal_approx",
    "required_blocklength",
    "sinr",
    "supported_load",
    "tx_power_dbm",
]
