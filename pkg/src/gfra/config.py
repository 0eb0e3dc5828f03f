"""Scenario files: flat ``key = value`` text with four sections.

::

    [scenario]
    type = noma            # harq | hybrid | noma
    seed = 7
    replications = 200000 # frames (noma, hybrid) or packets (harq)
    strategy = lowrate
    d = 4
    load = 2.0

    [timing]
    scs_khz = 60

    [phy]
    snr_db = 9

    [output]
    path = noma.csv

Unknown sections or keys are errors. Every problem found is reported, not
only the first. See ``docs/config.md`` for the full key reference.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Union

from gfra import harq
from gfra.core import VALID_SCS_KHZ, Alignment, ConfigError, RngPlan, TimingConfig
from gfra.hybrid import DecodeRule, HybridCombining, HybridConfig, RetxSelection
from gfra.noma import Arrival, NomaConfig, SelectionMode, Strategy
from gfra.phy import Fading, FblCodeSpec, LinkBudget, PowerControlConfig

SCENARIO_TYPES = ("harq", "hybrid", "noma")
SCHEMES = ("reactive", "krep", "proactive", "boost", "grant_based")


class ConfigErrors(ConfigError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    check: Callable[[Any], bool] | None = None
    expect: str = ""
    scenarios: tuple[str, ...] = SCENARIO_TYPES


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    value = float(text)  # accepts 2e6
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "none") else _int(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _choice(options) -> Key:
    opts = tuple(options)
    return Key(lambda t: t.strip().lower(), lambda v: v in opts, f"one of {', '.join(opts)}")


def _with(key: Key, scenarios: tuple[str, ...]) -> Key:
    return Key(key.parse, key.check, key.expect, scenarios)


def _enum_values(enum) -> tuple[str, ...]:
    return tuple(e.value for e in enum)


_unit = Key(float, lambda v: 0.0 <= v <= 1.0, "[0, 1]")
_pos_int = Key(_int, lambda v: v >= 1, ">= 1")
_nonneg_int = Key(_int, lambda v: v >= 0, ">= 0")

SCHEMA: dict[str, dict[str, Key]] = {
    "scenario": {
        "type": _choice(SCENARIO_TYPES),
        "seed": Key(_int, lambda v: 0 <= v < 2**64, "0 <= seed < 2**64"),
        "replications": _pos_int,
        "workers": _pos_int,
        "block_size": _pos_int,
        # harq
        "scheme": _with(_choice(SCHEMES), ("harq",)),
        "k": _with(_pos_int, ("harq",)),
        "max_tx": _with(_pos_int, ("harq",)),
        "max_attempts": _with(_pos_int, ("harq",)),
        "scheduling_delay_minislots": _with(_nonneg_int, ("harq",)),
        "p": Key(_floats, lambda v: len(v) > 0 and all(0 <= x <= 1 for x in v), "comma list in [0, 1]", ("harq",)),
        "model": _with(_choice(("fixed", "fbl")), ("harq",)),
        "deadline_ms": Key(float, lambda v: v > 0, "> 0", ("harq",)),
        # harq + hybrid
        "combining": _with(_choice(("none", "chase")), ("harq", "hybrid")),
        # hybrid
        "n_users": _with(_pos_int, ("hybrid", "noma")),
        "pool_size": _with(_nonneg_int, ("hybrid",)),
        "attempts": _with(_pos_int, ("hybrid",)),
        "eps1": _with(_unit, ("hybrid",)),
        "eps_shared": _with(_unit, ("hybrid",)),
        "decode_rule": _with(_choice(_enum_values(DecodeRule)), ("hybrid",)),
        "blind": Key(_bool, None, "true/false", ("hybrid",)),
        "retx_selection": _with(_choice(_enum_values(RetxSelection)), ("hybrid",)),
        "sizing_snr_db": Key(float, None, "dB", ("hybrid",)),
        "target_e2e": Key(float, lambda v: 0 < v < 1, "(0, 1)", ("hybrid",)),
        "sizing_eps_shared": Key(float, lambda v: 0 < v < 1, "(0, 1)", ("hybrid",)),
        # noma
        "strategy": _with(_choice(_enum_values(Strategy)), ("noma",)),
        "d": Key(_int, lambda v: v >= 1, "1..slots_per_frame", ("noma",)),
        "load": Key(float, lambda v: v >= 0, ">= 0", ("noma",)),
        "slots_per_frame": _with(_pos_int, ("noma",)),
        "arrival": _with(_choice(_enum_values(Arrival)), ("noma",)),
        "selection_mode": _with(_choice(_enum_values(SelectionMode)), ("noma",)),
        "max_sic_iters": Key(_optional_int, lambda v: v is None or v >= 1, ">= 1 or none", ("noma",)),
        "snr_spread_db": Key(float, lambda v: v >= 0, ">= 0", ("noma",)),
        "target_plr": Key(float, lambda v: 0 < v < 1, "(0, 1)", ("noma",)),
        "bracket": Key(_floats, lambda v: len(v) == 2 and 0 <= v[0] < v[1], "lo,hi with 0 <= lo < hi", ("noma",)),
        "rel_tol": Key(float, lambda v: 0 < v < 1, "(0, 1)", ("noma",)),
    },
    "timing": {
        "scs_khz": Key(_int, lambda v: v in VALID_SCS_KHZ, f"one of {VALID_SCS_KHZ}"),
        "symbols_per_minislot": Key(_int, lambda v: 1 <= v <= 13, "1..13"),
        "ue_proc_minislots": _nonneg_int,
        "bs_proc_minislots": _nonneg_int,
        "feedback_minislots": _nonneg_int,
        "alignment": _choice(_enum_values(Alignment)),
        "tx_period_minislots": _pos_int,
    },
    "phy": {
        "k_bits": _pos_int,
        "n_re": _pos_int,
        "snr_db": Key(float),
        "fading": _choice(_enum_values(Fading)),
        "p_max_dbm": Key(float),
        "p0_dbm": Key(float),
        "alpha": _unit,
        "boost_steps_db": Key(
            _floats, lambda v: all(b >= a for a, b in zip(v, v[1:])), "non-decreasing comma list"
        ),
        "m_rb": _pos_int,
        "pathloss_db": Key(float),
    },
    "output": {
        "path": Key(str),
    },
}


@dataclass(frozen=True)
class HarqScenario:
    scheme: harq.HarqScheme
    model: harq.AttemptModel
    timing: TimingConfig
    max_attempts: int = 4
    deadline_ms: float = 1.0
    kind = "harq"


@dataclass(frozen=True)
class HybridScenario:
    cfg: HybridConfig
    timing: TimingConfig
    sizing_snr_db: float | None = None
    target_e2e: float = 1e-5
    sizing_eps_shared: float | None = None
    kind = "hybrid"


@dataclass(frozen=True)
class NomaScenario:
    cfg: NomaConfig
    target_plr: float | None = None  # set to search the supported load
    bracket: tuple[float, float] = (0.25, 4.0)
    rel_tol: float = 0.05
    kind = "noma"


Scenario = Union[HarqScenario, HybridScenario, NomaScenario]


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    n_replications: int
    rng: RngPlan
    output_path: Path
    workers: int = 1
    values: dict = field(default_factory=dict, compare=False)  # resolved key/value echo


def read_values(path: str | Path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str.lower
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigErrors([f"{path}: {exc}"]) from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def parse_config(
    path: str | Path | None = None,
    overrides: dict[str, str] | None = None,
    scenario_type: str | None = None,
) -> ScenarioConfig:
    """Validate a scenario file plus ``section.key`` overrides.

    Overrides win over file values. ``scenario_type`` (from the CLI
    subcommand) wins over ``[scenario] type``.
    """
    raw: dict[str, dict[str, str]] = read_values(path) if path is not None else {}
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        raw.setdefault(section, {})[key] = str(value)
    if scenario_type is not None:
        raw.setdefault("scenario", {})["type"] = scenario_type

    errors: list[str] = []
    values: dict[str, dict[str, Any]] = {s: {} for s in SCHEMA}
    for section, entries in raw.items():
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}] (expected one of {', '.join(SCHEMA)})")
            continue
        for key, text in entries.items():
            spec = SCHEMA[section].get(key)
            if spec is None:
                errors.append(f"unknown key {section}.{key}")
                continue
            try:
                value = spec.parse(text)
            except (TypeError, ValueError):
                errors.append(f"{section}.{key} = {text!r}: expected {spec.expect or spec.parse.__name__}")
                continue
            if spec.check is not None and not spec.check(value):
                errors.append(f"{section}.{key} = {text.strip()} out of range: expected {spec.expect}")
                continue
            values[section][key] = value

    kind = values["scenario"].get("type")
    if kind is None and "type" not in raw.get("scenario", {}):
        errors.append("missing [scenario] section or scenario.type")
    if kind is not None:
        for key in values["scenario"]:
            allowed = SCHEMA["scenario"][key].scenarios
            if kind not in allowed:
                errors.append(f"scenario.{key} does not apply to scenario type {kind!r}")
    if errors:
        raise ConfigErrors(errors)

    try:
        scenario = _build(kind, values)
        rng = RngPlan(values["scenario"].get("seed", 1), values["scenario"].get("block_size", 4096))
    except (ConfigError, ValueError) as exc:
        raise ConfigErrors([str(exc)]) from exc
    default_n = {"harq": 100_000, "hybrid": 100_000, "noma": 100_000}[kind]
    return ScenarioConfig(
        scenario=scenario,
        n_replications=values["scenario"].get("replications", default_n),
        rng=rng,
        output_path=Path(values["output"].get("path", f"{kind}.csv")),
        workers=values["scenario"].get("workers", 1),
        values=values,
    )


def _timing(values) -> TimingConfig:
    return TimingConfig(**values["timing"])


def _build(kind: str, values) -> Scenario:
    sc, phy = values["scenario"], values["phy"]
    if kind == "harq":
        name = sc.get("scheme", "reactive")
        scheme = {
            "reactive": lambda: harq.Reactive(),
            "boost": lambda: harq.ReactiveBoost(),
            "krep": lambda: harq.KRepetition(sc.get("k", 2)),
            "proactive": lambda: harq.Proactive(sc.get("max_tx", 4)),
            "grant_based": lambda: harq.GrantBased(sc.get("scheduling_delay_minislots", 7)),
        }[name]()
        model_kind = sc.get("model", "fixed" if "p" in sc else "fbl")
        if model_kind == "fixed":
            model = harq.FixedProbs(sc.get("p", (0.9,)))
        else:
            power = PowerControlConfig(
                p_max_dbm=phy.get("p_max_dbm", 23.0),
                p0_dbm=phy.get("p0_dbm", -90.0),
                alpha=phy.get("alpha", 1.0),
                boost_steps_db=phy.get("boost_steps_db", (0.0, 3.0, 6.0)),
            )
            model = harq.FblLinked(
                spec=FblCodeSpec(phy.get("k_bits", 256), phy.get("n_re", 240)),
                link=LinkBudget(phy.get("snr_db", 9.0), phy.get("fading", "rayleigh_block")),
                power=power,
                combining=sc.get("combining", "chase"),
                m_rb=phy.get("m_rb", 1),
                pathloss_db=phy.get("pathloss_db", 100.0),
            )
        return HarqScenario(scheme, model, _timing(values), sc.get("max_attempts", 4), sc.get("deadline_ms", 1.0))
    if kind == "hybrid":
        cfg = HybridConfig(
            n_users=sc.get("n_users", 10),
            pool_size=sc.get("pool_size", 1),
            attempts=sc.get("attempts", 2),
            eps1=sc.get("eps1", 0.1),
            eps_shared=sc.get("eps_shared", 0.0),
            decode_rule=sc.get("decode_rule", DecodeRule.COLLISION_CHANNEL),
            blind=sc.get("blind", True),
            combining=sc.get("combining", HybridCombining.CHASE),
            retx_selection=sc.get("retx_selection", RetxSelection.UNIFORM_RANDOM),
            k_bits=phy.get("k_bits", 256),
            n_re=phy.get("n_re", 100),
            avg_snr_db=phy.get("snr_db", 9.0),
            fading=phy.get("fading", "rayleigh_block") == "rayleigh_block",
        )
        return HybridScenario(
            cfg, _timing(values), sc.get("sizing_snr_db"), sc.get("target_e2e", 1e-5), sc.get("sizing_eps_shared")
        )
    cfg = NomaConfig(
        slots_per_frame=sc.get("slots_per_frame", 14),
        re_per_slot=phy.get("n_re", 240),
        k_bits=phy.get("k_bits", 256),
        d=sc.get("d", 4),
        avg_snr_db=phy.get("snr_db", 9.0),
        load_g=sc.get("load", 1.0),
        arrival=sc.get("arrival", Arrival.FIXED_USERS),
        n_users=sc.get("n_users"),
        strategy=sc.get("strategy", Strategy.LOWRATE),
        selection_mode=sc.get("selection_mode", SelectionMode.BEST_SLOT_ONLY),
        max_sic_iters=sc.get("max_sic_iters"),
        snr_spread_db=sc.get("snr_spread_db", 0.0),
    )
    return NomaScenario(cfg, sc.get("target_plr"), tuple(sc.get("bracket", (0.25, 4.0))), sc.get("rel_tol", 0.05))
