"""``gfra-sim``: run scenarios from a config file and/or flags, write CSV plus a manifest.

Exit codes: 0 success, 2 configuration error, 3 estimation failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from gfra import __version__
from gfra.config import ConfigErrors, HarqScenario, HybridScenario, NomaScenario, ScenarioConfig, parse_config
from gfra.harq import simulate_harq
from gfra.hybrid import HYBRID_HEADER, hybrid_outage, resource_efficiency
from gfra.noma import PLR_HEADER, estimate_plr
from gfra.phy import InfeasibleError
from gfra.stats import CCDF_HEADER, OUTAGE_HEADER, LoadNotFoundError, supported_load, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION, EXIT_IO = 0, 2, 3, 4

SUPPORTED_LOAD_HEADER = ("strategy", "d", "target_plr", "g_star", "g_lo", "g_hi", "resolved")

# flag -> (section.key, help)
FLAGS = {
    "harq": {
        "--scheme": ("scenario.scheme", "reactive | krep | proactive | boost | grant_based"),
        "--K": ("scenario.k", "repetitions for krep"),
        "--max-tx": ("scenario.max_tx", "transmissions for proactive"),
        "--max-attempts": ("scenario.max_attempts", "attempt cap for reactive schemes"),
        "--scheduling-delay": ("scenario.scheduling_delay_minislots", "grant_based handshake delay"),
        "--p": ("scenario.p", "fixed per-attempt success probabilities, comma separated"),
        "--model": ("scenario.model", "fixed | fbl"),
        "--combining": ("scenario.combining", "none | chase"),
        "--deadline-ms": ("scenario.deadline_ms", "latency budget for the outage table"),
        "--packets": ("scenario.replications", "packets to simulate"),
    },
    "hybrid": {
        "--N": ("scenario.n_users", "users with a dedicated resource"),
        "--R": ("scenario.pool_size", "shared pool size"),
        "--d": ("scenario.attempts", "total attempts per packet"),
        "--eps1": ("scenario.eps1", "dedicated-attempt error rate"),
        "--eps-shared": ("scenario.eps_shared", "shared-replica error rate"),
        "--decode-rule": ("scenario.decode_rule", "collision_channel | sinr_based"),
        "--blind": ("scenario.blind", "true | false"),
        "--combining": ("scenario.combining", "none | chase"),
        "--retx-selection": ("scenario.retx_selection", "uniform_random | fixed_sequence"),
        "--sizing-snr-db": ("scenario.sizing_snr_db", "AWGN SNR for resource sizing (enables bits_per_re)"),
        "--target-e2e": ("scenario.target_e2e", "single-shot reliability target for sizing"),
        "--frames": ("scenario.replications", "frames to simulate"),
    },
    "noma": {
        "--strategy": ("scenario.strategy", "selection | chase | lowrate"),
        "--d": ("scenario.d", "slots per packet"),
        "--load": ("scenario.load", "normalised load G in packets/slot"),
        "--arrival": ("scenario.arrival", "fixed_users | poisson_users"),
        "--users": ("scenario.n_users", "fixed user count per frame"),
        "--selection-mode": ("scenario.selection_mode", "best_slot_only | any_slot"),
        "--target-plr": ("scenario.target_plr", "search the supported load for this PLR"),
        "--bracket": ("scenario.bracket", "load search bracket lo,hi"),
        "--frames": ("scenario.replications", "frames to simulate (per load point)"),
    },
}
COMMON = {
    "--snr-db": ("phy.snr_db", "average SNR in dB"),
    "--seed": ("scenario.seed", "master seed"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfra-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gfra {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("harq", "hybrid", "noma", "sweep"):
        p = sub.add_parser(name)
        if name == "sweep":
            p.add_argument("scenario", choices=("harq", "hybrid", "noma"))
            p.add_argument(
                "--grid",
                action="append",
                default=[],
                metavar="KEY=V1,V2",
                help="sweep a [scenario] key (or section.key) over values; give up to two",
            )
        p.add_argument("--config", help="scenario file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override any key")
        p.add_argument(
            "--workers",
            type=int,
            default=int(os.environ.get("GFRA_SIM_THREADS", "1")),
            help="worker processes (default $GFRA_SIM_THREADS or 1)",
        )
        p.add_argument("--out", help="CSV output path (default from [output] path)")
        p.add_argument("--gnuplot-hints", action="store_true", help="print suggested gnuplot commands")
        flags = dict(COMMON)
        for scenario in ((name,) if name != "sweep" else ("harq", "hybrid", "noma")):
            flags.update(FLAGS[scenario])
        for flag, (key, text) in flags.items():
            p.add_argument(flag, dest=f"opt:{key}", metavar=key.split(".")[1].upper(), help=text)
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for k, v in vars(args).items():
        if k.startswith("opt:") and v is not None:
            out[k[4:]] = v
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigErrors([f"--set expects SECTION.KEY=VALUE, got {item!r}"])
        out[key.strip()] = value.strip()
    return out


def run_scenario(sc: ScenarioConfig):
    """Run one validated scenario; returns ``(header, rows, extra_tables)``."""
    s = sc.scenario
    if isinstance(s, HarqScenario):
        res = simulate_harq(s.scheme, s.model, s.timing, sc.n_replications, None, sc.rng, s.max_attempts, sc.workers)
        return CCDF_HEADER, res.histogram_rows(), {"outage": (OUTAGE_HEADER, [res.outage_row(s.deadline_ms)])}
    if isinstance(s, HybridScenario):
        if s.sizing_snr_db is not None:
            eff = resource_efficiency(
                s.cfg, s.sizing_snr_db, s.target_e2e, sc.n_replications, sc.rng, s.timing, s.sizing_eps_shared
            )
            bits = eff.bits_per_re_hybrid
        else:
            bits = float("nan")
        est = hybrid_outage(s.cfg, sc.n_replications, sc.rng, s.timing, sc.workers)
        return HYBRID_HEADER, [est.row(bits)], {}
    assert isinstance(s, NomaScenario)
    if s.target_plr is None:
        est = estimate_plr(s.cfg, sc.n_replications, sc.rng, sc.workers)
        return PLR_HEADER, [est.row()], {}
    rows = []

    def runner(g):
        est = estimate_plr(replace(s.cfg, load_g=g), sc.n_replications, sc.rng, sc.workers)
        rows.append(est.row())
        return est.point()

    found = supported_load(runner, s.target_plr, s.rel_tol, s.bracket)
    rows.sort(key=lambda r: r[2])
    summary = (s.cfg.strategy.value, s.cfg.d, s.target_plr, found.g_star, found.g_lo, found.g_hi, found.resolved)
    return PLR_HEADER, rows, {"supported_load": (SUPPORTED_LOAD_HEADER, [summary])}


def _side_path(out: Path, tag: str) -> Path:
    return out.with_name(f"{out.stem}_{tag}{out.suffix or '.csv'}")


def _grid(items: list[str]):
    axes = []
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise ConfigErrors([f"--grid expects KEY=V1,V2,..., got {item!r}"])
        key = key.strip()
        if "." not in key:
            key = f"scenario.{key}"
        axes.append([(key, v.strip()) for v in values.split(",") if v.strip()])
    if not 1 <= len(axes) <= 2:
        raise ConfigErrors(["sweep needs one or two --grid axes"])
    return [dict(combo) for combo in itertools.product(*axes)]


def _hints(out: Path, command: str) -> str:
    if command in ("harq",):
        return (
            f"set datafile separator ','; set logscale y; set xlabel 'latency [ms]'; "
            f"# plot the survival of {out} per scheme after accumulating counts"
        )
    if command == "hybrid":
        return f"set datafile separator ','; set logscale y; plot '{out}' using 2:5 with linespoints title 'PLR vs R'"
    return f"set datafile separator ','; set logscale y; plot '{out}' using 3:7:8:9 with yerrorbars title 'PLR'"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        overrides = _overrides(args)
        if args.out:
            overrides["output.path"] = args.out
        kind = args.scenario if args.command == "sweep" else args.command
        points = _grid(args.grid) if args.command == "sweep" else [{}]
        configs = [parse_config(args.config, {**overrides, **p}, kind) for p in points]
        configs = [replace(c, workers=max(1, args.workers)) for c in configs]
    except ConfigErrors as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    out = configs[0].output_path
    header, rows, extras = None, [], {}
    runtimes = []
    status, message = EXIT_OK, ""
    for point, sc in zip(points, configs):
        t0 = time.time()
        try:
            h, r, ex = run_scenario(sc)
        except LoadNotFoundError as exc:
            status, message = EXIT_ESTIMATION, f"supported load not found: {exc}"
            h, r, ex = PLR_HEADER, [], {}
        except InfeasibleError as exc:
            status, message = EXIT_ESTIMATION, f"estimation failed: {exc}"
            h, r, ex = HYBRID_HEADER, [], {}
        runtimes.append({"point": point, "seconds": round(time.time() - t0, 3)})
        if args.command == "sweep":
            names = [k.split(".", 1)[1] for k in point]
            h = tuple(f"sweep_{n}" for n in names) + tuple(h)
            r = [tuple(point.values()) + tuple(row) for row in r]
        header = h
        rows.extend(r)
        for tag, (eh, er) in ex.items():
            extras.setdefault(tag, (eh, []))[1].extend(er)

    written = []
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(out, header, rows)
        written.append(str(out))
        for tag, (eh, er) in extras.items():
            path = _side_path(out, tag)
            write_csv(path, eh, er)
            written.append(str(path))
        manifest = {
            "command": args.command,
            "version": __version__,
            "master_seed": configs[0].rng.master_seed,
            "block_size": configs[0].rng.block_size,
            "workers": configs[0].workers,
            "config": {
                s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in vals.items()}
                for s, vals in configs[0].values.items()
            },
            "grid": points if args.command == "sweep" else None,
            "runtimes": runtimes,
            "outputs": written,
            "status": status,
            "message": message,
            "wall_seconds": round(time.time() - started, 3),
        }
        manifest_path = out.with_suffix(".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.gnuplot_hints:
        print(_hints(out, kind))
    if message:
        print(message, file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
