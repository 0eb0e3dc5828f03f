import csv
import json
import subprocess
import sys

import pytest

from gfra.cli import main
from gfra.config import ConfigErrors, NomaScenario, parse_config
from gfra.harq import KRepetition

from oracles import k1_plr_chase


def write(tmp_path, text, name="s.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_noma_config_fills_defaults(tmp_path):
    p = write(tmp_path, "[scenario]\ntype = noma\nstrategy = lowrate\nd = 4\nload = 2.0\n")
    sc = parse_config(p)
    assert isinstance(sc.scenario, NomaScenario)
    cfg = sc.scenario.cfg
    assert (cfg.slots_per_frame, cfg.re_per_slot, cfg.k_bits, cfg.avg_snr_db) == (14, 240, 256, 9.0)
    assert (cfg.d, cfg.load_g, cfg.strategy.value) == (4, 2.0, "lowrate")
    assert sc.rng.master_seed == 1


def test_range_error_names_key_and_range():
    with pytest.raises(ConfigErrors) as exc:
        parse_config(None, {"phy.alpha": "1.5"}, "harq")
    assert exc.value.errors == ["phy.alpha = 1.5 out of range: expected [0, 1]"]


def test_all_errors_reported_together(tmp_path):
    p = write(tmp_path, "[scenario]\ntype = noma\nfoo = 1\nd = zero\n[phy]\nalpha = 2\n[extra]\nx = 1\n")
    with pytest.raises(ConfigErrors) as exc:
        parse_config(p)
    errs = exc.value.errors
    assert "unknown key scenario.foo" in errs
    assert "phy.alpha = 2 out of range: expected [0, 1]" in errs
    assert any(e.startswith("scenario.d = 'zero'") for e in errs)
    assert any(e.startswith("unknown section [extra]") for e in errs)


def test_missing_scenario_and_wrong_scope(tmp_path):
    with pytest.raises(ConfigErrors, match="missing"):
        parse_config(write(tmp_path, "[phy]\nsnr_db = 3\n"))
    with pytest.raises(ConfigErrors, match="does not apply"):
        parse_config(None, {"scenario.eps1": "0.1"}, "noma")


def test_semantic_errors_become_config_errors():
    with pytest.raises(ConfigErrors, match="d must be in 1..14"):
        parse_config(None, {"scenario.d": "20"}, "noma")


def test_flags_override_file(tmp_path):
    p = write(tmp_path, "[scenario]\ntype = harq\nseed = 3\nscheme = reactive\n")
    sc = parse_config(p, {"scenario.seed": "7", "scenario.scheme": "KREP", "scenario.k": "3"})
    assert sc.rng.master_seed == 7
    assert sc.scenario.scheme == KRepetition(3)


def test_seed_flag_echoed_in_manifest(tmp_path):
    p = write(tmp_path, "[scenario]\ntype = harq\nseed = 3\nreplications = 1000\np = 0.9\n")
    out = tmp_path / "h.csv"
    assert main(["harq", "--config", str(p), "--seed", "7", "--out", str(out)]) == 0
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["master_seed"] == 7
    assert manifest["config"]["scenario"]["seed"] == 7
    assert manifest["status"] == 0


def test_krep_certain_success_is_single_step(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["harq", "--scheme", "kreP", "--K", "2", "--p", "1.0", "--packets", "5000", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["scheme", "latency_ms", "count"]
    assert len(rows) == 2
    assert rows[1][0] == "k_repetition" and int(rows[1][2]) == 5000
    side = read_rows(tmp_path / "k_outage.csv")
    assert float(side[1][2]) == 0.0


def _run_twice(tmp_path, argv, workers=(1, 1)):
    outs = []
    for i, w in enumerate(workers):
        out = tmp_path / f"run{i}.csv"
        assert main(argv + ["--out", str(out), "--workers", str(w)]) == 0
        outs.append(out.read_bytes())
    return outs


def test_same_seed_byte_identical(tmp_path):
    a, b = _run_twice(tmp_path, ["noma", "--load", "1.5", "--frames", "6000", "--seed", "4"])
    assert a == b


@pytest.mark.parametrize("command", [
    ["noma", "--load", "1.5", "--arrival", "poisson_users", "--frames", "10000"],
    ["hybrid", "--frames", "10000", "--R", "2"],
    ["harq", "--scheme", "reactive", "--packets", "10000", "--snr-db", "3"],
])
def test_worker_count_invariance(tmp_path, command):
    outs = _run_twice(tmp_path, command + ["--seed", "9"], workers=(1, 2, 8))
    assert outs[0] == outs[1] == outs[2]


def test_exit_code_config_error(tmp_path, capsys):
    code = main(["harq", "--set", "phy.alpha=1.5", "--set", "scenario.foo=1", "--out", str(tmp_path / "x.csv")])
    assert code == 2
    err = capsys.readouterr().err
    assert "phy.alpha = 1.5 out of range" in err and "unknown key scenario.foo" in err
    assert not (tmp_path / "x.csv").exists()


def test_exit_code_load_not_found(tmp_path):
    out = tmp_path / "n.csv"
    code = main(["noma", "--strategy", "selection", "--target-plr", "1e-5", "--bracket", "0.05,1",
                 "--frames", "2000", "--out", str(out)])
    assert code == 3
    assert json.loads(out.with_suffix(".manifest.json").read_text())["status"] == 3


def test_exit_code_infeasible_sizing(tmp_path):
    code = main(["hybrid", "--sizing-snr-db", "9", "--frames", "100", "--out", str(tmp_path / "h.csv")])
    assert code == 3  # eps_shared = 0 cannot be sized


def test_exit_code_io(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["hybrid", "--frames", "10", "--out", str(blocker / "x.csv")]) == 4
    assert main(["hybrid", "--config", str(tmp_path / "missing.ini")]) == 4


def test_sweep_two_axes(tmp_path):
    out = tmp_path / "sw.csv"
    code = main(["sweep", "hybrid", "--grid", "pool_size=1,2", "--grid", "eps1=0.1,0.2", "--frames", "2000",
                 "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows[0][:2] == ["sweep_pool_size", "sweep_eps1"]
    assert [r[:2] for r in rows[1:]] == [["1", "0.1"], ["1", "0.2"], ["2", "0.1"], ["2", "0.2"]]


def test_supported_load_side_table(tmp_path):
    out = tmp_path / "sl.csv"
    code = main(["noma", "--target-plr", "0.05", "--bracket", "1,4", "--frames", "3000",
                 "--set", "scenario.rel_tol=0.1", "--out", str(out)])
    assert code == 0
    side = read_rows(tmp_path / "sl_supported_load.csv")
    g_star = float(side[1][3])
    assert 2.0 < g_star < 3.2


def test_gnuplot_hints(tmp_path, capsys):
    assert main(["hybrid", "--frames", "10", "--out", str(tmp_path / "h.csv"), "--gnuplot-hints"]) == 0
    assert "set logscale y" in capsys.readouterr().out


@pytest.mark.slow
def test_module_entry_point_chase_low_load(tmp_path):
    out = tmp_path / "c.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "gfra", "noma", "--strategy", "chase", "--d", "4", "--load", "0.01",
         "--frames", "2e6", "--workers", "4", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    rows = read_rows(out)
    assert len(rows) == 2
    row = dict(zip(rows[0], rows[1]))
    assert row["strategy"] == "chase" and float(row["load_g"]) == 0.01
    assert float(row["ci_lo"]) <= k1_plr_chase() <= float(row["ci_hi"])
