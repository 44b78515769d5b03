import csv
import json
import math

import pytest

from annealtherm.ame import read_sweep_csv
from annealtherm.cli import cell_seed, main
from annealtherm.stats import read_stats_csv


def run(tmp_path, command, text, *extra, name="out"):
    cfg = tmp_path / f"{name}.ini"
    cfg.write_text(text)
    out = tmp_path / name
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_exact_grid(tmp_path):
    code, out = run(tmp_path, "exact", "[model]\nn = 8\n[solver]\ns_grid = 0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9\n")
    assert code == 0
    r = rows(out / "exact.csv")
    assert len(r) == 9
    e = [float(x["e_ising"]) for x in r]
    assert all(a > b for a, b in zip(e, e[1:]))
    assert e[-1] == pytest.approx(-8.0, rel=1e-2)
    meta = json.loads((out / "exact.meta.json").read_text())
    assert meta["seed"] == 0 and meta["command"] == "exact" and len(meta["config_sha256"]) == 64


def test_fermion_large_chain(tmp_path):
    code, out = run(tmp_path, "exact", "[model]\nn = 138\n[solver]\nmethod = fermion\ns_grid = 0.2\n")
    assert code == 0
    r = rows(out / "exact.csv")[0]
    assert r["source"] == "fermion" and math.isnan(float(r["m2"]))


def test_ed_size_cap_is_validation_error(tmp_path, capsys):
    code, out = run(tmp_path, "exact", "[model]\nn = 20\n")
    assert code == 1
    assert "n <= 14" in capsys.readouterr().err
    assert not out.exists()


def test_fermion_rejects_frustrated(tmp_path):
    code, _ = run(tmp_path, "exact", "[model]\nn = 6\nkind = frustrated\n[solver]\nmethod = fermion\n")
    assert code == 1


def test_bad_config_line_number(tmp_path, capsys):
    code, _ = run(tmp_path, "exact", "[model]\nn = 4\nwidth = 3\n", name="bad")
    assert code == 1
    assert "bad.ini:3" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["exact", "--config", str(tmp_path / "nope.ini")]) == 1


def test_unknown_command():
    assert main(["plot", "--config", "x"]) == 1


def test_temp_sweep(tmp_path):
    code, out = run(tmp_path, "temp-sweep", "[model]\nn = 138\n[solver]\nmethod = fermion\ns_grid = 0.2\n"
                                            "temperatures = 10, 12, 14, 16\n")
    assert code == 0
    assert len(rows(out / "temp_sweep.csv")) == 4
    assert run(tmp_path, "temp-sweep", "[solver]\ntemperatures = 0\n", name="t0")[0] == 1


def test_qmc_deterministic(tmp_path):
    text = "[model]\nn = 4\n[solver]\nmethod = qmc\ns_grid = 0.3, 0.5\nmeasure_sweeps = 200\ntherm_sweeps = 20\n"
    c1, o1 = run(tmp_path, "qmc", text, name="a")
    c2, o2 = run(tmp_path, "qmc", text, name="b")
    assert c1 == c2 == 0
    assert (o1 / "qmc.csv").read_bytes() == (o2 / "qmc.csv").read_bytes()
    seeds = [int(r["seed"]) for r in rows(o1 / "qmc.csv")]
    assert seeds == [cell_seed(0, 0), cell_seed(0, 1)]


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    text = "[model]\nn = 4\n[solver]\nmethod = qmc\ns_grid = 0.3, 0.5\nmeasure_sweeps = 100\ntherm_sweeps = 10\n"
    monkeypatch.setenv("ANNEALTHERM_THREADS", "1")
    _, o1 = run(tmp_path, "qmc", text, name="one")
    monkeypatch.setenv("ANNEALTHERM_THREADS", "2")
    _, o2 = run(tmp_path, "qmc", text, name="two")
    assert (o1 / "qmc.csv").read_bytes() == (o2 / "qmc.csv").read_bytes()
    monkeypatch.setenv("ANNEALTHERM_THREADS", "zero")
    assert run(tmp_path, "qmc", text, name="bad")[0] == 1


def test_seed_flag_changes_stream(tmp_path):
    text = "[model]\nn = 4\n[solver]\nmethod = qmc\ns_grid = 0.3\nmeasure_sweeps = 100\ntherm_sweeps = 10\n"
    _, o1 = run(tmp_path, "qmc", text, "--seed", "5", name="s5")
    assert int(rows(o1 / "qmc.csv")[0]["seed"]) == cell_seed(5, 0)


def test_protocol_check(tmp_path):
    ok = "[protocol]\ns_p = 0.2\nt_p = 1900\nn_a = 1500\n"
    assert run(tmp_path, "protocol-check", ok, name="ok")[0] == 0
    assert run(tmp_path, "protocol-check", "[protocol]\ns_p = 0.2\nt_p = 2100\n", name="long")[0] == 1
    fast = "[protocol]\ns_p = 0.2\nt_p = 10\nrates = 1e5\n"
    assert run(tmp_path, "protocol-check", fast, name="fast")[0] == 0
    code, out = run(tmp_path, "protocol-check", fast + "hardware_limits = true\n", name="capped")
    assert code == 1
    assert "exceeds" in (out / "protocol_check.txt").read_text()


def test_quench_sweep_single_cell(tmp_path):
    code, out = run(tmp_path, "quench-sweep", "[model]\nn = 3\n[protocol]\ns_p = 0.8\nrates = 1\nt_p = 20\n")
    assert code == 0
    with open(out / "sweep.csv") as fh:
        cells = read_sweep_csv(fh)
    assert len(cells) == 1 and cells[0].e_ising == pytest.approx(-3.0, abs=1e-3)
    assert len(rows(out / "exact.csv")) == 1


def test_quench_sweep_validation(tmp_path):
    assert run(tmp_path, "quench-sweep", "[model]\nn = 6\n", name="big")[0] == 1
    assert run(tmp_path, "quench-sweep", "[protocol]\nrates =\n", name="empty")[0] == 1


def test_ame_evolve_outputs(tmp_path):
    code, out = run(tmp_path, "ame-evolve", "[model]\nn = 3\n[protocol]\ns_p = 0.6\nrates = 100\nt_p = 5\n"
                                            "[stats]\ngauges = 10\nshots = 50\nresamples = 200\n")
    assert code == 0
    stats = read_stats_csv(open(out / "stats.csv"))
    assert [r["observable"] for r in stats] == ["e_ising", "m2"]
    assert stats[0]["ci_lo"] <= stats[0]["mean"] <= stats[0]["ci_hi"]
    assert list(out.glob("trajectory_*.csv"))


def test_norm_scaling(tmp_path):
    code, out = run(tmp_path, "norm-scaling", "[model]\nn = 2, 3\n[protocol]\ns_p = 0.5\n[solver]\nepsilon = 2\n"
                                              "rate_lo = 7\n")
    assert code == 0
    assert [float(r["rate_min_us_inv"]) for r in rows(out / "norm_scaling.csv")] == [7.0, 7.0]
    assert len(rows(out / "norm_fit.csv")) == 1
    assert run(tmp_path, "norm-scaling", "[model]\nn = 1, 4\n", name="one")[0] == 1
    assert run(tmp_path, "norm-scaling", "[model]\nn = 9\n", name="nine")[0] == 1


def test_norm_scaling_bracket_failure(tmp_path):
    code, _ = run(tmp_path, "norm-scaling", "[model]\nn = 2\n[protocol]\ns_p = 0.2\n[solver]\nrate_hi = 100\n")
    assert code == 2
