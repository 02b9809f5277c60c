import csv
import json
import os

import numpy as np
import pytest

from ris_cnoma import cli
from ris_cnoma.experiment import (ConfigError, ExperimentConfig, config_from_dict,
                                  parse_config_text, run_convergence, run_sweep)

SMALL = {"N": 2, "M": 4, "realizations": 2, "power_grid_dbm": [20.0, 30.0],
         "ao_max_outer": 4}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_row(tmp_path):
    cfg = config_from_dict({**SMALL, "realizations": 1, "schemes": ["without_ris"],
                            "power_grid_dbm": [25.0]})
    res = run_sweep(cfg, str(tmp_path))
    rows = read_csv(tmp_path / "detail.csv")
    assert len(rows) == 1 and rows[0]["scheme"] == "without_ris"
    assert len(read_csv(tmp_path / "summary.csv")) == 1
    assert (tmp_path / "traces" / f"{cfg.base_seed}_without_ris.json").exists()
    assert res.rows[0]["eta"] == 0.8


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = config_from_dict(SMALL)
    run_sweep(cfg, str(out))
    return cfg, out


def test_row_count_and_order(small_sweep):
    cfg, out = small_sweep
    rows = read_csv(out / "detail.csv")
    assert len(rows) == len(cfg.power_grid_dbm) * cfg.realizations * len(cfg.schemes)
    keys = [(float(r["power_dbm"]), int(r["seed"]), cfg.schemes.index(r["scheme"]))
            for r in rows]
    assert keys == sorted(keys)
    assert all(r["eta"] == "0.8" for r in rows)
    for r in rows:
        assert r["feasible"] in ("0", "1")
        assert (r["rate_u1"] == "") == (r["feasible"] == "0")
    assert len(read_csv(out / "timing.csv")) == len(rows)


def test_summary_recomputable(small_sweep):
    cfg, out = small_sweep
    rows = read_csv(out / "detail.csv")
    for s in read_csv(out / "summary.csv"):
        g = [r for r in rows if r["power_dbm"] == s["power_dbm"] and r["scheme"] == s["scheme"]]
        rates = [float(r["rate_u1"]) for r in g if r["feasible"] == "1"]
        assert int(s["realizations"]) == len(g)
        assert float(s["feasible_prob"]) == pytest.approx(len(rates) / len(g))
        assert float(s["mean_rate_zero_filled"]) == pytest.approx(sum(rates) / len(g))
        if rates:
            assert float(s["mean_rate_feasible"]) == pytest.approx(np.mean(rates))
        assert s["eta"] == "0.8"


def test_rerun_is_byte_identical(small_sweep, tmp_path):
    cfg, out = small_sweep
    run_sweep(cfg, str(tmp_path))
    for name in ("detail.csv", "summary.csv"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()


def test_worker_pool_matches_sequential(small_sweep, tmp_path):
    cfg, out = small_sweep
    run_sweep(config_from_dict({**SMALL, "workers": 2}), str(tmp_path))
    assert (out / "detail.csv").read_bytes() == (tmp_path / "detail.csv").read_bytes()


def test_traces_and_designs(small_sweep):
    cfg, out = small_sweep
    for name in os.listdir(out / "traces"):
        d = json.loads((out / "traces" / name).read_text())
        assert d["eta"] == 0.8 and len(d["runs"]) == len(cfg.power_grid_dbm)
        for run in d["runs"]:
            assert len(run["trace"]) == run["outer_iters"]
            assert (run["design"] is not None) == run["feasible"]


def test_convergence_traces(tmp_path):
    cfg = config_from_dict({**SMALL, "realizations": 1})
    res = run_convergence(cfg, 30.0, str(tmp_path))
    rows = read_csv(tmp_path / "convergence.csv")
    for r in res.rows:
        mine = [x for x in rows if x["scheme"] == r["scheme"]]
        assert len(mine) == r["outer_iters"]
        rates = [float(x["rate_u1"]) for x in mine]
        assert np.all(np.diff(rates) >= -1e-6)
        if r["scheme"] != "proposed":
            assert len(set(rates)) <= 1


def test_config_parsing(tmp_path):
    cfg = parse_config_text("# comment\nM = 12\npower_grid_dbm = 10, 20\nschemes=proposed\n")
    assert cfg.M == 12 and cfg.power_grid_dbm == [10.0, 20.0] and cfg.schemes == ["proposed"]
    cfg = parse_config_text(json.dumps({"M": 3, "eta": 0.5, "ap_pos": [0, 1, 0]}))
    assert cfg.M == 3 and cfg.eta == 0.5 and cfg.ap_pos == [0.0, 1.0, 0.0]
    assert ExperimentConfig().power_grid_dbm == [10.0, 15.0, 20.0, 25.0, 30.0, 35.0]
    for bad in ("bogus = 1", "M = x", "realizations = 0", "schemes = fancy",
                "power_grid_dbm = ", "eta = 2", "{not json", "alpha_ris = 1.0", "M 3"):
        with pytest.raises(ConfigError):
            parse_config_text(bad)


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "cfg.txt"
    good.write_text("N = 2\nM = 2\nrealizations = 1\npower_grid_dbm = 30\n")
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(good), "--out", str(out),
                     "--schemes", "random_phase,without_ris", "--seed", "5"]) == 0
    rows = read_csv(out / "detail.csv")
    assert [r["scheme"] for r in rows] == ["random_phase", "without_ris"]
    assert rows[0]["seed"] == "5"
    bad = tmp_path / "bad.txt"
    bad.write_text("nope = 1\n")
    assert cli.main(["sweep", "--config", str(bad)]) == 2
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.txt")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["converge", "--config", str(good), "--out", str(blocker / "sub")]) == 3
    assert cli.main(["converge", "--config", str(good), "--power-dbm", "25",
                     "--out", str(tmp_path / "conv")]) == 0
    assert (tmp_path / "conv" / "convergence.csv").exists()
