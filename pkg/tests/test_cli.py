import json

import numpy as np
import pytest

from lambda_mem.cli import ConfigError, load_mode_csv, main, parse_config, run, write_mode_csv
from lambda_mem.fields import LightMode, SpinWave
from lambda_mem.mode_analysis import purity

SMALL = """
# tiny grids keep the sweep fast
d0 = 10
F_list = [0.5, 1, 2]
n_max = 4
R = 4
N_z = 16
N_nu = 120
k = 2
refine = false
"""


def test_parse_config_values_and_aliases():
    cfg = parse_config(SMALL + "direction = backward\n")
    assert cfg.d0 == [10.0] and cfg.F == [0.5, 1.0, 2.0]
    assert cfg.n_max == 4 and cfg.refine is False and cfg.direction == "backward"


@pytest.mark.parametrize("text", ["colour = red", "d0 = -1", "F = [1, x]", "k = 0", "d0 = 1\nd0 = 2",
                                  "direction = sideways", "fit_window = [2, 1]", "just words"])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("unknown_key = 1\n")
    assert main(["memory", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "invalid_config" and "unknown_key" in err["detail"]
    assert main(["memory", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_mode_csv_roundtrip(tmp_path, rng):
    t = np.linspace(-4, 0, 17)
    vals = rng.normal(size=(3, 17)) + 1j * rng.normal(size=(3, 17))
    mode = LightMode(vals, t, np.full(17, 0.25), m=1, domain="time")
    write_mode_csv(tmp_path / "a.csv", mode, "t")
    back = load_mode_csv(tmp_path / "a.csv")
    assert isinstance(back, LightMode) and back.m == 1
    np.testing.assert_array_equal(back.values, mode.values)
    assert purity(back) == pytest.approx(purity(mode), abs=1e-12)
    S = SpinWave(vals, np.linspace(0, 1, 17), np.full(17, 1 / 16))
    write_mode_csv(tmp_path / "s.csv", S, "z")
    assert isinstance(load_mode_csv(tmp_path / "s.csv"), SpinWave)


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = out / "run.cfg"
    cfg.write_text(SMALL)
    code = main(["memory", "--config", str(cfg), "--out", str(out / "a")])
    return code, out


def test_memory_sweep_outputs(sweep):
    code, out = sweep
    assert code == 0
    summary = json.loads((out / "a" / "summary.json").read_text())
    assert summary["success"] and summary["version"] == "lambda-mem-summary/1"
    recs = summary["records"]
    assert [r["F"] for r in recs] == [0.5, 1.0, 2.0]
    for r in recs:
        assert r["status"] == "ok" and 0 < r["eta_max"] < 1
        assert r["time_reversal_overlap"] > 0.995
        for name in r["mode_files"]:
            assert (out / "a" / name).exists()
    mode = load_mode_csv(out / "a" / recs[0]["mode_files"][0])
    assert purity(mode) == pytest.approx(recs[0]["purity_input"], abs=1e-12)


def test_sweep_is_deterministic(sweep):
    code, out = sweep
    assert main(["memory", "--config", str(out / "run.cfg"), "--out", str(out / "b")]) == 0

    def strip(path):
        s = json.loads(path.read_text())
        for r in s["records"]:
            r.pop("wall_time")
        return s
    assert strip(out / "a" / "summary.json") == strip(out / "b" / "summary.json")
    for f in sorted((out / "a").glob("*.csv")):
        assert f.read_bytes() == (out / "b" / f.name).read_bytes()


def test_failed_point_is_recorded_and_sweep_continues(tmp_path, monkeypatch):
    import lambda_mem.cli as cli
    real = cli._point_retrieval

    def flaky(cfg, m, d0, F):
        if F == 1.0:
            raise RuntimeError("boom")
        return real(cfg, m, d0, F)
    monkeypatch.setattr(cli, "_point_retrieval", flaky)
    cfg = parse_config(SMALL)
    cfg.task = "retrieval"
    records, ok = run(cfg, tmp_path)
    assert not ok
    assert [r["status"] for r in records] == ["ok", "failed", "ok"]
    assert "boom" in records[1]["error"]


def test_analyze_mode_files(tmp_path):
    S = SpinWave(np.ones((2, 5)), np.linspace(0, 1, 5), np.full(5, 0.2))
    write_mode_csv(tmp_path / "s.csv", S, "z")
    cfg = parse_config(f"task = analyze\nmode_files = [{tmp_path / 's.csv'}]\n")
    records, ok = run(cfg, tmp_path / "o")
    assert ok and records[0]["mode_files"][0]["purity"] == pytest.approx(1.0)
