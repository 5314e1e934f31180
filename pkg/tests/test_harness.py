import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from csrlm.cli import main
from csrlm.harness.config import ConfigError, config_from_dict, default_samples, expand_grid, load_config
from csrlm.harness.io import (
    OBS_COLUMNS,
    OutputExists,
    SchemaError,
    csv_text,
    fmt,
    read_observables,
    write_csv,
    write_json,
)
from csrlm.harness.sweep import point_seed, run_point, run_sweep, write_sweep_outputs
from csrlm.model import ModelParams


def small_doc(out, **outputs):
    return {
        "grid": {"K": 4, "q": 0.1, "kT": [0.2, 1.0], "N": [16, 32]},
        "protocol": {"samples": 20, "seed": 7},
        "outputs": {"dir": str(out), **outputs},
    }


def test_expand_grid_forms():
    assert expand_grid("kT", {"start": 0.1, "stop": 0.5, "step": 0.1}) == (0.1, 0.2, 0.3, 0.4, 0.5)
    assert expand_grid("N", [64, 16, 16]) == (16, 64)
    assert expand_grid("q", 0.01) == (0.01,)
    for bad in ([], {"start": 0, "stop": 1}, {"start": 0, "stop": 1, "step": 0}, "x", [True], [1.5]):
        with pytest.raises(ConfigError):
            expand_grid("N", bad)


def test_config_defaults_and_validation(tmp_path):
    cfg = config_from_dict(small_doc(tmp_path))
    assert cfg.J == (1.0,) and cfg.t == (0.0,) and cfg.epsilon == (0.0,)
    assert len(cfg.points()) == 4
    assert default_samples(1024) == 1000 and default_samples(2048) == 200
    assert config_from_dict({**small_doc(tmp_path), "protocol": {}}).samples_for(2048) == 200
    bad_docs = [
        {**small_doc(tmp_path), "grid": {"K": 4, "q": 0.1, "kT": [], "N": [16]}},
        {**small_doc(tmp_path), "grid": {"K": 4, "q": 0.1, "kT": [1.0]}},
        {**small_doc(tmp_path), "grid": {"K": 4, "q": 0.1, "kT": [-1.0], "N": [16]}},
        {**small_doc(tmp_path), "grid": {"K": 1, "q": 0.1, "kT": [1.0], "N": [16]}},
        {**small_doc(tmp_path), "grid": {"K": 4, "q": 0.0, "kT": [1.0], "N": [16]}},
        {**small_doc(tmp_path), "bogus": 1},
        {**small_doc(tmp_path), "protocol": {"samples": 1}},
        {**small_doc(tmp_path), "parallel": 0},
        small_doc(tmp_path, artifacts=["nope"]),
        small_doc(tmp_path, dump_bin=[0.5, 0.2]),
        small_doc(tmp_path, zipf_mode="weird"),
    ]
    for doc in bad_docs:
        with pytest.raises(ConfigError):
            config_from_dict(doc)


def test_load_config_reports_position(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"grid": {"K": 4,\n "q": }}')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


def test_config_flag_overrides_and_env(tmp_path, monkeypatch):
    doc = small_doc(tmp_path)
    del doc["outputs"]["dir"]
    monkeypatch.setenv("CSRLM_OUT", str(tmp_path / "envdir"))
    cfg = config_from_dict(doc, seed=99, parallel=2)
    assert cfg.out == str(tmp_path / "envdir")
    assert cfg.seed == 99 and cfg.parallel == 2


def test_fmt_is_round_trip():
    for v in (0.1, 1 / 3, 1e-300, np.float64(0.07), 123456789.123):
        assert float(fmt(v)) == float(v)
    assert fmt(np.float64(0.5)) == "0.5"
    assert fmt(np.int64(3)) == "3"
    assert fmt(float("nan")) == "nan"
    assert fmt(True) == "true"
    assert csv_text(["a", "b"], [{"a": 1, "b": "x,y"}]) == 'a,b\n1,"x,y"\n'


def test_write_protection(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["x"], [{"x": 1}])
    with pytest.raises(OutputExists):
        write_csv(p, ["x"], [{"x": 2}])
    assert p.read_text() == "x\n1\n"
    write_csv(p, ["x"], [{"x": 2}], overwrite=True)
    assert p.read_text() == "x\n2\n"
    j = write_json(tmp_path / "s.json", {"a": np.float64(1.5)})
    assert json.loads(j.read_text()) == {"a": 1.5, "schema_version": 1}


def test_read_observables_schema(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("K,J,q\n1,2,3\n")
    with pytest.raises(SchemaError, match="missing columns"):
        read_observables(p)


def test_point_seed_is_stable_and_distinct():
    p = ModelParams(K=20, kT=0.3)
    assert point_seed(1, p, 64) == point_seed(1, p, 64)
    assert len({point_seed(1, p, 64), point_seed(2, p, 64), point_seed(1, p, 128),
                point_seed(1, ModelParams(K=20, kT=0.32), 64)}) == 4
    assert 0 <= point_seed(0, p, 64) < 2**64


def test_run_point_row_and_record():
    res = run_point(ModelParams(K=4, q=0.1, kT=0.5), 32, 30, seed=5)
    assert list(res.row) != [] and set(OBS_COLUMNS) == set(res.row)
    assert res.row["samples"] == 30 and res.row["error"] == ""
    assert 0 <= res.row["mean_M"] <= 1
    assert res.histogram.sum() == 30
    assert res.symbol_counts.sum() == 30 * 32
    assert res.record.generator.startswith("numpy.PCG64")
    again = run_point(ModelParams(K=4, q=0.1, kT=0.5), 32, 30, seed=5)
    assert again.row == res.row


def test_run_point_records_runaway_error():
    p = ModelParams(K=2, q=1.0, t=0.05)
    res = run_point(p, 8, 40, seed=0, complete_sentences=True, runaway_factor=2)
    assert res.row["error"].startswith("RunawayGrowth")
    assert math.isnan(res.row["mean_M"])
    assert res.histogram.sum() == 0


def test_run_point_dumps_filter():
    res = run_point(ModelParams(K=20, q=0.01, kT=0.001), 64, 10, seed=1, dump_bin=(0.98, 1.0), dump_max=3)
    assert len(res.dumps) == 3
    for _, M, sym in res.dumps:
        assert 0.98 <= M <= 1.0
        assert len(set(sym.tolist())) <= 2


def test_sweep_independent_of_parallelism(tmp_path):
    a = config_from_dict(small_doc(tmp_path / "a"))
    b = config_from_dict({**small_doc(tmp_path / "b"), "parallel": 2})
    write_sweep_outputs(a, run_sweep(a))
    write_sweep_outputs(b, run_sweep(b))
    for name in ("observables.csv", "histograms.csv", "zipf.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    runs = [json.loads(line) for line in (tmp_path / "a" / "runs.jsonl").read_text().splitlines()]
    assert len(runs) == 4 and all(r["version"] and r["backend"] for r in runs)


def test_rows_reproducible_from_run_record(tmp_path):
    cfg = config_from_dict(small_doc(tmp_path))
    write_sweep_outputs(cfg, run_sweep(cfg))
    rec = json.loads((tmp_path / "runs.jsonl").read_text().splitlines()[2])
    p = ModelParams(**{k: rec[k] for k in ("K", "J", "q", "t", "epsilon", "kT")})
    res = run_point(p, rec["N"], rec["samples"], rec["seed"], post_growth_sweeps=rec["post_growth_sweeps"])
    table = read_observables(tmp_path / "observables.csv")
    row = table[(table["kT"] == rec["kT"]) & (table["N"] == rec["N"])].iloc[0]
    assert row["mean_M"] == res.row["mean_M"]
    assert int(row["seed"]) == rec["seed"]


def test_cli_generate_dumps_and_overwrite(tmp_path, capsys):
    out = tmp_path / "g"
    args = ["generate", "--K", "20", "--q", "0.01", "--kT", "0.001", "--N", "64", "--samples", "10",
            "--dump-bin", "0.98", "1.0", "--dump-max", "2", "--out", str(out)]
    assert main(args) == 0
    dumps = (out / "dumps.csv").read_text().splitlines()
    assert dumps[0] == "K,q,t,epsilon,kT,N,sample,M,symbols" and len(dumps) == 3
    before = (out / "observables.csv").read_bytes()
    assert main(args) == 2
    assert "refusing to overwrite" in capsys.readouterr().err
    assert (out / "observables.csv").read_bytes() == before
    assert main(args + ["--overwrite"]) == 0
    assert (out / "observables.csv").read_bytes() == before


def test_cli_sweep_and_analyze(tmp_path):
    cfg = tmp_path / "c.json"
    doc = {
        "grid": {"K": 20, "q": 0.01, "kT": {"start": 0.1, "stop": 0.5, "step": 0.04}, "N": [16, 32, 64]},
        "protocol": {"samples": 60, "seed": 3},
        "outputs": {"dir": str(tmp_path / "s"), "artifacts": ["observables", "histograms", "zipf", "fss"]},
        "analysis": {"grid": {"tc": [0.1, 0.5, 0.08], "nu": [1, 3, 1], "gamma": [1, 3, 1]}},
    }
    cfg.write_text(json.dumps(doc))
    assert main(["sweep", "--config", str(cfg)]) == 0
    s = tmp_path / "s"
    header = (s / "observables.csv").read_text().splitlines()[0]
    assert header == ",".join(OBS_COLUMNS)
    assert (s / "fss.csv").read_text().startswith("Tc,nu,gamma,quality\n")
    summary = json.loads((s / "fss_summary.json").read_text())
    assert summary["schema_version"] == 1 and set(summary["minimizer"]) == {"Tc", "nu", "gamma", "quality"}
    assert main(["analyze", "tc", str(s), "--method", "susceptibility_peak"]) == 0
    tc = json.loads((s / "tc_summary.json").read_text())
    assert tc["estimates"][0]["method"] == "susceptibility_peak"
    assert main(["analyze", "phase-diagram", str(s / "observables.csv"), "--axis", "q"]) == 0
    assert (s / "phase_diagram.csv").read_text().startswith("axis_name,axis_value,Tc,method,no_transition\n")
    assert main(["analyze", "zipf", str(s)]) == 0
    assert main(["analyze", "histogram", str(s), "--where", "N=32"]) == 0
    modes = (s / "histogram_modes.csv").read_text().splitlines()
    assert modes[0] == "kT,N,typical_M,samples" and len(modes) == 1 + 11
    assert main(["analyze", "tc", str(s / "histograms.csv")]) == 2
    assert main(["analyze", "tc", str(s), "--where", "K=3", "--overwrite"]) == 2


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"K": 4, "q": 0.1, "kT": [], "N": [8]}}))
    assert main(["sweep", "--config", str(cfg)]) == 2
    assert "grid.kT" in capsys.readouterr().err


def test_cli_oracle_check_scope(tmp_path):
    env = dict(os.environ)
    cmd = [sys.executable, "-m", "csrlm.cli", "oracle-check", "--scope", "absorption", "--runs", "20000"]
    out = subprocess.run(cmd, capture_output=True, text=True, env=env)
    assert out.returncode == 0
    assert "absorption" in out.stdout and "equilibrium" not in out.stdout


def test_cli_oracle_check_equilibrium_short(capsys):
    assert main(["oracle-check", "--scope", "equilibrium", "--sweeps", "20000", "--seed", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3 and all(line.startswith("PASS") for line in lines)


def test_version_flag():
    out = subprocess.run([sys.executable, "-m", "csrlm.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "csrlm" in out.stdout


def test_no_leftover_files(tmp_path):
    assert not Path(tmp_path, "csrlm-out").exists()
