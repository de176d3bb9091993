import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from smwfb import FilterBankCoefficients
from smwfb.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from smwfb.experiments import default_config, run_experiment


def _run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def samples(tmp_path):
    x = np.random.default_rng(0).standard_normal(201)
    path = tmp_path / "x.csv"
    path.write_text("x\n" + "\n".join(repr(v) for v in x.tolist()) + "\n")
    return path, x


def test_verify_passes():
    code, text = _run("verify", "--M", "2", "--N", "3", "--blocks", "20", "--trials", "3")
    assert code == EXIT_OK
    rep = json.loads(text)
    assert rep["passed"] and rep["max_rel_err"] <= 1e-8


def test_verify_injected_fault_fails(capsys):
    code, text = _run("verify", "--M", "2", "--N", "3", "--blocks", "20", "--trials", "3",
                      "--inject", "channel.D_er")
    assert code == EXIT_FAIL
    assert json.loads(text)["failing"] == ["channel.D_er"]
    assert "channel.D_er" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ("verify", "--M", "9"),
    ("verify", "--blocks", "0"),
    ("experiment", "7"),
    ("experiment", "1", "--excitation", "cauchy"),
    ("experiment", "5", "--sweep", "1.5"),
    ("frobnicate",),
    (),
])
def test_usage_errors(argv):
    assert _run(*argv)[0] == EXIT_USAGE


def test_whiten_streams_blocks(samples):
    path, x = samples
    code, text = _run("whiten", "--M", "2", "--N", "2", "--input", str(path))
    assert code == EXIT_OK
    lines = text.splitlines()
    assert lines[0] == "block,e0,e1"
    assert len(lines) == 1 + 101
    first = [float(v) for v in lines[1].split(",")[1:]]
    assert first == [x[0], 0.0]


def test_whiten_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0\n2.0\nnope\n")
    assert _run("whiten", "--input", str(path))[0] == EXIT_USAGE


def test_coeffs_writes_bank(samples, tmp_path):
    path, _ = samples
    dest = tmp_path / "bank.json"
    code, _ = _run("coeffs", "--M", "2", "--N", "4", "--input", str(path), "--out", str(dest))
    assert code == EXIT_OK
    fb = FilterBankCoefficients.from_json(dest.read_text())
    assert fb.M == 2 and len(fb.H) == 2
    assert _run("coeffs", "--M", "2", "--N", "3", "--input", str(path))[0] == EXIT_USAGE


def test_experiment_reruns_are_byte_identical(tmp_path):
    outs = []
    for tag in "ab":
        d = tmp_path / tag
        code, _ = _run("experiment", "4", "--samples", "241", "--seeds", "2", "--out", str(d))
        assert code == EXIT_OK
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"trajectories.csv", "summary.json"}
    head = outs[0]["trajectories.csv"].decode().splitlines()
    assert head[0].startswith("# config ")
    assert json.loads(head[0][len("# config "):])["samples"] == 241
    assert head[1] == "seed,block,channel,lag,value"


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"samples": 4001, "seeds": 3, "lambda": 1.0, "theta": math.pi / 1.75}))
    code, text = _run("experiment", "1", "--config", str(cfg), "--seeds", "2")
    assert code == EXIT_OK
    summary = json.loads(text)
    assert summary["config"]["seeds"] == 2
    assert summary["config"]["samples"] == 4001
    assert summary["config"]["theta"] == pytest.approx(math.pi / 1.75)
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert _run("experiment", "1", "--config", str(bad))[0] == EXIT_USAGE


def test_spectra_experiment_files(tmp_path):
    code, _ = _run("experiment", "5", "--sweep", "1", "4", "--samples", "8193", "--out", str(tmp_path))
    assert code == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["signal1_input_psd.csv", "signal1_output_psd.csv",
                     "signal4_input_psd.csv", "signal4_output_psd.csv", "summary.json"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [s["signal"] for s in summary["signals"]] == [1, 4]
    for s in summary["signals"]:
        assert min(s["output_flatness"]) > s["input_flatness"]


def test_gain_sweeps():
    s2 = run_experiment(default_config(2, sweep=(0.5, 0.9), samples=4001, seeds=2))
    assert [r["key"] for r in s2["rows"]] == [0.5, 0.9]
    # stronger resonance, more to gain
    assert s2["rows"][1]["mean_db"] > s2["rows"][0]["mean_db"]
    s3 = run_experiment(default_config(3, sweep=(2, 3), samples=4001, seeds=2, workers=2))
    assert [r["key"] for r in s3["rows"]] == [2, 3] and "spread_db" in s3


def test_threads_do_not_change_results():
    a = run_experiment(default_config(1, samples=4001, seeds=3))
    b = run_experiment(default_config(1, samples=4001, seeds=3, workers=3))
    assert a["rows"] == b["rows"]


def test_other_excitations_run():
    for exc in ("uniform", "exponential", "gamma"):
        s = run_experiment(default_config(1, samples=2001, seeds=1, excitation=exc))
        assert math.isfinite(s["rows"][0]["mean_db"])


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "smwfb.cli", "verify", "--blocks", "12", "--trials", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "smwfb.cli", "verify", "--M", "1"], capture_output=True)
    assert proc.returncode == 2
