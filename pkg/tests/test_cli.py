import csv
import subprocess
import sys

import pytest

from deeprx.cli import main
from deeprx.config import load_config

FAST = ["--blocks", "1", "--seeds", "1"]


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text("[experiment]\ninfo = 100\nsnr_db = 10, 12\n\n[training]\niterations = 5\n\n"
                 "[pilots]\ngrid = 100, 200\nreference = 100\n")
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_writes_all_outputs(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(tiny_config), "--out", str(out)] + FAST) == 0
    for name in ("results.csv", "summary.csv", "ber_vs_snr.svg", "config_resolved.ini"):
        assert (out / name).exists()
    rows = _rows(out / "results.csv")
    assert {r["snr_db"] for r in rows} == {"10.0", "12.0"}
    assert {r["method"] for r in rows} == {"regular", "combined", "genie"}
    resolved = load_config(out / "config_resolved.ini").experiment
    assert resolved.blocks == 1 and resolved.iterations == 5
    assert "BER" in capsys.readouterr().out


def test_run_uses_first_snr_only(tiny_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(tiny_config), "--out", str(out)] + FAST) == 0
    assert {r["snr_db"] for r in _rows(out / "results.csv")} == {"10.0"}


def test_snr_range_override(tiny_config, tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(tiny_config), "--out", str(out), "--snr", "9:11:1",
                 "--method", "regular"] + FAST) == 0
    assert {r["snr_db"] for r in _rows(out / "results.csv")} == {"9.0", "10.0", "11.0"}


def test_extended_beta_flag(tiny_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(tiny_config), "--out", str(out), "--method", "extended",
                 "--beta", "2.5"] + FAST) == 0
    rows = [r for r in _rows(out / "results.csv") if r["method"] != "genie"]
    assert {r["method"] for r in rows} == {"extended(2.5)"}
    assert {r["qstar_size"] for r in rows} == {"497"}


def test_seed_environment_override(tiny_config, tmp_path, monkeypatch):
    args = ["run", "--config", str(tiny_config), "--method", "regular"] + FAST
    main(args + ["--out", str(tmp_path / "a")])
    monkeypatch.setenv("DEEPRX_SEED", "7")
    main(args + ["--out", str(tmp_path / "b")])
    main(args + ["--out", str(tmp_path / "c")])
    a, b, c = (_rows(tmp_path / d / "results.csv") for d in "abc")
    assert a != b and b == c
    assert load_config(tmp_path / "b" / "config_resolved.ini").experiment.master_seed == 7
    monkeypatch.setenv("DEEPRX_SEED", "seven")
    assert main(args + ["--out", str(tmp_path / "d")]) == 1


def test_results_are_reproducible_bytes(tiny_config, tmp_path):
    for d in "ab":
        main(["sweep", "--config", str(tiny_config), "--out", str(tmp_path / d)] + FAST)
    for name in ("results.csv", "summary.csv", "ber_vs_snr.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pilots_command(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["pilots", "--config", str(tiny_config), "--out", str(out), "--snr", "12"] + FAST) == 0
    summary = _rows(out / "summary.csv")
    assert {r["pilots"] for r in summary} == {"100", "200"}
    eff = _rows(out / "efficiency.csv")
    assert len(eff) == 1 and eff[0]["reference_pilots"] == "100"
    assert (out / "ber_vs_pilots.svg").exists()
    assert "pilots" in capsys.readouterr().out


def test_ablation_command(tiny_config, tmp_path):
    out = tmp_path / "out"
    assert main(["ablation", "--config", str(tiny_config), "--out", str(out), "--snr", "12"] + FAST) == 0
    methods = {r["method"] for r in _rows(out / "results.csv")}
    assert {"regular", "geometric", "projection", "translation", "combined"} <= methods


@pytest.mark.parametrize("argv", [
    ["sweep", "--bogus"],
    ["frobnicate"],
    [],
    ["sweep", "--method", "extended", "--beta", "0.5"],
    ["sweep", "--method", "regular", "--beta", "2"],
    ["sweep", "--snr", "a:b"],
    ["sweep", "--jobs", "0"],
])
def test_usage_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv and argv[0] == "sweep" else argv) == 2


@pytest.mark.parametrize("argv", [
    ["sweep", "--config", "/no/such.ini"],
    ["sweep", "--receiver", "deepsic"],
    ["sweep", "--blocks", "0"],
])
def test_config_errors_exit_1(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 1
    assert "deeprx: error:" in capsys.readouterr().err


def test_missing_config_names_path(tmp_path, capsys):
    main(["sweep", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)])
    assert "nope.ini" in capsys.readouterr().err


def test_oracle_command(capsys):
    assert main(["oracle", "--instances", "12"]) == 0
    assert "12/12 agree" in capsys.readouterr().out


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "deeprx.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gradcheck" in proc.stdout
