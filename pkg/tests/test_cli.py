import subprocess
import sys

import pytest

from thzchan.cli import EXIT_CONFIG, EXIT_OK, run

from test_config_harness import SMALL


def small_args(tmp_path):
    args = ["--out", str(tmp_path)]
    for item in SMALL:
        args += ["--override", item]
    return args


def test_validate_config(capsys):
    assert run(["validate-config"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("ok ") and len(out.split()[1]) == 64


@pytest.mark.parametrize("args", [
    ["validate-config", "--override", "mu_dtau_1st_ns=-1"],
    ["validate-config", "--override", "nonsense=1"],
    ["validate-config", "--override", "tx_elements=1024", "--override", "rx_elements=1024"],
    ["validate-config", "--scenario", "/does/not/exist.cfg"],
])
def test_config_errors_exit_2(args, capsys):
    assert run(args) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_paper_scale_lifts_guard(capsys):
    args = ["validate-config", "--override", "tx_elements=1024", "--override", "rx_elements=1024", "--paper-scale"]
    assert run(args) == EXIT_OK


def test_unknown_key_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("seed = 3\nbogus = 1\n")
    assert run(["validate-config", "--scenario", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "bogus" in err and "2" in err


def test_stats_and_seed_override(tmp_path, capsys):
    args = ["stats", "--only", "psd", "--seed", "7", "--ensemble", "1"] + small_args(tmp_path)
    assert run(args) == EXIT_OK
    out = capsys.readouterr().out
    assert "delay_psd.csv" in out and (tmp_path / "stats/delay_psd.csv").exists()
    assert "seed = 7\n" in (tmp_path / "scenario.cfg").read_text()
    assert run(["stats", "--only", "doppler"] + small_args(tmp_path)) == EXIT_CONFIG


def test_generate_and_figure(tmp_path, capsys):
    assert run(["generate"] + small_args(tmp_path / "gen")) == EXIT_OK
    assert (tmp_path / "gen/ctf/drop_00000.ctf").exists()
    assert run(["figure", "fig5-ccf"] + small_args(tmp_path / "fig")) == EXIT_OK
    assert (tmp_path / "fig/stats/ccf_q3.csv").exists()
    assert run(["figure", "fig8"] + small_args(tmp_path / "fig")) == EXIT_CONFIG


def test_console_entry_point():
    done = subprocess.run([sys.executable, "-m", "thzchan.cli", "validate-config"], capture_output=True, text=True)
    assert done.returncode == 0 and done.stdout.startswith("ok ")
    done = subprocess.run([sys.executable, "-m", "thzchan.cli", "validate-config", "--override", "c_th=2"],
                          capture_output=True, text=True)
    assert done.returncode == 2
