import csv
import json

import numpy as np
import pytest

from thzchan.config import SCHEMA, default_scenario_text, load_scenario, parse_override, parse_text
from thzchan.exceptions import ConfigError
from thzchan.harness import (
    FIGURES,
    ResourceLimitError,
    RunManifest,
    ccf_steps,
    check_budget,
    reproduce_figure,
    run_montecarlo,
)

SMALL = [
    "ensemble=2", "rays_per_cluster=8", "tx_elements=4", "rx_elements=4", "acf_max_lag_ms=4",
    "fcf_max_lag_mhz=40", "interval_span_ghz=6", "comb_points=16", "ccf_rx_elements=0,3",
]


@pytest.fixture
def small():
    return load_scenario(overrides=SMALL)


def test_reference_defaults():
    s = load_scenario()
    assert s.seed == 1 and s.ensemble == 100
    assert abs(np.linalg.norm(s.rx_array.velocity) - 0.1) < 1e-15
    assert abs(np.arctan2(s.rx_array.velocity[1], s.rx_array.velocity[0]) - np.pi / 3) < 1e-12
    assert np.array_equal(s.D0, [3.0, 0.0, 0.0]) and s.f0 == 300e9
    assert abs(s.init.mu_dtau_1st - 2.73e-9) < 1e-21 and abs(s.init.mu_dtau_2nd - 4.8e-9) < 1e-21
    assert s.init.angle_std == 1.2 and s.init.rho_mu == 3 and s.init.rho_sigma == 3
    assert s.init.rays_per_cluster == 100 and s["c_th"] == 0.9
    assert s.init.pmf_first_order == {4: 0.35, 5: 0.65} and s.init.second_order_range == (7, 13)
    assert s.tx_array.n_elements == 16 and s.rx_array.n_elements == 16
    assert list(s["carriers_ghz"]) == [300, 325, 350] and list(s["acf_times_s"]) == [0, 5, 10]


def test_missing_seed(tmp_path):
    text = "\n".join(line for line in default_scenario_text().splitlines() if not line.startswith("seed"))
    path = tmp_path / "s.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_scenario(path)
    assert info.value.field == "seed"


def test_negative_mu_names_field(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(default_scenario_text().replace("mu_dtau_1st_ns = 2.73", "mu_dtau_1st_ns = -1"))
    with pytest.raises(ConfigError) as info:
        load_scenario(path)
    assert info.value.field == "mu_dtau_1st_ns"
    assert "mu_dtau_1st" in str(info.value) and "-1" in str(info.value)
    assert info.value.line is not None


def test_parse_errors_carry_line():
    with pytest.raises(ConfigError) as info:
        parse_text("seed = 1\nbogus_key = 3\n")
    assert info.value.line == 2 and info.value.field == "bogus_key"
    with pytest.raises(ConfigError) as info:
        parse_text("seed = 1\nseed = 2\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError) as info:
        parse_text("seed = 1\nensemble 3\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError):
        parse_text("seed = abc\n")
    with pytest.raises(ConfigError):
        parse_override("ensemble")


def test_overrides_and_hash(small):
    base = load_scenario()
    assert small.ensemble == 2 and small.rx_array.n_elements == 4
    assert small.config_hash() != base.config_hash()
    same = load_scenario(overrides=SMALL, output_dir="elsewhere")
    assert same.config_hash() == small.config_hash()
    assert small.canonical_text().count("\n") == len(SCHEMA)
    round_trip = small.with_overrides()
    assert round_trip.canonical_text() == small.canonical_text()


def test_canonical_text_reloads(tmp_path, small):
    path = tmp_path / "canon.cfg"
    path.write_text(small.canonical_text())
    assert load_scenario(path).config_hash() == small.config_hash()


@pytest.mark.parametrize("item", ["c_th=1.5", "ensemble=0", "ccf_rx_elements=0,99", "second_order_max=3",
                                  "first_order_pmf=4:0.5", "comb_points=0", "array_axis=0,0,0"])
def test_validation_errors(item):
    with pytest.raises(ConfigError) as info:
        load_scenario(overrides=[item])
    assert info.value.field


def test_absorption_table_file(tmp_path):
    table = tmp_path / "abs.txt"
    table.write_text("300e9 1\n400e9 3\n")
    s = load_scenario(overrides=[f"absorption_table={table}"])
    assert s.pathloss.absorption_db_per_km(350e9) == 2.0
    with pytest.raises(ConfigError):
        load_scenario(overrides=[f"absorption_table={tmp_path / 'nope.txt'}"])


def test_memory_guard():
    big = load_scenario(overrides=["tx_elements=1024", "rx_elements=1024"])
    with pytest.raises(ResourceLimitError):
        check_budget(big, ("ccf", "interval"), True)
    check_budget(big, ("ccf", "interval"), True, paper_scale=True)


def test_ccf_steps():
    assert ccf_steps(0, 4) == [0, 1, 2, 3]
    assert ccf_steps(3, 4) == [0, -1, -2, -3]


def test_smallest_run(tmp_path):
    s = load_scenario(overrides=SMALL + ["ensemble=1", "acf_times_s=0"])
    m = run_montecarlo(s, stats=("acf",), output_dir=tmp_path)
    assert m.stats_files == ["stats/acf_t0s.csv", "stats/summary.json"]
    rows = list(csv.reader((tmp_path / "stats/acf_t0s.csv").open()))
    assert rows[0] == ["lag", "real", "imag", "magnitude"] and len(rows) == 6
    assert float(rows[1][3]) == pytest.approx(1.0, abs=1e-12)
    assert m.status == "complete" and m.completed == [0]


def test_run_outputs_and_determinism(tmp_path, small):
    a = run_montecarlo(small, output_dir=tmp_path / "a")
    b = run_montecarlo(small, output_dir=tmp_path / "b")
    assert a.stats_files == b.stats_files
    names = {f.split("/")[-1] for f in a.stats_files}
    assert {"acf_t0s.csv", "acf_t5s.csv", "acf_t10s.csv", "fcf_f300ghz.csv", "fcf_f325ghz.csv", "fcf_f350ghz.csv",
            "ccf_q0.csv", "ccf_q3.csv", "delay_psd.csv", "interval_ccdf_f300ghz.csv", "summary.json"} <= names
    for f in a.stats_files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    summary = json.loads((tmp_path / "a/stats/summary.json").read_text())
    assert summary["power_bookkeeping_max_rel_error"] < 0.02
    manifest = RunManifest.read(tmp_path / "a/manifest.json")
    assert manifest.config_hash == small.config_hash() and manifest.seeds == [[1, 0], [1, 1]]
    assert (tmp_path / "a/scenario.cfg").read_text() == small.canonical_text()


def test_resume_and_workers(tmp_path, small):
    full = run_montecarlo(small, stats=("acf", "ccf"), output_dir=tmp_path / "full")
    partial = tmp_path / "part"
    run_montecarlo(small.with_overrides(ensemble=1), stats=("acf", "ccf"), output_dir=partial)
    # the one-drop run has another hash, so nothing is reused
    resumed = run_montecarlo(small, stats=("acf", "ccf"), output_dir=partial)
    assert resumed.timing["reused_drops"] == 0
    again = run_montecarlo(small, stats=("acf", "ccf"), output_dir=partial)
    assert again.timing["reused_drops"] == 2
    parallel = run_montecarlo(small, stats=("acf", "ccf"), workers=2, output_dir=tmp_path / "par")
    for f in full.stats_files:
        ref = (tmp_path / "full" / f).read_bytes()
        assert (partial / f).read_bytes() == ref
        assert (tmp_path / "par" / f).read_bytes() == ref
    assert parallel.completed == [0, 1]


def test_write_ctf(tmp_path, small):
    from thzchan.ctf import load_ctf

    m = run_montecarlo(small, stats=(), write_ctf=True, output_dir=tmp_path)
    assert m.stats_files == []
    tensor = load_ctf(tmp_path / "ctf/drop_00001.ctf")
    assert tensor.shape == (4, 4, 1, 3, 16)
    assert tensor.metadata["config_hash"] == small.config_hash()


def test_partial_manifest_on_failure(tmp_path, small, monkeypatch):
    import thzchan.harness as harness

    def boom(*args, **kwargs):
        raise RuntimeError("disk full")

    monkeypatch.setattr(harness, "reduce_records", boom)
    with pytest.raises(RuntimeError):
        run_montecarlo(small, stats=("acf",), output_dir=tmp_path)
    manifest = RunManifest.read(tmp_path / "manifest.json")
    assert manifest.status == "partial" and manifest.completed == [0, 1]


def test_figures(tmp_path, small):
    assert set(FIGURES) == {"fig4-acf", "fig5-ccf", "fig6-fcf", "fig7-ccdf"}
    files = reproduce_figure("fig6-fcf", small, tmp_path)
    assert sorted(p.name for p in files if p.suffix == ".csv") == ["fcf_f300ghz.csv", "fcf_f325ghz.csv",
                                                                  "fcf_f350ghz.csv"]
    assert load_scenario()["c_th"] == 0.9
    static = small.with_overrides(rx_speed_m_per_s=0.0)
    files = reproduce_figure("fig4-acf", static, tmp_path / "static")
    curves = [np.loadtxt(p, delimiter=",", skiprows=1) for p in files if p.suffix == ".csv"]
    assert len(curves) == 3
    for c in curves:
        np.testing.assert_allclose(c[:, 3], 1.0, atol=1e-12)
        np.testing.assert_array_equal(c, curves[0])
    with pytest.raises(ConfigError):
        reproduce_figure("fig9-doppler", small, tmp_path)
