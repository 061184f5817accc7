"""Seeded Monte Carlo runs and figure recipes.

A run directory looks like::

    <out>/scenario.cfg       canonical scenario text (its sha256 is the config hash)
    <out>/manifest.json      seeds, per-drop outputs, version, timing
    <out>/drops/drop_NNNNN.json   per-drop partial sums and samples
    <out>/stats/...          reduced statistics (CSV + summary.json)
    <out>/ctf/drop_NNNNN.ctf      optional raw tensors

Drop ``i`` of a scenario is fully determined by ``(seed, i)``. Per-drop
records hold the exact partial sums of every estimator, so the reduction
(always in drop-index order) gives the same bytes whether a run was done in
one go, resumed, or spread over worker processes.
"""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario
from .ctf import comb_offsets, ctf_tensor, save_ctf
from .evolution import EvolutionGrid
from .exceptions import ConfigError
from .init import initialize_drop
from .stats import CorrelationAccumulator, CorrelationCurve, ctf_delay_psd, stationary_interval, write_ccdf_csv

log = logging.getLogger(__name__)

FIGURES = {"fig4-acf": "acf", "fig5-ccf": "ccf", "fig6-fcf": "fcf", "fig7-ccdf": "interval"}


class ResourceLimitError(ConfigError):
    """The requested grids would exceed the configured memory budget."""


@dataclass
class RunManifest:
    config_hash: str
    seeds: list
    drop_outputs: list
    software_version: str = __version__
    stats_files: list = field(default_factory=list)
    completed: list = field(default_factory=list)
    status: str = "complete"
    timing: dict = field(default_factory=dict)

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))


# grids -------------------------------------------------------------------

def _lag_steps(span, step):
    return int(round(span / step))


def acf_grid(scenario, t_base):
    dt = scenario["time_step_ms"] * 1e-3
    n = _lag_steps(scenario["acf_max_lag_ms"] * 1e-3, dt)
    return EvolutionGrid(t_base + dt * np.arange(n + 1), np.array([0]), np.array([0]), np.array([scenario.f0]))


def fcf_grid(scenario, carrier):
    df = scenario["freq_step_mhz"] * 1e6
    n = _lag_steps(scenario["fcf_max_lag_mhz"] * 1e6, df)
    return EvolutionGrid(np.array([0.0]), np.array([0]), np.array([0]), carrier + df * np.arange(n + 1))


def ccf_grid(scenario):
    q = np.arange(scenario.rx_array.n_elements)
    return EvolutionGrid(np.array([0.0]), np.array([0]), q, np.array([scenario.f0]))


def interval_grid(scenario, carrier):
    step = scenario["interval_step_ghz"] * 1e9
    n = _lag_steps(scenario["interval_span_ghz"] * 1e9, step)
    q = np.arange(scenario.rx_array.n_elements)
    return EvolutionGrid(np.array([0.0]), np.array([0]), q, carrier + step * np.arange(n + 1))


def snapshot_grid(scenario):
    """All element pairs at t = 0 on every listed carrier (raw tensor output)."""
    return EvolutionGrid(np.array([0.0]), np.arange(scenario.tx_array.n_elements),
                         np.arange(scenario.rx_array.n_elements), _carriers(scenario))


def _carriers(scenario):
    return np.array(sorted(c * 1e9 for c in scenario["carriers_ghz"]))


def ccf_steps(base, n_elements):
    """Shifts from element ``base`` towards the farther end of the array."""
    if n_elements - 1 - base >= base:
        return list(range(0, n_elements - base))
    return [-k for k in range(0, base + 1)]


def estimate_bytes(scenario, stats, write_ctf):
    """Peak memory of the largest tensor (values, per-path arrays, ray array delays)."""
    cfg = scenario.init
    n_clusters = max(cfg.pmf_first_order) + cfg.second_order_range[1]
    rays = n_clusters * cfg.rays_per_cluster

    def cost(grid, n_s=1, paths=False):
        n_p, n_q, n_t, n_f = grid.shape
        cells = n_p * n_q * n_t * n_f
        total = 16 * cells * n_s + 8 * rays * n_p * n_q * n_f
        if paths:
            total += 24 * cells * (1 + rays)
        return total

    sizes = [0]
    if "acf" in stats:
        sizes.append(cost(acf_grid(scenario, 0.0), paths=True))
    if "fcf" in stats:
        sizes.append(cost(fcf_grid(scenario, scenario.f0), paths=True))
    if "ccf" in stats:
        sizes.append(cost(ccf_grid(scenario), paths=True))
    if "psd" in stats:
        sizes.append(cost(EvolutionGrid.single(f=scenario.f0), scenario["comb_points"]))
    if "interval" in stats:
        sizes.append(cost(interval_grid(scenario, scenario.f0), paths=True))
    if write_ctf:
        sizes.append(cost(snapshot_grid(scenario), scenario["comb_points"]))
    return max(sizes)


def check_budget(scenario, stats, write_ctf, paper_scale=False):
    need = estimate_bytes(scenario, stats, write_ctf)
    budget = scenario["memory_budget_mb"] * 2**20
    if need > budget and not paper_scale:
        raise ResourceLimitError(
            f"largest tensor needs about {need / 2**20:.0f} MiB, above the {budget / 2**20:.0f} MiB budget; "
            "reduce the arrays/grids, raise memory_budget_mb, or pass --paper-scale",
            field="memory_budget_mb",
        )
    return need


# per-drop work -----------------------------------------------------------

def _pack(sums):
    return [[[float(z.real), float(z.imag)] for z in row] for row in sums]


def _unpack(rows):
    arr = np.asarray(rows, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def _tensor(scenario, drop, grid, **kwargs):
    return ctf_tensor(drop, grid, scenario.tx_array, scenario.rx_array, **kwargs)


def drop_record(scenario, drop_index, stats, write_ctf_dir=None):
    """Everything the reduction needs from one drop, as a JSON-ready dict."""
    drop = initialize_drop(scenario.init, scenario.D0, scenario.f0, scenario.pathloss, drop_index)
    record = {"config_hash": scenario.config_hash(), "seed": scenario.seed, "drop_index": int(drop_index),
              "stats": sorted(stats), "K": float(drop.K), "n_clusters": drop.n_clusters}
    if "acf" in stats:
        record["acf"] = {}
        for t in scenario["acf_times_s"]:
            tensor = _tensor(scenario, drop, acf_grid(scenario, t), keep_paths=True)
            acc = CorrelationAccumulator((0, 0, 0, 0), [(0, 0, k, 0) for k in range(tensor.shape[2])], True)
            record["acf"][repr(float(t))] = _pack(acc.contribution(tensor))
    if "fcf" in stats:
        record["fcf"] = {}
        for c in _carriers(scenario):
            tensor = _tensor(scenario, drop, fcf_grid(scenario, c), keep_paths=True)
            acc = CorrelationAccumulator((0, 0, 0, 0), [(0, 0, 0, k) for k in range(tensor.shape[3])], True)
            record["fcf"][repr(float(c))] = _pack(acc.contribution(tensor))
    if "ccf" in stats:
        record["ccf"] = {}
        tensor = _tensor(scenario, drop, ccf_grid(scenario), keep_paths=True)
        for q in scenario["ccf_rx_elements"]:
            shifts = [(0, k, 0, 0) for k in ccf_steps(q, tensor.shape[1])]
            acc = CorrelationAccumulator((0, q, 0, 0), shifts, True)
            record["ccf"][str(q)] = _pack(acc.contribution(tensor))
    if "psd" in stats:
        offsets = comb_offsets(scenario["comb_bandwidth_ghz"] * 1e9, scenario["comb_points"])
        tensor = _tensor(scenario, drop, EvolutionGrid.single(f=scenario.f0), f_offsets=offsets)
        psd = ctf_delay_psd(tensor, 0, 0, 0, 0)
        record["psd"] = {
            "delays": [float(x) for x in psd.delay_bins],
            "power": [float(x) for x in psd.power],
            "total": float(psd.total_power),
            "mean_ctf_power": float(np.mean(np.abs(tensor.values[0, 0, 0, 0]) ** 2)),
        }
    if "interval" in stats:
        record["interval"] = {}
        for c in _carriers(scenario):
            tensor = _tensor(scenario, drop, interval_grid(scenario, c), keep_paths=True)
            sample = stationary_interval([tensor], (0, 0, 0, 0), "frequency", scenario["c_th"],
                                         method="paths", component="nlos")
            record["interval"][repr(float(c))] = {"interval": sample.interval, "steps": sample.steps,
                                                  "below_threshold": bool(sample.below_threshold)}
    if write_ctf_dir is not None:
        offsets = comb_offsets(scenario["comb_bandwidth_ghz"] * 1e9, scenario["comb_points"])
        tensor = _tensor(scenario, drop, snapshot_grid(scenario), f_offsets=offsets)
        save_ctf(tensor, Path(write_ctf_dir) / f"drop_{drop_index:05d}.ctf",
                 {"config_hash": record["config_hash"]})
    return record


def _drop_job(args):
    scenario, index, stats, ctf_dir, path = args
    record = drop_record(scenario, index, stats, ctf_dir)
    _write_json(record, path)
    return index


def _write_json(payload, path):
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _reusable(path, scenario, stats, ctf_dir, index):
    if not path.exists():
        return False
    try:
        record = json.loads(path.read_text())
    except (OSError, ValueError):
        return False
    if record.get("config_hash") != scenario.config_hash() or not set(stats) <= set(record.get("stats", [])):
        return False
    return ctf_dir is None or (Path(ctf_dir) / f"drop_{index:05d}.ctf").exists()


# reduction ---------------------------------------------------------------

def _curve(records, key, sub, scenario, base, shifts, lags, unit):
    acc = CorrelationAccumulator(base, shifts, decompose=True)
    for record in records:
        acc.add_contribution(_unpack(record[key][sub]))
    values, raw = acc.result(normalize=True)
    return CorrelationCurve(np.asarray(lags, dtype=float), values, True, unit, raw, tuple(base), shifts)


def _label(x):
    return format(float(x), "g").replace(".", "p")


def reduce_records(scenario, records, stats, stats_dir):
    """Write the reduced statistics of ``records`` (in drop order) under ``stats_dir``."""
    stats_dir = Path(stats_dir)
    stats_dir.mkdir(parents=True, exist_ok=True)
    written = []
    summary = {"config_hash": scenario.config_hash(), "ensemble": len(records), "seed": scenario.seed}
    k = np.array([r["K"] for r in records])
    summary["ricean_k"] = {"mean": float(np.mean(k)), "median": float(np.median(k))}

    def save_curve(curve, name):
        path = stats_dir / name
        curve.to_csv(path)
        written.append(path)

    if "acf" in stats:
        dt = scenario["time_step_ms"] * 1e-3
        for t in scenario["acf_times_s"]:
            n = len(records[0]["acf"][repr(float(t))][0])
            curve = _curve(records, "acf", repr(float(t)), scenario, (0, 0, 0, 0),
                           [(0, 0, j, 0) for j in range(n)], dt * np.arange(n), "s")
            save_curve(curve, f"acf_t{_label(t)}s.csv")
    if "fcf" in stats:
        df = scenario["freq_step_mhz"] * 1e6
        for c in _carriers(scenario):
            n = len(records[0]["fcf"][repr(float(c))][0])
            curve = _curve(records, "fcf", repr(float(c)), scenario, (0, 0, 0, 0),
                           [(0, 0, 0, j) for j in range(n)], df * np.arange(n), "Hz")
            save_curve(curve, f"fcf_f{_label(c / 1e9)}ghz.csv")
    if "ccf" in stats:
        offsets = scenario.rx_array.element_offsets
        for q in scenario["ccf_rx_elements"]:
            steps = ccf_steps(q, scenario.rx_array.n_elements)
            lags = [np.linalg.norm(offsets[q + s] - offsets[q]) for s in steps]
            curve = _curve(records, "ccf", str(q), scenario, (0, q, 0, 0), [(0, s, 0, 0) for s in steps], lags, "m")
            save_curve(curve, f"ccf_q{q}.csv")
    if "psd" in stats:
        power = np.mean([r["psd"]["power"] for r in records], axis=0)
        delays = records[0]["psd"]["delays"]
        path = stats_dir / "delay_psd.csv"
        path.write_text("delay_s,power\n" + "".join(f"{d!r},{float(p)!r}\n" for d, p in zip(delays, power)))
        written.append(path)
        errors = [abs(r["psd"]["total"] - r["psd"]["mean_ctf_power"]) / r["psd"]["mean_ctf_power"] for r in records]
        summary["power_bookkeeping_max_rel_error"] = float(max(errors))
    if "interval" in stats:
        summary["frequency_interval_median_hz"] = {}
        for c in _carriers(scenario):
            samples = [r["interval"][repr(float(c))]["interval"] for r in records]
            path = stats_dir / f"interval_ccdf_f{_label(c / 1e9)}ghz.csv"
            write_ccdf_csv(samples, path)
            written.append(path)
            summary["frequency_interval_median_hz"][repr(float(c))] = float(np.median(samples))
        summary["c_th"] = scenario["c_th"]
    path = stats_dir / "summary.json"
    _write_json(summary, path)
    written.append(path)
    return written


def run_montecarlo(scenario: Scenario, stats=None, write_ctf=None, workers=1, paper_scale=False, output_dir=None):
    """Run (or resume) the scenario's Monte Carlo ensemble and write all outputs.

    ``stats`` defaults to the scenario's list and may be empty (drops and
    tensors only). Drops whose record already exists with the same config
    hash are not recomputed.
    """
    stats = tuple(scenario["stats"] if stats is None else stats)
    write_ctf = scenario["write_ctf"] if write_ctf is None else write_ctf
    check_budget(scenario, stats, write_ctf, paper_scale)
    out = Path(output_dir if output_dir is not None else scenario.output_dir)
    drops_dir = out / "drops"
    drops_dir.mkdir(parents=True, exist_ok=True)
    ctf_dir = out / "ctf" if write_ctf else None
    if ctf_dir is not None:
        ctf_dir.mkdir(exist_ok=True)
    (out / "scenario.cfg").write_text(scenario.canonical_text())

    n = scenario.ensemble
    paths = [drops_dir / f"drop_{i:05d}.json" for i in range(n)]
    manifest = RunManifest(
        config_hash=scenario.config_hash(),
        seeds=[[scenario.seed, i] for i in range(n)],
        drop_outputs=[str(p.relative_to(out)) for p in paths],
    )
    started = time.perf_counter()
    todo = [i for i in range(n) if not _reusable(paths[i], scenario, stats, ctf_dir, i)]
    manifest.completed = sorted(set(range(n)) - set(todo))
    manifest.timing["reused_drops"] = len(manifest.completed)
    try:
        jobs = [(scenario, i, stats, ctf_dir, paths[i]) for i in todo]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for index in pool.map(_drop_job, jobs):
                    manifest.completed.append(index)
        else:
            for job in jobs:
                manifest.completed.append(_drop_job(job))
                log.debug("drop %d done", job[1])
        manifest.completed.sort()
        if stats:
            records = [json.loads(p.read_text()) for p in paths]
            files = reduce_records(scenario, records, stats, out / "stats")
            manifest.stats_files = [str(Path(f).relative_to(out)) for f in files]
    except BaseException:
        manifest.status = "partial"
        manifest.completed.sort()
        raise
    finally:
        manifest.timing["wall_seconds"] = round(time.perf_counter() - started, 3)
        manifest.write(out / "manifest.json")
    return manifest


def reproduce_figure(name, scenario, output_dir=None, workers=1, paper_scale=False):
    """Emit the plot-ready CSVs of one figure recipe; returns their paths.

    ``fig4-acf``: ACF vs time lag at each of ``acf_times_s``. ``fig5-ccf``: CCF
    vs element spacing from each of ``ccf_rx_elements`` (desk scale uses the
    first and last element). ``fig6-fcf``: FCF vs frequency lag at each carrier.
    ``fig7-ccdf``: CCDF of the frequency stationary interval at each carrier.
    """
    if name not in FIGURES:
        raise ConfigError(f"unknown figure {name!r} (known: {', '.join(FIGURES)})", field="figure")
    out = Path(output_dir if output_dir is not None else scenario.output_dir)
    manifest = run_montecarlo(scenario, stats=(FIGURES[name],), write_ctf=False, workers=workers,
                              paper_scale=paper_scale, output_dir=out)
    return [out / f for f in manifest.stats_files]

