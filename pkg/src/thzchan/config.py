"""Scenario files: flat ``key = value`` text with units in the key names.

Lines starting with ``#`` are comments, blank lines are ignored. Every key
must be known; repeated keys are an error. Lists are comma separated and
the cluster-count PMF is written ``4:0.35, 5:0.65``.
"""

import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, GeometryError, GridError
from .geometry import SPEED_OF_LIGHT, AnglePair, ArrayGeometry
from .init import InitConfig
from .pathloss import PathlossModel

STAT_NAMES = ("acf", "fcf", "ccf", "psd", "interval")
REQUIRED = object()


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_int(text):
    return int(text)


def _parse_float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def _split(text):
    return [part.strip() for part in text.split(",") if part.strip()]


def _floats(n=None):
    def parse(text):
        values = tuple(_parse_float(x) for x in _split(text))
        if n is not None and len(values) != n:
            raise ValueError(f"expected {n} comma-separated numbers, got {len(values)}")
        if not values:
            raise ValueError("empty list")
        return values
    return parse


def _ints(text):
    values = tuple(_parse_int(x) for x in _split(text))
    if not values:
        raise ValueError("empty list")
    return values


def _pmf(text):
    out = {}
    for item in _split(text):
        k, sep, p = item.partition(":")
        if not sep:
            raise ValueError(f"expected count:probability, got {item!r}")
        out[int(k)] = _parse_float(p)
    return out


def _stats(text):
    names = tuple(_split(text))
    for name in names:
        if name not in STAT_NAMES:
            raise ValueError(f"unknown statistic {name!r} (known: {', '.join(STAT_NAMES)})")
    return names


def _fmt_float(x):
    return repr(float(x))


def _format(kind, value):
    if kind == "int":
        return str(int(value))
    if kind == "float":
        return _fmt_float(value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "str":
        return str(value)
    if kind == "pmf":
        return ", ".join(f"{k}:{_fmt_float(p)}" for k, p in sorted(value.items()))
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    if kind == "stats":
        return ", ".join(value)
    return ", ".join(_fmt_float(v) for v in value)


_PARSERS = {
    "int": _parse_int,
    "float": _parse_float,
    "bool": _parse_bool,
    "str": str,
    "pmf": _pmf,
    "ints": _ints,
    "stats": _stats,
    "vec3": _floats(3),
    "pair": _floats(2),
    "floats": _floats(),
}

# key -> (kind, default); defaults follow the indoor THz scenario of the model
SCHEMA = {
    "seed": ("int", REQUIRED),
    "ensemble": ("int", 100),
    "stats": ("stats", STAT_NAMES),
    "write_ctf": ("bool", False),
    "memory_budget_mb": ("float", 1024.0),
    # geometry and motion
    "f0_ghz": ("float", 300.0),
    "d0_m": ("vec3", (3.0, 0.0, 0.0)),
    "rx_speed_m_per_s": ("float", 0.1),
    "rx_direction_rad": ("pair", (math.pi / 3, 0.0)),
    "tx_speed_m_per_s": ("float", 0.0),
    "tx_direction_rad": ("pair", (0.0, 0.0)),
    "tx_elements": ("int", 16),
    "rx_elements": ("int", 16),
    "element_spacing_wavelengths": ("float", 0.5),
    "array_axis": ("vec3", (0.0, 1.0, 0.0)),
    "tx_orientation_rad": ("pair", (0.0, 0.0)),
    "rx_orientation_rad": ("pair", (0.0, 0.0)),
    # drop statistics
    "first_order_pmf": ("pmf", {4: 0.35, 5: 0.65}),
    "second_order_min": ("int", 7),
    "second_order_max": ("int", 13),
    "mu_dtau_1st_ns": ("float", 2.73),
    "mu_dtau_2nd_ns": ("float", 4.8),
    "mu_ray_delay_ns": ("float", 0.4),
    "sigma_ray_angle_rad": ("float", 0.05),
    "angle_std_rad": ("float", 1.2),
    "aod_mean_rad": ("pair", (0.0, 0.0)),
    "aoa_mean_rad": ("pair", (0.0, 0.0)),
    "n_tau_db_per_ns": ("float", 0.5),
    "delta_a_std_db": ("float", 1.0),
    "delta_p_los_db": ("float", 3.0),
    "xpr_mean_db": ("float", 8.0),
    "xpr_std_db": ("float", 2.0),
    "rho_mu": ("float", 3.0),
    "rho_sigma": ("float", 3.0),
    "rays_per_cluster": ("int", 100),
    "mea": ("bool", True),
    "fresh_frequency_draws": ("bool", False),
    # path loss
    "absorption_db_per_km": ("float", 10.0),
    "absorption_table": ("str", ""),
    "shadowing_sigma_db": ("float", 0.0),
    # statistics grids
    "time_step_ms": ("float", 1.0),
    "acf_max_lag_ms": ("float", 100.0),
    "acf_times_s": ("floats", (0.0, 5.0, 10.0)),
    "carriers_ghz": ("floats", (300.0, 325.0, 350.0)),
    "freq_step_mhz": ("float", 10.0),
    "fcf_max_lag_mhz": ("float", 500.0),
    "comb_bandwidth_ghz": ("float", 2.0),
    "comb_points": ("int", 64),
    "ccf_rx_elements": ("ints", (0, 15)),
    "c_th": ("float", 0.9),
    "interval_step_ghz": ("float", 1.0),
    "interval_span_ghz": ("float", 130.0),
}

# InitConfig field -> scenario key, used to name the key in validation errors
_INIT_KEYS = {
    "pmf_first_order": "first_order_pmf",
    "second_order_range": "second_order_min",
    "mu_dtau_1st": "mu_dtau_1st_ns",
    "mu_dtau_2nd": "mu_dtau_2nd_ns",
    "mu_ray_delay_f0": "mu_ray_delay_ns",
    "sigma_ray_angle_f0": "sigma_ray_angle_rad",
    "angle_std": "angle_std_rad",
    "n_tau": "n_tau_db_per_ns",
    "delta_a_std": "delta_a_std_db",
    "delta_p_los": "delta_p_los_db",
    "xpr_db_mean": "xpr_mean_db",
    "xpr_db_std": "xpr_std_db",
    "rho_mu": "rho_mu",
    "rho_sigma": "rho_sigma",
    "rays_per_cluster": "rays_per_cluster",
    "seed": "seed",
}


def parse_text(text, source="<string>"):
    """Parse scenario text into ``{key: (value, line)}`` without validating ranges."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value' in {source}", line=lineno)
        if key in entries:
            raise ConfigError("key given more than once", field=key, line=lineno)
        entries[key] = (_parse_entry(key, value, lineno), lineno)
    return entries


def _parse_entry(key, value, lineno=None):
    if key not in SCHEMA:
        raise ConfigError("unknown key", field=key, line=lineno)
    kind = SCHEMA[key][0]
    try:
        return _PARSERS[kind](value)
    except ValueError as exc:
        raise ConfigError(str(exc), field=key, line=lineno) from None


def parse_override(item):
    """``key=value`` from the command line -> (key, parsed value)."""
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep:
        raise ConfigError(f"override {item!r} is not key=value", field=key or None)
    return key, _parse_entry(key, value.strip())


@dataclass
class Scenario:
    """A validated scenario: drop statistics, arrays, path loss, run settings.

    ``values`` holds every key with its parsed value; the other fields are
    the objects built from them. ``output_dir`` is where a run writes and is
    not part of the scenario identity (it does not enter the hash).
    """

    values: dict
    init: InitConfig
    pathloss: PathlossModel
    tx_array: ArrayGeometry
    rx_array: ArrayGeometry
    D0: np.ndarray
    f0: float
    output_dir: Path = Path("run")
    lines: dict = field(default_factory=dict, repr=False)

    @property
    def seed(self):
        return self.values["seed"]

    @property
    def ensemble(self):
        return self.values["ensemble"]

    def __getitem__(self, key):
        return self.values[key]

    def canonical_text(self):
        """Byte-stable serialization: every key in schema order, canonical numbers."""
        return "".join(f"{key} = {_format(SCHEMA[key][0], self.values[key])}\n" for key in SCHEMA)

    def config_hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def with_overrides(self, **changes):
        values = dict(self.values)
        values.update(changes)
        return build_scenario(values, output_dir=self.output_dir)


def _value_error(exc, lines, values):
    key = _INIT_KEYS.get(exc.field, exc.field)
    if key not in SCHEMA:
        return exc
    # the message quotes the value in SI units; quote the file value instead
    message = str(exc).split(": ", 1)[-1].split(", got ")[0]
    return ConfigError(f"{message}, got {_format(SCHEMA[key][0], values[key])}", field=key, line=lines.get(key))


def build_scenario(values, lines=None, output_dir="run"):
    """Validate raw ``values`` (missing keys take defaults) into a :class:`Scenario`."""
    lines = lines or {}
    full = {}
    for key, (kind, default) in SCHEMA.items():
        if key in values:
            full[key] = values[key]
        elif default is REQUIRED:
            raise ConfigError("required key is missing", field=key)
        else:
            full[key] = default
    unknown = set(values) - set(SCHEMA)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown key", field=key, line=lines.get(key))

    def check(key, ok, message):
        if not ok:
            raise ConfigError(message, field=key, line=lines.get(key))

    check("ensemble", full["ensemble"] >= 1, "must be >= 1")
    for key in ("f0_ghz", "time_step_ms", "freq_step_mhz", "comb_bandwidth_ghz", "interval_step_ghz",
                "element_spacing_wavelengths", "memory_budget_mb"):
        check(key, full[key] > 0, "must be > 0")
    for key in ("acf_max_lag_ms", "fcf_max_lag_mhz", "interval_span_ghz", "rx_speed_m_per_s",
                "tx_speed_m_per_s", "absorption_db_per_km", "shadowing_sigma_db"):
        check(key, full[key] >= 0, "must be >= 0")
    check("comb_points", full["comb_points"] >= 1, "must be >= 1")
    check("c_th", 0 < full["c_th"] < 1, "must lie in (0, 1)")
    for key in ("tx_elements", "rx_elements"):
        check(key, full[key] >= 1, "must be >= 1")
    check("acf_times_s", all(t >= 0 for t in full["acf_times_s"]), "times must be >= 0")
    check("carriers_ghz", all(f > 0 for f in full["carriers_ghz"]), "carriers must be > 0")
    check("ccf_rx_elements", all(0 <= q < full["rx_elements"] for q in full["ccf_rx_elements"]),
          "element index outside the Rx array")
    check("second_order_max", full["second_order_max"] >= full["second_order_min"], "must be >= second_order_min")
    check("array_axis", np.linalg.norm(full["array_axis"]) > 0, "must be a non-zero vector")

    f0 = full["f0_ghz"] * 1e9
    try:
        init = InitConfig(
            pmf_first_order=full["first_order_pmf"],
            second_order_range=(full["second_order_min"], full["second_order_max"]),
            mu_dtau_1st=full["mu_dtau_1st_ns"] * 1e-9,
            mu_dtau_2nd=full["mu_dtau_2nd_ns"] * 1e-9,
            mu_ray_delay_f0=full["mu_ray_delay_ns"] * 1e-9,
            sigma_ray_angle_f0=full["sigma_ray_angle_rad"],
            aod_mean=AnglePair(*full["aod_mean_rad"]),
            aoa_mean=AnglePair(*full["aoa_mean_rad"]),
            angle_std=full["angle_std_rad"],
            n_tau=full["n_tau_db_per_ns"] * 1e9,
            delta_a_std=full["delta_a_std_db"],
            delta_p_los=full["delta_p_los_db"],
            xpr_db_mean=full["xpr_mean_db"],
            xpr_db_std=full["xpr_std_db"],
            rho_mu=full["rho_mu"],
            rho_sigma=full["rho_sigma"],
            rays_per_cluster=full["rays_per_cluster"],
            mea=full["mea"],
            fresh_frequency_draws=full["fresh_frequency_draws"],
            seed=full["seed"],
        )
        if full["absorption_table"]:
            pathloss = PathlossModel.from_file(full["absorption_table"], full["shadowing_sigma_db"])
        else:
            flat = full["absorption_db_per_km"]
            pathloss = PathlossModel(np.array([[300e9, flat], [400e9, flat]]), full["shadowing_sigma_db"])
    except ConfigError as exc:
        raise _value_error(exc, lines, full) from None
    except OSError as exc:
        raise ConfigError(str(exc), field="absorption_table", line=lines.get("absorption_table")) from None

    spacing = full["element_spacing_wavelengths"] * SPEED_OF_LIGHT / f0
    try:
        tx = ArrayGeometry.ula(full["tx_elements"], spacing, full["array_axis"],
                               AnglePair(*full["tx_orientation_rad"]),
                               _velocity(full["tx_speed_m_per_s"], full["tx_direction_rad"]))
        rx = ArrayGeometry.ula(full["rx_elements"], spacing, full["array_axis"],
                               AnglePair(*full["rx_orientation_rad"]),
                               _velocity(full["rx_speed_m_per_s"], full["rx_direction_rad"]))
    except (GeometryError, GridError) as exc:
        raise ConfigError(str(exc), field="array_axis") from None
    D0 = np.array(full["d0_m"], dtype=float)
    check("d0_m", np.linalg.norm(D0) > 0, "Tx and Rx must not coincide")
    return Scenario(full, init, pathloss, tx, rx, D0, f0, Path(output_dir), dict(lines))


def _velocity(speed, direction):
    az, el = direction
    return speed * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def load_scenario(path=None, overrides=(), output_dir="run"):
    """Read, parse and validate a scenario file.

    ``path=None`` loads the bundled defaults. ``overrides`` are ``key=value``
    strings applied on top of the file (e.g. from the command line).
    """
    if path is None:
        text = default_scenario_text()
        source = "defaults.cfg"
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"scenario file {str(path)!r} does not exist")
        text = path.read_text()
        source = str(path)
    entries = parse_text(text, source)
    values = {key: value for key, (value, _) in entries.items()}
    lines = {key: line for key, (_, line) in entries.items()}
    for item in overrides:
        key, value = parse_override(item)
        values[key] = value
        lines.pop(key, None)
    return build_scenario(values, lines, output_dir)


def default_scenario_text():
    return resources.files("thzchan").joinpath("data/defaults.cfg").read_text()
