"""Free-space path loss plus tabulated atmospheric absorption."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive
from .exceptions import ConfigError, GeometryError
from .geometry import SPEED_OF_LIGHT


def _flat_absorption():
    # placeholder: 10 dB/km flat over 300-400 GHz, not a physical gas model
    return np.array([[300e9, 10.0], [400e9, 10.0]])


@dataclass
class PathlossModel:
    """Path loss in dB as FSPL + distance * absorption(f) + shadowing.

    ``absorption_table`` rows are ``(frequency_hz, attenuation_db_per_km)``,
    sorted by frequency; the attenuation is linearly interpolated and held
    constant outside the table.
    """

    absorption_table: np.ndarray = field(default_factory=_flat_absorption)
    shadowing_sigma: float = 0.0

    def __post_init__(self):
        table = np.atleast_2d(np.asarray(self.absorption_table, dtype=float))
        if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 1:
            raise ConfigError("absorption table must have rows (frequency_hz, db_per_km)", field="absorption_table")
        if np.any(np.diff(table[:, 0]) <= 0):
            raise ConfigError("absorption table frequencies must be strictly increasing", field="absorption_table")
        if np.any(table[:, 1] < 0):
            raise ConfigError("attenuation must be non-negative", field="absorption_table")
        self.absorption_table = table
        check_positive(self.shadowing_sigma, "shadowing_sigma", allow_zero=True)

    @classmethod
    def from_file(cls, path, shadowing_sigma=0.0):
        """Load a whitespace/comma separated two-column table (``#`` comments allowed)."""
        text = Path(path).read_text()
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ConfigError(f"expected 2 columns, got {len(parts)}", field="absorption_table", line=lineno)
            try:
                rows.append([float(parts[0]), float(parts[1])])
            except ValueError as exc:
                raise ConfigError(str(exc), field="absorption_table", line=lineno) from None
        return cls(np.array(rows), shadowing_sigma)

    def absorption_db_per_km(self, f):
        table = self.absorption_table
        return np.interp(f, table[:, 0], table[:, 1])


def free_space_path_loss_db(D, f):
    return 20.0 * np.log10(4.0 * np.pi * np.asarray(D) * np.asarray(f) / SPEED_OF_LIGHT)


def path_loss_db(D, f, model=None, shadow_draw=0.0):
    """Total path loss in dB at distance ``D`` meters and frequency ``f`` Hz.

    Accepts arrays; ``shadow_draw`` is the already-sampled shadowing term in dB.
    """
    D = np.asarray(D, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(D <= 0):
        raise GeometryError("path-loss distance must be positive")
    if np.any(f <= 0):
        raise GeometryError("frequency must be positive")
    model = model if model is not None else PathlossModel()
    loss = free_space_path_loss_db(D, f) + D * model.absorption_db_per_km(f) / 1000.0 + shadow_draw
    return loss if loss.ndim else float(loss)


def db_to_power(db):
    return 10.0 ** (np.asarray(db) / 10.0)


def power_to_db(p):
    return 10.0 * np.log10(p)
