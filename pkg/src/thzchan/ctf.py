"""Channel transfer function assembly.

Every propagation path (the LOS path and each ray of each cluster) is a
complex coefficient ``a`` and a delay ``tau``; the transfer function at
frequency ``f`` is the sum of ``a * exp(-2j*pi*f*tau)``. The coefficients
carry the antenna-pattern/polarisation product and the square root of the
path power. Patterns are evaluated at the carrier ``f_i`` of the grid point.

Element, time and carrier arguments of the scalar functions are indices
into the evolved grid (0-based), ``f`` is an absolute frequency in Hz.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .evolution import EvolutionGrid, realize_grid
from .exceptions import GridError
from .geometry import AnglePair, lcs_rotation, reflect_elevation, vectors_to_angles, wrap_azimuth


def compose_angle(cluster_angle, rel_angle):
    """Ray angle as cluster angle plus relative angle, wrapped into range."""
    return AnglePair(
        float(wrap_azimuth(cluster_angle[0] + rel_angle[0])),
        float(reflect_elevation(cluster_angle[1] + rel_angle[1])),
    )


class AntennaPattern:
    """Complex V/H field pattern of an array element.

    ``kind="omni"`` returns the constant gains ``v_gain``/``h_gain`` in every
    direction. ``kind="table"`` interpolates complex tables of shape
    (n_elevation, n_azimuth, n_frequency) defined in the local frame of the
    array; angles passed in are global and are rotated by the array
    orientation first.
    """

    def __init__(self, kind="omni", v_gain=1.0, h_gain=0.0, elevations=None, azimuths=None,
                 frequencies=None, v_table=None, h_table=None):
        if kind not in ("omni", "table"):
            raise ValueError(f"unknown pattern kind {kind!r}")
        self.kind = kind
        self.v_gain = complex(v_gain)
        self.h_gain = complex(h_gain)
        if kind == "table":
            axes = tuple(np.asarray(a, dtype=float) for a in (elevations, azimuths, frequencies))
            self._interp = []
            for table in (v_table, h_table):
                table = np.asarray(table, dtype=complex)
                self._interp.append((
                    RegularGridInterpolator(axes, table.real, bounds_error=False, fill_value=None),
                    RegularGridInterpolator(axes, table.imag, bounds_error=False, fill_value=None),
                ))

    @property
    def is_isotropic(self):
        return self.kind == "omni"

    def gains(self, azimuth, elevation, frequency, orientation=(0.0, 0.0)):
        """(V, H) complex gains for global angles; all inputs broadcast."""
        az, el, f = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (azimuth, elevation, frequency)))
        if self.is_isotropic:
            return np.full(az.shape, self.v_gain), np.full(az.shape, self.h_gain)
        if tuple(orientation) != (0.0, 0.0):
            ce = np.cos(el)
            u = np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)
            local = u @ lcs_rotation(orientation)  # row-vector form of R.T @ u
            az, el, _ = vectors_to_angles(local)
        points = np.stack([el, az, f], axis=-1)
        out = []
        for re, im in self._interp:
            out.append((re(points) + 1j * im(points)).reshape(az.shape))
        return out[0], out[1]


OMNI = AntennaPattern()


def los_polarization(tx_gain, rx_gain, phase):
    """Tx pattern row x diag(e^{j phase}, -e^{j phase}) x Rx pattern column."""
    tv, th = tx_gain
    rv, rh = rx_gain
    return np.exp(1j * phase) * (tv * rv - th * rh)


def nlos_polarization(tx_gain, rx_gain, phases, xpr):
    """Pattern/polarisation product of a ray; ``phases`` columns are VV, VH, HV, HH."""
    tv, th = tx_gain
    rv, rh = rx_gain
    e = np.exp(1j * np.asarray(phases))
    inv = np.sqrt(1.0 / np.asarray(xpr))
    return (tv * (inv * e[..., 0] * rv + e[..., 1] * rh)
            + th * (e[..., 2] * rv + inv * e[..., 3] * rh))


def _phasor(f, tau):
    return np.exp(-2j * np.pi * f * tau)


def h_los(evolved, p, q, t, fi, f, tx_pattern=OMNI, rx_pattern=OMNI):
    """LOS transfer value at grid indices (p, q, t, fi) and frequency ``f``."""
    carrier = evolved.grid.carrier_points[fi]
    az, el = evolved.los_angles[p, q, t]
    tx = tx_pattern.gains(az, el, carrier, evolved.tx_orientation)
    rx = rx_pattern.gains(az, el, carrier, evolved.rx_orientation)
    pol = complex(los_polarization(tx, rx, evolved.los_phase))
    return pol * np.sqrt(evolved.los_power[p, q, t, fi]) * _phasor(f, evolved.los_delay[p, q, t])


def ray_angles(evolved, n, m, p, q, t, fi):
    """(AoD, AoA) of ray ``m`` of cluster ``n`` in the global frame."""
    aod = compose_angle(evolved.cluster_aod[n, p, q, t], evolved.rel_aod[n, m, fi])
    aoa = compose_angle(evolved.cluster_aoa[n, p, q, t], evolved.rel_aoa[n, m, fi])
    return aod, aoa


def h_nlos_ray(evolved, p, q, t, fi, f, n, m, tx_pattern=OMNI, rx_pattern=OMNI):
    """Transfer value of ray ``m`` in cluster ``n``."""
    carrier = evolved.grid.carrier_points[fi]
    aod, aoa = ray_angles(evolved, n, m, p, q, t, fi)
    tx = tx_pattern.gains(aod.azimuth, aod.elevation, carrier, evolved.tx_orientation)
    rx = rx_pattern.gains(aoa.azimuth, aoa.elevation, carrier, evolved.rx_orientation)
    pol = complex(nlos_polarization(tx, rx, evolved.ray_phases[n, m], evolved.xpr[n, m]))
    amplitude = np.sqrt(evolved.cluster_power[n, p, q, t] * evolved.ray_weight[n, m])
    tau = evolved.cluster_delay[n, p, q, t] + evolved.rel_delay[n, m, fi] + evolved.ray_array_delay[n, m, p, q, fi]
    return pol * amplitude * _phasor(f, tau)


def ctf_entry(realization, p, q, t, f_i, f, tx_array, rx_array, tx_pattern=OMNI, rx_pattern=OMNI, t0=0.0):
    """Transfer value between Tx element ``p`` and Rx element ``q`` at time ``t``.

    ``f_i`` is the carrier at which intra-cluster parameters and patterns are
    evaluated and ``f`` the frequency of the transfer value. This is the
    term-by-term reference; :func:`ctf_tensor` is the vectorised path.
    """
    grid = EvolutionGrid(np.array([t]), np.array([p]), np.array([q]), np.array([f_i]), t0=t0)
    ev = realize_grid(realization, grid, tx_array, rx_array)
    total = h_los(ev, 0, 0, 0, 0, f, tx_pattern, rx_pattern)
    for n in range(ev.n_clusters):
        for m in range(ev.rays_in_cluster(n)):
            total += h_nlos_ray(ev, 0, 0, 0, 0, f, n, m, tx_pattern, rx_pattern)
    return complex(total)


@dataclass
class CtfTensor:
    """Transfer values indexed ``[p, q, t, f_i, s]``.

    The last axis is the frequency comb ``carriers[f_i] + f_offsets[s]``.
    ``path_amplitudes``/``path_delays`` (shape ``[path, p, q, t, f_i]``, path
    0 is LOS) are present when the tensor was built with ``keep_paths``.
    """

    values: np.ndarray
    times: np.ndarray
    carriers: np.ndarray
    f_offsets: np.ndarray
    tx_elements: np.ndarray
    rx_elements: np.ndarray
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    path_amplitudes: np.ndarray = None
    path_delays: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.tx_elements.size, self.rx_elements.size, self.times.size, self.carriers.size,
                    self.f_offsets.size)
        if self.values.shape != expected:
            raise GridError(f"values shape {self.values.shape} does not match axes {expected}")

    @property
    def shape(self):
        return self.values.shape

    @property
    def has_paths(self):
        return self.path_amplitudes is not None

    def frequencies(self, fi=None):
        freqs = self.carriers[:, None] + self.f_offsets[None, :]
        return freqs if fi is None else freqs[fi]

    def path_values(self, p, q, t, fi, s):
        """Per-path transfer values at one tensor entry (index 0 is LOS)."""
        if not self.has_paths:
            raise GridError("tensor was built without per-path data")
        f = self.frequencies(fi)[s]
        return self.path_amplitudes[:, p, q, t, fi] * _phasor(f, self.path_delays[:, p, q, t, fi])

    def cir(self, p, q, t, fi):
        """Exact impulse response as (delays, amplitudes) of every path."""
        if not self.has_paths:
            raise GridError("tensor was built without per-path data")
        return self.path_delays[:, p, q, t, fi].copy(), self.path_amplitudes[:, p, q, t, fi].copy()


def _los_coefficients(ev, tx_pattern, rx_pattern):
    carriers = ev.grid.carrier_points
    az = ev.los_angles[..., 0][..., None]
    el = ev.los_angles[..., 1][..., None]
    tx = tx_pattern.gains(az, el, carriers, ev.tx_orientation)
    rx = rx_pattern.gains(az, el, carriers, ev.rx_orientation)
    return los_polarization(tx, rx, ev.los_phase) * np.sqrt(ev.los_power)  # (P, Q, T, F)


def _isotropic_ray_polarization(ev, tx_pattern, rx_pattern):
    carriers = ev.grid.carrier_points
    tx = tx_pattern.gains(0.0, 0.0, carriers)
    rx = rx_pattern.gains(0.0, 0.0, carriers)
    # (N, M, F)
    return nlos_polarization(
        (tx[0][None, None, :], tx[1][None, None, :]),
        (rx[0][None, None, :], rx[1][None, None, :]),
        ev.ray_phases[:, :, None, :],
        ev.xpr[:, :, None],
    )


def _ray_polarization_at(ev, p, q, t, tx_pattern, rx_pattern):
    """(N, M, F) pattern/polarisation products for direction-dependent patterns."""
    carriers = ev.grid.carrier_points
    aod = ev.cluster_aod[:, p, q, t][:, None, None, :] + ev.rel_aod
    aoa = ev.cluster_aoa[:, p, q, t][:, None, None, :] + ev.rel_aoa
    f = carriers[None, None, :]
    tx = tx_pattern.gains(wrap_azimuth(aod[..., 0]), reflect_elevation(aod[..., 1]), f, ev.tx_orientation)
    rx = rx_pattern.gains(wrap_azimuth(aoa[..., 0]), reflect_elevation(aoa[..., 1]), f, ev.rx_orientation)
    return nlos_polarization(tx, rx, ev.ray_phases[:, :, None, :], ev.xpr[:, :, None])


def path_coefficients(ev, tx_pattern=OMNI, rx_pattern=OMNI):
    """Coefficients and delays of every path, each of shape ``[path, p, q, t, f]``."""
    n_p, n_q, n_t, n_f = ev.grid.shape
    n, m = ev.ray_weight.shape
    amps = np.empty((1 + n * m, n_p, n_q, n_t, n_f), dtype=complex)
    delays = np.empty((1 + n * m, n_p, n_q, n_t, n_f))
    amps[0] = _los_coefficients(ev, tx_pattern, rx_pattern)
    delays[0] = ev.los_delay[..., None]
    if n == 0:
        return amps, delays
    scale = np.sqrt(ev.cluster_power[:, None] * ev.ray_weight[:, :, None, None, None])  # (N, M, P, Q, T)
    total = (
        ev.cluster_delay[:, None, :, :, :, None]
        + ev.rel_delay[:, :, None, None, None, :]
        + ev.ray_array_delay[:, :, :, :, None, :]
    )
    delays[1:] = total.reshape(n * m, n_p, n_q, n_t, n_f)
    if tx_pattern.is_isotropic and rx_pattern.is_isotropic:
        pol = _isotropic_ray_polarization(ev, tx_pattern, rx_pattern)[:, :, None, None, None, :]
        amps[1:] = (scale[..., None] * pol).reshape(n * m, n_p, n_q, n_t, n_f)
    else:
        block = np.empty((n, m, n_p, n_q, n_t, n_f), dtype=complex)
        for p in range(n_p):
            for q in range(n_q):
                for t in range(n_t):
                    pol = _ray_polarization_at(ev, p, q, t, tx_pattern, rx_pattern)
                    block[:, :, p, q, t, :] = scale[:, :, p, q, t, None] * pol
        amps[1:] = block.reshape(n * m, n_p, n_q, n_t, n_f)
    return amps, delays


def _sum_paths(amps, delays, freqs):
    """Sum ``a * exp(-2j pi f tau)`` over the path axis for every comb frequency."""
    grid_shape = amps.shape[1:]
    out = np.empty(grid_shape + (freqs.shape[1],), dtype=complex)
    for idx in np.ndindex(grid_shape):
        col = (slice(None),) + idx
        out[idx] = amps[col] @ _phasor(freqs[idx[-1]][None, :], delays[col][:, None])
    return out


def _isotropic_ctf(ev, freqs, tx_pattern, rx_pattern):
    """Factorised sum: rays enter only through a per-cluster comb response.

    The response is shared by all element pairs when the rays carry no
    array delay (single elements), otherwise it is built per pair.
    """
    los = _los_coefficients(ev, tx_pattern, rx_pattern)
    values = los[..., None] * _phasor(freqs[None, None, None], ev.los_delay[..., None, None])
    pol = _isotropic_ray_polarization(ev, tx_pattern, rx_pattern)  # (N, M, F)
    n_p, n_q = ev.grid.shape[:2]
    for n in range(ev.n_clusters):
        wp = np.sqrt(ev.ray_weight[n])[:, None] * pol[n]  # (M, F)
        array_delay = ev.ray_array_delay[n]  # (M, P, Q, F)
        g = np.empty((n_p, n_q) + freqs.shape, dtype=complex)
        if not np.any(array_delay):
            g[:] = np.einsum("mf,mfs->fs", wp, _phasor(freqs[None], ev.rel_delay[n][:, :, None]))
        else:
            for p, q in np.ndindex(n_p, n_q):
                tau = ev.rel_delay[n] + array_delay[:, p, q]
                g[p, q] = np.einsum("mf,mfs->fs", wp, _phasor(freqs[None], tau[:, :, None]))
        amp = np.sqrt(ev.cluster_power[n])[..., None, None]
        values += amp * _phasor(freqs[None, None, None], ev.cluster_delay[n][..., None, None]) * g[:, :, None]
    return values


def ctf_tensor(realization, grid, tx_array, rx_array, f_offsets=(0.0,), tx_pattern=OMNI, rx_pattern=OMNI,
               keep_paths=False, evolved=None):
    """Fill a :class:`CtfTensor` over ``grid`` and the offset comb ``f_offsets``.

    ``evolved`` may pass an already realized grid to skip the evolution step.
    """
    f_offsets = np.atleast_1d(np.asarray(f_offsets, dtype=float))
    if f_offsets.ndim != 1 or f_offsets.size == 0:
        raise GridError("f_offsets must be a non-empty 1-D sequence")
    ev = evolved if evolved is not None else realize_grid(realization, grid, tx_array, rx_array)
    if ev.grid is not grid and ev.grid.shape != grid.shape:
        raise GridError("evolved state does not match the grid")
    freqs = grid.carrier_points[:, None] + f_offsets[None, :]
    if np.any(freqs <= 0):
        raise GridError("comb frequencies must be positive")
    amps = delays = None
    if keep_paths:
        amps, delays = path_coefficients(ev, tx_pattern, rx_pattern)
    if tx_pattern.is_isotropic and rx_pattern.is_isotropic:
        values = _isotropic_ctf(ev, freqs, tx_pattern, rx_pattern)
    else:
        if amps is None:
            amps, delays = path_coefficients(ev, tx_pattern, rx_pattern)
        values = _sum_paths(amps, delays, freqs)
        if not keep_paths:
            amps = delays = None
    return CtfTensor(
        values=values,
        times=grid.time_points.copy(),
        carriers=grid.carrier_points.copy(),
        f_offsets=f_offsets,
        tx_elements=grid.tx_elements.copy(),
        rx_elements=grid.rx_elements.copy(),
        tx_positions=ev.tx_positions.copy(),
        rx_positions=ev.rx_positions.copy(),
        path_amplitudes=amps,
        path_delays=delays,
        metadata={"drop_index": realization.drop_index, "seed": realization.config.seed},
    )


def comb_offsets(bandwidth=2e9, n_points=512):
    """Symmetric offset comb of ``n_points`` spaced ``bandwidth / n_points`` apart."""
    step = bandwidth / n_points
    return (np.arange(n_points) - n_points // 2) * step


# binary container: magic, five little-endian uint64 dims, float64 axes, complex128 payload
MAGIC = b"THZCTF01"
AXIS_ORDER = ("p", "q", "t", "f_i", "f")


def save_ctf(tensor, path, sidecar=None):
    """Write ``tensor`` to ``path`` and a JSON sidecar next to it (``path`` + ``.json``).

    Layout: 8-byte magic, dims (P, Q, T, F, S) as ``<u8``, then the axes as
    ``<f8`` in the order tx_elements, rx_elements, times, carriers, f_offsets,
    tx_positions (P x 3), rx_positions (Q x 3), then the values as
    interleaved re/im ``<f8`` in p, q, t, f_i, f order.
    """
    path = Path(path)
    dims = tensor.values.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5Q", *dims))
        for axis in (tensor.tx_elements, tensor.rx_elements, tensor.times, tensor.carriers, tensor.f_offsets,
                     tensor.tx_positions, tensor.rx_positions):
            fh.write(np.ascontiguousarray(axis, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(tensor.values, dtype="<c16").tobytes())
    meta = {"format": "thzchan-ctf", "version": 1, "dims": list(dims), "axis_order": list(AXIS_ORDER)}
    meta.update(tensor.metadata)
    meta.update(sidecar or {})
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_ctf(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC or len(raw) < 48:
        raise GridError(f"{path} is not a CTF container")
    dims = struct.unpack_from("<5Q", raw, 8)
    n_p, n_q, n_t, n_f, n_s = dims
    count = n_p * n_q * n_t * n_f * n_s
    offset = 8 + 40
    if len(raw) != offset + 8 * (n_p * 4 + n_q * 4 + n_t + n_f + n_s) + 16 * count:
        raise GridError(f"{path} has trailing or missing payload bytes")
    axes = []
    for size in (n_p, n_q, n_t, n_f, n_s, n_p * 3, n_q * 3):
        axes.append(np.frombuffer(raw, dtype="<f8", count=size, offset=offset).astype(float))
        offset += 8 * size
    values = np.frombuffer(raw, dtype="<c16", count=count, offset=offset).astype(complex).reshape(dims)
    sidecar = Path(str(path) + ".json")
    metadata = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    for key in ("format", "version", "dims", "axis_order"):
        metadata.pop(key, None)
    return CtfTensor(
        values=values,
        times=axes[2],
        carriers=axes[3],
        f_offsets=axes[4],
        tx_elements=axes[0].astype(np.int64),
        rx_elements=axes[1].astype(np.int64),
        tx_positions=axes[5].reshape(n_p, 3),
        rx_positions=axes[6].reshape(n_q, 3),
        metadata=metadata,
    )
