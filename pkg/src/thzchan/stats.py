"""Statistics of simulated channels.

The correlation estimators work on an *ensemble*: a list of
:class:`~thzchan.ctf.CtfTensor` objects, one per seeded drop, that share the
same axes. Expectations are averages over the ensemble taken in list order.
Grid positions are index tuples ``(p, q, t, f_i)`` (plus an optional comb
sample ``s``) into the tensor axes.
"""

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ctf import CtfTensor, path_coefficients
from .evolution import EvolvedChannel
from .exceptions import GridError
from .init import ChannelRealization

DOMAINS = ("space-tx", "space-rx", "time", "frequency")
_AXIS = {"space-tx": 0, "space-rx": 1, "time": 2, "frequency": 3}


@dataclass
class DelayPsd:
    delay_bins: np.ndarray
    power: np.ndarray

    @property
    def total_power(self):
        return float(np.sum(self.power))


def delay_psd(cir, bin_width=None):
    """Power per delay bin from an impulse response.

    ``cir`` is a pair ``(delays, amplitudes)`` or an iterable of
    ``(delay, amplitude)`` tuples. Without ``bin_width`` every distinct delay
    gets its own bin; otherwise delays are grouped into
    ``[k * bin_width, (k + 1) * bin_width)`` and reported at the bin start.
    """
    if isinstance(cir, tuple) and len(cir) == 2 and np.ndim(cir[0]) == 1:
        delays, amps = cir
    else:
        pairs = list(cir)
        delays = [d for d, _ in pairs]
        amps = [a for _, a in pairs]
    delays = np.asarray(delays, dtype=float)
    power = np.abs(np.asarray(amps, dtype=complex)) ** 2
    if np.any(delays < 0):
        raise GridError("delays must be non-negative")
    keys = delays if bin_width is None else np.floor(delays / bin_width) * bin_width
    bins, inverse = np.unique(keys, return_inverse=True)
    totals = np.zeros(bins.size)
    np.add.at(totals, inverse, power)
    return DelayPsd(bins, totals)


def cir_from_ctf(values, f_offsets):
    """Impulse response of a sampled transfer function by inverse DFT.

    ``values`` are transfer values on the uniform comb ``f_offsets``. Returns
    ``(delays, amplitudes)`` with delay resolution ``1 / (S * df)``; the
    amplitudes satisfy ``sum |h|^2 == mean |H|^2``.
    """
    values = np.asarray(values, dtype=complex)
    f_offsets = np.asarray(f_offsets, dtype=float)
    n = values.size
    if n != f_offsets.size:
        raise GridError("values and f_offsets differ in length")
    if n == 1:
        return np.zeros(1), values.copy()
    step = np.diff(f_offsets)
    if not np.allclose(step, step[0], rtol=1e-9, atol=0):
        raise GridError("comb must be uniformly spaced")
    delays = np.arange(n) / (n * step[0])
    return delays, np.fft.ifft(values)


def ctf_delay_psd(tensor, p, q, t, fi, bin_width=None):
    """Delay PSD of one tensor entry, computed from its comb via :func:`cir_from_ctf`."""
    return delay_psd(cir_from_ctf(tensor.values[p, q, t, fi], tensor.f_offsets), bin_width)


@dataclass
class CorrelationCurve:
    """Correlation values against a lag axis.

    ``unit`` is ``"s"``, ``"m"`` or ``"Hz"``. ``values`` are normalized to 1
    at zero lag when ``normalized`` is set; ``raw`` keeps the unnormalized
    ensemble averages.
    """

    lags: np.ndarray
    values: np.ndarray
    normalized: bool
    unit: str
    raw: np.ndarray = None
    base: tuple = ()
    shifts: list = field(default_factory=list)

    @property
    def magnitude(self):
        return np.abs(self.values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lag", "real", "imag", "magnitude"])
            for lag, v in zip(self.lags, self.values):
                writer.writerow([_fmt(lag), _fmt(v.real), _fmt(v.imag), _fmt(abs(v))])

    def to_dict(self):
        return {
            "unit": self.unit,
            "normalized": self.normalized,
            "base": [int(i) for i in self.base],
            "lags": [float(x) for x in self.lags],
            "real": [float(v.real) for v in self.values],
            "imag": [float(v.imag) for v in self.values],
        }


def _fmt(x):
    return format(float(x), ".17g")


def _check_ensemble(ensemble):
    ensemble = list(ensemble)
    if not ensemble:
        raise GridError("ensemble is empty")
    shape = ensemble[0].shape
    for tensor in ensemble:
        if not isinstance(tensor, CtfTensor):
            raise TypeError("ensemble members must be CtfTensor instances")
        if tensor.shape != shape:
            raise GridError("ensemble tensors have different shapes")
    return ensemble


def _full_index(index, shape):
    index = tuple(int(i) for i in index)
    if len(index) == 4:
        index = index + (0,)
    if len(index) != 5:
        raise GridError("grid index must be (p, q, t, f_i) or (p, q, t, f_i, s)")
    for i, n in zip(index, shape):
        if not 0 <= i < n:
            raise GridError(f"grid index {index} is off the tensor grid {shape}")
    return index


def _shifted(base, shift, shape):
    shift = tuple(int(s) for s in shift)
    if len(shift) != 4:
        raise GridError("shift must be (dp, dq, dt, df)")
    target = tuple(b + s for b, s in zip(base[:4], shift)) + (base[4],)
    return _full_index(target, shape)


def _normalized(cross, power_a, power_b):
    den = np.sqrt(power_a * power_b)
    return cross / den if den > 0 else np.nan + 0j


def _path_row(tensor, index):
    if not tensor.has_paths:
        raise GridError("decomposition needs tensors built with keep_paths=True")
    return tensor.path_values(*index)


class CorrelationAccumulator:
    """Running sums behind the correlation estimators.

    Tensors are added one at a time (drop order), so an ensemble never has
    to be held in memory. ``result`` turns the sums into ensemble averages.
    """

    def __init__(self, base, shifts, decompose=False):
        self.base = tuple(base)
        self.shifts = [tuple(int(s) for s in shift) for shift in shifts]
        self.decompose = decompose
        self.shape = None
        self.count = 0
        # rows: cross, power_a, power_b, los_cross, nlos_cross, los_pa, los_pb, nlos_pa, nlos_pb
        self._sums = np.zeros((9, len(self.shifts)), dtype=complex)

    def contribution(self, tensor):
        """Sums of one tensor, shape ``(9, n_shifts)``; adding them is :meth:`add`."""
        if not isinstance(tensor, CtfTensor):
            raise TypeError("ensemble members must be CtfTensor instances")
        if self.shape is None:
            self.shape = tensor.shape
            self.base = _full_index(self.base, self.shape)
            self._targets = [_shifted(self.base, shift, self.shape) for shift in self.shifts]
        elif tensor.shape != self.shape:
            raise GridError("ensemble tensors have different shapes")
        sums = np.zeros_like(self._sums)
        h_a = tensor.values[self.base]
        paths_a = _path_row(tensor, self.base) if self.decompose else None
        for k, target in enumerate(self._targets):
            h_b = tensor.values[target]
            sums[0, k] = h_a * np.conj(h_b)
            sums[1, k] = abs(h_a) ** 2
            sums[2, k] = abs(h_b) ** 2
            if paths_a is None:
                continue
            paths_b = _path_row(tensor, target)
            sums[3, k] = paths_a[0] * np.conj(paths_b[0])
            sums[4, k] = np.sum(paths_a[1:] * np.conj(paths_b[1:]))
            sums[5, k] = abs(paths_a[0]) ** 2
            sums[6, k] = abs(paths_b[0]) ** 2
            sums[7, k] = np.sum(np.abs(paths_a[1:]) ** 2)
            sums[8, k] = np.sum(np.abs(paths_b[1:]) ** 2)
        return sums

    def add_contribution(self, sums):
        sums = np.asarray(sums, dtype=complex)
        if sums.shape != self._sums.shape:
            raise GridError("contribution does not match the accumulator shifts")
        self._sums += sums
        self.count += 1
        return self

    def add(self, tensor):
        return self.add_contribution(self.contribution(tensor))

    def _value(self, k, normalize):
        m = self._sums[:, k] / self.count
        cross, pa, pb, los_cross, nlos_cross, los_pa, los_pb, nlos_pa, nlos_pb = m
        pa, pb, los_pa, los_pb, nlos_pa, nlos_pb = (x.real for x in (pa, pb, los_pa, los_pb, nlos_pa, nlos_pb))
        if not self.decompose:
            return _normalized(cross, pa, pb) if normalize else cross
        if not normalize:
            return los_cross + nlos_cross
        if nlos_pa == 0:
            return _normalized(los_cross, los_pa, los_pb)
        if los_pa == 0:
            return _normalized(nlos_cross, nlos_pa, nlos_pb)
        K = los_pa / nlos_pa
        r_los = _normalized(los_cross, los_pa, los_pb)
        r_nlos = _normalized(nlos_cross, nlos_pa, nlos_pb)
        return K / (K + 1) * r_los + 1 / (K + 1) * r_nlos

    def result(self, normalize=True):
        """(values, raw) arrays over the shifts."""
        if self.count == 0:
            raise GridError("ensemble is empty")
        n = len(self.shifts)
        raw = np.array([self._value(k, False) for k in range(n)], dtype=complex)
        values = np.array([self._value(k, True) for k in range(n)], dtype=complex) if normalize else raw
        return values, raw


def stf_correlation(ensemble, base, shift, normalize=True, decompose=False):
    """Space-time-frequency correlation ``E[H(base) H*(base + shift)]``.

    ``shift`` is ``(dp, dq, dt, df)`` in grid steps. With ``decompose`` the
    LOS and NLOS parts are estimated separately, each normalized by its own
    zero-lag power, and recombined with weights ``K/(K+1)`` and ``1/(K+1)``;
    the NLOS part then only contains products of a ray with itself.
    """
    if len(tuple(shift)) != 4:
        raise GridError("shift must be (dp, dq, dt, df)")
    values, _ = correlation_curve(ensemble, base, [shift], normalize, decompose)
    return complex(values[0])


def correlation_curve(ensemble, base, shifts, normalize=True, decompose=False):
    """Correlation for each ``(dp, dq, dt, df)`` in ``shifts``; returns (values, raw).

    ``ensemble`` may be any iterable of tensors, e.g. a generator.
    """
    acc = CorrelationAccumulator(base, shifts, decompose)
    for tensor in ensemble:
        acc.add(tensor)
    return acc.result(normalize)


def _peek(ensemble):
    """First tensor of an iterable ensemble plus an iterable over all of it."""
    if isinstance(ensemble, (list, tuple)):
        if not ensemble:
            raise GridError("ensemble is empty")
        return ensemble[0], ensemble
    iterator = iter(ensemble)
    try:
        first = next(iterator)
    except StopIteration:
        raise GridError("ensemble is empty") from None
    return first, itertools.chain([first], iterator)


def acf(ensemble, base, dt_steps, normalize=True, decompose=False):
    """Time auto-correlation against lags in seconds."""
    ref, ensemble = _peek(ensemble)
    shifts = [(0, 0, int(k), 0) for k in dt_steps]
    values, raw = correlation_curve(ensemble, base, shifts, normalize, decompose)
    t = _full_index(base, ref.shape)[2]
    lags = np.array([ref.times[t + k] - ref.times[t] for k in dt_steps])
    return CorrelationCurve(lags, values, normalize, "s", raw, tuple(base), shifts)


def fcf(ensemble, base, df_steps, normalize=True, decompose=False):
    """Frequency correlation against carrier offsets in Hz.

    Each shifted point is evaluated with the intra-cluster parameters of its
    own carrier, i.e. the comparison is between transfer values at
    ``f_i`` and ``f_i + df``.
    """
    ref, ensemble = _peek(ensemble)
    shifts = [(0, 0, 0, int(k)) for k in df_steps]
    values, raw = correlation_curve(ensemble, base, shifts, normalize, decompose)
    index = _full_index(base, ref.shape)
    freqs = ref.frequencies()
    lags = np.array([freqs[index[3] + k, index[4]] - freqs[index[3], index[4]] for k in df_steps])
    return CorrelationCurve(lags, values, normalize, "Hz", raw, tuple(base), shifts)


def ccf(ensemble, base, dp_steps, dq_steps, normalize=True, decompose=False):
    """Spatial cross-correlation against the element separation in meters.

    ``dp_steps`` and ``dq_steps`` are paired element-wise; the lag is the
    distance moved by the Tx and Rx elements combined.
    """
    if len(dp_steps) != len(dq_steps):
        raise GridError("dp_steps and dq_steps must have the same length")
    ref, ensemble = _peek(ensemble)
    shifts = [(int(a), int(b), 0, 0) for a, b in zip(dp_steps, dq_steps)]
    values, raw = correlation_curve(ensemble, base, shifts, normalize, decompose)
    p, q = _full_index(base, ref.shape)[:2]
    lags = np.array([
        np.hypot(np.linalg.norm(ref.tx_positions[p + a] - ref.tx_positions[p]),
                 np.linalg.norm(ref.rx_positions[q + b] - ref.rx_positions[q]))
        for a, b in zip(dp_steps, dq_steps)
    ])
    return CorrelationCurve(lags, values, normalize, "m", raw, tuple(base), shifts)


def ricean_k(obj):
    """Ricean factor, LOS power over total NLOS ray power.

    Accepts a :class:`ChannelRealization` (returns a float), or an
    :class:`EvolvedChannel` / path-carrying :class:`CtfTensor` (returns an
    array over ``[p, q, t, f_i]``). Zero NLOS power gives ``inf``.
    """
    if isinstance(obj, ChannelRealization):
        return obj.K
    if isinstance(obj, EvolvedChannel):
        amps, _ = path_coefficients(obj)
    elif isinstance(obj, CtfTensor):
        if not obj.has_paths:
            raise GridError("tensor was built without per-path data")
        amps = obj.path_amplitudes
    else:
        raise TypeError(f"cannot compute K from {type(obj).__name__}")
    los = np.abs(amps[0]) ** 2
    nlos = np.sum(np.abs(amps[1:]) ** 2, axis=0)
    with np.errstate(divide="ignore"):
        return np.where(nlos > 0, los / np.where(nlos > 0, nlos, 1.0), np.inf)


def ricean_k_moments(samples):
    """Moment-based K estimate from transfer-value samples of one link.

    Uses the second and fourth moments of ``|H|``; no knowledge of the LOS
    component is required.
    """
    power = np.abs(np.asarray(samples)) ** 2
    m2 = np.mean(power)
    gamma = np.var(power) / m2**2
    if gamma >= 1:
        return 0.0
    root = np.sqrt(1.0 - gamma)
    return float(root / (1.0 - root)) if root < 1 else np.inf


def cmd_similarity(R1, R2):
    """``tr(R1 R2) / (||R1||_F ||R2||_F)``: 1 for matrices of identical structure."""
    R1 = np.asarray(R1)
    R2 = np.asarray(R2)
    if R1.shape != R2.shape or R1.ndim != 2 or R1.shape[0] != R1.shape[1]:
        raise GridError("correlation matrices must be square and of equal size")
    n1 = np.linalg.norm(R1)
    n2 = np.linalg.norm(R2)
    if n1 == 0 or n2 == 0:
        raise GridError("correlation matrix has zero norm")
    return float(np.real(np.trace(R1 @ R2)) / (n1 * n2))


def cmd_distance(R1, R2):
    """Conventional correlation matrix distance, ``1 - cmd_similarity``."""
    return 1.0 - cmd_similarity(R1, R2)


def _path_vectors(tensor, p, q, t, fi, sel, domain, component):
    """Per-path element vectors ``(path * sample, elements)`` at comb samples ``sel``."""
    if not tensor.has_paths:
        raise GridError("the path estimator needs tensors built with keep_paths=True")
    first = 1 if component == "nlos" else 0
    freqs = tensor.frequencies(fi)[sel]
    if domain == "space-rx":
        amps = tensor.path_amplitudes[first:, :, q, t, fi]
        delays = tensor.path_delays[first:, :, q, t, fi]
    else:
        amps = tensor.path_amplitudes[first:, p, :, t, fi]
        delays = tensor.path_delays[first:, p, :, t, fi]
    # (path, sample, element)
    h = amps[:, None, :] * np.exp(-2j * np.pi * np.atleast_1d(freqs)[None, :, None] * delays[:, None, :])
    return h.reshape(-1, h.shape[-1]), np.atleast_1d(freqs).size


def correlation_matrix(ensemble, index, domain="frequency", samples=None, method="sample", component="total"):
    """Spatial covariance at one grid point, averaged over drops and comb samples.

    The vector is taken across Rx elements, except for the ``space-rx``
    domain where it runs across Tx elements (the Rx index is what moves).
    ``samples`` selects comb samples to average over (default: all).

    With ``method="sample"`` the outer products of the transfer vectors are
    averaged. ``method="paths"`` takes the expectation over the random path
    phases instead: every path contributes its own outer product and
    cross-path terms vanish. ``component="nlos"`` keeps only the scattered
    paths (path method only).
    """
    if domain not in DOMAINS:
        raise GridError(f"unknown domain {domain!r}")
    if method not in ("sample", "paths"):
        raise GridError(f"unknown method {method!r}")
    if component not in ("total", "nlos"):
        raise GridError(f"unknown component {component!r}")
    if component == "nlos" and method != "paths":
        raise GridError("the nlos component needs method='paths'")
    p, q, t, fi = index[:4]
    sel = slice(None) if samples is None else samples
    if method == "paths":
        total = None
        for tensor in ensemble:
            h, n_samples = _path_vectors(tensor, p, q, t, fi, sel, domain, component)
            part = h.T @ h.conj() / n_samples
            total = part if total is None else total + part
        return total / len(ensemble)
    if domain == "space-rx":
        vectors = np.concatenate([tensor.values[:, q, t, fi, sel].T for tensor in ensemble])
    else:
        vectors = np.concatenate([tensor.values[p, :, t, fi, sel].T for tensor in ensemble])
    vectors = np.atleast_2d(vectors)
    return vectors.T @ vectors.conj() / vectors.shape[0]


@dataclass
class StationaryIntervalSample:
    domain: str
    interval: float
    threshold: float
    below_threshold: bool = False
    steps: int = 0
    similarities: np.ndarray = None


def _axis_distance(tensor, domain, a, b, index):
    if domain == "time":
        return float(tensor.times[b] - tensor.times[a])
    if domain == "frequency":
        return float(tensor.carriers[b] - tensor.carriers[a])
    positions = tensor.tx_positions if domain == "space-tx" else tensor.rx_positions
    return float(np.linalg.norm(positions[b] - positions[a]))


def stationary_interval(ensemble, base, domain, c_th=0.9, samples=None, method="sample", component="total"):
    """Largest shift along ``domain`` over which the CMD similarity stays >= ``c_th``.

    The similarity is checked against the base correlation matrix for every
    shift from one step up to the returned one. When even the first step
    falls below the threshold the interval is reported as one grid step and
    ``below_threshold`` is set; when every step passes it is the full extent
    of the grid beyond ``base``. ``method`` and ``component`` select the
    correlation matrix estimator, see :func:`correlation_matrix`.
    """
    if not 0 < c_th < 1:
        raise GridError("c_th must lie in (0, 1)")
    ensemble = _check_ensemble(ensemble)
    shape = ensemble[0].shape
    if domain not in DOMAINS:
        raise GridError(f"unknown domain {domain!r}")
    base = _full_index(base, shape)
    axis = _AXIS[domain]
    ref = ensemble[0]
    start = base[axis]
    n_steps = shape[axis] - 1 - start
    if n_steps == 0:
        return StationaryIntervalSample(domain, 0.0, c_th, False, 0, np.array([]))
    r_base = correlation_matrix(ensemble, base, domain, samples, method, component)
    sims = []
    for k in range(1, n_steps + 1):
        index = list(base)
        index[axis] = start + k
        sims.append(cmd_similarity(r_base, correlation_matrix(ensemble, index, domain, samples, method, component)))
    sims = np.array(sims)
    failing = np.flatnonzero(sims < c_th)
    steps = int(failing[0]) if failing.size else n_steps
    below = steps == 0
    reported = max(steps, 1)
    return StationaryIntervalSample(
        domain=domain,
        interval=_axis_distance(ref, domain, start, start + reported, base),
        threshold=c_th,
        below_threshold=below,
        steps=reported,
        similarities=sims,
    )


def ccdf(samples):
    """Complementary CDF ``P(X > x)`` at each distinct sample value.

    The function is right-continuous: at a sample value it already excludes
    that sample.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise GridError("ccdf needs at least one sample")
    values = np.unique(x)
    probs = 1.0 - np.searchsorted(x, values, side="right") / x.size
    return list(zip(values.tolist(), probs.tolist()))


def ccdf_at(samples, value):
    x = np.asarray(samples, dtype=float)
    return float(np.count_nonzero(x > value) / x.size)


def write_ccdf_csv(samples, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", "probability"])
        for value, prob in ccdf(samples):
            writer.writerow([_fmt(value), _fmt(prob)])


def write_json(payload, path):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
