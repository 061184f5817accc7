"""Vectors, angles, array layouts and coordinate-system handling.

Positions and velocities are plain ``numpy`` arrays of shape (3,) in meters
and meters per second. Angles follow one convention throughout the package:
azimuth is measured in the xy-plane from +x towards +y and lies in (-pi, pi];
elevation is measured up from the xy-plane and lies in [-pi/2, pi/2].
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.constants import speed_of_light

from ._validation import check_index, check_vec3
from .exceptions import GeometryError

SPEED_OF_LIGHT = speed_of_light  # m/s, exact SI value


class AnglePair(NamedTuple):
    azimuth: float
    elevation: float


def wrap_azimuth(az):
    """Wrap azimuth into (-pi, pi]. Works elementwise on arrays."""
    wrapped = np.mod(np.asarray(az, dtype=float) + np.pi, 2 * np.pi) - np.pi
    # mod puts +pi at -pi; the interval is half-open on the left
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


def reflect_elevation(el):
    """Mirror-wrap elevation into [-pi/2, pi/2].

    Values past a pole are reflected back (``pi/2 + x -> pi/2 - x``), which
    keeps a zero-mean Gaussian symmetric. The azimuth is left untouched.
    """
    e = np.mod(np.asarray(el, dtype=float) + np.pi, 2 * np.pi) - np.pi
    e = np.where(e > np.pi / 2, np.pi - e, e)
    e = np.where(e < -np.pi / 2, -np.pi - e, e)
    return e if e.ndim else float(e)


def wrap_angles(az, el):
    return wrap_azimuth(az), reflect_elevation(el)


@dataclass
class ArrayGeometry:
    """Antenna array: element offsets from the first element, orientation, velocity.

    ``element_offsets`` has shape (n_elements, 3) and its first row is zero.
    ``orientation`` holds the array azimuth and elevation in the global frame.
    """

    element_offsets: np.ndarray
    orientation: AnglePair = AnglePair(0.0, 0.0)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        offsets = np.atleast_2d(np.asarray(self.element_offsets, dtype=float))
        if offsets.ndim != 2 or offsets.shape[1] != 3 or offsets.shape[0] < 1:
            raise GeometryError("element_offsets must have shape (n_elements, 3) with n_elements >= 1")
        if not np.all(np.isfinite(offsets)):
            raise GeometryError("element_offsets has non-finite entries")
        if np.any(offsets[0] != 0.0):
            raise GeometryError("element_offsets[0] must be the origin")
        self.element_offsets = offsets
        self.orientation = AnglePair(*map(float, self.orientation))
        self.velocity = check_vec3(self.velocity, "velocity")

    @property
    def n_elements(self):
        return self.element_offsets.shape[0]

    def position(self, index, dt=0.0):
        """Offset of element ``index`` after moving for ``dt`` seconds."""
        check_index(index, self.n_elements, "element index")
        return self.element_offsets[index] + self.velocity * dt

    @classmethod
    def ula(cls, n_elements, spacing, axis=(0.0, 1.0, 0.0), orientation=(0.0, 0.0), velocity=(0.0, 0.0, 0.0)):
        """Uniform linear array with ``n_elements`` spaced ``spacing`` meters along ``axis``."""
        if n_elements < 1:
            raise GeometryError("a ULA needs at least one element")
        direction = check_vec3(axis, "axis")
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise GeometryError("ULA axis must be non-zero")
        offsets = np.arange(n_elements)[:, None] * spacing * (direction / norm)
        return cls(offsets, AnglePair(*orientation), np.asarray(velocity, dtype=float))


def los_vector(tx_array, rx_array, p, q, D0, t, t0=0.0):
    """LOS vector from Tx element ``p`` to Rx element ``q`` at time ``t``.

    Both arrays may move with their own velocity; the first Tx element sits at
    the origin at ``t0`` and the first Rx element at ``D0``.
    """
    D0 = check_vec3(D0, "D0")
    if t < t0:
        raise GeometryError(f"t={t} precedes the initial time t0={t0}")
    dt = t - t0
    return D0 + rx_array.position(q, dt) - tx_array.position(p, dt)


def vector_to_angles(v):
    """Azimuth and elevation of ``v``. At the poles the azimuth is reported as 0."""
    v = check_vec3(v)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise GeometryError("cannot take the direction of a zero vector")
    elevation = float(np.arcsin(np.clip(v[2] / norm, -1.0, 1.0)))
    if v[0] == 0 and v[1] == 0:
        return AnglePair(0.0, elevation)
    return AnglePair(float(wrap_azimuth(np.arctan2(v[1], v[0]))), elevation)


def vectors_to_angles(v):
    """Vectorised :func:`vector_to_angles` over the last axis of ``v``.

    Returns ``(azimuth, elevation, norm)`` arrays. Zero vectors get zero angles.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    elevation = np.arcsin(np.clip(v[..., 2] / safe, -1.0, 1.0))
    azimuth = wrap_azimuth(np.arctan2(v[..., 1], v[..., 0]))
    return np.asarray(azimuth), elevation, norm


def angles_to_unit_vector(a):
    az, el = a
    ce = np.cos(el)
    return np.array([ce * np.cos(az), ce * np.sin(az), np.sin(el)])


def initial_virtual_vector(cluster_delay, aoa):
    """Vector from the Tx mirror point to the first Rx element for one cluster.

    Its length is the cluster path length ``c * delay`` and it points along
    the cluster's arrival direction.
    """
    if not cluster_delay > 0:
        raise GeometryError(f"cluster delay must be positive, got {cluster_delay!r}")
    return SPEED_OF_LIGHT * cluster_delay * angles_to_unit_vector(aoa)


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def lcs_rotation(orientation):
    """Matrix whose columns are the local x, y, z axes expressed in the global frame.

    The local frame is the global one turned by the array azimuth about z and
    then tilted by the array elevation about the new y axis, so that local +x
    points along ``orientation``.
    """
    az, el = orientation
    return _rot_z(az) @ _rot_y(-el)


def gcs_to_lcs(angle, array_orientation):
    """Express a global direction in the array's local frame."""
    u = lcs_rotation(array_orientation).T @ angles_to_unit_vector(angle)
    return vector_to_angles(u)


def lcs_to_gcs(angle, array_orientation):
    u = lcs_rotation(array_orientation) @ angles_to_unit_vector(angle)
    return vector_to_angles(u)
