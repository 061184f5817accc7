"""Evolution of a drop along the space, time and frequency axes.

Space and time share one algebra: the Tx mirror point of every cluster stays
put, so the virtual vector from it to the Rx element simply picks up the Rx
displacement (minus the Tx displacement). Distance, delay and arrival angles
follow from the new vector, departure angles shift by the same increment and
the power is rescaled with the path-loss ratio. Along frequency the relative
ray delays and angles are re-mapped from their persisted unit draws with
power-law scale parameters.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_positive, check_sorted_axis, check_vec3
from .exceptions import GeometryError, GridError
from .geometry import SPEED_OF_LIGHT, AnglePair, reflect_elevation, vector_to_angles, vectors_to_angles, wrap_azimuth
from .init import ClusterState, RayState, draw_base_draws, rays_from_base
from .pathloss import path_loss_db


@dataclass
class EvolutionGrid:
    """Grid of evaluation points: times (s), element indices and carriers (Hz)."""

    time_points: np.ndarray
    tx_elements: np.ndarray
    rx_elements: np.ndarray
    carrier_points: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.time_points = check_sorted_axis(self.time_points, "time_points")
        self.carrier_points = check_sorted_axis(self.carrier_points, "carrier_points")
        if np.any(self.carrier_points <= 0):
            raise GridError("carrier_points must be positive")
        if self.time_points[0] < self.t0:
            raise GridError("time_points must not precede t0")
        for name in ("tx_elements", "rx_elements"):
            idx = np.asarray(getattr(self, name))
            if idx.ndim != 1 or idx.size == 0:
                raise GridError(f"{name} must be a non-empty 1-D index list")
            if idx.dtype.kind not in "iu" or np.any(idx < 0) or np.any(np.diff(idx) <= 0):
                raise GridError(f"{name} must be non-negative, integer and strictly increasing")
            setattr(self, name, idx.astype(np.int64))

    @property
    def shape(self):
        return (self.tx_elements.size, self.rx_elements.size, self.time_points.size, self.carrier_points.size)

    @classmethod
    def single(cls, t=0.0, f=300e9, p=0, q=0):
        return cls(np.array([t]), np.array([p]), np.array([q]), np.array([f]), t0=t)


def _path_loss_ratio(d_old, d_new, fc, pathloss):
    """Linear power factor when a path grows from ``d_old`` to ``d_new`` meters."""
    absorption = 0.0 if pathloss is None else pathloss.absorption_db_per_km(fc)
    delta_db = 20.0 * np.log10(d_new / d_old) + absorption * (d_new - d_old) / 1000.0
    return 10.0 ** (-delta_db / 10.0)


def _shift_angles(angle, old_ref, new_ref):
    """Add the (wrapped) increment ``new_ref - old_ref`` to ``angle``."""
    d_az = wrap_azimuth(new_ref.azimuth - old_ref.azimuth)
    d_el = new_ref.elevation - old_ref.elevation
    return AnglePair(wrap_azimuth(angle.azimuth + d_az), reflect_elevation(angle.elevation + d_el))


def _displace(cluster, displacement, fc=None, pathloss=None):
    displacement = check_vec3(displacement, "displacement")
    if not np.any(displacement):
        return cluster
    fc = cluster.carrier if fc is None else fc
    old_vec = cluster.virtual_vector
    new_vec = old_vec + displacement
    d_old = float(np.linalg.norm(old_vec))
    d_new = float(np.linalg.norm(new_vec))
    if d_new == 0:
        raise GeometryError("Rx element reached a mirror point")
    aoa = vector_to_angles(new_vec)
    wavelength = SPEED_OF_LIGHT / fc
    return replace(
        cluster,
        virtual_vector=new_vec,
        delay=d_new / SPEED_OF_LIGHT,
        aoa=aoa,
        aod=_shift_angles(cluster.aod, cluster.aoa, aoa),
        power=cluster.power * float(_path_loss_ratio(d_old, d_new, fc, pathloss)),
        phase=float(wrap_azimuth(cluster.phase + 2 * np.pi * (d_new - d_old) / wavelength)),
    )


def evolve_time(cluster, v_rx, dt, fc=None, pathloss=None, v_tx=(0.0, 0.0, 0.0)):
    """Move the Rx (and optionally the Tx) for ``dt`` seconds.

    Relative ray delays and angles are left as they are. ``fc`` sets the
    wavelength of the cluster phase update and defaults to the cluster's
    current carrier.
    """
    if dt < 0:
        raise GridError(f"dt must be non-negative, got {dt}")
    v = check_vec3(v_rx, "v_rx") - check_vec3(v_tx, "v_tx")
    return _displace(cluster, v * dt, fc, pathloss)


def evolve_space(cluster, tx_offset, rx_offset, fc=None, pathloss=None):
    """Move from the first element pair to the pair at the given offsets.

    The Tx offset is applied in the virtual frame without mirroring, since the
    reflecting plane is not part of the model.
    """
    return _displace(cluster, check_vec3(rx_offset, "rx_offset") - check_vec3(tx_offset, "tx_offset"), fc, pathloss)


def frequency_scales(mu_f0, sigma_f0, f0, fi, rho_mu, rho_sigma):
    """Relative-delay mean and relative-angle std at carrier ``fi``."""
    check_positive(f0, "f0")
    check_positive(fi, "fi")
    ratio = fi / f0
    return mu_f0 * ratio**rho_mu, sigma_f0 * ratio**rho_sigma


def evolve_frequency(cluster, f0, fi, rho_mu, rho_sigma, rng=None):
    """Re-generate the intra-cluster parameters at carrier ``fi``.

    By default the persisted unit draws are re-mapped through the scaled
    distributions, which makes every relative delay and angle a smooth
    function of frequency. Passing ``rng`` replaces the unit draws with fresh
    ones instead. Cluster delay, power and angles are not touched.
    """
    mu, sigma = frequency_scales(cluster.mu_ray_f0, cluster.sigma_ray_f0, f0, fi, rho_mu, rho_sigma)
    rays = cluster.rays
    uniforms, normals = rays.base_uniforms, rays.base_normals
    if rng is not None:
        uniforms, normals = draw_base_draws(len(rays), rng, mea=False)
    rel_delay, rel_aod, rel_aoa = rays_from_base(uniforms, normals, mu, sigma)
    new_rays = replace(
        rays, rel_delay=rel_delay, rel_aod=rel_aod, rel_aoa=rel_aoa, base_uniforms=uniforms, base_normals=normals
    )
    return replace(cluster, rays=new_rays, carrier=float(fi))


def fresh_draw_rng(seed, drop_index, cluster_index, carrier):
    """Generator for fresh-draw frequency mode, keyed on the carrier value itself."""
    key = (int(drop_index), 2, int(cluster_index), int(round(carrier)))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass
class EvolvedChannel:
    """Channel parameters on every point of an :class:`EvolutionGrid`.

    Cluster arrays are indexed ``[n, p, q, t]`` (angles add a trailing axis
    of (azimuth, elevation)); ray arrays are ``[n, m, f]`` and padded to the
    largest cluster, with ``ray_weight`` equal to ``1/M_n`` on real rays and
    0 on padding. ``ray_array_delay`` ``[n, m, p, q, f]`` is the extra delay
    of each ray across the arrays relative to its cluster. LOS arrays are ``[p, q, t]`` except ``los_power`` which
    also depends on the carrier, ``[p, q, t, f]``.
    """

    grid: EvolutionGrid
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    tx_orientation: AnglePair
    rx_orientation: AnglePair
    los_vector: np.ndarray
    los_delay: np.ndarray
    los_angles: np.ndarray
    los_power: np.ndarray
    los_phase: float
    virtual_vector: np.ndarray
    cluster_delay: np.ndarray
    cluster_power: np.ndarray
    cluster_aoa: np.ndarray
    cluster_aod: np.ndarray
    cluster_phase: np.ndarray
    cluster_order: tuple
    rel_delay: np.ndarray
    rel_aod: np.ndarray
    rel_aoa: np.ndarray
    ray_phases: np.ndarray
    xpr: np.ndarray
    ray_weight: np.ndarray
    ray_array_delay: np.ndarray = None

    @property
    def n_clusters(self):
        return self.cluster_delay.shape[0]

    def rays_in_cluster(self, n):
        return int(np.count_nonzero(self.ray_weight[n]))

    def cluster_state(self, n, p, q, t, f, mu_ray_f0=np.nan, sigma_ray_f0=np.nan):
        """:class:`ClusterState` view of cluster ``n`` at grid indices (p, q, t, f)."""
        m = self.rays_in_cluster(n)
        rays = RayState(
            rel_delay=self.rel_delay[n, :m, f].copy(),
            rel_aod=self.rel_aod[n, :m, f].copy(),
            rel_aoa=self.rel_aoa[n, :m, f].copy(),
            phases=self.ray_phases[n, :m].copy(),
            xpr=self.xpr[n, :m].copy(),
            base_uniforms=np.full(m, np.nan),
            base_normals=np.full((m, 4), np.nan),
        )
        return ClusterState(
            order=self.cluster_order[n],
            delay=float(self.cluster_delay[n, p, q, t]),
            power=float(self.cluster_power[n, p, q, t]),
            aod=AnglePair(*map(float, self.cluster_aod[n, p, q, t])),
            aoa=AnglePair(*map(float, self.cluster_aoa[n, p, q, t])),
            virtual_vector=self.virtual_vector[n, p, q, t].copy(),
            phase=float(self.cluster_phase[n, p, q, t]),
            rays=rays,
            mu_ray_f0=mu_ray_f0,
            sigma_ray_f0=sigma_ray_f0,
            carrier=float(self.grid.carrier_points[f]),
        )


def _ray_tables(drop, carriers):
    """Relative ray parameters of every cluster at every carrier, padded to the largest cluster."""
    cfg = drop.config
    n_clusters = drop.n_clusters
    m_max = max((len(c.rays) for c in drop.clusters), default=0)
    n_f = carriers.size
    rel_delay = np.zeros((n_clusters, m_max, n_f))
    rel_aod = np.zeros((n_clusters, m_max, n_f, 2))
    rel_aoa = np.zeros((n_clusters, m_max, n_f, 2))
    phases = np.zeros((n_clusters, m_max, 4))
    xpr = np.ones((n_clusters, m_max))
    weight = np.zeros((n_clusters, m_max))
    for n, cluster in enumerate(drop.clusters):
        m = len(cluster.rays)
        phases[n, :m] = cluster.rays.phases
        xpr[n, :m] = cluster.rays.xpr
        weight[n, :m] = 1.0 / m
        for k, fi in enumerate(carriers):
            if fi == drop.f0:
                evolved = cluster
            else:
                rng = None
                if cfg.fresh_frequency_draws:
                    rng = fresh_draw_rng(cfg.seed, drop.drop_index, n, fi)
                evolved = evolve_frequency(cluster, drop.f0, fi, cfg.rho_mu, cfg.rho_sigma, rng=rng)
            rel_delay[n, :m, k] = evolved.rays.rel_delay
            rel_aod[n, :m, k] = evolved.rays.rel_aod
            rel_aoa[n, :m, k] = evolved.rays.rel_aoa
    return rel_delay, rel_aod, rel_aoa, phases, xpr, weight


def _unit(az, el):
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def ray_array_delay(cluster_aoa, rel_aoa, offsets):
    """Delay of every ray across the arrays relative to its cluster, ``[n, m, p, q, f]``.

    The cluster geometry moves the whole cluster with the element offset; a
    ray arriving from a slightly different direction sees the offset
    projected on its own direction instead. ``offsets`` is ``(P, Q, 3)``
    with entries ``rx_offset - tx_offset``.
    """
    u_cluster = _unit(cluster_aoa[:, 0], cluster_aoa[:, 1])
    ray = cluster_aoa[:, None, None, :] + rel_aoa
    diff = _unit(ray[..., 0], ray[..., 1]) - u_cluster[:, None, None, :]  # (N, M, F, 3)
    return np.einsum("nmfk,pqk->nmpqf", diff, offsets) / SPEED_OF_LIGHT


def realize_grid(drop, grid, tx_array, rx_array, pathloss=None):
    """Evolve ``drop`` onto every point of ``grid``.

    The steps follow the space -> time -> frequency order: the element
    offsets and the motion displace the virtual vectors, then the rays are
    re-mapped per carrier. Each grid point depends only on the initial drop.
    """
    if grid is None or 0 in grid.shape:
        raise GridError("evolution grid is empty")
    pathloss = pathloss if pathloss is not None else drop.pathloss
    if grid.tx_elements[-1] >= tx_array.n_elements or grid.rx_elements[-1] >= rx_array.n_elements:
        raise GridError("grid element index exceeds the array size")

    dt = grid.time_points - grid.t0
    tx_pos = tx_array.element_offsets[grid.tx_elements]
    rx_pos = rx_array.element_offsets[grid.rx_elements]
    tx_t = tx_pos[:, None, :] + dt[None, :, None] * tx_array.velocity  # (P, T, 3)
    rx_t = rx_pos[:, None, :] + dt[None, :, None] * rx_array.velocity  # (Q, T, 3)
    disp = rx_t[None, :, :, :] - tx_t[:, None, :, :]  # (P, Q, T, 3)

    los_vec = drop.D0 + disp
    los_az, los_el, los_dist = vectors_to_angles(los_vec)
    if np.any(los_dist == 0):
        raise GeometryError("Tx and Rx elements coincide")
    los_delay = los_dist / SPEED_OF_LIGHT
    los_pl = path_loss_db(los_dist[..., None], grid.carrier_points, pathloss, drop.shadowing_db)
    los_power = 10.0 ** (-los_pl / 10.0)

    fc = drop.f0
    n_clusters = drop.n_clusters
    v0 = np.array([c.virtual_vector for c in drop.clusters]).reshape(n_clusters, 3)
    d0 = np.linalg.norm(v0, axis=1)
    vec = v0[:, None, None, None, :] + disp[None]
    az, el, dist = vectors_to_angles(vec)
    if np.any(dist == 0):
        raise GeometryError("Rx element reached a mirror point")
    aoa0 = np.array([[c.aoa.azimuth, c.aoa.elevation] for c in drop.clusters]).reshape(n_clusters, 2)
    aod0 = np.array([[c.aod.azimuth, c.aod.elevation] for c in drop.clusters]).reshape(n_clusters, 2)
    p0 = np.array([c.power for c in drop.clusters])
    phase0 = np.array([c.phase for c in drop.clusters])
    expand = (slice(None), None, None, None)

    d_ref = d0[expand]
    aoa = np.stack([az, el], axis=-1)
    d_az = wrap_azimuth(az - aoa0[:, 0][expand])
    d_el = el - aoa0[:, 1][expand]
    aod = np.stack(
        [wrap_azimuth(aod0[:, 0][expand] + d_az), reflect_elevation(aod0[:, 1][expand] + d_el)], axis=-1
    )
    # zero displacement must leave the drop bit-identical
    moved = np.any(disp != 0, axis=-1)[None]
    power = np.where(moved, p0[expand] * _path_loss_ratio(d_ref, dist, fc, pathloss), p0[expand])
    phase = np.where(
        moved, wrap_azimuth(phase0[expand] + 2 * np.pi * (dist - d_ref) * fc / SPEED_OF_LIGHT), phase0[expand]
    )
    delay = np.where(moved, dist / SPEED_OF_LIGHT, np.array([c.delay for c in drop.clusters])[expand])
    aoa = np.where(moved[..., None], aoa, aoa0[:, None, None, None, :])
    aod = np.where(moved[..., None], aod, aod0[:, None, None, None, :])

    rel_delay, rel_aod, rel_aoa, ray_phases, xpr, weight = _ray_tables(drop, grid.carrier_points)
    array_delay = ray_array_delay(aoa0, rel_aoa, rx_pos[None, :, :] - tx_pos[:, None, :])
    return EvolvedChannel(
        grid=grid,
        tx_positions=tx_pos,
        rx_positions=rx_pos,
        tx_orientation=tx_array.orientation,
        rx_orientation=rx_array.orientation,
        los_vector=los_vec,
        los_delay=los_delay,
        los_angles=np.stack([los_az, los_el], axis=-1),
        los_power=los_power,
        los_phase=drop.los_phase,
        virtual_vector=vec,
        cluster_delay=delay,
        cluster_power=power,
        cluster_aoa=aoa,
        cluster_aod=aod,
        cluster_phase=phase,
        cluster_order=tuple(c.order for c in drop.clusters),
        rel_delay=rel_delay,
        rel_aod=rel_aod,
        rel_aoa=rel_aoa,
        ray_phases=ray_phases,
        xpr=xpr,
        ray_weight=weight,
        ray_array_delay=array_delay,
    )
