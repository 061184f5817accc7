"""Initial channel drop at the first Tx/Rx element pair, initial time and frequency.

Everything random in a drop comes from two independent streams derived from
``(seed, drop_index)``: one for cluster-level parameters, one for the rays.
Changing the number of rays per cluster therefore leaves the cluster-level
draws untouched.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from ._validation import check_pmf, check_positive, check_vec3
from .exceptions import ConfigError
from .geometry import SPEED_OF_LIGHT, AnglePair, initial_virtual_vector, reflect_elevation, wrap_azimuth
from .pathloss import PathlossModel, db_to_power, path_loss_db

SINGLE = "single"
DOUBLE = "double"

# column order of RayState.phases
POLARIZATIONS = ("VV", "VH", "HV", "HH")


@dataclass(frozen=True)
class InitConfig:
    """Statistical parameters of the initial drop.

    Delay-like quantities are in seconds, the temporal decay ``n_tau`` in dB
    per second, angles in radians and power terms in dB. ``n_tau``,
    ``delta_p_los``, ``delta_a_std``, the XPR statistics and the intra-cluster
    scales are modelling choices rather than measured values.
    """

    pmf_first_order: dict = field(default_factory=lambda: {4: 0.35, 5: 0.65})
    second_order_range: tuple = (7, 13)
    mu_dtau_1st: float = 2.73e-9
    mu_dtau_2nd: float = 4.8e-9
    mu_ray_delay_f0: float = 0.4e-9
    sigma_ray_angle_f0: float = 0.05
    mu_ray_delay_f0_2nd: float = None
    sigma_ray_angle_f0_2nd: float = None
    aod_mean: AnglePair = AnglePair(0.0, 0.0)
    aoa_mean: AnglePair = AnglePair(0.0, 0.0)
    angle_std: float = 1.2
    n_tau: float = 0.5e9
    delta_a_std: float = 1.0
    delta_p_los: float = 3.0
    xpr_db_mean: float = 8.0
    xpr_db_std: float = 2.0
    rho_mu: float = 3.0
    rho_sigma: float = 3.0
    rays_per_cluster: int = 100
    mea: bool = True
    fresh_frequency_draws: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pmf_first_order", check_pmf(self.pmf_first_order, "pmf_first_order"))
        lo, hi = self.second_order_range
        if int(lo) != lo or int(hi) != hi or lo < 0 or hi < lo:
            raise ConfigError(f"invalid integer interval {self.second_order_range!r}", field="second_order_range")
        object.__setattr__(self, "second_order_range", (int(lo), int(hi)))
        for name in ("mu_dtau_1st", "mu_dtau_2nd", "mu_ray_delay_f0"):
            check_positive(getattr(self, name), name)
        if self.mu_ray_delay_f0_2nd is not None:
            check_positive(self.mu_ray_delay_f0_2nd, "mu_ray_delay_f0_2nd")
        for name in ("sigma_ray_angle_f0", "angle_std", "n_tau", "delta_a_std", "delta_p_los", "xpr_db_std"):
            check_positive(getattr(self, name), name, allow_zero=True)
        if self.sigma_ray_angle_f0_2nd is not None:
            check_positive(self.sigma_ray_angle_f0_2nd, "sigma_ray_angle_f0_2nd", allow_zero=True)
        for name in ("xpr_db_mean", "rho_mu", "rho_sigma"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", field=name)
        if int(self.rays_per_cluster) != self.rays_per_cluster or self.rays_per_cluster < 1:
            raise ConfigError("must be an integer >= 1", field="rays_per_cluster")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", field="seed")
        object.__setattr__(self, "aod_mean", AnglePair(*self.aod_mean))
        object.__setattr__(self, "aoa_mean", AnglePair(*self.aoa_mean))

    def ray_scales(self, order):
        """(mean relative delay, relative angle std) at the initial frequency."""
        if order == DOUBLE:
            mu = self.mu_ray_delay_f0_2nd if self.mu_ray_delay_f0_2nd is not None else self.mu_ray_delay_f0
            sigma = self.sigma_ray_angle_f0_2nd if self.sigma_ray_angle_f0_2nd is not None else self.sigma_ray_angle_f0
            return mu, sigma
        return self.mu_ray_delay_f0, self.sigma_ray_angle_f0


@dataclass
class RayState:
    """Intra-cluster ray parameters, one row per ray.

    ``rel_aod``/``rel_aoa`` have columns (azimuth, elevation); ``phases``
    columns follow :data:`POLARIZATIONS`. ``base_uniforms`` and
    ``base_normals`` (columns: AoD az, AoD el, AoA az, AoA el) are the unit
    draws the relative delays and angles were mapped from, kept so that the
    rays can be re-mapped at another frequency.
    """

    rel_delay: np.ndarray
    rel_aod: np.ndarray
    rel_aoa: np.ndarray
    phases: np.ndarray
    xpr: np.ndarray
    base_uniforms: np.ndarray
    base_normals: np.ndarray

    def __len__(self):
        return self.rel_delay.shape[0]


@dataclass
class ClusterState:
    order: str
    delay: float
    power: float
    aod: AnglePair
    aoa: AnglePair
    virtual_vector: np.ndarray
    phase: float
    rays: RayState
    mu_ray_f0: float
    sigma_ray_f0: float
    carrier: float

    @property
    def distance(self):
        return float(np.linalg.norm(self.virtual_vector))


@dataclass
class ChannelRealization:
    """One seeded drop: the clusters plus LOS bookkeeping at (p=1, q=1, t0, f0)."""

    clusters: list
    los_delay: float
    los_power: float
    los_phase: float
    shadowing_db: float
    D0: np.ndarray
    f0: float
    config: InitConfig
    pathloss: PathlossModel
    drop_index: int = 0

    @property
    def n_clusters(self):
        return len(self.clusters)

    @property
    def K(self):
        """Ricean factor: LOS power over the total NLOS cluster power."""
        nlos = sum(c.power for c in self.clusters)
        return np.inf if nlos == 0 else self.los_power / nlos

    def with_clusters(self, clusters):
        return replace(self, clusters=list(clusters))


def drop_streams(seed, drop_index=0):
    """Independent (cluster, ray) generators for one drop."""
    root = np.random.SeedSequence(int(seed), spawn_key=(int(drop_index),))
    cluster_ss, ray_ss = root.spawn(2)
    return np.random.default_rng(cluster_ss), np.random.default_rng(ray_ss)


def draw_cluster_counts(cfg, rng):
    """Numbers of single-bounce and double-bounce clusters."""
    support = np.array(sorted(cfg.pmf_first_order))
    probs = np.array([cfg.pmf_first_order[k] for k in support])
    n1 = int(rng.choice(support, p=probs))
    lo, hi = cfg.second_order_range
    n2 = int(rng.integers(lo, hi, endpoint=True))
    return n1, n2


def draw_cluster_delays(n1st, n2nd, los_delay, cfg, rng):
    """Cluster delays: two cumulative exponential sequences, each starting at the LOS delay."""
    if not los_delay > 0:
        raise ConfigError("LOS delay must be positive", field="los_delay")
    first = los_delay + np.cumsum(rng.exponential(cfg.mu_dtau_1st, size=n1st))
    second = los_delay + np.cumsum(rng.exponential(cfg.mu_dtau_2nd, size=n2nd))
    return np.concatenate([first, second])


def cluster_power_db(delays, los_delay, los_power_db, cfg, deviations_db):
    excess = np.asarray(delays) - los_delay
    return los_power_db - cfg.delta_p_los - cfg.n_tau * excess + deviations_db


def draw_cluster_powers(delays, los_delay, los_power_db, cfg, rng):
    """Linear cluster powers decaying with excess delay plus a Gaussian (dB) deviation."""
    delays = np.asarray(delays, dtype=float)
    deviations = rng.normal(0.0, cfg.delta_a_std, size=delays.shape) if cfg.delta_a_std > 0 else np.zeros(delays.shape)
    return db_to_power(cluster_power_db(delays, los_delay, los_power_db, cfg, deviations))


def draw_cluster_angles(n, cfg, rng, wrap=True):
    """AoD and AoA per cluster as four independent Gaussians.

    Returns an array of shape (n, 4) with columns (AoD az, AoD el, AoA az,
    AoA el). With ``wrap`` the azimuths are wrapped and the elevations
    mirror-wrapped into range.
    """
    means = np.array([cfg.aod_mean.azimuth, cfg.aod_mean.elevation, cfg.aoa_mean.azimuth, cfg.aoa_mean.elevation])
    angles = means + cfg.angle_std * rng.standard_normal((n, 4))
    if wrap:
        angles[:, [0, 2]] = wrap_azimuth(angles[:, [0, 2]])
        angles[:, [1, 3]] = reflect_elevation(angles[:, [1, 3]])
    return angles


def mea_discretize(n_rays, sigma=1.0):
    """Equal-area discretisation of a zero-mean Gaussian into ``n_rays`` angles.

    Angle ``m`` is the ``(m - 0.5) / n_rays`` quantile, so each ray represents
    the same probability mass.
    """
    if n_rays < 1:
        raise ConfigError("need at least one ray", field="rays_per_cluster")
    levels = (np.arange(1, n_rays + 1) - 0.5) / n_rays
    return sigma * norm.ppf(levels)


def nexp_inverse_cdf(u, mu):
    """Map uniforms in (0, 1] to exponential variates of mean ``mu``."""
    return mu * -np.log(u)


def draw_base_draws(n_rays, rng, mea=False):
    """Persisted unit draws behind the relative delays and angles."""
    uniforms = 1.0 - rng.random(n_rays)  # (0, 1]
    if mea:
        grid = mea_discretize(n_rays)
        normals = np.stack([rng.permutation(grid) for _ in range(4)], axis=1)
    else:
        normals = rng.standard_normal((n_rays, 4))
    return uniforms, normals


def rays_from_base(uniforms, normals, mu, sigma):
    rel_delay = nexp_inverse_cdf(uniforms, mu)
    rel = sigma * normals
    return rel_delay, rel[:, 0:2].copy(), rel[:, 2:4].copy()


def draw_ray_states(n_rays, mu_ray, sigma_angle, cfg, rng):
    """Relative delays/angles, polarisation phases and XPRs for one cluster."""
    if n_rays < 1:
        raise ConfigError("need at least one ray", field="rays_per_cluster")
    uniforms, normals = draw_base_draws(n_rays, rng, mea=cfg.mea)
    rel_delay, rel_aod, rel_aoa = rays_from_base(uniforms, normals, mu_ray, sigma_angle)
    phases = rng.uniform(-np.pi, np.pi, size=(n_rays, 4))
    xpr_db = cfg.xpr_db_mean + cfg.xpr_db_std * rng.standard_normal(n_rays)
    return RayState(rel_delay, rel_aod, rel_aoa, phases, db_to_power(xpr_db), uniforms, normals)


def initialize_drop(cfg, D0=(3.0, 0.0, 0.0), f0=300e9, pathloss=None, drop_index=0, rays_per_cluster=None):
    """Draw a complete :class:`ChannelRealization` for one drop.

    ``rays_per_cluster`` overrides ``cfg.rays_per_cluster`` without touching
    any cluster-level draw.
    """
    D0 = check_vec3(D0, "D0")
    check_positive(f0, "f0")
    pathloss = pathloss if pathloss is not None else PathlossModel()
    n_rays = int(rays_per_cluster if rays_per_cluster is not None else cfg.rays_per_cluster)
    crng, rrng = drop_streams(cfg.seed, drop_index)

    distance = float(np.linalg.norm(D0))
    los_delay = distance / SPEED_OF_LIGHT
    shadow = float(crng.normal(0.0, pathloss.shadowing_sigma)) if pathloss.shadowing_sigma > 0 else 0.0
    los_power_db = -path_loss_db(distance, f0, pathloss, shadow)

    n1, n2 = draw_cluster_counts(cfg, crng)
    delays = draw_cluster_delays(n1, n2, los_delay, cfg, crng)
    powers = draw_cluster_powers(delays, los_delay, los_power_db, cfg, crng)
    angles = draw_cluster_angles(n1 + n2, cfg, crng)
    phases = crng.uniform(-np.pi, np.pi, size=n1 + n2)
    los_phase = float(crng.uniform(0.0, 2 * np.pi))

    clusters = []
    for i in range(n1 + n2):
        order = SINGLE if i < n1 else DOUBLE
        mu, sigma = cfg.ray_scales(order)
        aod = AnglePair(float(angles[i, 0]), float(angles[i, 1]))
        aoa = AnglePair(float(angles[i, 2]), float(angles[i, 3]))
        clusters.append(
            ClusterState(
                order=order,
                delay=float(delays[i]),
                power=float(powers[i]),
                aod=aod,
                aoa=aoa,
                virtual_vector=initial_virtual_vector(float(delays[i]), aoa),
                phase=float(phases[i]),
                rays=draw_ray_states(n_rays, mu, sigma, cfg, rrng),
                mu_ray_f0=mu,
                sigma_ray_f0=sigma,
                carrier=float(f0),
            )
        )
    return ChannelRealization(
        clusters=clusters,
        los_delay=los_delay,
        los_power=float(db_to_power(los_power_db)),
        los_phase=los_phase,
        shadowing_db=shadow,
        D0=D0,
        f0=float(f0),
        config=cfg,
        pathloss=pathloss,
        drop_index=int(drop_index),
    )
