"""scikit-learn style wrappers around the simulator.

``ChannelGenerator.fit`` draws the seeded drops and ``transform(grid)`` turns
them into transfer-function tensors. The statistics estimators take such an
ensemble in ``fit`` and keep the result in a trailing-underscore attribute.
Parameters are plain constructor arguments, so ``get_params``/``set_params``
and ``sklearn.base.clone`` work as usual.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ctf import OMNI, ctf_tensor
from .evolution import EvolutionGrid
from .exceptions import GridError
from .geometry import ArrayGeometry
from .init import InitConfig, initialize_drop
from .stats import DOMAINS, acf, ccf, fcf, stationary_interval


class ChannelGenerator(TransformerMixin, BaseEstimator):
    """Seeded drop generator.

    Args:
        config: :class:`InitConfig`; ``None`` uses the defaults.
        n_drops: number of drops (ensemble size).
        D0: initial LOS vector in meters.
        f0: initial carrier in Hz.
        pathloss: :class:`PathlossModel` or ``None``.
        tx_array, rx_array: :class:`ArrayGeometry`; ``None`` means a single
            static element.
        rays_per_cluster: overrides ``config.rays_per_cluster`` when set.
        f_offsets: intra-band comb passed to :func:`ctf_tensor`.
        keep_paths: keep per-path coefficients in the tensors.
    """

    def __init__(self, config=None, n_drops=1, D0=(3.0, 0.0, 0.0), f0=300e9, pathloss=None, tx_array=None,
                 rx_array=None, rays_per_cluster=None, f_offsets=(0.0,), keep_paths=False,
                 tx_pattern=OMNI, rx_pattern=OMNI):
        self.config = config
        self.n_drops = n_drops
        self.D0 = D0
        self.f0 = f0
        self.pathloss = pathloss
        self.tx_array = tx_array
        self.rx_array = rx_array
        self.rays_per_cluster = rays_per_cluster
        self.f_offsets = f_offsets
        self.keep_paths = keep_paths
        self.tx_pattern = tx_pattern
        self.rx_pattern = rx_pattern

    def fit(self, X=None, y=None):
        """Draw ``n_drops`` drops; ``X`` and ``y`` are ignored."""
        if int(self.n_drops) != self.n_drops or self.n_drops < 1:
            raise ValueError(f"n_drops must be a positive integer, got {self.n_drops!r}")
        cfg = self.config if self.config is not None else InitConfig()
        if not isinstance(cfg, InitConfig):
            raise TypeError("config must be an InitConfig")
        self.config_ = cfg
        self.tx_array_ = self.tx_array if self.tx_array is not None else ArrayGeometry(np.zeros((1, 3)))
        self.rx_array_ = self.rx_array if self.rx_array is not None else ArrayGeometry(np.zeros((1, 3)))
        self.drops_ = [
            initialize_drop(cfg, self.D0, self.f0, self.pathloss, i, self.rays_per_cluster)
            for i in range(int(self.n_drops))
        ]
        return self

    def transform(self, X):
        """Tensors of every drop on the :class:`EvolutionGrid` ``X``."""
        check_is_fitted(self, "drops_")
        if not isinstance(X, EvolutionGrid):
            raise TypeError("transform expects an EvolutionGrid")
        return [
            ctf_tensor(drop, X, self.tx_array_, self.rx_array_, self.f_offsets, self.tx_pattern, self.rx_pattern,
                       keep_paths=self.keep_paths)
            for drop in self.drops_
        ]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(None, y).transform(X)


class CorrelationEstimator(BaseEstimator):
    """ACF / FCF / CCF of an ensemble.

    Args:
        kind: ``"acf"``, ``"fcf"`` or ``"ccf"``.
        base: grid index ``(p, q, t, f_i)`` the lags start from.
        steps: lag steps; for ``ccf`` the Rx element steps (Tx fixed).
        decompose: LOS/NLOS decomposed estimate (needs path data).
    """

    def __init__(self, kind="acf", base=(0, 0, 0, 0), steps=(0, 1), normalize=True, decompose=False):
        self.kind = kind
        self.base = base
        self.steps = steps
        self.normalize = normalize
        self.decompose = decompose

    def fit(self, X, y=None):
        ensemble = _ensemble(X)
        steps = list(self.steps)
        if self.kind == "acf":
            curve = acf(ensemble, self.base, steps, self.normalize, self.decompose)
        elif self.kind == "fcf":
            curve = fcf(ensemble, self.base, steps, self.normalize, self.decompose)
        elif self.kind == "ccf":
            curve = ccf(ensemble, self.base, [0] * len(steps), steps, self.normalize, self.decompose)
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        self.curve_ = curve
        self.lags_ = curve.lags
        self.values_ = curve.values
        return self


class StationaryIntervalEstimator(BaseEstimator):
    """Stationary interval of an ensemble along one domain (CMD threshold ``c_th``)."""

    def __init__(self, domain="frequency", base=(0, 0, 0, 0), c_th=0.9, method="sample", component="total"):
        self.domain = domain
        self.base = base
        self.c_th = c_th
        self.method = method
        self.component = component

    def fit(self, X, y=None):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        sample = stationary_interval(_ensemble(X), self.base, self.domain, self.c_th,
                                     method=self.method, component=self.component)
        self.sample_ = sample
        self.interval_ = sample.interval
        return self


def _ensemble(X):
    ensemble = list(X)
    if not ensemble:
        raise GridError("ensemble is empty")
    return ensemble
