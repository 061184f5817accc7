"""Shared fixtures: hand-built drops with known parameters."""

import numpy as np
import pytest

from thzchan.geometry import SPEED_OF_LIGHT, AnglePair, initial_virtual_vector
from thzchan.init import SINGLE, ChannelRealization, ClusterState, InitConfig, RayState
from thzchan.pathloss import PathlossModel, db_to_power, path_loss_db

ACCEPTANCE_LINES = []


def make_rays(rel_delay, phases, xpr, rel_aod=None, rel_aoa=None, mu=0.4e-9, sigma=0.05):
    """RayState whose persisted base draws reproduce the given relative values."""
    rel_delay = np.atleast_1d(np.asarray(rel_delay, dtype=float))
    m = rel_delay.size
    rel_aod = np.zeros((m, 2)) if rel_aod is None else np.asarray(rel_aod, dtype=float).reshape(m, 2)
    rel_aoa = np.zeros((m, 2)) if rel_aoa is None else np.asarray(rel_aoa, dtype=float).reshape(m, 2)
    normals = np.concatenate([rel_aod, rel_aoa], axis=1) / sigma
    return RayState(
        rel_delay=rel_delay,
        rel_aod=rel_aod,
        rel_aoa=rel_aoa,
        phases=np.asarray(phases, dtype=float).reshape(m, 4),
        xpr=np.atleast_1d(np.asarray(xpr, dtype=float)),
        base_uniforms=np.exp(-rel_delay / mu),
        base_normals=normals,
    )


def make_cluster(delay, power, aoa, aod=(0.0, 0.0), rays=None, phase=0.0, f0=300e9, mu=0.4e-9, sigma=0.05):
    aoa = AnglePair(*aoa)
    return ClusterState(
        order=SINGLE,
        delay=delay,
        power=power,
        aod=AnglePair(*aod),
        aoa=aoa,
        virtual_vector=initial_virtual_vector(delay, aoa),
        phase=phase,
        rays=rays,
        mu_ray_f0=mu,
        sigma_ray_f0=sigma,
        carrier=f0,
    )


def make_drop(clusters, D0=(3.0, 0.0, 0.0), f0=300e9, los_phase=0.3, pathloss=None, drop_index=0):
    pathloss = pathloss if pathloss is not None else PathlossModel()
    D0 = np.asarray(D0, dtype=float)
    distance = float(np.linalg.norm(D0))
    return ChannelRealization(
        clusters=list(clusters),
        los_delay=distance / SPEED_OF_LIGHT,
        los_power=float(db_to_power(-path_loss_db(distance, f0, pathloss))),
        los_phase=los_phase,
        shadowing_db=0.0,
        D0=D0,
        f0=f0,
        config=InitConfig(),
        pathloss=pathloss,
        drop_index=drop_index,
    )


def two_cluster_drop(phases=None, los_phase=0.3, drop_index=0):
    """Two clusters with one ray each; values chosen by hand."""
    if phases is None:
        phases = np.array([[0.7, -1.1, 2.0, 0.4], [-2.5, 0.9, -0.3, 1.7]])
    c1 = make_cluster(14e-9, 2.0e-10, (0.4, 0.1), (0.2, -0.1), make_rays([0.3e-9], phases[0], [4.0]), 0.5)
    c2 = make_cluster(21e-9, 0.5e-10, (-1.3, -0.2), (1.0, 0.3), make_rays([0.8e-9], phases[1], [9.0]), -1.2)
    return make_drop([c1, c2], los_phase=los_phase, drop_index=drop_index)


@pytest.fixture
def hand_drop():
    return two_cluster_drop()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
