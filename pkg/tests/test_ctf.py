import numpy as np
import pytest

from thzchan.ctf import (
    OMNI,
    AntennaPattern,
    CtfTensor,
    comb_offsets,
    compose_angle,
    ctf_entry,
    ctf_tensor,
    h_los,
    h_nlos_ray,
    load_ctf,
    path_coefficients,
    save_ctf,
)
from thzchan.evolution import EvolutionGrid, realize_grid
from thzchan.exceptions import GridError
from thzchan.geometry import SPEED_OF_LIGHT, AnglePair, ArrayGeometry
from thzchan.init import InitConfig, draw_ray_states, initialize_drop
from thzchan.pathloss import PathlossModel, path_loss_db
from thzchan.stats import cir_from_ctf

from conftest import make_cluster, make_drop, make_rays, two_cluster_drop

C = SPEED_OF_LIGHT
LAM = C / 300e9
V = 0.1 * np.array([np.cos(np.pi / 3), np.sin(np.pi / 3), 0.0])
SINGLE = ArrayGeometry(np.zeros((1, 3)))


def u(az, el):
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def brute_force_entry(drop, p, q, t, fi, f, tx, rx):
    """Independent evaluation of the finite-ray transfer value, omni V-only patterns."""
    offset = rx.element_offsets[q] + rx.velocity * t - tx.element_offsets[p] - tx.velocity * t
    absorption = drop.pathloss.absorption_db_per_km(fi)
    d_los = np.linalg.norm(drop.D0 + offset)
    pl = 20 * np.log10(4 * np.pi * d_los * fi / C) + d_los * absorption / 1000
    total = np.exp(1j * drop.los_phase) * 10 ** (-pl / 20) * np.exp(-2j * np.pi * f * d_los / C)
    static = rx.element_offsets[q] - tx.element_offsets[p]
    ratio = fi / drop.f0
    for c in drop.clusters:
        v0 = c.virtual_vector
        d0 = np.linalg.norm(v0)
        d = np.linalg.norm(v0 + offset)
        moved = np.any(offset != 0)
        power = c.power * (d0 / d) ** 2 * 10 ** (-absorption * (d - d0) / 1000 / 10) if moved else c.power
        delay = d / C if moved else c.delay
        m_n = len(c.rays)
        for m in range(m_n):
            rel_delay = -c.mu_ray_f0 * ratio**3 * np.log(c.rays.base_uniforms[m])
            rel_aoa = c.sigma_ray_f0 * ratio**3 * c.rays.base_normals[m, 2:4]
            extra = (u(c.aoa.azimuth + rel_aoa[0], c.aoa.elevation + rel_aoa[1]) - u(*c.aoa)) @ static / C
            amp = np.sqrt(power / m_n) * np.sqrt(1 / c.rays.xpr[m]) * np.exp(1j * c.rays.phases[m, 0])
            total += amp * np.exp(-2j * np.pi * f * (delay + rel_delay + extra))
    return total


def test_path_loss_examples():
    flat0 = PathlossModel(np.array([[300e9, 0.0]]))
    assert abs(path_loss_db(3.0, 300e9, flat0) - 91.533) < 1e-3
    assert abs(path_loss_db(6.0, 300e9, flat0) - path_loss_db(3.0, 300e9, flat0) - 20 * np.log10(2)) < 1e-12
    assert abs(path_loss_db(3.0, 300e9) - path_loss_db(3.0, 300e9, flat0) - 0.03) < 1e-12
    with pytest.raises(Exception):
        path_loss_db(0.0, 300e9)


def test_absorption_table_interpolation(tmp_path):
    table = tmp_path / "abs.txt"
    table.write_text("# f, dB/km\n300e9, 5\n400e9 15\n")
    model = PathlossModel.from_file(table)
    assert model.absorption_db_per_km(350e9) == 10.0
    assert model.absorption_db_per_km(200e9) == 5.0
    bad = tmp_path / "bad.txt"
    bad.write_text("300e9 5 1\n")
    with pytest.raises(Exception):
        PathlossModel.from_file(bad)


def test_compose_angle():
    a = AnglePair(0.4, -0.3)
    np.testing.assert_allclose(compose_angle(a, (0.0, 0.0)), a, rtol=0, atol=1e-15)
    out = compose_angle((np.pi - 0.1, 0.0), (0.2, 0.0))
    assert abs(out.azimuth - (-np.pi + 0.1)) < 1e-12
    out = compose_angle((0.0, np.pi / 2 - 0.05), (0.0, 0.1))
    assert abs(out.elevation - (np.pi / 2 - 0.05)) < 1e-12


def test_h_los_properties(hand_drop):
    ev = realize_grid(hand_drop, EvolutionGrid.single(), SINGLE, SINGLE)
    tau = ev.los_delay[0, 0, 0]
    assert abs(tau * 1e9 - 10.0069) < 1e-4
    h = h_los(ev, 0, 0, 0, 0, 300e9)
    assert abs(abs(h) - np.sqrt(ev.los_power[0, 0, 0, 0])) < 1e-20
    h2 = h_los(ev, 0, 0, 0, 0, 300e9 + 1 / tau)
    assert abs(h2 - h) < 1e-9 * abs(h)


def test_h_nlos_magnitudes():
    phases = np.zeros((5, 4))
    rays = make_rays(np.full(5, 0.3e-9), phases, np.full(5, 4.0))
    drop = make_drop([make_cluster(15e-9, 1e-8, (0.3, 0.0), rays=rays)])
    ev = realize_grid(drop, EvolutionGrid.single(), SINGLE, SINGLE)
    h = [h_nlos_ray(ev, 0, 0, 0, 0, 300e9, 0, m) for m in range(5)]
    np.testing.assert_allclose(np.abs(h), np.sqrt(1e-8 / 5) * np.sqrt(1 / 4.0), rtol=1e-12)
    # equal phases and delays: coherent sum
    assert abs(abs(sum(h)) - np.sqrt(1e-8 * 5) * 0.5) < 1e-12 * np.sqrt(1e-8 * 5)


def test_h_nlos_power_expectation():
    g = np.random.default_rng(0)
    m_n, power, k = 8, 2e-9, 3.0
    acc = 0.0
    n_draws = 10_000
    for _ in range(n_draws):
        rays = make_rays(g.exponential(0.4e-9, m_n), g.uniform(-np.pi, np.pi, (m_n, 4)), np.full(m_n, k))
        drop = make_drop([make_cluster(15e-9, power, (0.3, 0.0), rays=rays)])
        ev = realize_grid(drop, EvolutionGrid.single(), SINGLE, SINGLE)
        acc += abs(sum(h_nlos_ray(ev, 0, 0, 0, 0, 300e9, 0, m) for m in range(m_n))) ** 2
    assert abs(acc / n_draws / (power / k) - 1) < 0.02


@pytest.mark.parametrize("p,q,t,fi", [(0, 0, 0.0, 300e9), (1, 2, 1.0, 300e9), (3, 1, 2.5, 330e9)])
def test_ctf_entry_matches_hand_evaluation(hand_drop, p, q, t, fi):
    tx = ArrayGeometry.ula(4, LAM / 2)
    rx = ArrayGeometry.ula(4, LAM / 2, velocity=V)
    f = fi + 0.37e9
    got = ctf_entry(hand_drop, p, q, t, fi, f, tx, rx)
    ref = brute_force_entry(hand_drop, p, q, t, fi, f, tx, rx)
    # 2*pi*f*tau is ~1e4 rad, so one ulp of a recomputed distance is ~1e-12 rad
    # of phase; only the unmoved point can be held to 1e-12
    tol = 1e-12 if (p, q, t) == (0, 0, 0.0) else 1e-10
    assert abs(got - ref) <= tol * abs(ref)


def test_ctf_entry_degenerate_cases(hand_drop):
    no_clusters = hand_drop.with_clusters([])
    ev = realize_grid(no_clusters, EvolutionGrid.single(), SINGLE, SINGLE)
    assert ctf_entry(no_clusters, 0, 0, 0.0, 300e9, 300e9, SINGLE, SINGLE) == h_los(ev, 0, 0, 0, 0, 300e9)
    # a LOS path that is very far away contributes nothing measurable
    far = make_drop(hand_drop.clusters, D0=(1e20, 0, 0), pathloss=PathlossModel(np.array([[300e9, 0.0]])))
    ev = realize_grid(far, EvolutionGrid.single(), SINGLE, SINGLE)
    nlos = sum(h_nlos_ray(ev, 0, 0, 0, 0, 300e9, n, 0) for n in range(2))
    assert abs(ctf_entry(far, 0, 0, 0.0, 300e9, 300e9, SINGLE, SINGLE) - nlos) < 1e-12 * abs(nlos)


def test_ctf_is_linear_in_rays(hand_drop):
    full = ctf_entry(hand_drop, 0, 0, 0.0, 300e9, 300.2e9, SINGLE, SINGLE)
    ev = realize_grid(hand_drop, EvolutionGrid.single(), SINGLE, SINGLE)
    ray = h_nlos_ray(ev, 0, 0, 0, 0, 300.2e9, 1, 0)
    reduced = ctf_entry(hand_drop.with_clusters(hand_drop.clusters[:1]), 0, 0, 0.0, 300e9, 300.2e9, SINGLE, SINGLE)
    assert abs(full - ray - reduced) < 1e-14 * abs(full)


def test_ctf_tensor_shape_and_consistency():
    drop = initialize_drop(InitConfig(seed=3, rays_per_cluster=20))
    tx = ArrayGeometry.ula(3, LAM / 2)
    rx = ArrayGeometry.ula(3, LAM / 2, velocity=(0.05, 0.08, 0))
    single = ctf_tensor(drop, EvolutionGrid.single(), SINGLE, SINGLE, comb_offsets(1e9, 16))
    assert single.shape == (1, 1, 1, 1, 16)
    grid = EvolutionGrid(np.array([0.0, 0.5]), np.arange(3), np.arange(3), np.array([300e9, 320e9]))
    off = comb_offsets(1e9, 8)
    tensor = ctf_tensor(drop, grid, tx, rx, off, keep_paths=True)
    for (p, q, t, f, s) in [(0, 0, 0, 0, 4), (1, 2, 1, 1, 3), (2, 0, 1, 0, 7)]:
        ref = ctf_entry(drop, p, q, grid.time_points[t], grid.carrier_points[f], grid.carrier_points[f] + off[s], tx, rx)
        assert abs(tensor.values[p, q, t, f, s] - ref) <= 1e-10 * abs(ref)
        assert abs(np.sum(tensor.path_values(p, q, t, f, s)) - tensor.values[p, q, t, f, s]) <= 1e-10 * abs(ref)


def test_table_pattern_matches_omni():
    drop = initialize_drop(InitConfig(seed=6, rays_per_cluster=4))
    tx = ArrayGeometry.ula(2, LAM / 2)
    rx = ArrayGeometry.ula(2, LAM / 2, orientation=(0.4, 0.1))
    axes = dict(elevations=[-np.pi / 2, np.pi / 2], azimuths=[-np.pi, np.pi], frequencies=[1e11, 1e12])
    table = AntennaPattern("table", v_table=np.ones((2, 2, 2)), h_table=np.zeros((2, 2, 2)), **axes)
    grid = EvolutionGrid(np.array([0.0]), np.arange(2), np.arange(2), np.array([300e9]))
    a = ctf_tensor(drop, grid, tx, rx, comb_offsets(1e8, 4))
    b = ctf_tensor(drop, grid, tx, rx, comb_offsets(1e8, 4), tx_pattern=table, rx_pattern=table)
    np.testing.assert_allclose(b.values, a.values, rtol=1e-10)


def test_table_pattern_gain_applies():
    axes = dict(elevations=[-np.pi / 2, np.pi / 2], azimuths=[-np.pi, np.pi], frequencies=[1e11, 1e12])
    half = AntennaPattern("table", v_table=np.full((2, 2, 2), 0.5), h_table=np.zeros((2, 2, 2)), **axes)
    drop = two_cluster_drop()
    ref = ctf_entry(drop, 0, 0, 0.0, 300e9, 300e9, SINGLE, SINGLE)
    got = ctf_entry(drop, 0, 0, 0.0, 300e9, 300e9, SINGLE, SINGLE, tx_pattern=half)
    assert abs(got - 0.5 * ref) < 1e-12 * abs(ref)
    with pytest.raises(ValueError):
        AntennaPattern("dipole")


def test_power_budget_over_phase_redraws():
    g = np.random.default_rng(11)
    base = two_cluster_drop()
    extra = make_cluster(30e-9, 1e-10, (2.0, 0.2), rays=make_rays([0.1e-9], np.zeros(4), [1.0]))
    los_power = base.los_power
    expected = los_power + 2e-10 / 4 + 0.5e-10 / 9 + 1e-10
    acc = 0.0
    n_draws = 10_000
    for _ in range(n_draws):
        clusters = []
        for c in base.clusters + [extra]:
            rays = make_rays(c.rays.rel_delay, g.uniform(-np.pi, np.pi, 4), c.rays.xpr)
            clusters.append(make_cluster(c.delay, c.power, c.aoa, c.aod, rays))
        drop = make_drop(clusters, los_phase=g.uniform(0, 2 * np.pi))
        acc += abs(ctf_entry(drop, 0, 0, 0.0, 300e9, 300e9, SINGLE, SINGLE)) ** 2
    assert abs(acc / n_draws / expected - 1) < 0.03


def test_cluster_power_variance_falls_as_one_over_m():
    # summed ray power of one cluster, P/M * sum(1/k_m), with lognormal XPRs
    cfg = InitConfig(mea=False)
    g = np.random.default_rng(12)
    variances = []
    for m_n in (10, 100, 1000):
        samples = []
        for _ in range(400):
            rays = draw_ray_states(m_n, 0.4e-9, 0.05, cfg, g)
            drop = make_drop([make_cluster(15e-9, 1.0, (0.0, 0.0), rays=rays)])
            amps, _ = path_coefficients(realize_grid(drop, EvolutionGrid.single(), SINGLE, SINGLE))
            samples.append(np.sum(np.abs(amps[1:, 0, 0, 0, 0]) ** 2))
        variances.append(np.var(samples))
    ratios = np.array(variances[:-1]) / np.array(variances[1:])
    assert np.all((ratios > 7) & (ratios < 14))


def test_idft_peaks_at_cluster_delays():
    rays1 = make_rays([1e-15], np.zeros(4), [1.0])
    rays2 = make_rays([1e-15], np.zeros(4), [1.0])
    drop = make_drop([make_cluster(40e-9, 1e-9, (0.5, 0), rays=rays1), make_cluster(90e-9, 1e-9, (1.0, 0), rays=rays2)],
                     D0=(3000.0, 0, 0))
    off = comb_offsets(2e9, 512)
    tensor = ctf_tensor(drop, EvolutionGrid.single(), SINGLE, SINGLE, off, keep_paths=True)
    delays, amps = cir_from_ctf(tensor.values[0, 0, 0, 0], off)
    resolution = delays[1]
    peaks = np.sort(delays[np.argsort(np.abs(amps))[-2:]])
    for peak, tau in zip(peaks, (40e-9, 90e-9)):
        assert abs(peak - tau) <= resolution


def test_dimension_errors(hand_drop):
    tx = ArrayGeometry.ula(2, LAM / 2)
    with pytest.raises(GridError):
        ctf_tensor(hand_drop, EvolutionGrid.single(), tx, tx, f_offsets=[])
    grid = EvolutionGrid(np.array([0.0]), np.array([0]), np.array([3]), np.array([300e9]))
    with pytest.raises(GridError):
        ctf_tensor(hand_drop, grid, tx, tx)
    with pytest.raises(GridError):
        CtfTensor(np.zeros((1, 1, 1, 1, 2)), np.zeros(1), np.ones(1), np.zeros(3), np.zeros(1, int), np.zeros(1, int),
                  np.zeros((1, 3)), np.zeros((1, 3)))


def test_save_load_round_trip(tmp_path, hand_drop):
    tx = ArrayGeometry.ula(2, LAM / 2)
    rx = ArrayGeometry.ula(3, LAM / 2, velocity=V)
    grid = EvolutionGrid(np.array([0.0, 0.1]), np.arange(2), np.arange(3), np.array([300e9, 310e9]))
    tensor = ctf_tensor(hand_drop, grid, tx, rx, comb_offsets(1e9, 8))
    path = save_ctf(tensor, tmp_path / "drop.ctf", {"config_hash": "abc"})
    back = load_ctf(path)
    assert back.values.tobytes() == tensor.values.tobytes()
    for name in ("times", "carriers", "f_offsets", "tx_positions", "rx_positions"):
        assert np.array_equal(getattr(back, name), getattr(tensor, name))
    assert np.array_equal(back.rx_elements, tensor.rx_elements)
    assert back.metadata["config_hash"] == "abc"
    raw = path.read_bytes()
    assert raw[:8] == b"THZCTF01"
    save_ctf(back, tmp_path / "again.ctf", {"config_hash": "abc"})
    assert (tmp_path / "again.ctf").read_bytes() == raw
    (tmp_path / "junk.ctf").write_bytes(b"NOTACTF!" + raw[8:])
    with pytest.raises(GridError):
        load_ctf(tmp_path / "junk.ctf")
    (tmp_path / "short.ctf").write_bytes(raw[:-16])
    with pytest.raises(GridError):
        load_ctf(tmp_path / "short.ctf")


def test_omni_defaults():
    v, h = OMNI.gains(0.3, 0.2, 300e9)
    assert v == 1 and h == 0
