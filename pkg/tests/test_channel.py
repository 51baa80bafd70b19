import numpy as np
import pytest

from fdhetnet.channel import (build_correlations, coherence_rate_factor, draw_channels, fd_inr_map,
                              multipath_profile, pilot_error_tau_sq, psd_sqrt, uca_steering)
from fdhetnet.config import SystemConfig
from fdhetnet.scenario import generate_topology


def _corr(**kw):
    cfg = SystemConfig(**kw)
    return cfg, build_correlations(generate_topology(cfg, 0), cfg, 0)


def test_steering_and_profile_shapes():
    a = uca_steering(8, [0.1, 0.7])
    assert a.shape == (2, 8)
    np.testing.assert_allclose(np.abs(a), 1.0)
    th = multipath_profile(8, [0.3, 0.5, 0.9])
    np.testing.assert_allclose(th, th.conj().T, atol=1e-12)
    assert np.trace(th).real == pytest.approx(8.0)
    assert np.min(np.linalg.eigvalsh(th)) > -1e-10


def test_psd_sqrt_reconstructs():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    P = X @ X.conj().T
    R = psd_sqrt(P)
    np.testing.assert_allclose(R @ R, P, atol=1e-9)


@pytest.mark.parametrize("profile", ["iid", "exponential", "multipath"])
def test_correlations_are_hermitian_psd_with_gain_trace(profile):
    cfg, corr = _corr(correlation_profile=profile)
    N = cfg.num_mbs_antennas
    for r in range(corr.n_nodes):
        th = corr.theta_mbs[r]
        np.testing.assert_allclose(th, th.conj().T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(th)) > -1e-9 * np.max(np.abs(th))
        assert np.trace(th).real == pytest.approx(N * corr.gain_mbs[r], rel=1e-9)


def test_theta_group_is_sum_over_served_users():
    cfg, corr = _corr()
    members = [[0, corr.sue_node(0)], [], [2], []]
    grp = corr.theta_group([1, 1, 0, 1], members)
    np.testing.assert_allclose(grp, corr.theta_mbs[0] + corr.theta_mbs[corr.sue_node(0)])


def test_channel_covariance_matches_theta():
    cfg, corr = _corr(num_mbs_antennas=12, num_mues=3, num_scs=2, sc_tx_antennas=3)
    rng = np.random.default_rng(1)
    nodes = np.array([0])
    tau_sq = np.array([0.3])
    n = 20000
    hs = np.empty((n, 12), complex)
    he = np.empty((n, 12), complex)
    for i in range(n):
        d = draw_channels(corr, cfg, rng, nodes, tau_sq)
        hs[i], he[i] = d.h_mbs[0], d.h_mbs_est[0]
    theta = corr.theta_mbs[0]
    scale = np.max(np.abs(theta))
    cov = hs.T @ hs.conj() / n
    assert np.max(np.abs(cov - theta)) < 0.05 * scale
    cross = he.T @ hs.conj() / n
    assert np.max(np.abs(cross - np.sqrt(0.7) * theta)) < 0.05 * scale


def test_fd_inr_map_expected_oracles():
    cfg, corr = _corr(correlation_profile="iid")
    Ns = cfg.sc_tx_antennas
    eps = fd_inr_map(corr, cfg.p_sc)
    # isotropic Theta = g I: expected eps = P g N_s
    np.testing.assert_allclose(eps, cfg.p_sc * corr.gain_sc.T * Ns, rtol=1e-12)
    np.testing.assert_allclose(fd_inr_map(corr, 2 * cfg.p_sc), 2 * eps)
    assert np.all(fd_inr_map(corr, 0.0) == 0)
    # an SC does not interfere with its own node
    for s in range(cfg.num_scs):
        assert eps[corr.sc_node(s), s] == 0


def test_fd_inr_draw_mode_averages_to_expected():
    cfg, corr = _corr(num_mbs_antennas=12, num_mues=2, num_scs=2, sc_tx_antennas=4)
    rng = np.random.default_rng(2)
    acc = np.zeros_like(fd_inr_map(corr, cfg.p_sc))
    n = 4000
    for _ in range(n):
        acc += fd_inr_map(corr, cfg.p_sc, "draw", draw_channels(corr, cfg, rng))
    exp = fd_inr_map(corr, cfg.p_sc)
    mask = exp > 0
    np.testing.assert_allclose(acc[mask] / n, exp[mask], rtol=0.1)
    with pytest.raises(ValueError):
        fd_inr_map(corr, cfg.p_sc, "draw")


def test_pilot_models():
    assert pilot_error_tau_sq(0, 1.0) == 1.0
    assert pilot_error_tau_sq(20, 1.0) == pytest.approx(1 / 21)
    assert coherence_rate_factor(0, 350) == 0.5
    assert coherence_rate_factor(35, 350) == pytest.approx(0.45)
    with pytest.raises(ValueError):
        coherence_rate_factor(350, 350)
