import numpy as np
import pytest

from fdhetnet.channel import build_correlations, draw_channels
from fdhetnet.config import SystemConfig
from fdhetnet.precoding import (ControlDecision, NoInterferenceFreeDimensions, build_nullspace_U,
                                build_rzf_T, build_zf_F, exact_sinrs, offload_rate, rate_from_sinr,
                                rzf_direction)
from fdhetnet.scenario import generate_topology

from oracles import sinr_term_by_term


def _low_rank(rng, n, r):
    X = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    return X @ X.conj().T


def test_nullspace_suppresses_the_sc_users():
    rng = np.random.default_rng(0)
    groups = [_low_rank(rng, 10, 2), _low_rank(rng, 10, 3)]
    U, n_itf = build_nullspace_U(groups, [1, 1], 10)
    assert n_itf == 5
    np.testing.assert_allclose(U.conj().T @ U, np.eye(5), atol=1e-10)
    total = groups[0] + groups[1]
    assert np.linalg.norm(U.conj().T @ total) <= 1e-8 * np.linalg.norm(total)
    # HD SCs do not take dimensions
    U2, n2 = build_nullspace_U(groups, [0, 1], 10)
    assert n2 == 7
    U3, n3 = build_nullspace_U(groups, [0, 0], 10)
    assert n3 == 10 and np.allclose(U3, np.eye(10))


def test_nullspace_exhausted_raises():
    rng = np.random.default_rng(1)
    with pytest.raises(NoInterferenceFreeDimensions):
        build_nullspace_U([_low_rank(rng, 4, 4)], [1], 4)


def test_rzf_both_forms_agree_and_normalize():
    rng = np.random.default_rng(2)
    H = (rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))) / np.sqrt(2)
    U = np.eye(8)
    T = rzf_direction(H, U, 0.1)
    B = H.conj() @ U
    T_ref = np.linalg.solve(B.conj().T @ B + 8 * 0.1 * np.eye(8), B.conj().T)
    np.testing.assert_allclose(T, T_ref, atol=1e-10)
    p = np.array([1.0, 2.0, 0.5, 1.5])
    Tn, _ = build_rzf_T(H, U, 0.1, p, 3.0)
    assert float(np.sum(p * np.sum(np.abs(Tn) ** 2, axis=0))) == pytest.approx(3.0, rel=1e-9)


def test_zf_nulls_intra_cell_leakage_and_meets_power():
    rng = np.random.default_rng(3)
    H = (rng.standard_normal((3, 6)) + 1j * rng.standard_normal((3, 6))) / np.sqrt(2)
    F, kept, pu, dropped = build_zf_F(H, 5.0)
    assert kept == [0, 1, 2] and dropped == []
    G = H.conj() @ F
    np.testing.assert_allclose(G, np.eye(3), atol=1e-10)
    assert pu * float(np.sum(np.abs(F) ** 2)) == pytest.approx(5.0, rel=1e-12)
    # duplicated channel -> rank deficient -> a user is dropped
    F2, kept2, _, dropped2 = build_zf_F(np.vstack([H[0], H[0]]), 1.0)
    assert len(kept2) == 1 and len(dropped2) == 1


def _decision(cfg, corr, rng):
    M, S = cfg.num_mues, cfg.num_scs
    nodes = corr.mbs_user_nodes()
    K = nodes.size
    draw = draw_channels(corr, cfg, rng, nodes, np.full(K, 0.01))
    beta = np.array([1] + [0] * (S - 1))
    sc_users = [[corr.sue_node(0), 1]] + [[] for _ in range(S - 1)]
    groups = [corr.theta_group([1], [sc_users[0]])] + [np.zeros((cfg.num_mbs_antennas,) * 2)] * (S - 1)
    U, n_itf = build_nullspace_U(groups, beta, cfg.num_mbs_antennas)
    l = np.zeros(K)
    active = np.array([0, 2, M])  # two MUEs and the backhaul of SC 0
    l[active] = 1
    p = np.zeros(K)
    p[active] = [2.0, 1.0, 3.0]
    T, _ = build_rzf_T(draw.h_mbs_est[active], U, cfg.rzf_alpha, p[active], cfg.p_mbs)
    F, kept, pu, _ = build_zf_F(draw.h_sc[0, sc_users[0]], cfg.p_sc)
    Fs = [F] + [np.zeros((cfg.sc_tx_antennas, 0), complex)] * (S - 1)
    dec = ControlDecision(nodes, l, beta, sc_users, p, U, T, Fs, np.r_[pu, np.zeros(S - 1)], n_itf,
                          M + S, M)
    return draw, dec, active


def test_exact_sinrs_match_term_by_term_evaluation():
    cfg = SystemConfig(num_mbs_antennas=16, num_mues=4, num_scs=2, sc_tx_antennas=4, seed=4)
    corr = build_correlations(generate_topology(cfg, 0), cfg, 0)
    draw, dec, active = _decision(cfg, corr, np.random.default_rng(5))
    rep = exact_sinrs(draw, dec, cfg.p_sc)
    V = dec.U @ dec.T
    for i, k in enumerate(active):
        node = dec.mbs_nodes[k]
        # perfect SIC: SC 0 never interferes with its own backhaul
        cross = 0.0 if node == corr.sc_node(0) else cfg.p_sc * np.sum(np.abs(draw.h_sc[0, node]) ** 2)
        ref = sinr_term_by_term(draw.h_mbs[active], V, dec.p_mbs[active], cross, i)
        assert rep.gamma_mbs[k] == pytest.approx(ref, rel=1e-10)
    # ZF at the SC: no intra-SC leakage, only noise (no other SC is active)
    users = dec.sc_users[0]
    for i, r in enumerate(users):
        g = abs(np.vdot(draw.h_sc[0, r], dec.F[0][:, i])) ** 2 * dec.p_sc_user[0]
        assert rep.gamma_sc[0][i] == pytest.approx(g, rel=1e-9)
    unscheduled = np.setdiff1d(np.arange(dec.mbs_nodes.size), active)
    assert np.all(rep.gamma_mbs[unscheduled] == 0)


def test_power_budget_of_the_hierarchical_precoder():
    cfg = SystemConfig(num_mbs_antennas=16, num_mues=4, num_scs=2, sc_tx_antennas=4, seed=4)
    corr = build_correlations(generate_topology(cfg, 0), cfg, 0)
    _, dec, active = _decision(cfg, corr, np.random.default_rng(6))
    V = dec.U @ dec.T
    used = float(np.sum(dec.p_mbs[active] * np.sum(np.abs(V) ** 2, axis=0)))
    assert used <= cfg.p_mbs * (1 + 1e-9)


def test_rate_helpers():
    assert rate_from_sinr(1.0, 1e9, 1e-6) == pytest.approx(1000.0)
    assert rate_from_sinr(3.0, 1e9, 1e-6, 0.5) == pytest.approx(1000.0)
    assert offload_rate(5.0, 10.0, 3.0) == 5.0
    assert offload_rate(9.0, 10.0, 3.0) == 7.0
    assert offload_rate(9.0, 2.0, 3.0) == 0.0
