"""Synthetic scheduling instances shared by the tests."""
import numpy as np

from fdhetnet.sca import LoadBalanceInstance, backhaul_gate


def make_instance(rng, M=2, S=1, eps_scale=1e-3, eps_o=5e-3, n_antennas=None, n_sc_active=2):
    """Random instance with M MUEs and S SCs; INRs uniform on [0, eps_scale]."""
    K = M + S
    snr_mbs = rng.uniform(1.0, 100.0, K)
    return LoadBalanceInstance(
        A=rng.uniform(0, 10, K), D=rng.uniform(0, 10, S), snr_mbs=snr_mbs,
        snr_sue=rng.uniform(1, 100, S), snr_off=rng.uniform(1, 100, (M, S)),
        eps_mbs=rng.uniform(0, eps_scale, (K, S)) * (1 - np.vstack([np.zeros((M, S)), np.eye(S)])),
        eps_sue=rng.uniform(0, eps_scale, (S, S)) * (1 - np.eye(S)),
        gate=backhaul_gate(snr_mbs, M, S), eps_o=eps_o,
        n_antennas=n_antennas or K + S, n_sc_active=n_sc_active, num_mues=M)
