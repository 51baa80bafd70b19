"""Spatial correlation, channel draws with imperfect CSI, and FD interference ratios.

Node indexing used throughout the package: UE nodes come first (MUEs
``0..M-1``, then SUEs ``M..M+S-1``), followed by the SC nodes
``M+S..M+2S-1``. A channel ``h = sqrt(N Theta) w`` with ``w ~ CN(0, I/N)``
has covariance ``Theta``; ``Theta`` carries the path gain relative to the
reference gain of the configuration (see ``SystemConfig.normalized_power``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SystemConfig, make_rng
from .scenario import Topology, draw_link_state


# ----------------------------------------------------------------- profiles
def uca_steering(n_antennas: int, angles) -> np.ndarray:
    """Steering vectors of a uniform circular array with half-wavelength spacing.

    Returns an array of shape (len(angles), n_antennas) with unit-modulus
    entries.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if n_antennas == 1:
        return np.ones((angles.size, 1), dtype=complex)
    radius = 1.0 / (4.0 * np.sin(np.pi / n_antennas))  # in wavelengths
    phi = 2 * np.pi * np.arange(n_antennas) / n_antennas
    phase = 2 * np.pi * radius * np.cos(angles[:, None] - phi[None, :])
    return np.exp(1j * phase)


def exponential_profile(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(complex)


def multipath_profile(n: int, path_angles) -> np.ndarray:
    """Average of steering-vector outer products; trace equals ``n``."""
    a = uca_steering(n, path_angles)
    return (a.T @ a.conj()) / a.shape[0]


def _profile(cfg: SystemConfig, n: int, los_angle: float, rng) -> np.ndarray:
    if cfg.correlation_profile == "iid":
        return np.eye(n, dtype=complex)
    if cfg.correlation_profile == "exponential":
        return exponential_profile(n, cfg.correlation_rho)
    spread = np.deg2rad(cfg.angular_spread_deg)
    offsets = np.concatenate([[0.0], rng.uniform(-spread, spread, cfg.num_paths - 1)])
    return multipath_profile(n, los_angle + offsets)


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root through an eigendecomposition."""
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


# -------------------------------------------------------------- containers
@dataclass
class CorrelationSet:
    """Correlation matrices of every MBS and SC link of one drop.

    theta_mbs[r]   : N x N matrix of the MBS -> node r link.
    theta_sc[s, r] : N_s x N_s matrix of the SC s -> node r link (zero for r = SC s).
    gain_mbs, gain_sc : relative path gains (trace / antennas).
    """

    theta_mbs: np.ndarray
    theta_sc: np.ndarray
    gain_mbs: np.ndarray
    gain_sc: np.ndarray
    link_kind_mbs: np.ndarray
    num_mues: int
    num_scs: int
    sqrt_mbs: np.ndarray = field(repr=False, default=None)
    sqrt_sc: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        n = self.theta_mbs.shape[1]
        if self.sqrt_mbs is None:
            self.sqrt_mbs = np.stack([psd_sqrt(n * t) for t in self.theta_mbs])
        if self.sqrt_sc is None:
            ns = self.theta_sc.shape[-1]
            flat = self.theta_sc.reshape(-1, ns, ns)
            self.sqrt_sc = np.stack([psd_sqrt(ns * t) for t in flat]).reshape(self.theta_sc.shape) \
                if flat.shape[0] else self.theta_sc.copy()

    # index helpers
    @property
    def n_nodes(self) -> int:
        return self.num_mues + 2 * self.num_scs

    def sue_node(self, s: int) -> int:
        return self.num_mues + s

    def sc_node(self, s: int) -> int:
        return self.num_mues + self.num_scs + s

    def mbs_user_nodes(self, homnet: bool = False) -> np.ndarray:
        """Nodes the MBS serves: MUEs + SCs (HetNet) or MUEs + SUEs (HomNet)."""
        M, S = self.num_mues, self.num_scs
        if homnet:
            return np.arange(M + S)
        return np.concatenate([np.arange(M), M + S + np.arange(S)])

    def theta_group(self, beta, members) -> np.ndarray:
        """Sum over SCs of beta_s times the MBS correlations of the SC's users.

        ``members[s]`` lists the node indices served by SC s.
        """
        n = self.theta_mbs.shape[1]
        out = np.zeros((n, n), dtype=complex)
        for s, b in enumerate(beta):
            if b:
                for r in members[s]:
                    out += b * self.theta_mbs[r]
        return out


@dataclass
class ChannelDraw:
    """One block-fading realization.

    h_mbs / h_mbs_est : (K_b, N) true and estimated channels of the MBS users
    w_mbs, z_mbs      : the CN(0, 1/N) factors of Eq. (1)
    tau_sq            : squared CSI error per MBS user
    h_sc              : (S, R, N_s) SC -> node channels (SC links are known exactly)
    """

    nodes: np.ndarray
    h_mbs: np.ndarray
    h_mbs_est: np.ndarray
    w_mbs: np.ndarray
    z_mbs: np.ndarray
    tau_sq: np.ndarray
    h_sc: np.ndarray


# ------------------------------------------------------------- operations
def _angle(src, dst) -> float:
    d = dst - src
    return float(np.arctan2(d[1], d[0]))


def build_correlations(topology: Topology, cfg: SystemConfig, drop: int = 0) -> CorrelationSet:
    """Correlation matrices Theta = (relative path gain) x (antenna profile)."""
    M, S = topology.num_mues, topology.num_scs
    N, Ns = cfg.num_mbs_antennas, cfg.sc_tx_antennas
    nodes = np.concatenate([topology.mue_positions.reshape(-1, 2),
                            topology.sue_positions.reshape(-1, 2),
                            topology.sc_positions.reshape(-1, 2)])
    R = nodes.shape[0]
    link_rng = make_rng(cfg.seed, "links", drop)
    path_rng = make_rng(cfg.seed, "paths", drop)
    ref_pl = -cfg.reference_gain_db
    g_sc_db = cfg.sc_antenna_gain_dbi

    def rel_gain(distance, extra_db, planned=False):
        d = max(float(distance), 1.0)
        st = draw_link_state(cfg.carrier_info, d, cfg.blockage and not planned, link_rng,
                             cfg.blockage_distance, cfg.nlos_penalty_db)
        return 10.0 ** ((ref_pl - st.pathloss_db + extra_db) / 10.0), st.kind

    theta_mbs = np.zeros((R, N, N), dtype=complex)
    gain_mbs = np.zeros(R)
    kinds = np.empty(R, dtype=object)
    for r in range(R):
        is_sc = r >= M + S
        extra = g_sc_db if (is_sc and cfg.sc_gain_on_backhaul) else 0.0
        g, kind = rel_gain(np.linalg.norm(nodes[r] - topology.mbs_position), extra,
                           planned=is_sc and cfg.planned_backhaul_los)
        gain_mbs[r], kinds[r] = g, kind
        theta_mbs[r] = g * _profile(cfg, N, _angle(topology.mbs_position, nodes[r]), path_rng)

    theta_sc = np.zeros((S, R, Ns, Ns), dtype=complex)
    gain_sc = np.zeros((S, R))
    for s in range(S):
        src = topology.sc_positions[s]
        for r in range(R):
            if r == M + S + s:
                continue
            extra = g_sc_db
            if r >= M + S and cfg.sc_gain_on_backhaul:
                extra += g_sc_db
            g, _ = rel_gain(np.linalg.norm(nodes[r] - src), extra)
            gain_sc[s, r] = g
            theta_sc[s, r] = g * _profile(cfg, Ns, _angle(src, nodes[r]), path_rng)
    return CorrelationSet(theta_mbs, theta_sc, gain_mbs, gain_sc, kinds, M, S)


def draw_channels(corr: CorrelationSet, cfg: SystemConfig, rng, nodes=None, tau_sq=None) -> ChannelDraw:
    """Block-fading draw of Eq. (1) for the MBS users ``nodes`` and all SC links."""
    nodes = corr.mbs_user_nodes() if nodes is None else np.asarray(nodes)
    N = corr.theta_mbs.shape[1]
    K = nodes.size
    tau_sq = np.zeros(K) if tau_sq is None else np.asarray(tau_sq, dtype=float)

    def cn(shape, var):
        return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    w = cn((K, N), 1.0 / N)
    z = cn((K, N), 1.0 / N)
    L = corr.sqrt_mbs[nodes]
    h = np.einsum("kij,kj->ki", L, w)
    mix = np.sqrt(1.0 - tau_sq)[:, None] * w + np.sqrt(tau_sq)[:, None] * z
    h_est = np.einsum("kij,kj->ki", L, mix)
    S, R = corr.theta_sc.shape[:2]
    Ns = corr.theta_sc.shape[-1]
    if S:
        ws = cn((S, R, Ns), 1.0 / Ns)
        h_sc = np.einsum("srij,srj->sri", corr.sqrt_sc, ws)
    else:
        h_sc = np.zeros((0, R, Ns), dtype=complex)
    return ChannelDraw(nodes, h, h_est, w, z, tau_sq, h_sc)


def pilot_error_tau_sq(pilot_length: float, ul_snr: float) -> float:
    """Squared CSI error after orthogonal pilot training."""
    if pilot_length < 0 or ul_snr <= 0:
        raise ValueError("pilot_length must be >= 0 and ul_snr > 0")
    return 1.0 / (1.0 + pilot_length * ul_snr)


def coherence_rate_factor(pilot_length: float, coherence_interval: float) -> float:
    """Downlink share of a coherence block after training and a symmetric UL/DL split."""
    if not 0 <= pilot_length < coherence_interval:
        raise ValueError("pilot length must satisfy 0 <= tau_td < T_ci")
    return (1.0 - pilot_length / coherence_interval) / 2.0


def fd_inr_map(corr: CorrelationSet, p_sc: float, mode: str = "expected",
               draw: Optional[ChannelDraw] = None) -> np.ndarray:
    """FD interference-to-noise ratio eps[r, s] from SC s at node r.

    ``mode='expected'`` uses P_sc Tr(Theta) (the mean of P_sc ||h||^2);
    ``mode='draw'`` uses the realized ``||h||^2`` of ``draw``.
    """
    S, R = corr.theta_sc.shape[:2]
    if mode == "expected":
        tr = np.real(np.einsum("srii->sr", corr.theta_sc))
    elif mode == "draw":
        if draw is None:
            raise ValueError("mode='draw' requires a channel draw")
        tr = np.sum(np.abs(draw.h_sc) ** 2, axis=-1)
    else:
        raise ValueError("mode must be 'expected' or 'draw'")
    eps = p_sc * tr.T
    return np.clip(eps, 0.0, None) if eps.size else np.zeros((R, S))
