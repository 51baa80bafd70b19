"""Hierarchical MBS precoder (nullspace U followed by RZF T), ZF at the SCs,
exact SINRs and ergodic rates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import NumericalError

NULLSPACE_RTOL = 1e-9


class NoInterferenceFreeDimensions(NumericalError):
    """The cross-tier suppressor leaves no dimension for the MBS users."""


def build_nullspace_U(theta_groups, beta, n_antennas: int, rtol: float = NULLSPACE_RTOL):
    """Orthonormal basis of the complement of the range of sum_s beta_s Theta_s.

    Returns ``(U, n_itf)``. Eigenvalues below ``rtol`` times the largest
    count as zero.
    """
    total = np.zeros((n_antennas, n_antennas), dtype=complex)
    for theta, b in zip(theta_groups, beta):
        if b:
            total = total + b * np.asarray(theta)
    if not np.any(total):
        return np.eye(n_antennas, dtype=complex), n_antennas
    total = 0.5 * (total + total.conj().T)
    vals, vecs = np.linalg.eigh(total)
    keep = vals <= rtol * vals[-1]
    n_itf = int(np.count_nonzero(keep))
    if n_itf == 0:
        raise NoInterferenceFreeDimensions("no interference-free dimensions left at the MBS")
    return vecs[:, keep], n_itf


def rzf_direction(h_est_rows: np.ndarray, U: np.ndarray, alpha: float) -> np.ndarray:
    """Unnormalized T = (U^H Hh^H Hh U + N alpha I)^-1 U^H Hh^H.

    ``h_est_rows`` holds the estimated channels as rows (K x N); the matrix
    Hh of the formula has rows h_k^H.
    """
    n = U.shape[0]
    B = h_est_rows.conj() @ U                     # K x N_itf, rows h_k^H U
    K, n_itf = B.shape
    if K <= n_itf:
        gram = B @ B.conj().T + n * alpha * np.eye(K)
        return B.conj().T @ np.linalg.solve(gram, np.eye(K))
    gram = B.conj().T @ B + n * alpha * np.eye(n_itf)
    return np.linalg.solve(gram, B.conj().T)


def build_rzf_T(h_est_rows, U, alpha, powers, p_max):
    """RZF precoder with one global scalar so that Tr(P T^H T) = p_max.

    Returns ``(T, scale)``; ``T`` already includes ``scale``.
    """
    T = rzf_direction(np.asarray(h_est_rows), U, alpha)
    powers = np.asarray(powers, dtype=float)
    used = float(np.sum(powers * np.sum(np.abs(T) ** 2, axis=0)))
    scale = 1.0
    if used > 0:
        scale = np.sqrt(p_max / used)
        T = T * scale
    return T, scale


def build_zf_F(h_rows, p_total, rank_rtol: float = 1e-8):
    """ZF precoder of one SC with equal per-user power and Tr(P F^H F) = p_total.

    ``h_rows`` holds the served users' channels as rows. A rank-deficient set
    drops its weakest user and retries. Returns ``(F, kept, p_user, dropped)``.
    """
    h_rows = np.asarray(h_rows)
    kept = list(range(h_rows.shape[0]))
    dropped = []
    while kept:
        H = h_rows[kept].conj()                   # rows h_u^H
        sv = np.linalg.svd(H, compute_uv=False)
        if sv[-1] > rank_rtol * sv[0] and sv[0] > 0:
            F = H.conj().T @ np.linalg.inv(H @ H.conj().T)
            p_user = p_total / float(np.sum(np.abs(F) ** 2))
            return F, kept, p_user, dropped
        norms = np.linalg.norm(h_rows[kept], axis=1)
        dropped.append(kept.pop(int(np.argmin(norms))))
    return np.zeros((h_rows.shape[1], 0), dtype=complex), [], 0.0, dropped


@dataclass
class ControlDecision:
    """Association, operation mode, precoders and powers for one slot.

    ``mbs_nodes[k]`` is the node served as MBS user k; ``sc_users[s]`` lists
    nodes served by SC s (in the column order of ``F[s]``).
    """

    mbs_nodes: np.ndarray
    l_mbs: np.ndarray
    beta: np.ndarray
    sc_users: List[List[int]]
    p_mbs: np.ndarray
    U: np.ndarray
    T: Optional[np.ndarray] = None
    F: List[np.ndarray] = field(default_factory=list)
    p_sc_user: np.ndarray = None
    n_itf: int = 0
    sc_node_offset: int = 0
    num_mues: int = 0

    @property
    def V(self) -> np.ndarray:
        return self.U @ self.T


@dataclass
class SinrReport:
    gamma_mbs: np.ndarray            # per MBS user (0 when unscheduled)
    gamma_sc: List[np.ndarray]       # per SC, aligned with sc_users[s]


def exact_sinrs(draw, dec: ControlDecision, p_sc_total: float) -> SinrReport:
    """Instantaneous SINRs of every scheduled user.

    MBS users see co-tier RZF leakage, cross-tier interference
    ``beta_s * P_sc * ||h^(bs)||^2`` from every other active SC and unit
    noise; an SC never counts its own transmission (perfect SIC). SC users
    see intra-SC leakage and the same cross-tier term from the other SCs.
    """
    K = dec.mbs_nodes.size
    gamma = np.zeros(K)
    S = dec.beta.size
    active = np.flatnonzero(dec.l_mbs)
    sc_of_node = {dec.sc_node_offset + s: s for s in range(S)}
    if active.size and dec.T is not None:
        V = dec.U @ dec.T                                 # N x |active|
        G = np.abs(draw.h_mbs[active].conj() @ V) ** 2    # |h_k^H v_j|^2
        p = dec.p_mbs[active]
        sig = p * np.diag(G)
        co = G @ p - sig
        for i, k in enumerate(active):
            node = int(dec.mbs_nodes[k])
            cross = 0.0
            for s in range(S):
                if dec.beta[s] and sc_of_node.get(node) != s:
                    cross += p_sc_total * float(np.sum(np.abs(draw.h_sc[s, node]) ** 2))
            gamma[k] = sig[i] / (co[i] + cross + 1.0)
    gamma_sc = []
    for s in range(S):
        users = dec.sc_users[s]
        if not dec.beta[s] or not users:
            gamma_sc.append(np.zeros(len(users)))
            continue
        F = dec.F[s]
        H = draw.h_sc[s, users].conj()                     # rows h_u^H
        G = np.abs(H @ F) ** 2
        p = dec.p_sc_user[s]
        sig = p * np.diag(G)
        intra = p * np.sum(G, axis=1) - sig
        g = np.empty(len(users))
        for i, r in enumerate(users):
            cross = 0.0
            for s2 in range(S):
                if s2 != s and dec.beta[s2]:
                    cross += p_sc_total * float(np.sum(np.abs(draw.h_sc[s2, r]) ** 2))
            g[i] = sig[i] / (intra[i] + cross + 1.0)
        gamma_sc.append(g)
    return SinrReport(gamma, gamma_sc)


def rate_from_sinr(gamma, bandwidth_hz: float, slot_duration: float, factor: float = 1.0):
    """Bits per slot delivered at SINR ``gamma``."""
    return bandwidth_hz * slot_duration * factor * np.log2(1.0 + np.asarray(gamma, dtype=float))


def offload_rate(access: float, backhaul: float, others: float) -> float:
    """An offloaded MUE gets the smaller of its access rate and the backhaul left over."""
    return float(min(access, max(backhaul - others, 0.0)))


def ergodic_rate(corr, dec: ControlDecision, cfg, n_draws: int, rng, tau_sq=None):
    """Monte Carlo ergodic rates (bits/slot) under a fixed decision.

    The power-normalization scalar of the RZF precoder is recomputed for each
    draw from the estimated channels. Returns a dict with ``mbs`` (per MBS
    user), ``sc`` (per SC, aligned with ``sc_users``), their standard errors,
    and ``mue_total``: per MUE node, the direct rate plus the offload rate
    ``min(access, backhaul - other SC users)`` of every SC serving it.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    from .channel import draw_channels
    bw, slot, fac = cfg.bandwidth_hz, cfg.slot_duration, cfg.rate_factor()
    K = dec.mbs_nodes.size
    S = dec.beta.size
    mbs = np.zeros((n_draws, K))
    sc = [np.zeros((n_draws, len(u))) for u in dec.sc_users]
    active = np.flatnonzero(dec.l_mbs)
    for d in range(n_draws):
        draw = draw_channels(corr, cfg, rng, dec.mbs_nodes, tau_sq)
        T = None
        if active.size:
            T, _ = build_rzf_T(draw.h_mbs_est[active], dec.U, cfg.rzf_alpha,
                               dec.p_mbs[active], cfg.p_mbs)
        Fs, ps = [], np.zeros(S)
        for s in range(S):
            users = dec.sc_users[s]
            if dec.beta[s] and users:
                F, kept, p_user, _ = build_zf_F(draw.h_sc[s, users], cfg.p_sc)
                if len(kept) < len(users):
                    F_full = np.zeros((F.shape[0], len(users)), dtype=complex)
                    F_full[:, kept] = F
                    F = F_full
                Fs.append(F)
                ps[s] = p_user
            else:
                Fs.append(np.zeros((cfg.sc_tx_antennas, len(users)), dtype=complex))
        trial = ControlDecision(dec.mbs_nodes, dec.l_mbs, dec.beta, dec.sc_users, dec.p_mbs,
                                dec.U, T, Fs, ps, dec.n_itf, dec.sc_node_offset, dec.num_mues)
        rep = exact_sinrs(draw, trial, cfg.p_sc)
        mbs[d] = rate_from_sinr(rep.gamma_mbs, bw, slot, fac)
        for s in range(S):
            sc[s][d] = rate_from_sinr(rep.gamma_sc[s], bw, slot, fac)
    mean_mbs = mbs.mean(axis=0)
    mean_sc = [x.mean(axis=0) for x in sc]
    out = {
        "mbs": mean_mbs,
        "mbs_stderr": mbs.std(axis=0, ddof=1) / np.sqrt(n_draws) if n_draws > 1 else np.zeros(K),
        "sc": mean_sc,
        "mue_total": {},
    }
    total = {m: 0.0 for m in range(dec.num_mues)}
    node_to_k = {int(n): k for k, n in enumerate(dec.mbs_nodes)}
    for m in range(dec.num_mues):
        if m in node_to_k:
            total[m] += float(mean_mbs[node_to_k[m]])
    for s in range(S):
        users = dec.sc_users[s]
        k_sc = node_to_k.get(dec.sc_node_offset + s)
        backhaul = float(mean_mbs[k_sc]) if k_sc is not None else 0.0
        for i, r in enumerate(users):
            if r < dec.num_mues:
                others = float(np.sum(mean_sc[s]) - mean_sc[s][i])
                total[r] += offload_rate(mean_sc[s][i], backhaul, others)
    out["mue_total"] = total
    return out
