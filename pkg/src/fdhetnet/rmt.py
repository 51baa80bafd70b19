"""Deterministic equivalents of the RZF-precoded MBS downlink.

The fixed point ``Omega_k = (1/N) Tr(Theta~_k G)`` with
``G = ((1/N) sum_k Theta~_k / (alpha + Omega_k) + I)^-1`` is the large-system
limit of ``(1/N) h_k^H (Hh^H Hh / N + alpha I)^-1 h_k`` scaled by ``alpha``.
Matrices ``Theta~`` may be given in the full N-dimensional space or already
reduced to the ``N_itf`` interference-free dimensions (``U^H Theta U``); the
traces are identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import NumericalError


@dataclass
class DetEquivState:
    omega: np.ndarray
    G: np.ndarray
    theta_tilde: np.ndarray
    alpha: float
    n_antennas: int
    iterations: int
    residual: float


def project_correlations(thetas, U) -> np.ndarray:
    """Reduced correlations U^H Theta_k U (trace-equivalent to U U^H Theta U U^H)."""
    thetas = np.asarray(thetas)
    if thetas.shape[0] == 0:
        return np.zeros((0, U.shape[1], U.shape[1]), dtype=complex)
    return np.einsum("ia,kij,jb->kab", U.conj(), thetas, U)


def _resolvent(theta_tilde, omega, alpha, n):
    dim = theta_tilde.shape[-1]
    acc = np.tensordot(1.0 / (alpha + omega), theta_tilde, axes=(0, 0)) / n
    return np.linalg.inv(acc + np.eye(dim))


def _traces(theta_tilde, G):
    return np.real(np.einsum("kij,ji->k", theta_tilde, G))


def _fixed_point_jacobian(theta_tilde, G, omega, alpha, n):
    """d target_k / d omega_j = Tr(Theta_k G Theta_j G) / (n^2 (alpha + omega_j)^2)."""
    TG = theta_tilde @ G
    return np.real(np.einsum("kab,jba->kj", TG, TG)) / (n * n * (alpha + omega) ** 2)


def solve_omega_fixed_point(theta_tilde, alpha: float, n_antennas: int, damping: float = 0.5,
                            tol: float = 1e-9, rtol: float = 1e-13,
                            max_iter: int = 500) -> DetEquivState:
    """Fixed point for Omega, started at (1/N) Tr(Theta~_k).

    Stops once the residual ``max |target - omega|`` is below both ``tol``
    and ``rtol * max(omega)``, or below ``tol`` when rounding stalls progress.

    Each iteration tries a Newton step on ``omega - target(omega)`` and keeps
    it when it stays positive and lowers the residual; otherwise it falls
    back to the damped update, which converges slowly when K is close to N.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    theta_tilde = np.asarray(theta_tilde)
    K = theta_tilde.shape[0]
    dim = theta_tilde.shape[-1] if theta_tilde.ndim == 3 else n_antennas
    if K == 0:
        return DetEquivState(np.zeros(0), np.eye(dim), theta_tilde, alpha, n_antennas, 0, 0.0)
    n = float(n_antennas)
    omega = np.maximum(np.real(np.einsum("kii->k", theta_tilde)) / n, 0.0)
    G = _resolvent(theta_tilde, omega, alpha, n)
    gap = _traces(theta_tilde, G) / n - omega
    res = float(np.max(np.abs(gap)))
    for it in range(1, max_iter + 1):
        if res <= min(tol, rtol * float(np.max(omega))):
            break
        jac = _fixed_point_jacobian(theta_tilde, G, omega, alpha, n)
        stalled = False
        candidates = []
        try:
            candidates.append(omega + np.linalg.solve(np.eye(K) - jac, gap))
        except np.linalg.LinAlgError:
            pass
        candidates.append(omega + damping * gap)
        for cand in candidates:
            if np.any(cand < 0):
                continue
            G_c = _resolvent(theta_tilde, cand, alpha, n)
            gap_c = _traces(theta_tilde, G_c) / n - cand
            res_c = float(np.max(np.abs(gap_c)))
            if res_c < res or cand is candidates[-1]:
                stalled = res_c >= res
                omega, G, gap, res = cand, G_c, gap_c, res_c
                break
        if stalled and res <= tol:
            break
    else:
        if res > tol:
            raise NumericalError(f"Omega fixed point did not converge in {max_iter} iterations "
                                 f"(residual {res:.3e})")
    return DetEquivState(omega, G, theta_tilde, alpha, n_antennas, it, res)


@dataclass
class SecondOrderTerms:
    J: np.ndarray        # K x K
    u: np.ndarray        # K
    e: np.ndarray        # K, (I - J)^-1 u
    u_m: np.ndarray      # K x K, row m is the vector u_m
    e_m: np.ndarray      # K x K, row m is (I - J)^-1 u_m


def second_order_terms(state: DetEquivState) -> SecondOrderTerms:
    """The J, u and e quantities of the deterministic equivalent."""
    th, G, a, n = state.theta_tilde, state.G, state.alpha, float(state.n_antennas)
    om = state.omega
    TG = np.einsum("kij,jl->kil", th, G)                      # Theta~_k G
    cross = np.real(np.einsum("iab,jba->ij", TG, TG))        # tr(Th_i G Th_j G)
    J = cross / (n * n * (a + om)[None, :] ** 2)
    u = _traces(th, G @ G) / (a * a * n)
    u_m = cross / (a * a * n)                                  # u_m[m, k] = tr(Th_k G Th_m G)/(a^2 N)
    I_J = np.eye(om.size) - J
    try:
        e = np.linalg.solve(I_J, u)
        e_m = np.linalg.solve(I_J, u_m.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"I - J is singular: {exc}")
    return SecondOrderTerms(J, u, e, u_m, e_m)


def upsilon(state: DetEquivState, terms: SecondOrderTerms, l, p) -> np.ndarray:
    """Normalized co-tier interference Upsilon_m = (1/N) sum_{k != m} a^2 l_k p_k [e_m]_k / (a + Omega_k)^2."""
    a, n, om = state.alpha, float(state.n_antennas), state.omega
    w = a * a * np.asarray(l, float) * np.asarray(p, float) / (a + om) ** 2
    full = terms.e_m @ w
    diag = np.diag(terms.e_m) * w
    return (full - diag) / n


def full_det_sinr(state: DetEquivState, l, p, tau_sq, interference, is_sc=None,
                  terms: Optional[SecondOrderTerms] = None) -> np.ndarray:
    """Finite-alpha deterministic SINRs of the MBS users (unnormalized RZF).

    MUE:  l p (1 - tau^2) Omega^2 / Phi,
          Phi = Ups [a^2 - tau^2 (a^2 - (a + Omega)^2)] + (a + Omega)^2 (1 + interference)
    SC:   l p Omega^2 / (a^2 Ups + (a + Omega)^2 (1 + interference))
    """
    K = state.omega.size
    if K == 0:
        return np.zeros(0)
    terms = second_order_terms(state) if terms is None else terms
    l = np.asarray(l, float)
    p = np.asarray(p, float)
    tau_sq = np.broadcast_to(np.asarray(tau_sq, float), (K,))
    inter = np.broadcast_to(np.asarray(interference, float), (K,))
    is_sc = np.zeros(K, bool) if is_sc is None else np.asarray(is_sc, bool)
    a, om = state.alpha, state.omega
    ups = upsilon(state, terms, l, p)
    apo = (a + om) ** 2
    phi_mue = ups * (a * a - tau_sq * (a * a - apo)) + apo * (1.0 + inter)
    phi_sc = a * a * ups + apo * (1.0 + inter)
    num = l * p * om ** 2
    return np.where(is_sc, num / phi_sc, num * (1.0 - tau_sq) / phi_mue)


def asymptotic_sinr_mue(l, p, tau_sq, interference):
    """l p (1 - tau^2) / (1 + sum_s beta_s eps_s)."""
    return np.asarray(l) * np.asarray(p) * (1.0 - np.asarray(tau_sq)) / (1.0 + np.asarray(interference))


def asymptotic_sinr_sc(l, p, interference):
    """Backhaul SINR of an SC: l p / (1 + sum_{s' != s} beta eps)."""
    return np.asarray(l) * np.asarray(p) / (1.0 + np.asarray(interference))


def asymptotic_sinr_sc_user(beta, l, p, interference):
    """SINR of a user served by an SC: beta l p / (1 + sum_{s' != s} beta eps)."""
    return np.asarray(beta) * np.asarray(l) * np.asarray(p) / (1.0 + np.asarray(interference))


def asymptotic_det_sinr(l, p, tau_sq, interference, is_sc=None):
    """Vector form of the MUE / SC-backhaul asymptotic SINRs."""
    l = np.asarray(l, float)
    is_sc = np.zeros(l.shape, bool) if is_sc is None else np.asarray(is_sc, bool)
    tau_eff = np.where(is_sc, 0.0, np.asarray(tau_sq, float))
    return asymptotic_sinr_mue(l, p, tau_eff, interference)


def power_budget_closed_form(p, omega, n_antennas: int, p_max: float):
    """Return ``(feasible, margin)`` with margin = P - (1/N) sum_k p_k / Omega_k."""
    p = np.asarray(p, float)
    omega = np.asarray(omega, float)
    used = float(np.sum(p[p > 0] / omega[p > 0])) / n_antennas if p.size else 0.0
    margin = p_max - used
    return margin >= -1e-9 * max(p_max, 1.0), margin


def equal_power(omega, n_antennas: int, p_max: float) -> np.ndarray:
    """Powers that give every user the same share of the budget."""
    omega = np.asarray(omega, float)
    K = omega.size
    return p_max * n_antennas * omega / K if K else np.zeros(0)


def rmt_validation_error(gains, n_list, n_draws: int, alpha: float, p_max: float,
                         tau_sq: float, rng, batch: int = 1000):
    """Relative error (R_det - R_mc) / R_det of the asymptotic sum rate.

    Users have i.i.d. Rayleigh channels ``h_k ~ CN(0, g_k I_N)`` and no FD
    interference. Powers are the equal-share powers of the closed-form
    budget; the Monte Carlo precoder is RZF normalized to the power budget
    in every draw. Rates are in bits/s/Hz. Returns rows
    ``(N, K, R_mc, R_det, abs_error, stderr)``.
    """
    gains = np.asarray(gains, float)
    K = gains.size
    rows = []
    for N in n_list:
        if N < K:
            raise ValueError("N must be >= K")
        theta = np.einsum("k,ij->kij", gains, np.eye(N))
        st = solve_omega_fixed_point(theta, alpha, N)
        p = equal_power(st.omega, N, p_max)
        sinr_det = asymptotic_sinr_mue(np.ones(K), p, tau_sq, 0.0)
        r_det = float(np.sum(np.log2(1.0 + sinr_det)))
        sums = []
        done = 0
        while done < n_draws:
            b = min(batch, n_draws - done)
            done += b
            w = (rng.standard_normal((b, K, N)) + 1j * rng.standard_normal((b, K, N))) / np.sqrt(2 * N)
            z = (rng.standard_normal((b, K, N)) + 1j * rng.standard_normal((b, K, N))) / np.sqrt(2 * N)
            scale = np.sqrt(N * gains)[None, :, None]
            h = scale * w
            h_est = scale * (np.sqrt(1 - tau_sq) * w + np.sqrt(tau_sq) * z)
            B = h_est.conj()                                          # rows h^H
            gram = B @ np.swapaxes(B.conj(), 1, 2) + N * alpha * np.eye(K)
            T = np.swapaxes(B.conj(), 1, 2) @ np.linalg.inv(gram)    # N x K
            used = np.einsum("k,bk->b", p, np.sum(np.abs(T) ** 2, axis=1))
            T = T * np.sqrt(p_max / used)[:, None, None]
            Gm = np.abs(h.conj() @ T) ** 2                            # b x K x K
            sig = p * np.einsum("bkk->bk", Gm)
            inter = Gm @ p - sig
            sums.append(np.sum(np.log2(1.0 + sig / (inter + 1.0)), axis=1))
        sums = np.concatenate(sums)
        r_mc = float(np.mean(sums))
        err = (r_det - r_mc) / r_det
        stderr = float(np.std(sums, ddof=1) / np.sqrt(sums.size) / r_det) if sums.size > 1 else 0.0
        rows.append((int(N), int(K), r_mc, r_det, err, stderr))
    return rows
