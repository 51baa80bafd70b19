"""Drift-plus-penalty controller: queues, auxiliary rates, KKT power allocation
and the runtime queue-bound diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UTILITY_OFFSET = 1e-4


def utility(r, offset: float = UTILITY_OFFSET):
    """Proportional-fair utility log(offset + r)."""
    return np.log(offset + np.asarray(r, dtype=float))


@dataclass
class QueueState:
    """Actual queues Q, virtual queues Y (one per MBS user) and backhaul queues D (one per SC)."""

    Q: np.ndarray
    Y: np.ndarray
    D: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_users: int, n_scs: int) -> "QueueState":
        return cls(np.zeros(n_users), np.zeros(n_users), np.zeros(n_scs), 0)

    def copy(self) -> "QueueState":
        return QueueState(self.Q.copy(), self.Y.copy(), self.D.copy(), self.t)

    @property
    def weights(self) -> np.ndarray:
        """A_k = Q_k + Y_k."""
        return self.Q + self.Y


def update_queues(state: QueueState, arrivals, served, phi, sc_service, num_mues: int) -> QueueState:
    """One slot of queue dynamics.

    Q <- max(Q - r, 0) + a;  Y <- max(Y + phi - r, 0);
    D_s <- max(D_s + phi_{M+s} - service_s, 0).
    """
    a = np.asarray(arrivals, float)
    r = np.asarray(served, float)
    phi = np.asarray(phi, float)
    svc = np.asarray(sc_service, float)
    Q = np.maximum(state.Q - r, 0.0) + a
    Y = np.maximum(state.Y + phi - r, 0.0)
    S = state.D.size
    D = np.maximum(state.D + phi[num_mues:num_mues + S] - svc, 0.0) if S else state.D.copy()
    return QueueState(Q, Y, D, state.t + 1)


def select_auxiliary(Y, D, nu: float, omega, a_max, num_mues: int,
                     offset: float = UTILITY_OFFSET) -> np.ndarray:
    """Minimizer of Y phi [+ D phi] - nu omega log(offset + phi) on [0, a_max].

    The stationary point is ``nu omega / (Y [+ D]) - offset``; users with
    index >= ``num_mues`` are SCs and add their backhaul queue D to the
    denominator. A zero denominator returns ``a_max``.
    """
    Y = np.asarray(Y, float)
    K = Y.size
    denom = Y.copy()
    S = np.asarray(D).size
    if S:
        denom[num_mues:num_mues + S] += np.asarray(D, float)
    omega = np.broadcast_to(np.asarray(omega, float), (K,))
    a_max = np.broadcast_to(np.asarray(a_max, float), (K,))
    safe = np.where(denom > 0, denom, 1.0)
    with np.errstate(over="ignore"):
        phi = np.where(denom > 0, nu * omega / safe - offset, a_max)
    return np.clip(phi, 0.0, a_max)


@dataclass
class KKTResult:
    p: np.ndarray
    mu: float
    stationarity: float
    feasibility: float
    complementarity: float
    bisection_steps: int


def _powers_at(mu, A, n, omega, N):
    with np.errstate(divide="ignore"):
        inv_n = np.where(n > 0, 1.0 / np.where(n > 0, n, 1.0), np.inf)
    p = A * N * omega / mu - inv_n
    return np.where((A > 0) & (n > 0), np.maximum(p, 0.0), 0.0)


def _budget(p, omega, N):
    m = p > 0
    return float(np.sum(p[m] / omega[m])) / N


def kkt_residuals(p, mu, A, n, omega, N, p_max):
    """Relative stationarity, feasibility and complementarity residuals of
    max sum A log(1 + n p) s.t. (1/N) sum p / Omega <= P, p >= 0."""
    p = np.asarray(p, float)
    act = (A > 0) & (n > 0)
    grad = np.zeros_like(p)
    grad[act] = A[act] * n[act] / (1.0 + n[act] * p[act])
    price = np.zeros_like(p)
    price[act] = mu / (N * omega[act])
    scale = max(np.max(grad[act]) if act.any() else 0.0, 1e-300)
    pos = act & (p > 0)
    stat = 0.0
    if pos.any():
        stat = float(np.max(np.abs(grad[pos] - price[pos]))) / scale
    zero = act & (p <= 0)
    if zero.any():
        stat = max(stat, float(np.max(np.maximum(grad[zero] - price[zero], 0.0))) / scale)
    used = _budget(p, omega, N) if act.any() else 0.0
    feas = max(used - p_max, 0.0) / p_max + float(np.max(np.maximum(-p, 0.0), initial=0.0))
    comp = abs(mu / N) * abs(p_max - used) / max(scale * max(omega[act].max() if act.any() else 1.0, 1e-300) * p_max / N, 1e-300)
    comp = min(comp, abs(p_max - used) / p_max) if mu > 0 else 0.0
    return stat, feas, comp


def kkt_power_allocation(A, n, omega, n_antennas: int, p_max: float, rtol: float = 1e-9,
                         max_steps: int = 200) -> KKTResult:
    """Water-filling p_k = max(A_k N Omega_k / mu - 1/n_k, 0) with the budget met by bisection on mu."""
    A = np.asarray(A, float)
    n = np.asarray(n, float)
    omega = np.asarray(omega, float)
    N = float(n_antennas)
    K = A.size
    act = (A > 0) & (n > 0) & (omega > 0)
    if not act.any():
        return KKTResult(np.zeros(K), 0.0, 0.0, 0.0, 0.0, 0)
    A_ = np.where(act, A, 0.0)
    n_ = np.where(act, n, 0.0)
    om = np.where(act, omega, 1.0)
    mu_hi = float(np.max(A_ * N * om * n_))
    mu_lo = 0.0
    # mu_hi gives zero power; make sure the lower end over-spends
    mu_lo = mu_hi
    steps = 0
    while _budget(_powers_at(mu_lo, A_, n_, om, N), om, N) <= p_max:
        mu_lo *= 0.5
        steps += 1
        if steps > 2000:
            raise RuntimeError("could not bracket the KKT multiplier")
    mu_hi_b = 2.0 * mu_lo
    while _budget(_powers_at(mu_hi_b, A_, n_, om, N), om, N) > p_max:
        mu_lo = mu_hi_b
        mu_hi_b *= 2.0
    mu_hi = mu_hi_b
    for _ in range(max_steps):
        mid = 0.5 * (mu_lo + mu_hi)
        steps += 1
        used = _budget(_powers_at(mid, A_, n_, om, N), om, N)
        if used > p_max:
            mu_lo = mid
        else:
            mu_hi = mid
        if abs(used - p_max) <= rtol * p_max * 0.1 or (mu_hi - mu_lo) <= 1e-15 * mu_hi:
            break
    # closed-form multiplier for the active set found by bisection
    p = _powers_at(mu_hi, A_, n_, om, N)
    on = p > 0
    if on.any():
        mu = N * float(np.sum(A_[on])) / (N * p_max + float(np.sum(1.0 / (n_[on] * om[on]))))
        p_exact = _powers_at(mu, A_, n_, om, N)
        if np.array_equal(p_exact > 0, on) and _budget(p_exact, om, N) <= p_max * (1 + rtol):
            p, mu_hi = p_exact, mu
    used = _budget(p, om, N)
    if used > p_max:
        p = p * (p_max / used)
    stat, feas, comp = kkt_residuals(p, mu_hi, A_, n_, om, N, p_max)
    return KKTResult(p, mu_hi, stat, feas, comp, steps)


@dataclass
class TheoremBounds:
    pi: np.ndarray
    q_bound: np.ndarray
    y_bound: np.ndarray
    d_bound: np.ndarray


def theorem2_bounds(nu, omega, a_max, num_mues: int, n_scs: int,
                    offset: float = UTILITY_OFFSET) -> TheoremBounds:
    """Q <= nu w pi + 2 a_max and Y, D <= nu w pi + a_max with pi = f'(0) = 1/offset."""
    omega = np.asarray(omega, float)
    pi = np.full(omega.size, 1.0 / offset)
    a_max = np.broadcast_to(np.asarray(a_max, float), omega.shape)
    base = nu * omega * pi
    d_idx = slice(num_mues, num_mues + n_scs)
    return TheoremBounds(pi, base + 2 * a_max, base + a_max, (base + a_max)[d_idx])


def check_theorem2_bounds(state: QueueState, bounds: TheoremBounds) -> dict:
    """Indices of queues above their bound (all lists should stay empty)."""
    return {
        "Q": np.flatnonzero(state.Q > bounds.q_bound).tolist(),
        "Y": np.flatnonzero(state.Y > bounds.y_bound).tolist(),
        "D": np.flatnonzero(state.D > bounds.d_bound).tolist(),
    }


def drift_penalty_objective(state: QueueState, rates, sc_rates, phi, nu: float, omega=1.0,
                            num_mues: int = 0, offset: float = UTILITY_OFFSET) -> float:
    """-sum (Q+Y) r - sum D r_sc + sum Y phi + sum D phi_sc - nu sum omega f(phi)."""
    r = np.asarray(rates, float)
    phi = np.asarray(phi, float)
    A = state.Q + state.Y
    S = state.D.size
    omega = np.broadcast_to(np.asarray(omega, float), phi.shape)
    val = -float(A @ r) + float(state.Y @ phi) - nu * float(np.sum(omega * utility(phi, offset)))
    if S:
        val += -float(state.D @ np.asarray(sc_rates, float)) + float(state.D @ phi[num_mues:num_mues + S])
    return val
