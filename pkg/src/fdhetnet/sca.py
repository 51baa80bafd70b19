"""Joint user association and FD operation-mode selection.

The per-schedule subproblem is relaxed to [0, 1] and solved by successive
convex approximation: the bilinear FD-interference constraint is replaced by
its AM-GM upper bound with parameters ``lambda``, and the SC-served rate terms
``log(1 + beta * y * d)`` are lower-bounded through a slack ``iota`` with
``iota^2 <= beta * y * d`` (a rotated second-order cone) and a first-order
bound of ``iota^2`` around ``iota_hat``. A greedy pass recovers binary
decisions afterwards.

Variable layout of one instance (vector ``v``):

* ``x[k]``     MBS association of MBS user k (MUEs first, then SC backhauls);
* ``beta[s]``  FD operation mode of SC s;
* ``sue[s]``   SC s serves its own SUE;
* ``off[p]``   MUE ``pairs[p][0]`` is offloaded to SC ``pairs[p][1]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .barrier import barrier_minimize, linear_constraints

LAMBDA_MIN, LAMBDA_MAX = 1e-6, 1e6
IOTA_MIN = 1e-6
FEAS_TOL = 1e-12


@dataclass
class LoadBalanceInstance:
    """Data of one scheduling subproblem.

    snr_mbs[k]   : equal-power SNR of MBS user k (CSI error already applied)
    snr_sue[s]   : access SNR of SC s to its SUE
    snr_off[m,s] : access SNR of SC s to MUE m
    eps_mbs[k,s] : FD INR from SC s at MBS user k (zero for an SC's own backhaul)
    eps_sue[s,s']: FD INR from SC s' at the SUE of SC s (diagonal unused)
    gate[m,s]    : offloading MUE m to SC s is allowed
    """

    A: np.ndarray
    D: np.ndarray
    snr_mbs: np.ndarray
    snr_sue: np.ndarray
    snr_off: np.ndarray
    eps_mbs: np.ndarray
    eps_sue: np.ndarray
    gate: np.ndarray
    eps_o: float
    n_antennas: int
    n_sc_active: int
    num_mues: int

    def __post_init__(self):
        self.A = np.asarray(self.A, float)
        self.D = np.asarray(self.D, float)
        self.snr_mbs = np.asarray(self.snr_mbs, float)
        self.snr_sue = np.asarray(self.snr_sue, float)
        S = self.D.size
        M = self.num_mues
        self.snr_off = np.asarray(self.snr_off, float).reshape(M, S)
        self.eps_mbs = np.asarray(self.eps_mbs, float).reshape(self.A.size, S)
        self.eps_sue = np.asarray(self.eps_sue, float).reshape(S, S)
        self.gate = np.asarray(self.gate, bool).reshape(M, S)
        self._pairs = [(int(m), int(s)) for m, s in zip(*np.nonzero(self.gate))]
        if np.any(self.A < 0) or np.any(self.D < 0):
            raise ValueError("queue weights must be nonnegative")
        if np.any(self.eps_mbs < 0) or np.any(self.eps_sue < 0):
            raise ValueError("INR values must be nonnegative")

    # sizes and layout
    @property
    def num_mbs_users(self) -> int:
        return self.A.size

    @property
    def num_scs(self) -> int:
        return self.D.size

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return self._pairs

    @property
    def n_vars(self) -> int:
        return self.num_mbs_users + 2 * self.num_scs + len(self.pairs)

    def split(self, v):
        K, S = self.num_mbs_users, self.num_scs
        return v[:K], v[K:K + S], v[K + S:K + 2 * S], v[K + 2 * S:]

    def join(self, x, beta, sue, off):
        return np.concatenate([x, beta, sue, off]).astype(float)

    # rate terms shared by the relaxed and binary objectives
    def product_terms(self):
        """Index data of the SC-served terms: (beta idx, user idx, snr, weight, pair m or -1)."""
        K, S = self.num_mbs_users, self.num_scs
        b_idx, y_idx, snr, w, mue = [], [], [], [], []
        for s in range(S):
            b_idx.append(K + s)
            y_idx.append(K + S + s)
            snr.append(self.snr_sue[s])
            w.append(self.D[s])
            mue.append(-1)
        for p, (m, s) in enumerate(self.pairs):
            b_idx.append(K + s)
            y_idx.append(K + 2 * S + p)
            snr.append(self.snr_off[m, s])
            w.append(self.A[m])
            mue.append(m)
        return (np.array(b_idx, int), np.array(y_idx, int), np.array(snr, float),
                np.array(w, float), np.array(mue, int))

    # dump / load
    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(), "D": self.D.tolist(), "snr_mbs": self.snr_mbs.tolist(),
            "snr_sue": self.snr_sue.tolist(), "snr_off": self.snr_off.tolist(),
            "eps_mbs": self.eps_mbs.tolist(), "eps_sue": self.eps_sue.tolist(),
            "gate": self.gate.astype(int).tolist(), "eps_o": self.eps_o,
            "n_antennas": self.n_antennas, "n_sc_active": self.n_sc_active,
            "num_mues": self.num_mues,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LoadBalanceInstance":
        return cls(**d)


def dump_instance(inst: LoadBalanceInstance, path) -> None:
    """Write an instance as indented JSON (plain text)."""
    with open(path, "w") as fh:
        json.dump(inst.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_instance(path) -> LoadBalanceInstance:
    with open(path) as fh:
        return LoadBalanceInstance.from_dict(json.load(fh))


# ----------------------------------------------------------- instance building
@dataclass
class SchedulingStats:
    """Long-term channel statistics used to build scheduling instances."""

    snr_mbs: np.ndarray
    snr_sue: np.ndarray
    snr_off: np.ndarray
    eps_mbs: np.ndarray
    eps_sue: np.ndarray
    omega0: np.ndarray


def scheduling_stats(corr, cfg, nodes, tau_sq, homnet: bool = False) -> SchedulingStats:
    """Equal-power SNR estimates and INR map for the MBS users ``nodes``.

    MBS users get ``p_k = P N Omega_k / K`` from the fixed point with U = I;
    an SC access link to a UE is estimated as
    ``(P_sc / N_s_au) * gain * (N_s - N_s_au + 1)`` (ZF array gain).
    """
    from .channel import fd_inr_map
    from .rmt import equal_power, solve_omega_fixed_point

    N = cfg.num_mbs_antennas
    st = solve_omega_fixed_point(corr.theta_mbs[nodes], cfg.rzf_alpha, N)
    p_eq = equal_power(st.omega, N, cfg.p_mbs)
    snr_mbs = p_eq * (1.0 - np.asarray(tau_sq, float))
    M = corr.num_mues
    S = 0 if homnet else corr.num_scs
    zf_gain = (cfg.p_sc / cfg.sc_active_users) * (cfg.sc_tx_antennas - cfg.sc_active_users + 1)
    eps = fd_inr_map(corr, cfg.p_sc)[:, :S]
    snr_sue = np.array([zf_gain * corr.gain_sc[s, corr.sue_node(s)] for s in range(S)])
    snr_off = np.array([[zf_gain * corr.gain_sc[s, m] for s in range(S)] for m in range(M)]).reshape(M, S)
    eps_mbs = eps[nodes] if S else np.zeros((len(nodes), 0))
    eps_sue = np.array([[0.0 if s2 == s else eps[corr.sue_node(s), s2] for s2 in range(S)]
                        for s in range(S)]).reshape(S, S)
    return SchedulingStats(snr_mbs, snr_sue, snr_off, eps_mbs, eps_sue, st.omega)


def backhaul_gate(snr_mbs, num_mues: int, num_scs: int, snr_off=None) -> np.ndarray:
    """Offloading MUE m to SC s is allowed only when its direct MBS rate does
    not exceed the backhaul rate of SC s (and the access link exists)."""
    snr_mbs = np.asarray(snr_mbs, float)
    M, S = num_mues, num_scs
    if S == 0:
        return np.zeros((M, 0), bool)
    direct = snr_mbs[:M, None]
    backhaul = snr_mbs[M:M + S][None, :]
    gate = direct <= backhaul
    if snr_off is not None:
        gate &= np.asarray(snr_off) > 0
    return gate


def build_instance(A, D, stats: SchedulingStats, cfg, allow_offload: bool = True,
                   num_mues: Optional[int] = None) -> LoadBalanceInstance:
    """Scheduling instance from queue weights and channel statistics."""
    M = cfg.num_mues if num_mues is None else num_mues
    S = stats.snr_sue.size
    gate = backhaul_gate(stats.snr_mbs, M, S, stats.snr_off) if allow_offload else np.zeros((M, S), bool)
    return LoadBalanceInstance(A, D, stats.snr_mbs, stats.snr_sue, stats.snr_off, stats.eps_mbs,
                               stats.eps_sue, gate, cfg.fd_inr_threshold, cfg.num_mbs_antennas,
                               cfg.sc_active_users, M)


# ------------------------------------------------------------ convex subproblem
@dataclass
class ConvexSubproblem:
    """Problem data of one SCA step; callbacks follow the barrier solver API."""

    inst: LoadBalanceInstance
    lam: np.ndarray           # (K, S)
    iota_hat: np.ndarray      # one per SC-served term
    scale: float

    def __post_init__(self):
        inst = self.inst
        self.b_idx, self.y_idx, snr, w, _ = inst.product_terms()
        self.d = snr / (1.0 + inst.eps_o)
        self.w_prod = w
        self.c_mbs = inst.snr_mbs / (1.0 + inst.eps_o)
        self.G, self.h = self._linear_rows()
        # the interference surrogate is a separable quadratic with this diagonal Hessian
        K, S = inst.num_mbs_users, inst.num_scs
        self._curv = np.zeros(inst.n_vars)
        if S:
            self._curv[:K] = np.sum(inst.eps_mbs * self.lam, axis=1)
            self._curv[K:K + S] = np.sum(inst.eps_mbs / self.lam, axis=0)

    # objective
    def sinr_lower(self, v):
        root = np.sqrt(np.maximum(v[self.b_idx] * v[self.y_idx] * self.d, 0.0))
        return 2.0 * self.iota_hat * root - self.iota_hat ** 2

    def value(self, v) -> float:
        """Unscaled objective (+inf outside the domain)."""
        f, _, _ = self._objective(v, derivatives=False)
        return f * self.scale

    def scaled_value(self, v) -> float:
        return self._objective(v, derivatives=False)[0]

    def objective(self, v):
        return self._objective(v, derivatives=True)

    def _objective(self, v, derivatives: bool):
        inst = self.inst
        n = v.size
        K = inst.num_mbs_users
        A = inst.A / self.scale
        x = v[:K]
        arg = 1.0 + x * self.c_mbs
        g_low = self.sinr_lower(v)
        if np.any(arg <= 0) or np.any(1.0 + g_low <= 0):
            return np.inf, None, None
        w = self.w_prod / self.scale
        f = -float(A @ np.log(arg)) - float(w @ np.log1p(g_low))
        if not derivatives:
            return f, None, None
        grad = np.zeros(n)
        hess = np.zeros((n, n))
        grad[:K] = -A * self.c_mbs / arg
        hess[np.arange(K), np.arange(K)] = A * self.c_mbs ** 2 / arg ** 2
        act = (w > 0) & (self.iota_hat > 0) & (self.d > 0)
        if np.any(act):
            bi, yi, wj = self.b_idx[act], self.y_idx[act], w[act]
            a, b = v[bi], v[yi]
            coef = 2.0 * self.iota_hat[act] * np.sqrt(self.d[act])
            r = np.sqrt(a * b)
            ga, gb = coef * 0.5 * np.sqrt(b / a), coef * 0.5 * np.sqrt(a / b)
            haa = -coef * 0.25 * np.sqrt(b) * a ** -1.5
            hbb = -coef * 0.25 * np.sqrt(a) * b ** -1.5
            hab = coef * 0.25 / r
            den = 1.0 + g_low[act]
            q1, q2 = wj / den ** 2, wj / den
            np.add.at(grad, bi, -wj * ga / den)
            np.add.at(grad, yi, -wj * gb / den)
            np.add.at(hess, (bi, bi), q1 * ga * ga - q2 * haa)
            np.add.at(hess, (yi, yi), q1 * gb * gb - q2 * hbb)
            np.add.at(hess, (bi, yi), q1 * ga * gb - q2 * hab)
            np.add.at(hess, (yi, bi), q1 * ga * gb - q2 * hab)
        return f, grad, hess

    # constraints
    def linear_rows(self):
        return self.G, self.h

    def _linear_rows(self):
        inst = self.inst
        n = inst.n_vars
        K, S, M = inst.num_mbs_users, inst.num_scs, inst.num_mues
        pairs = inst.pairs
        rows, rhs = [np.eye(n), -np.eye(n)], [np.ones(n), np.zeros(n)]
        off0 = K + 2 * S
        for m in range(M):
            cols = [off0 + p for p, (mm, _) in enumerate(pairs) if mm == m]
            if cols:
                r = np.zeros(n)
                r[m] = 1.0
                r[cols] = 1.0
                rows.append(r[None])
                rhs.append(np.array([1.0]))
        for p, (m, ss) in enumerate(pairs):
            # an offloaded MUE is carried over the SC's wireless backhaul
            r = np.zeros(n)
            r[off0 + p] = 1.0
            r[M + ss] = -1.0
            rows.append(r[None])
            rhs.append(np.array([0.0]))
        for s in range(S):
            cols = [K + S + s] + [off0 + p for p, (_, ss) in enumerate(pairs) if ss == s]
            if len(cols) > inst.n_sc_active:
                r = np.zeros(n)
                r[cols] = 1.0
                rows.append(r[None])
                rhs.append(np.array([float(inst.n_sc_active)]))
        users = np.r_[np.arange(K), K + S + np.arange(S), off0 + np.arange(len(pairs))]
        if users.size > inst.n_antennas:
            r = np.zeros(n)
            r[users] = 1.0
            rows.append(r[None])
            rhs.append(np.array([float(inst.n_antennas)]))
        return np.vstack(rows), np.concatenate(rhs)

    def surrogate(self, v) -> float:
        """AM-GM upper bound of sum_k sum_s x_k beta_s eps_ks."""
        inst = self.inst
        K, S = inst.num_mbs_users, inst.num_scs
        x, beta = v[:K], v[K:K + S]
        return 0.5 * float(self._curv[:K] @ (x * x) + self._curv[K:K + S] @ (beta * beta))

    def interference_constraint(self, v):
        curv = self._curv
        c = self.surrogate(v) - self.inst.eps_o
        return np.array([c]), (curv * v)[None], lambda w: np.diag(w[0] * curv)

    def has_interference(self) -> bool:
        return self.inst.num_scs > 0 and bool(np.any(self.inst.eps_mbs > 0))

    def constraints(self):
        """Linear rows plus, when present, the interference row, as one callback."""
        if not self.has_interference():
            return linear_constraints(self.G, self.h)
        G, h, curv, eps_o = self.G, self.h, self._curv, self.inst.eps_o
        J = np.vstack([G, np.zeros((1, G.shape[1]))])
        zero = np.zeros((G.shape[1], G.shape[1]))

        def fn(v):
            Jv = J.copy()
            Jv[-1] = curv * v
            c = np.append(G @ v - h, 0.5 * float(curv @ (v * v)) - eps_o)
            return c, Jv, lambda w: zero + np.diag(w[-1] * curv)
        return fn

    def constraint_values(self, v) -> np.ndarray:
        c = self.G @ v - self.h
        if self.has_interference():
            c = np.append(c, 0.5 * float(self._curv @ (v * v)) - self.inst.eps_o)
        return c

    def max_violation(self, v) -> float:
        viol = float(np.max(self.G @ v - self.h))
        if self.has_interference():
            viol = max(viol, self.surrogate(v) - self.inst.eps_o)
        return viol


def convexify(inst: LoadBalanceInstance, lam, iota_hat) -> ConvexSubproblem:
    """Convex subproblem around the SCA parameters ``lam`` and ``iota_hat``."""
    lam = np.clip(np.asarray(lam, float), LAMBDA_MIN, LAMBDA_MAX)
    iota_hat = np.maximum(np.asarray(iota_hat, float), IOTA_MIN)
    scale = max(float(np.max(inst.A, initial=0.0)), float(np.max(inst.D, initial=0.0)), 1e-300)
    return ConvexSubproblem(inst, lam, iota_hat, scale)


@dataclass
class RelaxedSolution:
    x: np.ndarray
    beta: np.ndarray
    sue: np.ndarray
    off: np.ndarray
    iota: np.ndarray
    lam: np.ndarray
    objective: float
    iterations: int
    history: List[float] = field(default_factory=list)
    kkt_residual: float = 0.0
    converged: bool = True

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.beta, self.sue, self.off])


def _iota_at(sub: ConvexSubproblem, v) -> np.ndarray:
    return np.sqrt(np.maximum(v[sub.b_idx] * v[sub.y_idx] * sub.d, 0.0))


def _centre(sub: ConvexSubproblem) -> np.ndarray:
    """Strictly feasible point with every variable equal to a small value."""
    v = np.full(sub.inst.n_vars, 0.5)
    v[sub.inst.num_mbs_users + 2 * sub.inst.num_scs:] = 0.25
    for _ in range(200):
        if sub.max_violation(v) < 0 and np.all(v > 0):
            return v
        v = v * 0.5
    raise RuntimeError("no strictly feasible start found")


def solve_convex(sub: ConvexSubproblem, start=None):
    """Solve one convex subproblem with the barrier method.

    ``start`` is blended with a small strictly feasible point until the
    blend is strictly feasible and inside the objective domain. Returns
    ``(v, value, kkt_residual, converged)``.
    """
    centre = _centre(sub)
    x0 = None
    if start is None:
        x0 = centre
    else:
        start = np.clip(np.asarray(start, float), 0.0, 1.0)
        for theta in (1e-3, 1e-2, 0.1, 0.5, 1.0):
            cand = (1 - theta) * start + theta * centre
            if sub.max_violation(cand) < 0 and np.all(cand > 0) and np.isfinite(sub.value(cand)):
                x0 = cand
                break
    if x0 is None or not np.isfinite(sub.value(x0)):
        return None, np.inf, np.inf, False
    res = barrier_minimize(sub.objective, sub.constraints(), x0, value=sub.scaled_value,
                           constraint_values=sub.constraint_values)
    return res.x, res.f * sub.scale, res.kkt_residual, res.converged


def _solution(inst, sub, v, obj, it, hist, resid, conv):
    x, beta, sue, off = inst.split(v)
    K, S = inst.num_mbs_users, inst.num_scs
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(x[:, None] > 0, beta[None, :] / x[:, None], LAMBDA_MAX) if S else np.ones((K, 0))
    lam = np.clip(lam, LAMBDA_MIN, LAMBDA_MAX)
    return RelaxedSolution(x.copy(), beta.copy(), sue.copy(), off.copy(), _iota_at(sub, v), lam,
                           obj, it, hist, resid, conv)


def _start_candidate(inst, base, side):
    K, S = inst.num_mbs_users, inst.num_scs
    v = base.copy()
    bil = float(v[:K] @ inst.eps_mbs @ v[K:K + S]) if S else 0.0
    if bil > 0.5 * inst.eps_o:
        factor = 0.5 * inst.eps_o / bil
        off = slice(K + 2 * S, None)
        if side == "mbs":
            v[:K] *= factor
            v[off] *= factor
        elif side == "sc":
            v[K:K + S] *= factor
        else:
            v[:K + S] *= np.sqrt(factor)
            v[off] *= np.sqrt(factor)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.clip(v[K:K + S][None, :] / v[:K, None], LAMBDA_MIN, LAMBDA_MAX) if S else np.ones((K, 0))
    sub = convexify(inst, lam, np.ones(S + len(inst.pairs)))
    iota = np.maximum(_iota_at(sub, v), IOTA_MIN)
    sub = convexify(inst, lam, iota)
    if sub.max_violation(v) >= 0:
        return None
    return v, lam, iota, sub.value(v)


def initial_point(inst: LoadBalanceInstance):
    """Deterministic strictly feasible start ``(v, lambda, iota_hat)``.

    Every variable starts at 0.5 (offloads at 0.25, below their backhaul), scaled down to satisfy the linear
    constraints with margin. The FD budget is then met by shrinking either
    the MBS associations, the SC modes, or both; ``lambda = beta / x`` makes
    the surrogate tight and ``iota_hat`` satisfies the cone with equality.
    The candidate with the lowest objective is used.
    """
    probe = convexify(inst, np.ones((inst.num_mbs_users, inst.num_scs)),
                      np.ones(inst.num_scs + len(inst.pairs)))
    v = np.full(inst.n_vars, 0.5)
    v[inst.num_mbs_users + 2 * inst.num_scs:] = 0.25
    G, h = probe.linear_rows()
    load = G @ v
    pos = load > 0
    v *= min(1.0, 0.9 * float(np.min(h[pos] / load[pos])))
    best = None
    for side in ("mbs", "sc", "both"):
        cand = _start_candidate(inst, v, side)
        if cand is not None and (best is None or cand[3] < best[3]):
            best = cand
    if best is None:
        v = _centre(probe)
        return v, probe.lam, np.maximum(_iota_at(probe, v), IOTA_MIN)
    return best[:3]


def sca_iterate(inst: LoadBalanceInstance, tol: float = 1e-4, max_iter: int = 20,
                init: Optional[RelaxedSolution] = None, rng=None) -> RelaxedSolution:
    """Successive convex approximation until the relative objective change is below ``tol``.

    The recorded objective of iteration i is the optimal value of the i-th
    convex subproblem; the previous iterate is kept whenever it scores better
    in the new subproblem, so the sequence is non-increasing.
    """
    if init is not None:
        v_prev = init.vector
        lam, iota_hat = init.lam, np.maximum(init.iota, IOTA_MIN)
        obj_prev = convexify(inst, lam, iota_hat).value(v_prev)
    else:
        v_prev, lam, iota_hat = initial_point(inst)
        if rng is not None:
            v_prev = v_prev * rng.uniform(0.5, 1.0, v_prev.size)
            iota_hat = _iota_at(convexify(inst, lam, iota_hat), v_prev)
        obj_prev = convexify(inst, lam, iota_hat).value(v_prev)
    hist = []
    sub = None
    resid, conv = 0.0, True
    it = 0
    for it in range(1, max_iter + 1):
        sub = convexify(inst, lam, iota_hat)
        v_new, obj_new, resid, conv = solve_convex(sub, v_prev)
        prev_val = sub.value(v_prev) if sub.max_violation(v_prev) <= FEAS_TOL else np.inf
        if v_new is None or prev_val < obj_new:
            v_new, obj_new = v_prev, prev_val
        hist.append(obj_new)
        change = abs(obj_new - obj_prev)
        done = change <= tol * max(abs(obj_prev), 1e-300) or change == 0.0
        sol = _solution(inst, sub, v_new, obj_new, it, hist, resid, conv)
        v_prev, obj_prev = v_new, obj_new
        lam, iota_hat = sol.lam, np.maximum(sol.iota, IOTA_MIN)
        if done:
            return sol
    return sol


# ------------------------------------------------------------- binary recovery
@dataclass
class BinaryAssignment:
    x: np.ndarray
    beta: np.ndarray
    sue: np.ndarray
    off: np.ndarray
    objective: float
    feasible: bool
    report: dict

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.beta, self.sue, self.off])


def binary_objective(inst: LoadBalanceInstance, v) -> float:
    """Objective of the original problem with exact interference denominators."""
    x, beta, sue, off = inst.split(np.asarray(v, float))
    S = inst.num_scs
    inter_mbs = inst.eps_mbs @ beta if S else np.zeros(x.size)
    f = -float(inst.A @ np.log1p(x * inst.snr_mbs / (1.0 + inter_mbs)))
    for s in range(S):
        inter = float(inst.eps_sue[s] @ beta) - inst.eps_sue[s, s] * beta[s]
        f -= inst.D[s] * np.log1p(beta[s] * sue[s] * inst.snr_sue[s] / (1.0 + inter))
    for p, (m, s) in enumerate(inst.pairs):
        inter = float(inst.eps_mbs[m] @ beta) - inst.eps_mbs[m, s] * beta[s]
        f -= inst.A[m] * np.log1p(beta[s] * off[p] * inst.snr_off[m, s] / (1.0 + inter))
    return f


def check_feasibility(inst: LoadBalanceInstance, v, antenna_budget: Optional[int] = None) -> dict:
    """Constraint slacks of a (binary) point for the original constraints."""
    x, beta, sue, off = inst.split(np.asarray(v, float))
    S, M = inst.num_scs, inst.num_mues
    budget = inst.n_antennas if antenna_budget is None else antenna_budget
    assoc = np.array(x[:M], float)
    n_tx = np.array(sue, float)
    carried = True
    for p, (m, s) in enumerate(inst.pairs):
        assoc[m] += off[p]
        n_tx[s] += off[p]
        carried &= bool(off[p] <= x[M + s])
    antennas = float(np.sum(x) + np.sum(n_tx))
    interference = float(x @ inst.eps_mbs @ beta) if S else 0.0
    binary = bool(np.all((np.asarray(v) == 0) | (np.asarray(v) == 1)))
    ok = (binary and carried and np.all(assoc <= 1) and np.all(n_tx <= inst.n_sc_active)
          and antennas <= budget and interference <= inst.eps_o * (1 + 1e-12))
    return {"binary": binary, "association_max": float(np.max(assoc, initial=0.0)),
            "n_tx": n_tx.tolist(), "antennas": antennas, "antenna_budget": int(budget),
            "interference": interference, "offload_carried": carried, "feasible": bool(ok)}


def variable_weights(inst: LoadBalanceInstance, relaxed_vector=None) -> np.ndarray:
    """Objective weight of switching each variable on (used to order the greedy pass)."""
    K, S = inst.num_mbs_users, inst.num_scs
    pairs = inst.pairs
    w = np.zeros(inst.n_vars)
    w[:K] = inst.A * np.log1p(inst.snr_mbs / (1 + inst.eps_o))
    sue_w = inst.D * np.log1p(inst.snr_sue / (1 + inst.eps_o))
    w[K + S:K + 2 * S] = sue_w
    off_val = np.zeros(len(pairs)) if relaxed_vector is None else inst.split(relaxed_vector)[3]
    beta_w = sue_w.copy()
    for p, (m, s) in enumerate(pairs):
        ow = inst.A[m] * np.log1p(inst.snr_off[m, s] / (1 + inst.eps_o))
        w[K + 2 * S + p] = ow
        beta_w[s] += ow * off_val[p]
    w[K:K + S] = beta_w
    return w


def _cleanup(inst, v):
    K, S = inst.num_mbs_users, inst.num_scs
    pairs = inst.pairs
    for s in range(S):
        users = [K + S + s] + [K + 2 * S + p for p, (_, ss) in enumerate(pairs) if ss == s]
        if v[K + s] == 0:
            v[users] = 0
        elif not np.any(v[users]):
            v[K + s] = 0
    return v


def recover_binary(relaxed: RelaxedSolution, inst: LoadBalanceInstance, xi: float = 0.1,
                   antenna_budget: Optional[int] = None, fill: bool = True) -> BinaryAssignment:
    """Greedy rounding of a relaxed solution.

    Variables at or above ``1 - xi`` are considered first, then those in
    ``(xi, 1 - xi)``, each group by decreasing objective weight; a variable is
    set to one if the original constraints (association, SC users, antennas,
    exact FD interference) still hold. SCs left without users are switched to
    HD and users of HD SCs are dropped. An optional fill pass then adds any
    variable (or SC-mode/user pair) that keeps feasibility and improves the
    original objective.
    """
    rv = relaxed.vector
    n = rv.size
    w = variable_weights(inst, rv)
    sure = [i for i in np.argsort(-w, kind="stable") if rv[i] >= 1 - xi]
    unsure = [i for i in np.argsort(-w, kind="stable") if xi < rv[i] < 1 - xi]
    v = np.zeros(n)

    def feasible(cand):
        return check_feasibility(inst, cand, antenna_budget)["feasible"]

    for i in sure + unsure:
        cand = v.copy()
        cand[i] = 1.0
        if feasible(cand):
            v = cand
    v = _cleanup(inst, v)
    if fill:
        v = _greedy_fill(inst, v, w, feasible)
    rep = check_feasibility(inst, v, antenna_budget)
    x, beta, sue, off = inst.split(v)
    return BinaryAssignment(x, beta, sue, off, binary_objective(inst, v), rep["feasible"], rep)


def _greedy_fill(inst, v, w, feasible):
    K, S = inst.num_mbs_users, inst.num_scs
    pairs = inst.pairs
    moves = [[i] for i in np.argsort(-w, kind="stable")]
    for s in range(S):
        moves.append([K + s, K + S + s])
        moves += [[K + s, K + 2 * S + p] for p, (_, ss) in enumerate(pairs) if ss == s]
        moves += [[inst.num_mues + s, K + s, K + 2 * S + p] for p, (_, ss) in enumerate(pairs) if ss == s]
    best = binary_objective(inst, v)
    for _ in range(v.size):
        improved = False
        for mv in moves:
            if np.all(v[mv] == 1):
                continue
            cand = v.copy()
            cand[mv] = 1.0
            if not feasible(cand):
                continue
            val = binary_objective(inst, cand)
            if val < best - 1e-12 * max(1.0, abs(best)):
                v, best, improved = cand, val, True
        if not improved:
            break
    return v


def schedule(inst: LoadBalanceInstance, tol: float = 1e-4, max_iter: int = 20, xi: float = 0.1,
             antenna_budget: Optional[int] = None):
    """SCA followed by binary recovery. Returns ``(relaxed, binary)``."""
    relaxed = sca_iterate(inst, tol, max_iter)
    return relaxed, recover_binary(relaxed, inst, xi, antenna_budget)


# -------------------------------------------------------------- log-SOC cascade
def _square_le(i_sq, affine):
    """Constraint affine(z)^2 - z[i_sq] <= 0, the smooth form of
    1 + k >= ||[1 - k, 2 a]|| (equivalent to k >= a^2)."""
    a0, a = affine

    def fn(z):
        val = a0 + a @ z
        c = val ** 2 - z[i_sq]
        J = 2 * val * a
        J[i_sq] -= 1.0
        return c, J, 2 * np.outer(a, a)
    return fn


def log_soc_constraints(level: int):
    """Cone cascade approximating ``1 + gamma >= exp(r)``.

    Variables are ``z = [g, r, k_0, ..., k_{level+3}]`` with ``g = 1 + gamma``.
    Returns a list of callables ``z -> (c, grad, hess)`` with ``c <= 0``
    meaning satisfied. The cascade encodes
    ``exp(r) ~ T(r / 2^level)^(2^level)`` with ``T`` the fourth-order Taylor
    polynomial of ``exp``.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    nk = level + 4
    n = 2 + nk

    def k(j):
        return 2 + j

    def unit(idx, coef=1.0):
        a = np.zeros(n)
        a[idx] = coef
        return a

    cons = []
    # g >= k0
    lin0 = unit(k(0)) - unit(0)
    cons.append(lambda z, a=lin0: (float(a @ z), a.copy(), np.zeros((n, n))))
    # k1 >= (1 + r / 2^level)^2
    cons.append(_square_le(k(1), (1.0, unit(1, 1.0 / 2 ** level))))
    # k2 >= (5/6 + r / 2^(level+1))^2
    cons.append(_square_le(k(2), (5.0 / 6.0, unit(1, 1.0 / 2 ** (level + 1)))))
    # k3 >= k1^2
    cons.append(_square_le(k(3), (0.0, unit(k(1)))))
    # k4 >= k2 + k3 / 24 + 19/72
    lin4 = unit(k(2)) + unit(k(3), 1.0 / 24.0) - unit(k(4))
    cons.append(lambda z, a=lin4: (float(a @ z) + 19.0 / 72.0, a.copy(), np.zeros((n, n))))
    for j in range(5, level + 4):
        cons.append(_square_le(k(j), (0.0, unit(k(j - 1)))))
    # k0 >= k_{level+3}^2
    cons.append(_square_le(k(0), (0.0, unit(k(level + 3)))))
    return cons


def cascade_constraint_fn(level: int):
    """The cascade as a single constraint callback for the barrier solver."""
    cons = log_soc_constraints(level)

    def fn(z):
        parts = [c(z) for c in cons]
        c = np.array([p[0] for p in parts])
        J = np.vstack([p[1] for p in parts])
        return c, J, lambda w: sum(wi * p[2] for wi, p in zip(w, parts))
    return fn


def cascade_tight_values(r, level: int) -> np.ndarray:
    """Smallest k_0..k_{level+3} satisfying the cascade for rate ``r``."""
    y = r / 2.0 ** level
    k = np.zeros(level + 4)
    k[1] = (1 + y) ** 2
    k[2] = (5.0 / 6.0 + y / 2) ** 2
    k[3] = k[1] ** 2
    k[4] = k[2] + k[3] / 24.0 + 19.0 / 72.0
    for j in range(5, level + 4):
        k[j] = k[j - 1] ** 2
    k[0] = k[level + 3] ** 2
    return k


def cascade_exp(r, level: int):
    """Value of ``exp(r)`` implied by the cascade (its tightest ``k_0``)."""
    r = np.asarray(r, float)
    return np.vectorize(lambda v: cascade_tight_values(v, level)[0])(r)
