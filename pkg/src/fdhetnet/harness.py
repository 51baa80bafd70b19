"""Simulation loop, baselines, metrics, sweeps and result files.

Each slot follows the pipeline: scheduling (SCA + binary recovery, every
``schedule_period`` slots) -> nullspace U -> power allocation (KKT) -> RZF /
ZF precoders -> realized rates -> queue update. Drops are independent
topology and fading realizations; every random stream is derived from
``(seed, stream name, drop)`` so runs are reproducible.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .channel import build_correlations, draw_channels
from .config import ConfigError, NumericalError, SystemConfig, make_rng
from .control import (QueueState, kkt_power_allocation, select_auxiliary, theorem2_bounds,
                      check_theorem2_bounds, utility, update_queues)
from .precoding import (ControlDecision, NoInterferenceFreeDimensions, build_nullspace_U,
                        build_rzf_T, build_zf_F, exact_sinrs, rate_from_sinr)
from .rmt import project_correlations, rmt_validation_error, solve_omega_fixed_point
from .sca import (build_instance, check_feasibility, recover_binary, sca_iterate,
                  scheduling_stats)
from .scenario import ArrivalProcess, generate_topology

log = logging.getLogger(__name__)

OMEGA_MIN = 1e-12


class BaselineMode(str, enum.Enum):
    HYBRID = "hybrid"
    CLOSED = "closed"
    HOMNET = "homnet"


def _mode(mode) -> BaselineMode:
    try:
        return BaselineMode(mode)
    except ValueError:
        raise ConfigError(f"unknown mode {mode!r}") from None


@dataclass
class RunMetrics:
    """Per-run summary; throughputs in bits per slot."""

    avg_ut: float
    cell_edge_ut: float
    total_network_utility: float
    avg_queue_length: float
    user_throughput: np.ndarray = field(repr=False, default=None)
    bound_violations: int = 0
    constraint_violations: int = 0
    max_kkt_residual: float = 0.0
    sca_iterations: List[int] = field(default_factory=list)
    n_slots: int = 0
    offloaded_bits: float = 0.0
    fd_fraction: float = 0.0


@dataclass
class SlotReport:
    t: int
    scheduled: np.ndarray
    beta: np.ndarray
    p: np.ndarray
    n_itf: int
    rates: np.ndarray
    det_rates: np.ndarray
    Q: np.ndarray
    Y: np.ndarray
    D: np.ndarray
    phi: np.ndarray
    sca_iterations: int
    objective: float
    kkt_residual: float


def compute_metrics(user_throughput, omega, queue_trace, offset: float = 1e-4) -> dict:
    """avgUT, 5th-percentile cell-edge UT, TNU and mean queue length."""
    r = np.asarray(user_throughput, float)
    if r.size == 0:
        return {"avg_ut": 0.0, "cell_edge_ut": 0.0, "total_network_utility": 0.0,
                "avg_queue_length": 0.0}
    omega = np.broadcast_to(np.asarray(omega, float), r.shape)
    return {
        "avg_ut": float(np.mean(r)),
        "cell_edge_ut": float(np.percentile(r, 5)),
        "total_network_utility": float(np.sum(omega * utility(r, offset))),
        "avg_queue_length": float(np.mean(queue_trace)) if len(queue_trace) else 0.0,
    }


# ------------------------------------------------------------------ drop state
class _Schedule:
    """Decision data cached for one scheduling period."""

    def __init__(self, active, beta, sc_users, U, n_itf, omega, n_eff, theta_tilde, iterations, objective):
        self.active = active
        self.beta = beta
        self.sc_users = sc_users
        self.U = U
        self.n_itf = n_itf
        self.omega = omega
        self.n_eff = n_eff
        self.theta_tilde = theta_tilde
        self.iterations = iterations
        self.objective = objective


class DropSimulator:
    """All state of one drop under one mode."""

    def __init__(self, cfg: SystemConfig, mode="hybrid", drop: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.mode = _mode(mode)
        self.drop = drop
        self.topology = generate_topology(cfg, drop)
        self.corr = build_correlations(self.topology, cfg, drop)
        M, S = cfg.num_mues, cfg.num_scs
        self.M = M
        self.homnet = self.mode is BaselineMode.HOMNET
        self.S = 0 if self.homnet else S
        self.nodes = self.corr.mbs_user_nodes(homnet=self.homnet)
        K = self.nodes.size
        self.K = K
        tau_m = cfg.tau_sq_mues(M)
        # SUEs served by the MBS (HomNet) have the same CSI quality as MUEs
        tau_rest = np.full(K - M, tau_m[0] if (self.homnet and M) else 0.0)
        if self.homnet and cfg.pilot_training:
            tau_rest = cfg.tau_sq_mues(K)[M:]
        self.tau_sq = np.r_[tau_m, tau_rest]
        self.stats = scheduling_stats(self.corr, cfg, self.nodes, self.tau_sq, homnet=self.homnet)
        self.omega_w = cfg.weights(K)
        self.a_max = cfg.max_arrival
        self.bounds = theorem2_bounds(cfg.lyapunov_nu, self.omega_w, self.a_max, M, self.S,
                                      cfg.utility_offset)
        self.state = QueueState.zeros(K, self.S)
        self.relay = np.zeros(self.S)
        self.arrivals = ArrivalProcess(cfg, K, drop)
        self.fading_rng = make_rng(cfg.seed, "fading", drop)
        self.factor = cfg.rate_factor()
        self.n_ue = M + S
        self.delivered = np.zeros(self.n_ue)
        self.queue_trace: List[float] = []
        self.bound_violations = 0
        self.constraint_violations = 0
        self.max_kkt = 0.0
        self.sca_iterations: List[int] = []
        self.schedule: Optional[_Schedule] = None
        self.offloaded_bits = 0.0
        self.fd_slots = 0
        self.t = 0

    # scheduling -----------------------------------------------------------
    def _reschedule(self):
        cfg = self.cfg
        A = self.state.Q + self.state.Y
        inst = build_instance(A, self.state.D, self.stats, cfg,
                              allow_offload=self.mode is BaselineMode.HYBRID, num_mues=self.M)
        relaxed = sca_iterate(inst, cfg.sca_tol, cfg.sca_max_iter)
        budget = inst.n_antennas
        while True:
            binary = recover_binary(relaxed, inst, cfg.recovery_xi, antenna_budget=budget)
            rep = check_feasibility(inst, binary.vector, budget)
            if not rep["feasible"]:
                self.constraint_violations += 1
            sched = self._build_schedule(inst, binary, relaxed)
            if sched is not None:
                break
            budget -= 1
            log.info("N_itf below the scheduled users; rescheduling with antenna budget %d", budget)
            if budget < 0:
                raise NumericalError("could not find a schedule that fits the interference-free dimensions")
        self.sca_iterations.append(relaxed.iterations)
        self.schedule = sched

    def _build_schedule(self, inst, binary, relaxed):
        cfg = self.cfg
        S = self.S
        beta = binary.beta.astype(int)
        sc_users = [[] for _ in range(S)]
        for s in range(S):
            if beta[s] and binary.sue[s]:
                sc_users[s].append(self.corr.sue_node(s))
        for p, (m, s) in enumerate(inst.pairs):
            if binary.off[p] and beta[s]:
                sc_users[s].append(m)
        N = cfg.num_mbs_antennas
        groups = [self.corr.theta_group([1], [users]) if users else np.zeros((N, N)) for users in sc_users]
        try:
            U, n_itf = build_nullspace_U(groups, beta, N)
        except NoInterferenceFreeDimensions:
            return None
        active = np.flatnonzero(binary.x > 0)
        if active.size > n_itf:
            return None
        omega = np.zeros(self.K)
        theta_tilde = None
        if active.size:
            theta_tilde = project_correlations(self.corr.theta_mbs[self.nodes[active]], U)
            st = solve_omega_fixed_point(theta_tilde, cfg.rzf_alpha, N)
            omega[active] = st.omega
        keep = active[omega[active] > OMEGA_MIN]
        inter = inst.eps_mbs @ beta if S else np.zeros(self.K)
        n_eff = np.zeros(self.K)
        n_eff[keep] = (1.0 - self.tau_sq[keep]) / (1.0 + inter[keep])
        return _Schedule(keep, beta, sc_users, U, n_itf, omega, n_eff, theta_tilde,
                         relaxed.iterations, relaxed.objective)

    # one slot ---------------------------------------------------------------
    def step(self, record: bool = False) -> Optional[SlotReport]:
        cfg = self.cfg
        if self.schedule is None or self.t % cfg.schedule_period == 0:
            self._reschedule()
        sch = self.schedule
        M, S, K = self.M, self.S, self.K
        state = self.state
        phi = select_auxiliary(state.Y, state.D, cfg.lyapunov_nu, self.omega_w, self.a_max, M,
                               cfg.utility_offset)
        A = state.Q + state.Y
        p = np.zeros(K)
        kkt_res = 0.0
        if sch.active.size:
            res = kkt_power_allocation(A[sch.active], sch.n_eff[sch.active], sch.omega[sch.active],
                                       cfg.num_mbs_antennas, cfg.p_mbs)
            p[sch.active] = res.p
            kkt_res = max(res.stationarity, res.feasibility, res.complementarity)
            self.max_kkt = max(self.max_kkt, kkt_res)
        draw = draw_channels(self.corr, cfg, self.fading_rng, self.nodes, self.tau_sq)
        l = np.zeros(K)
        l[sch.active] = 1.0
        T = None
        if sch.active.size:
            T, _ = build_rzf_T(draw.h_mbs_est[sch.active], sch.U, cfg.rzf_alpha, p[sch.active], cfg.p_mbs)
        Fs, p_user = [], np.zeros(S)
        sc_users = [list(u) for u in sch.sc_users]
        for s in range(S):
            users = sc_users[s]
            if sch.beta[s] and users:
                F, kept, pu, _ = build_zf_F(draw.h_sc[s, users], cfg.p_sc)
                sc_users[s] = [users[i] for i in kept]
                Fs.append(F)
                p_user[s] = pu
            else:
                Fs.append(np.zeros((cfg.sc_tx_antennas, 0), dtype=complex))
                sc_users[s] = []
        beta_full = np.zeros(self.corr.num_scs, int)
        beta_full[:S] = sch.beta
        dec = ControlDecision(self.nodes, l, sch.beta if S else np.zeros(0, int), sc_users, p,
                              sch.U, T, Fs, p_user, sch.n_itf, M + cfg.num_scs, M)
        sinr = exact_sinrs(draw, dec, cfg.p_sc)
        bw, slot = cfg.bandwidth_hz, cfg.slot_duration
        r_mbs = np.zeros(K)
        r_mbs[sch.active] = rate_from_sinr(sinr.gamma_mbs[sch.active], bw, slot, self.factor)
        offered = r_mbs.copy()
        served = np.minimum(state.Q, r_mbs)
        delivered_now = np.zeros(self.n_ue)
        delivered_now[:M] = served[:M]
        sc_service = np.zeros(S)
        if self.homnet:
            delivered_now[M:] = served[M:]
        else:
            for s in range(S):
                k = M + s
                backhaul = r_mbs[k]
                sue_use = min(state.Q[k], backhaul)
                left = backhaul - sue_use
                access = dict(zip(sc_users[s], rate_from_sinr(sinr.gamma_sc[s], bw, slot, self.factor)))
                off_total = 0.0
                for m in sc_users[s]:
                    if m >= M:
                        continue
                    cap = min(access[m], left)
                    offered[m] += cap
                    got = min(cap, state.Q[m] - served[m])
                    served[m] += got
                    delivered_now[m] += got
                    left -= got
                    off_total += got
                offered[k] = backhaul - off_total
                self.offloaded_bits += off_total
                served[k] = sue_use
                self.relay[s] += sue_use
                sue = self.corr.sue_node(s)
                r_sue = access.get(sue, 0.0)
                out = min(self.relay[s], r_sue)
                self.relay[s] -= out
                delivered_now[sue] += out
                sc_service[s] = r_sue + (off_total if cfg.drain_backhaul_with_offload else 0.0)
        self.fd_slots += int(np.any(sch.beta)) if S else 0
        a = self.arrivals.next()
        new_state = update_queues(state, a, offered, phi, sc_service, M)
        self.delivered += delivered_now
        self.state = new_state
        self.queue_trace.append(float(np.mean(new_state.Q)))
        viol = check_theorem2_bounds(new_state, self.bounds)
        self.bound_violations += sum(len(v) for v in viol.values())
        report = None
        if record:
            det = np.zeros(K)
            det[sch.active] = rate_from_sinr(p[sch.active] * sch.n_eff[sch.active], bw, slot, self.factor)
            report = SlotReport(self.t, sch.active.copy(), sch.beta.copy(), p, sch.n_itf, offered, det,
                                new_state.Q.copy(), new_state.Y.copy(), new_state.D.copy(), phi,
                                sch.iterations, sch.objective, kkt_res)
        self.t += 1
        return report

    def metrics(self) -> RunMetrics:
        n = max(self.t, 1)
        thr = self.delivered / n
        omega = self.cfg.weights(self.n_ue)
        m = compute_metrics(thr, omega, self.queue_trace, self.cfg.utility_offset) if self.t else \
            compute_metrics(np.zeros(0), omega, [], self.cfg.utility_offset)
        return RunMetrics(m["avg_ut"], m["cell_edge_ut"], m["total_network_utility"],
                          m["avg_queue_length"], thr if self.t else np.zeros(0), self.bound_violations,
                          self.constraint_violations, self.max_kkt, list(self.sca_iterations), self.t,
                          self.offloaded_bits, self.fd_slots / n)


def run_drop(cfg: SystemConfig, mode="hybrid", n_slots: int = 100, drop: int = 0,
             record: bool = False):
    """Simulate one drop. Returns ``(slot_reports, metrics)``."""
    if n_slots < 0:
        raise ConfigError("n_slots must be >= 0")
    sim = DropSimulator(cfg, mode, drop)
    reports = []
    for _ in range(n_slots):
        rep = sim.step(record)
        if record:
            reports.append(rep)
    return reports, sim.metrics()


# ----------------------------------------------------------------- sweeps
METRIC_FIELDS = ["avg_ut", "cell_edge_ut", "total_network_utility", "avg_queue_length"]


def _aggregate(values) -> tuple:
    v = np.asarray(values, float)
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def run_drops(cfg, mode, n_slots, drops) -> List[RunMetrics]:
    return [run_drop(cfg, mode, n_slots, d)[1] for d in range(drops)]


def summary_rows(label: dict, mode, metrics: List[RunMetrics]) -> List[dict]:
    rows = []
    for name in METRIC_FIELDS:
        mean, se = _aggregate([getattr(m, name) for m in metrics])
        rows.append({**label, "mode": BaselineMode(mode).value, "metric": name, "mean": mean,
                     "stderr": se, "drops": len(metrics)})
    return rows


def density_config(cfg: SystemConfig, num_scs: int) -> SystemConfig:
    """Desk-scale density point: M = 1.5 S (rounded), N = 2 K."""
    M = int(round(1.5 * num_scs))
    return cfg.replace(num_scs=num_scs, num_mues=M, num_mbs_antennas=2 * (M + num_scs))


def sweep_density(cfg, densities=(2, 4, 8, 16), modes=tuple(BaselineMode), drops=20, n_slots=200):
    rows = []
    for S in densities:
        c = density_config(cfg, S)
        for mode in modes:
            rows += summary_rows({"num_scs": S, "num_mues": c.num_mues, "num_mbs_antennas": c.num_mbs_antennas},
                              mode, run_drops(c, mode, n_slots, drops))
    return rows


def sweep_antennas(cfg, antennas=(12, 24, 48, 96), modes=tuple(BaselineMode), drops=20, n_slots=200):
    rows = []
    for N in antennas:
        c = cfg.replace(num_mbs_antennas=N)
        for mode in modes:
            rows += summary_rows({"num_mbs_antennas": N}, mode, run_drops(c, mode, n_slots, drops))
    return rows


def sweep_power(cfg, powers_dbm=(20, 30, 41), carriers=("28GHz", "10GHz", "2.4GHz"),
                modes=tuple(BaselineMode), drops=20, n_slots=200):
    """Per carrier the arrival mean follows the carrier's rate and the slot duration."""
    rows = []
    for carrier in carriers:
        for p in powers_dbm:
            c = cfg.replace(carrier=carrier, p_mbs_dbm=float(p), arrival_mean=None, arrival_cap=None)
            for mode in modes:
                rows += summary_rows({"carrier": carrier, "p_mbs_dbm": float(p)}, mode,
                                  run_drops(c, mode, n_slots, drops))
    return rows


def pilot_config(cfg: SystemConfig, pilot_length: int) -> SystemConfig:
    if pilot_length < cfg.num_users:
        raise ConfigError("orthogonal pilots need pilot_length >= K")
    if pilot_length >= cfg.coherence_interval:
        raise ConfigError("pilot_length must be below the coherence interval")
    return cfg.replace(pilot_training=True, pilot_length=int(pilot_length))


def sweep_pilot(cfg, lengths=(20, 40, 60, 80, 100), modes=(BaselineMode.HYBRID,), drops=20, n_slots=200):
    rows = []
    for L in lengths:
        c = pilot_config(cfg, L)
        for mode in modes:
            rows += summary_rows({"pilot_length": int(L)}, mode, run_drops(c, mode, n_slots, drops))
    return rows


def validate_rmt(cfg, n_list=(12, 24, 48, 96), num_users: int = 12, n_draws: int = 10000,
                 snr_db: float = 10.0, tau: float = 0.0) -> List[dict]:
    """Deterministic vs Monte Carlo sum rate for unit-gain i.i.d. Rayleigh users."""
    rng = make_rng(cfg.seed, "validate-rmt")
    rows = rmt_validation_error(np.ones(num_users), n_list, n_draws, cfg.rzf_alpha,
                                10 ** (snr_db / 10), tau ** 2, rng)
    return [{"num_mbs_antennas": N, "num_users": K, "rate_mc": mc, "rate_det": det,
             "relative_error": err, "stderr": se} for N, K, mc, det, err, se in rows]


def random_instance(cfg, drop: int, rng=None):
    """Scheduling instance on a random drop with random queue weights."""
    rng = make_rng(cfg.seed, "sca-instance", drop) if rng is None else rng
    topo = generate_topology(cfg, drop)
    corr = build_correlations(topo, cfg, drop)
    nodes = corr.mbs_user_nodes()
    tau = np.r_[cfg.tau_sq_mues(), np.zeros(cfg.num_scs)]
    stats = scheduling_stats(corr, cfg, nodes, tau)
    scale = 10.0 * cfg.mean_arrival
    A = rng.uniform(0, scale, nodes.size)
    D = rng.uniform(0, scale, cfg.num_scs)
    return build_instance(A, D, stats, cfg)


def sca_cdf(cfg, n_instances: int = 100) -> List[dict]:
    """SCA iteration counts and monotonicity on random instances."""
    rows = []
    for i in range(n_instances):
        inst = random_instance(cfg, i)
        sol = sca_iterate(inst, cfg.sca_tol, cfg.sca_max_iter)
        h = np.asarray(sol.history)
        inc = np.diff(h) - 1e-9 * np.maximum(1.0, np.abs(h[:-1]))
        rows.append({"instance": i, "iterations": sol.iterations, "objective": sol.objective,
                     "monotone": int(not np.any(inc > 0))})
    return rows


def iteration_cdf(rows) -> List[dict]:
    its = np.array([r["iterations"] for r in rows])
    return [{"iterations": int(k), "cdf": float(np.mean(its <= k))} for k in range(1, int(its.max(initial=1)) + 1)]


# ---------------------------------------------------------------- emission
def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def table_to_csv(rows: List[dict], columns: Optional[Sequence[str]] = None) -> str:
    """CSV text with every float at 9 significant digits (header only when empty)."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
    return buf.getvalue()


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def slot_log_rows(reports: List[SlotReport], num_mues: int) -> List[dict]:
    """Long-format per-slot queue snapshot: (t, k, Q, Y, D, phi, p)."""
    rows = []
    for rep in reports:
        for k in range(rep.Q.size):
            s = k - num_mues
            D = float(rep.D[s]) if 0 <= s < rep.D.size else 0.0
            rows.append({"t": rep.t, "k": k, "Q": float(rep.Q[k]), "Y": float(rep.Y[k]), "D": D,
                         "phi": float(rep.phi[k]), "p": float(rep.p[k])})
    return rows


def version_string(cfg: SystemConfig) -> str:
    return f"{__version__}-cfg.{cfg.digest()[:12]}"


def emit_results(out_dir, tables: Dict[str, List[dict]], cfg: SystemConfig, command: str,
                 extra: Optional[dict] = None) -> Dict[str, str]:
    """Write one CSV per table and a JSON manifest; returns file paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    digests = {}
    for name, rows in sorted(tables.items()):
        text = table_to_csv(rows)
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths[name] = path
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    manifest = {
        "command": command,
        "version": version_string(cfg),
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "files": {k: os.path.basename(v) for k, v in paths.items()},
        "sha256": digests,
    }
    if extra:
        manifest.update(extra)
    mpath = os.path.join(out_dir, "manifest.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=format_value)
        fh.write("\n")
    paths["manifest"] = mpath
    return paths
