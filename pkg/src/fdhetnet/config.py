"""System configuration, carrier tables and config-file loading.

All powers are stored in dBm and converted on demand. Queue and rate units
are bits per slot; the slot length is ``slot_duration`` seconds.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

BOLTZMANN_DBM_PER_HZ = -174.0


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails to produce a valid result."""


@dataclass(frozen=True)
class Carrier:
    name: str
    bandwidth_hz: float
    pl_intercept_db: float
    pl_slope_db: float
    arrival_rate_bps: float


CARRIERS = {
    "28GHz": Carrier("28GHz", 1e9, 61.4, 20.0, 1e9),
    "10GHz": Carrier("10GHz", 1e8, 55.25, 18.5, 1e8),
    "2.4GHz": Carrier("2.4GHz", 2e7, 17.0, 37.6, 2e7),
}


def get_carrier(name: str) -> Carrier:
    try:
        return CARRIERS[name]
    except KeyError:
        raise ConfigError(f"unknown carrier {name!r}; expected one of {sorted(CARRIERS)}")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class SystemConfig:
    """Scenario, channel, algorithm and sweep parameters.

    Defaults follow the desk-scale setup (4 SCs, 8 MUEs, 24 MBS antennas)
    with the 28 GHz carrier. ``arrival_mean`` and ``arrival_cap`` left at
    ``None`` are derived from the carrier and ``slot_duration``.
    """

    # topology
    num_mbs_antennas: int = 24
    num_mues: int = 8
    num_scs: int = 4
    sc_tx_antennas: int = 6
    sc_active_users: int = 2
    area_side: float = 500.0
    min_mbs_distance: float = 35.0
    min_sc_ue_distance: float = 3.0
    sue_radius: float = 30.0
    # radio
    carrier: str = "28GHz"
    bandwidth: Optional[float] = None
    p_mbs_dbm: float = 41.0
    p_sc_dbm: float = 32.0
    sc_antenna_gain_dbi: float = 5.0
    sc_gain_on_backhaul: bool = True
    noise_figure_db: float = 0.0
    gain_reference_distance: float = 100.0
    blockage: bool = False
    blockage_distance: float = 200.0
    nlos_penalty_db: float = 20.0
    planned_backhaul_los: bool = True
    correlation_profile: str = "multipath"
    correlation_rho: float = 0.5
    num_paths: int = 1
    angular_spread_deg: float = 10.0
    # algorithm
    fd_inr_threshold: float = 5e-3
    rzf_alpha: float = 1e-2
    lyapunov_nu: float = 2e6
    csi_error: float = 0.1
    csi_error_per_mue: Optional[Sequence[float]] = None
    utility_weights: Optional[Sequence[float]] = None
    utility_offset: float = 1e-4
    recovery_xi: float = 0.1
    sca_tol: float = 1e-4
    sca_max_iter: int = 20
    schedule_period: int = 10
    drain_backhaul_with_offload: bool = True
    # traffic
    slot_duration: float = 1e-6
    arrival_mean: Optional[float] = None
    arrival_cap: Optional[float] = None
    # pilot training
    pilot_training: bool = False
    pilot_length: int = 20
    coherence_interval: int = 350
    ul_snr: float = 1.0
    # reproducibility
    seed: int = 0

    def __post_init__(self):
        if self.csi_error_per_mue is not None:
            self.csi_error_per_mue = tuple(float(v) for v in self.csi_error_per_mue)
        if self.utility_weights is not None:
            self.utility_weights = tuple(float(v) for v in self.utility_weights)
        self.validate()

    # ------------------------------------------------------------------ derived
    @property
    def num_users(self) -> int:
        """K = M + S, the number of users the MBS can serve."""
        return self.num_mues + self.num_scs

    @property
    def carrier_info(self) -> Carrier:
        return get_carrier(self.carrier)

    @property
    def bandwidth_hz(self) -> float:
        return self.carrier_info.bandwidth_hz if self.bandwidth is None else float(self.bandwidth)

    @property
    def noise_dbm(self) -> float:
        return BOLTZMANN_DBM_PER_HZ + 10.0 * np.log10(self.bandwidth_hz) + self.noise_figure_db

    @property
    def p_mbs_watts(self) -> float:
        return dbm_to_watts(self.p_mbs_dbm)

    @property
    def p_sc_watts(self) -> float:
        return dbm_to_watts(self.p_sc_dbm)

    @property
    def reference_gain_db(self) -> float:
        """Path gain (dB, negative) at the reference distance under LOS."""
        c = self.carrier_info
        return -(c.pl_intercept_db + c.pl_slope_db * np.log10(self.gain_reference_distance))

    def normalized_power(self, p_dbm: float) -> float:
        """Transmit power in units of noise / reference path gain.

        Channel correlation matrices carry the path gain relative to the
        reference gain, so SINR = normalized power x relative gain.
        """
        return 10.0 ** ((p_dbm + self.reference_gain_db - self.noise_dbm) / 10.0)

    @property
    def p_mbs(self) -> float:
        return self.normalized_power(self.p_mbs_dbm)

    @property
    def p_sc(self) -> float:
        return self.normalized_power(self.p_sc_dbm)

    @property
    def mean_arrival(self) -> float:
        if self.arrival_mean is not None:
            return float(self.arrival_mean)
        return self.carrier_info.arrival_rate_bps * self.slot_duration

    @property
    def max_arrival(self) -> float:
        if self.arrival_cap is not None:
            return float(self.arrival_cap)
        return 5.0 * self.mean_arrival

    def tau_sq_mues(self, n: Optional[int] = None) -> np.ndarray:
        """Squared CSI error for each MBS-served UE (length ``n``, default M)."""
        n = self.num_mues if n is None else n
        if self.pilot_training:
            from .channel import pilot_error_tau_sq
            return np.full(n, pilot_error_tau_sq(self.pilot_length, self.ul_snr))
        if self.csi_error_per_mue is not None:
            vals = np.asarray(self.csi_error_per_mue, dtype=float)
            if vals.size < n:
                vals = np.concatenate([vals, np.full(n - vals.size, self.csi_error)])
            return vals[:n] ** 2
        return np.full(n, self.csi_error ** 2)

    def rate_factor(self) -> float:
        """Pre-log factor applied to every downlink rate."""
        if not self.pilot_training:
            return 1.0
        from .channel import coherence_rate_factor
        return coherence_rate_factor(self.pilot_length, self.coherence_interval)

    def weights(self, n: int) -> np.ndarray:
        if self.utility_weights is None:
            return np.ones(n)
        w = np.asarray(self.utility_weights, dtype=float)
        if w.size < n:
            w = np.concatenate([w, np.ones(n - w.size)])
        return w[:n]

    # --------------------------------------------------------------- checking
    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        for name in ("num_mbs_antennas", "sc_tx_antennas", "sc_active_users"):
            need(int(getattr(self, name)) >= 1, f"{name} must be >= 1")
        need(self.num_mues >= 0 and self.num_scs >= 0, "user counts must be non-negative")
        need(self.num_users >= 1, "at least one MBS user is required")
        need(self.num_mbs_antennas >= self.num_users,
             f"N={self.num_mbs_antennas} must be >= K=M+S={self.num_users}")
        need(self.sc_active_users <= self.sc_tx_antennas, "N_s_au must be <= N_s")
        get_carrier(self.carrier)
        need(self.bandwidth is None or self.bandwidth > 0, "bandwidth must be positive")
        need(np.isfinite(self.p_mbs_dbm) and np.isfinite(self.p_sc_dbm), "powers must be finite")
        need(self.fd_inr_threshold > 0, "fd_inr_threshold must be > 0")
        need(self.rzf_alpha > 0, "rzf_alpha must be > 0")
        need(self.lyapunov_nu > 0, "lyapunov_nu must be > 0")
        need(0.0 <= self.csi_error <= 1.0, "csi_error must lie in [0, 1]")
        if self.csi_error_per_mue is not None:
            need(all(0.0 <= v <= 1.0 for v in self.csi_error_per_mue), "csi errors must lie in [0, 1]")
        if self.utility_weights is not None:
            need(all(v >= 0 for v in self.utility_weights), "utility weights must be >= 0")
        need(self.area_side > 0 and self.min_mbs_distance >= 0, "bad geometry")
        need(self.min_sc_ue_distance >= 1.0, "min_sc_ue_distance must be >= 1 m")
        need(self.sue_radius >= self.min_sc_ue_distance, "sue_radius must exceed min_sc_ue_distance")
        need(self.slot_duration > 0, "slot_duration must be > 0")
        need(self.mean_arrival >= 0, "arrival_mean must be >= 0")
        need(self.max_arrival >= self.mean_arrival, "arrival_cap must be >= arrival_mean")
        need(self.correlation_profile in ("iid", "exponential", "multipath"),
             "correlation_profile must be iid, exponential or multipath")
        need(0.0 <= self.correlation_rho < 1.0, "correlation_rho must lie in [0, 1)")
        need(self.num_paths >= 1, "num_paths must be >= 1")
        need(0.0 < self.recovery_xi < 0.5, "recovery_xi must lie in (0, 0.5)")
        need(self.sca_tol > 0 and self.sca_max_iter >= 1, "bad SCA settings")
        need(self.schedule_period >= 1, "schedule_period must be >= 1")
        need(self.coherence_interval >= 1, "coherence_interval must be >= 1")
        need(self.ul_snr > 0, "ul_snr must be > 0")
        if self.pilot_training:
            need(0 <= self.pilot_length < self.coherence_interval,
                 "pilot_length must satisfy 0 <= tau_td < T_ci")
        need(self.blockage_distance > 0, "blockage_distance must be > 0")
        need(self.gain_reference_distance >= 1.0, "gain_reference_distance must be >= 1 m")

    # ------------------------------------------------------------ utilities
    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# Config-file sections. Every SystemConfig field belongs to exactly one.
SECTIONS = {
    "topology": ["num_mbs_antennas", "num_mues", "num_scs", "sc_tx_antennas",
                 "sc_active_users", "area_side", "min_mbs_distance",
                 "min_sc_ue_distance", "sue_radius"],
    "radio": ["carrier", "bandwidth", "p_mbs_dbm", "p_sc_dbm", "sc_antenna_gain_dbi",
              "sc_gain_on_backhaul", "noise_figure_db", "gain_reference_distance",
              "blockage", "blockage_distance", "nlos_penalty_db", "planned_backhaul_los",
              "correlation_profile", "correlation_rho", "num_paths", "angular_spread_deg"],
    "algorithm": ["fd_inr_threshold", "rzf_alpha", "lyapunov_nu", "csi_error",
                  "csi_error_per_mue", "utility_weights", "utility_offset", "recovery_xi",
                  "sca_tol", "sca_max_iter", "schedule_period",
                  "drain_backhaul_with_offload"],
    "traffic": ["slot_duration", "arrival_mean", "arrival_cap"],
    "pilot": ["pilot_training", "pilot_length", "coherence_interval", "ul_snr"],
    "run": ["seed"],
}

_FIELD_TYPES = {f.name: f for f in dataclasses.fields(SystemConfig)}


def _parse_value(name: str, raw: str):
    default = _FIELD_TYPES[name].default
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if name in ("csi_error_per_mue", "utility_weights"):
        return tuple(float(x) for x in raw.replace(",", " ").split())
    if name in ("carrier", "correlation_profile"):
        return raw
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    return float(raw)


def parse_config_text(text: str, **overrides) -> SystemConfig:
    """Build a SystemConfig from INI-style text with the sections of ``SECTIONS``."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}")
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                values[key] = _parse_value(key, raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}")
    values.update(overrides)
    try:
        return SystemConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))


def load_config(path, **overrides) -> SystemConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    return parse_config_text(text, **overrides)


def dump_config(cfg: SystemConfig) -> str:
    """Serialize a SystemConfig back to the INI format read by ``load_config``."""
    lines = []
    d = cfg.to_dict()
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            v = d[key]
            if v is None:
                s = "none"
            elif isinstance(v, list):
                s = " ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{key} = {s}")
        lines.append("")
    return "\n".join(lines)


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Independent, reproducible generator for a named stream of a seed.

    ``stream`` items may be strings or integers (e.g. a drop index).
    """
    key = []
    for item in stream:
        if isinstance(item, str):
            key.append(zlib.crc32(item.encode()))
        else:
            key.append(int(item))
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=tuple(key))
    return np.random.default_rng(ss)
