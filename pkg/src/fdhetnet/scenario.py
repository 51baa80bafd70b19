"""Network topology, path loss, link states and traffic arrivals."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import ConfigError, SystemConfig, get_carrier, make_rng


@dataclass
class Topology:
    """Node positions in meters, MBS at the centre of the square area."""

    mbs_position: np.ndarray
    sc_positions: np.ndarray    # (S, 2)
    mue_positions: np.ndarray   # (M, 2)
    sue_positions: np.ndarray   # (S, 2), SUE s belongs to SC s
    min_mbs_mue_distance: float
    area_side: float

    @property
    def num_scs(self) -> int:
        return self.sc_positions.shape[0]

    @property
    def num_mues(self) -> int:
        return self.mue_positions.shape[0]


class LinkKind(Enum):
    LOS = "LOS"
    NLOS = "NLOS"


@dataclass(frozen=True)
class LinkState:
    kind: LinkKind
    pathloss_db: float


def path_loss_db(carrier, distance) -> np.ndarray:
    """LOS path loss of the carrier's distance law, in dB.

    Raises ``ValueError`` for distances below 1 m where the law is not valid.
    """
    c = get_carrier(carrier) if isinstance(carrier, str) else carrier
    d = np.asarray(distance, dtype=float)
    if np.any(d < 1.0) or np.any(~np.isfinite(d)):
        raise ValueError("path loss is defined for distances >= 1 m")
    out = c.pl_intercept_db + c.pl_slope_db * np.log10(d)
    return out if out.ndim else float(out)


def los_probability(distance, blockage_distance: float = 200.0):
    return np.exp(-np.asarray(distance, dtype=float) / blockage_distance)


def draw_link_state(carrier, distance: float, blockage_on: bool, rng=None,
                    blockage_distance: float = 200.0, nlos_penalty_db: float = 20.0) -> LinkState:
    """LOS/NLOS state and path loss of a single link."""
    pl = path_loss_db(carrier, distance)
    if not blockage_on:
        return LinkState(LinkKind.LOS, pl)
    if rng is None:
        raise ValueError("an rng is required when the blockage model is on")
    if rng.random() < los_probability(distance, blockage_distance):
        return LinkState(LinkKind.LOS, pl)
    return LinkState(LinkKind.NLOS, pl + nlos_penalty_db)


def _uniform_in_square(rng, side, n):
    return rng.uniform(0.0, side, size=(n, 2))


def generate_topology(cfg: SystemConfig, drop: int = 0) -> Topology:
    """Random deployment for one drop.

    SCs and MUEs are uniform in the square with at least
    ``min_mbs_distance`` to the MBS; MUEs also keep ``min_sc_ue_distance``
    from every SC. Each SUE is uniform in an annulus around its SC.
    """
    side = float(cfg.area_side)
    centre = np.array([side / 2, side / 2])
    if cfg.min_mbs_distance >= side / np.sqrt(2.0) * 0.95:
        raise ConfigError("area too small to place users outside the MBS exclusion radius")
    rng = make_rng(cfg.seed, "topology", drop)
    max_tries = 10000

    def place(n, extra_ok=None):
        pts = np.empty((n, 2))
        for i in range(n):
            for _ in range(max_tries):
                p = _uniform_in_square(rng, side, 1)[0]
                if np.linalg.norm(p - centre) < cfg.min_mbs_distance:
                    continue
                if extra_ok is not None and not extra_ok(p):
                    continue
                pts[i] = p
                break
            else:
                raise ConfigError("could not place nodes with the configured distance limits")
        return pts

    sc = place(cfg.num_scs)

    def far_from_scs(p):
        return sc.size == 0 or np.min(np.linalg.norm(sc - p, axis=1)) >= cfg.min_sc_ue_distance

    mue = place(cfg.num_mues, far_from_scs)
    sue = np.empty((cfg.num_scs, 2))
    for s in range(cfg.num_scs):
        for _ in range(max_tries):
            r = np.sqrt(rng.uniform(cfg.min_sc_ue_distance ** 2, cfg.sue_radius ** 2))
            a = rng.uniform(0, 2 * np.pi)
            p = sc[s] + r * np.array([np.cos(a), np.sin(a)])
            if not (0.0 <= p[0] <= side and 0.0 <= p[1] <= side):
                continue
            if np.linalg.norm(p - centre) < cfg.min_mbs_distance or not far_from_scs(p):
                continue
            sue[s] = p
            break
        else:
            raise ConfigError("could not place a SUE around its SC")
    return Topology(centre, sc, mue, sue, float(cfg.min_mbs_distance), side)


def sample_arrivals(cfg: SystemConfig, rng, n_users: int, mean=None, cap=None) -> np.ndarray:
    """Truncated Poisson arrivals in bits for one slot."""
    mean = cfg.mean_arrival if mean is None else mean
    cap = cfg.max_arrival if cap is None else cap
    if mean <= 0:
        return np.zeros(n_users)
    return np.minimum(rng.poisson(mean, size=n_users).astype(float), cap)


class ArrivalProcess:
    """Seeded i.i.d. arrival stream; slot ``t`` always yields the same draw."""

    def __init__(self, cfg: SystemConfig, n_users: int, drop: int = 0, means=None):
        self.cfg = cfg
        self.n_users = n_users
        self.rng = make_rng(cfg.seed, "arrivals", drop)
        self.means = np.full(n_users, cfg.mean_arrival) if means is None else np.asarray(means, float)

    def next(self) -> np.ndarray:
        cap = self.cfg.max_arrival
        lam = np.maximum(self.means, 0.0)
        return np.minimum(self.rng.poisson(lam).astype(float), cap)
