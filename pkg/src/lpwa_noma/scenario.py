"""Network geometry, seeded randomness and per-slot channel draws."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .airtime import ConfigError, ToaSet, build_toa_set
from .energy import EhSource, NonlinearRF, Solar, default_beacon_positions, harvest_rate

STREAMS = ("placement", "fading", "eh_fading", "solar_angle")
INTERFERENCE_SCENARIOS = ("none", "co_sf", "co_inter_sf", "custom")


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to draw one network realisation.

    Powers are in watts, distances in metres, times in seconds. The
    ``correlation_matrix`` is only read for the ``custom`` interference
    scenario; the named scenarios build their own.
    """

    num_nodes: int = 200
    radius: float = 250.0
    num_slots: int = 4
    duty_cycle: float = 0.01
    bandwidth: float = 125e3
    num_toa_classes: int = 6
    num_symbols: int = 10
    base_sf: int = 7
    pathloss_exp: float = 3.0
    pathloss_exp_beacon: float = 3.0
    max_tx_power: float = float(dbm_to_watt(14.0))
    noise_figure_db: float = 6.0
    eh_source: EhSource = field(default_factory=NonlinearRF)
    interference: str = "co_inter_sf"
    inter_sf_correlation: float = 0.1
    correlation_matrix: tuple[tuple[float, ...], ...] | None = None
    sensitivity_dbm: float = -137.0
    seed: int = 0
    min_distance: float = 1.0

    def __post_init__(self):
        if self.num_nodes < 0:
            raise ConfigError("num_nodes must be >= 0")
        if self.num_slots < 1:
            raise ConfigError("num_slots must be >= 1")
        if self.num_toa_classes < 1:
            raise ConfigError("num_toa_classes must be >= 1")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ConfigError("duty_cycle must lie in (0, 1]")
        if self.radius <= 0 or self.min_distance <= 0 or self.min_distance > self.radius:
            raise ConfigError("need 0 < min_distance <= radius")
        if self.pathloss_exp < 0 or self.pathloss_exp_beacon < 0:
            raise ConfigError("path-loss exponents must be non-negative")
        if self.max_tx_power <= 0:
            raise ConfigError("max_tx_power must be positive")
        if self.interference not in INTERFERENCE_SCENARIOS:
            raise ConfigError(f"unknown interference scenario {self.interference!r}")
        if not 0.0 <= self.inter_sf_correlation < 1.0:
            raise ConfigError("inter_sf_correlation must lie in [0, 1)")
        if self.interference == "custom":
            if self.correlation_matrix is None:
                raise ConfigError("custom interference needs a correlation_matrix")
            _check_correlation(np.asarray(self.correlation_matrix, dtype=float), self.num_toa_classes)
        build_toa_set(self)  # airtime ladder must fit in one slot

    @classmethod
    def from_density(cls, density: float, radius: float = 250.0, **kwargs) -> "ScenarioConfig":
        """Config whose node count matches ``density`` nodes/km² over the disk."""
        return cls(num_nodes=nodes_for_density(density, radius), radius=radius, **kwargs)

    @property
    def density(self) -> float:
        return self.num_nodes / (math.pi * self.radius**2 / 1e6)

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def correlation(self) -> np.ndarray:
        """Waveform correlation between two *distinct* nodes, by class pair."""
        M = self.num_toa_classes
        if self.interference == "none":
            return np.zeros((M, M))
        if self.interference == "co_sf":
            return np.eye(M)
        if self.interference == "co_inter_sf":
            xi = np.full((M, M), self.inter_sf_correlation)
            np.fill_diagonal(xi, 1.0)
            return xi
        return np.asarray(self.correlation_matrix, dtype=float)


def _check_correlation(xi, M):
    if xi.shape != (M, M):
        raise ConfigError(f"correlation_matrix must be {M}x{M}, got {xi.shape}")
    if not np.allclose(np.diag(xi), 1.0):
        raise ConfigError("correlation_matrix diagonal must be 1")
    off = xi[~np.eye(M, dtype=bool)]
    if np.any(off < 0) or np.any(off >= 1):
        raise ConfigError("off-diagonal correlations must lie in [0, 1)")


def nodes_for_density(density: float, radius: float) -> int:
    return int(round(density * math.pi * radius**2 / 1e6))


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per randomness source, all derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


@dataclass(frozen=True)
class NodeState:
    """Arrays describing all nodes of one realisation.

    ``gain`` is the node-to-gateway power gain per slot and ``eh_fading``
    the beacon-to-node fading (RF sources only).
    """

    positions: np.ndarray  # (U, 2)
    distance: np.ndarray  # (U,)
    gain: np.ndarray | None = None  # (U, K)
    eh_fading: np.ndarray | None = None  # (N_b, U, K)
    beacon_distance: np.ndarray | None = None  # (N_b, U)
    theta: np.ndarray | None = None  # (K,) solar incidence angle

    def __len__(self):
        return len(self.distance)


def place_nodes(cfg: ScenarioConfig) -> NodeState:
    """Uniform positions on the disk around the gateway."""
    rng = rng_streams(cfg.seed)["placement"]
    U = cfg.num_nodes
    r = cfg.radius * np.sqrt(rng.random(U))
    phi = rng.uniform(0.0, 2 * np.pi, U)
    r = np.maximum(r, cfg.min_distance)
    pos = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    return NodeState(positions=pos, distance=r)


def channel_gain(fading, distance, pathloss_exp):
    return np.asarray(fading) * np.asarray(distance, dtype=float) ** (-pathloss_exp)


def draw_channels(nodes: NodeState, cfg: ScenarioConfig) -> NodeState:
    """Rayleigh block fading with path loss, plus whatever the EH source needs."""
    streams = rng_streams(cfg.seed)
    U, K = len(nodes), cfg.num_slots
    h = streams["fading"].exponential(1.0, size=(U, K))
    gain = channel_gain(h, nodes.distance[:, None], cfg.pathloss_exp)

    src = cfg.eh_source
    eh_fading = beacon_distance = theta = None
    if isinstance(src, Solar):
        theta = streams["solar_angle"].uniform(0.0, src.max_angle, size=K)
    else:
        beacons = (np.asarray(src.beacon_positions, dtype=float).reshape(-1, 2)
                   if src.beacon_positions is not None
                   else default_beacon_positions(src.num_beacons, cfg.radius))
        diff = nodes.positions[None, :, :] - beacons[:, None, :]
        beacon_distance = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), cfg.min_distance)
        eh_fading = streams["eh_fading"].exponential(1.0, size=(len(beacons), U, K))
    return replace(nodes, gain=gain, eh_fading=eh_fading, beacon_distance=beacon_distance, theta=theta)


def noise_power(cfg: ScenarioConfig) -> float:
    """Thermal noise over the channel bandwidth, watts."""
    if cfg.bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    return float(dbm_to_watt(-174.0 + cfg.noise_figure_db + 10 * np.log10(cfg.bandwidth)))


def sic_order(gain_k):
    """Decoding order for one slot: strongest gain first, ties by node id."""
    gain_k = np.asarray(gain_k)
    return np.lexsort((np.arange(len(gain_k)), -gain_k))


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    toa_set: ToaSet
    nodes: NodeState
    harvest: np.ndarray  # (U, K) harvest rate, watts
    noise: float
    correlation: np.ndarray  # (M, M)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_slots(self):
        return self.config.num_slots


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    toa = build_toa_set(cfg)
    nodes = draw_channels(place_nodes(cfg), cfg)
    src = cfg.eh_source
    if isinstance(src, Solar):
        theta = np.broadcast_to(nodes.theta, (len(nodes), cfg.num_slots))
        E = harvest_rate(src, theta=theta)
    else:
        E = harvest_rate(src, fading=nodes.eh_fading, beacon_distance=nodes.beacon_distance,
                         pathloss_exp=cfg.pathloss_exp_beacon)
    E = np.asarray(E, dtype=float).reshape(len(nodes), cfg.num_slots)
    return Scenario(cfg, toa, nodes, E, noise_power(cfg), cfg.correlation())
