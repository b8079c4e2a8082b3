"""Energy harvesting models and the per-node battery ledger.

Nodes follow harvest-then-transmit: in every slot they harvest for
``tau`` seconds and, when scheduled, transmit for their time-on-air.
Harvest rates are in watts (energy per unit time). The ledger keeps the
budget in *power* units, i.e. harvested energy divided by the node's
airtime, so that the causality constraint compares like with like.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LinearRF:
    """RF harvesting with a constant conversion efficiency."""

    efficiency: float = 0.5
    num_beacons: int = 3
    beacon_power: float = 0.1
    beacon_positions: tuple[tuple[float, float], ...] | None = None

    kind = "rf_linear"

    def __post_init__(self):
        _check_rf(self)
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")

    def psi(self, x):
        return psi_linear(x, self.efficiency)


@dataclass(frozen=True)
class NonlinearRF:
    """Logistic (saturating) rectifier model.

    ``a`` is the charging-rate slope (1/W), ``b`` the turn-on input power
    (W) and ``max_power`` the saturation level (W).
    """

    a: float = 1500.0
    b: float = 0.0022
    max_power: float = 0.024
    num_beacons: int = 3
    beacon_power: float = 0.1
    beacon_positions: tuple[tuple[float, float], ...] | None = None

    kind = "rf_nonlinear"

    def __post_init__(self):
        _check_rf(self)
        if self.max_power <= 0:
            raise ValueError("max_power must be positive")

    def psi(self, x):
        return psi_nonlinear(x, self.a, self.b, self.max_power)


@dataclass(frozen=True)
class Solar:
    """Photovoltaic panel; the incidence angle is drawn per slot."""

    efficiency: float = 0.15
    area: float = 0.058 * 0.058
    irradiance: float = 1000.0
    max_angle: float = np.pi / 2

    kind = "solar"

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.area < 0 or self.irradiance < 0:
            raise ValueError("area and irradiance must be non-negative")
        if not 0.0 <= self.max_angle <= np.pi / 2:
            raise ValueError("max_angle must lie in [0, pi/2]")


EhSource = LinearRF | NonlinearRF | Solar


def _check_rf(src):
    if src.num_beacons < 0:
        raise ValueError("num_beacons must be >= 0")
    if src.beacon_power < 0:
        raise ValueError("beacon_power must be >= 0")
    if src.beacon_positions is not None and len(src.beacon_positions) != src.num_beacons:
        raise ValueError("beacon_positions must list exactly num_beacons points")


def make_source(kind: str, **params) -> EhSource:
    """Build a harvesting model from its tag (``rf_linear``, ``rf_nonlinear``, ``solar``)."""
    classes = {c.kind: c for c in (LinearRF, NonlinearRF, Solar)}
    try:
        cls = classes[kind]
    except KeyError:
        raise ValueError(f"unknown EH source {kind!r}; expected one of {sorted(classes)}") from None
    return cls(**params)


def psi_linear(x, efficiency):
    return efficiency * np.asarray(x, dtype=float)


def psi_nonlinear(x, a, b, max_power):
    """Harvested power for received power ``x`` under the logistic model.

    The logistic curve is shifted and rescaled so that zero input gives
    zero output and the output saturates at ``max_power``.
    """
    x = np.asarray(x, dtype=float)
    omega = 1.0 / (1.0 + np.exp(a * b))
    beta = max_power / (1.0 + np.exp(-a * (x - b)))
    return (beta - max_power * omega) / (1.0 - omega)


def default_beacon_positions(num_beacons: int, radius: float) -> np.ndarray:
    """Beacons evenly spaced on a circle of half the cell radius."""
    ang = 2 * np.pi * np.arange(num_beacons) / max(num_beacons, 1)
    return 0.5 * radius * np.column_stack([np.cos(ang), np.sin(ang)])


def rf_harvest_rate(source, fading, beacon_distance, pathloss_exp):
    """Per-node, per-slot RF harvest rate summed over beacons.

    Parameters
    ----------
    source : LinearRF or NonlinearRF
    fading : ndarray, shape (N_b, U, K)
        Small-scale power fading between each beacon and node.
    beacon_distance : ndarray, shape (N_b, U)
    pathloss_exp : float

    Returns
    -------
    ndarray, shape (U, K), watts
    """
    fading = np.asarray(fading, dtype=float)
    if fading.shape[0] == 0:
        return np.zeros(fading.shape[1:])
    received = source.beacon_power * fading * beacon_distance[:, :, None] ** (-pathloss_exp)
    return source.psi(received).sum(axis=0)


def solar_harvest_rate(source: Solar, theta):
    return source.efficiency * source.area * source.irradiance * np.cos(np.asarray(theta, dtype=float))


def harvest_rate(source, *, fading=None, beacon_distance=None, pathloss_exp=None, theta=None):
    """Dispatch on the source type; see :func:`rf_harvest_rate` and :func:`solar_harvest_rate`."""
    if isinstance(source, Solar):
        return solar_harvest_rate(source, theta)
    return rf_harvest_rate(source, fading, beacon_distance, pathloss_exp)


def max_eh_time(rho, airtime, slot_duration):
    """Longest admissible harvesting time: the whole slot, minus the airtime if transmitting."""
    return slot_duration - np.asarray(rho) * np.asarray(airtime, dtype=float)


@dataclass
class EnergyLedger:
    """Harvest/spend bookkeeping for every node over the slot horizon.

    ``tau`` and ``power`` are filled slot by slot by the allocator; entries
    for future slots are zero until recorded.
    """

    harvest: np.ndarray  # (U, K) harvest rate E_n(k), watts
    airtime: np.ndarray  # (U,) time-on-air used to express budgets as power
    rho: np.ndarray  # (U, K) transmission indicator
    tau: np.ndarray = field(default=None)
    power: np.ndarray = field(default=None)

    def __post_init__(self):
        self.harvest = np.asarray(self.harvest, dtype=float)
        self.airtime = np.asarray(self.airtime, dtype=float)
        self.rho = np.asarray(self.rho, dtype=np.int8)
        if self.tau is None:
            self.tau = np.zeros_like(self.harvest)
        if self.power is None:
            self.power = np.zeros_like(self.harvest)

    @property
    def num_slots(self):
        return self.harvest.shape[1]

    def harvested_power(self):
        """P_h = tau * E / T_a for every node and slot."""
        return self.tau * self.harvest / self.airtime[:, None]

    def carried_power(self, k):
        """Budget carried into slot ``k`` (0-based): past harvest minus past spending."""
        ph = self.tau[:, :k] * self.harvest[:, :k] / self.airtime[:, None]
        spent = (self.rho[:, :k] * self.power[:, :k]).sum(axis=1)
        return ph.sum(axis=1) - spent

    def available_power(self, k, tau_k=None):
        """Available power in slot ``k`` given this slot's harvesting time.

        ``tau_k`` overrides the recorded harvesting time for slot ``k``.
        """
        tau_k = self.tau[:, k] if tau_k is None else np.asarray(tau_k, dtype=float)
        value = self.carried_power(k) + tau_k * self.harvest[:, k] / self.airtime
        if np.any(value < -1e-12 * np.maximum(1.0, np.abs(value).max())):
            raise RuntimeError("negative available power: causality was violated upstream")
        return np.maximum(value, 0.0)

    def residual_energy(self):
        """Energy left in each battery after the horizon, joules."""
        harvested = (self.tau * self.harvest).sum(axis=1)
        spent = (self.rho * self.power).sum(axis=1) * self.airtime
        return harvested - spent


def available_power(ledger: EnergyLedger, node: int, slot: int) -> float:
    return float(ledger.available_power(slot)[node])
