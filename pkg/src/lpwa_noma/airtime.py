"""Time-on-air classes, the slot grid and duty-cycled transmission schedules.

Class indices are 0-based here: class ``i`` has airtime ``2**i`` times the
shortest one and transmits in 1-based slots that are multiples of ``2**i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Raised when a scenario cannot be realised (bad ranges, broken timing)."""


@dataclass(frozen=True)
class ToaSet:
    toas: np.ndarray  # t_a,i, seconds
    time_offs: np.ndarray  # silent time after each packet
    packet_durations: np.ndarray  # airtime plus off time
    slot_duration: float
    duty_cycle: float
    spreading_factors: np.ndarray

    @property
    def num_classes(self):
        return len(self.toas)

    def period(self, toa_class):
        """Slots between two transmissions of a class (``T_a / t_a1``)."""
        return np.left_shift(1, np.asarray(toa_class))


def symbol_duration(spreading_factor, bandwidth):
    return 2.0 ** spreading_factor / bandwidth


def build_toa_set(cfg) -> ToaSet:
    """Derive the airtime ladder and slot length from a scenario config.

    Uses the LoRa instantiation: class ``i`` runs at spreading factor
    ``base_sf + i`` so symbol times, and hence airtimes, double per class.
    """
    if cfg.num_toa_classes < 1:
        raise ConfigError("need at least one time-on-air class")
    if cfg.bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    if cfg.num_symbols < 1:
        raise ConfigError("num_symbols must be >= 1")
    if not 0.0 < cfg.duty_cycle <= 1.0:
        raise ConfigError("duty_cycle must lie in (0, 1]")

    sf = cfg.base_sf + np.arange(cfg.num_toa_classes)
    toas = cfg.num_symbols * symbol_duration(sf, cfg.bandwidth)
    d = cfg.duty_cycle
    offs = (1.0 - d) / d * toas
    packets = toas / d
    slot = float(packets[0])
    total = float(toas.sum())
    if not total < slot:
        raise ConfigError(
            f"airtimes do not fit in one slot: sum of airtimes {total:.6g} s "
            f">= shortest packet duration {slot:.6g} s "
            f"(duty cycle {d}, {cfg.num_toa_classes} classes)"
        )
    return ToaSet(toas, offs, packets, slot, d, sf)


@dataclass(frozen=True)
class SlotSchedule:
    rho: np.ndarray  # (U, K) int8, 1 when the node transmits in the slot
    mu: np.ndarray  # (U, K) attempts made up to and including the slot
    max_attempts: np.ndarray  # (U,) a_n; zero for unassigned nodes
    window: float  # K * T_slot

    @property
    def num_slots(self):
        return self.rho.shape[1]


def build_schedule(toa_set: ToaSet, toa_class, num_slots: int) -> SlotSchedule:
    """Transmission indicators for every node.

    ``toa_class`` holds one class index per node; ``-1`` marks a node that
    was not admitted and therefore never transmits.
    """
    toa_class = np.asarray(toa_class, dtype=int)
    if num_slots < 1:
        raise ConfigError("num_slots must be >= 1")
    if np.any(toa_class >= toa_set.num_classes):
        raise ConfigError("toa class index out of range")
    k = np.arange(1, num_slots + 1)
    active = toa_class >= 0
    period = toa_set.period(np.where(active, toa_class, 0))
    rho = ((k[None, :] % period[:, None]) == 0) & active[:, None]
    rho = rho.astype(np.int8)
    mu = np.cumsum(rho, axis=1)

    window = num_slots * toa_set.slot_duration
    # T / T_a = K * (1/d) / 2**i; computed on the integer grid to dodge float floors
    per_window = np.floor(num_slots / (toa_set.duty_cycle * period) + 1e-9)
    max_attempts = np.where(active, toa_set.duty_cycle * per_window, 0.0)
    return SlotSchedule(rho, mu, max_attempts, window)


def unreachable_classes(toa_set: ToaSet, num_slots: int):
    """Class indices that never get a transmission slot within the horizon."""
    return [i for i in range(toa_set.num_classes) if (1 << i) > num_slots]

