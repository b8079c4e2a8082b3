"""Packet overlap, NOMA/SIC SINR and time-averaged rates.

Within a slot, a node that harvests for ``tau`` seconds transmits over
``[tau, tau + T_a]``; two packets interfere in proportion to their overlap
and to the correlation of their waveforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import sic_order

LN2 = np.log(2.0)


def collision_time(tau_n, tau_m, ta_n, ta_m):
    """Overlap (seconds) of two packets given their harvesting times and airtimes."""
    overlap = np.minimum(ta_n, ta_m) - np.abs(np.asarray(tau_n) - np.asarray(tau_m))
    return np.maximum(overlap, 0.0)


def node_correlation(toa_class, xi_class):
    """Node-pair waveform correlation: class-pair value off the diagonal, 1 on it."""
    toa_class = np.asarray(toa_class)
    xi = np.asarray(xi_class, dtype=float)[np.ix_(toa_class, toa_class)]
    np.fill_diagonal(xi, 1.0)
    return xi


@dataclass(frozen=True)
class CollisionMatrix:
    col: np.ndarray  # (S, S) seconds
    eta: np.ndarray  # (S, S) unitless


def collisions(tau, airtime, xi):
    """Overlap and normalised interference weight among concurrent transmitters.

    All arguments refer to the same set of transmitting nodes.
    """
    tau = np.asarray(tau, dtype=float)
    airtime = np.asarray(airtime, dtype=float)
    col = collision_time(tau[:, None], tau[None, :], airtime[:, None], airtime[None, :])
    eta = col / airtime[:, None] * xi
    return CollisionMatrix(col, eta)


def decode_mask(order, noma=True):
    """``mask[n, m]`` is true when ``m`` still interferes while ``n`` is decoded.

    With SIC only the weaker nodes, decoded later, remain; without NOMA every
    other node does.
    """
    S = len(order)
    if not noma:
        return ~np.eye(S, dtype=bool)
    rank = np.empty(S, dtype=int)
    rank[order] = np.arange(S)
    return rank[None, :] > rank[:, None]


def coupling(eta, order, noma=True):
    """Interference coefficients ``W[n, m]`` entering node ``n``'s SINR denominator."""
    return np.where(decode_mask(order, noma), eta, 0.0)


def sinr(power, gain, W, noise):
    """Per-node SINR for one slot, every argument restricted to transmitters."""
    rx = np.asarray(power) * np.asarray(gain)
    return rx / (W @ rx + noise)


def slot_objective(power, gain, W, noise, weight):
    """Weighted sum of log2(1 + SINR) over the slot's transmitters."""
    return float(np.dot(weight, np.log1p(sinr(power, gain, W, noise)) / LN2))


@dataclass(frozen=True)
class SlotLink:
    """Transmitters of one slot and their coupling, in node-index order."""

    nodes: np.ndarray  # indices of transmitting nodes
    gain: np.ndarray
    airtime: np.ndarray
    xi: np.ndarray  # node-pair correlation among ``nodes``
    order: np.ndarray  # SIC order as positions into ``nodes``
    mask: np.ndarray  # decode_mask(order, noma)

    def weights(self, tau):
        return np.where(self.mask, collisions(tau, self.airtime, self.xi).eta, 0.0)


def slot_link(k, scenario, schedule, toa_class, noma=True) -> SlotLink:
    nodes = np.flatnonzero(schedule.rho[:, k])
    gain = scenario.nodes.gain[nodes, k]
    cls = np.asarray(toa_class)[nodes]
    airtime = scenario.toa_set.toas[cls] if len(nodes) else np.zeros(0)
    xi = node_correlation(cls, scenario.correlation)
    order = sic_order(gain)
    return SlotLink(nodes, gain, airtime, xi, order, decode_mask(order, noma))


@dataclass(frozen=True)
class RateReport:
    sinr: np.ndarray  # (U, K), zero where silent
    instantaneous: np.ndarray  # (U, K) bits/s/Hz
    average: np.ndarray  # (U,) time-averaged bits/s/Hz
    sum_rate: float

    def in_bps(self, bandwidth):
        return self.sum_rate * bandwidth


def airtime_of(toa_set, toa_class):
    """Per-node airtime; unassigned nodes are booked against the shortest class."""
    toa_class = np.asarray(toa_class)
    return toa_set.toas[np.where(toa_class >= 0, toa_class, 0)]


def rates(tau, power, scenario, schedule, toa_class, noma=True) -> RateReport:
    """Instantaneous and time-averaged rates of a full allocation."""
    U, K = schedule.rho.shape
    gamma = np.zeros((U, K))
    for k in range(K):
        link = slot_link(k, scenario, schedule, toa_class, noma)
        if len(link.nodes) == 0:
            continue
        W = link.weights(tau[link.nodes, k])
        gamma[link.nodes, k] = sinr(power[link.nodes, k], link.gain, W, scenario.noise)
    inst = schedule.rho * np.log1p(gamma) / LN2
    avg = airtime_of(scenario.toa_set, toa_class) / schedule.window * inst.sum(axis=1)
    return RateReport(gamma, inst, avg, float(avg.sum()))
