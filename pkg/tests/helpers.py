"""Hand-built slots and ledgers shared by the allocator tests."""

import numpy as np

from lpwa_noma import EnergyLedger
from lpwa_noma.airtime import SlotSchedule
from lpwa_noma.allocator import SlotState
from lpwa_noma.interference import SlotLink, decode_mask
from lpwa_noma.scenario import sic_order


def two_node_slot(tau_other, ta=0.01, slot=0.02, harvest=0.0625, gains=(1e-9, 2e-9), xi=1.0,
                  pt=0.025, noise=1e-12, k=0, harvest_history=None, tau_history=None):
    """Node 0 is under test; node 1 transmits at ``tau_other`` with full power.

    Both nodes have airtime ``ta`` and transmit in slot ``k`` (and in every
    earlier slot). Returns ``(ledger, schedule, state)``.
    """
    K = k + 1
    rho = np.ones((2, K), dtype=np.int8)
    H = np.full((2, K), harvest, dtype=float)
    if harvest_history is not None:
        H[0, :k] = harvest_history
    ledger = EnergyLedger(H, np.full(2, ta), rho)
    if tau_history is not None:
        ledger.tau[0, :k] = tau_history
        ledger.power[0, :k] = 0.0
    schedule = SlotSchedule(rho, np.cumsum(rho, axis=1), np.full(2, float(K)), K * slot)
    gain = np.asarray(gains, dtype=float)
    order = sic_order(gain)
    link = SlotLink(np.arange(2), gain, np.full(2, ta), np.array([[1.0, xi], [xi, 1.0]]), order,
                    decode_mask(order, True))
    state = SlotState(k, link, np.array([slot - ta, tau_other]), np.array([pt, pt]),
                      np.full(2, ta / (K * slot)), noise, pt, slot)
    return ledger, schedule, state
