"""One network, one slot: classes, harvesting times and powers."""

import numpy as np

from lpwa_noma import ScenarioConfig, allocate, assign_toa, build_scenario, rates
from lpwa_noma.harness import validate_allocation

sc = build_scenario(ScenarioConfig.from_density(1000, interference="co_inter_sf", seed=3))

# %% Stage 1: classes from first-slot RSSI
# Nodes below -137 dBm are left out; the rest are split evenly, strongest
# first into the shortest airtime.
a = assign_toa(sc, "unfair")
print(f"{a.num_active} of {sc.num_nodes} nodes admitted, group sizes {a.group_sizes.tolist()}")

# %% Stages 2 and 3
alloc = allocate(sc, toa_mode="unfair", eh_mode="optimal", power_mode="cccp")
print("harvest-time branches taken:", dict(alloc.diagnostics.eh_branches))
print("CCCP outer iterations per slot:", alloc.diagnostics.cccp_iterations)

# %% Where the packets landed in slot 1
# Harvesting times spread the packets over the slot so that they overlap
# less than with everybody harvesting as long as possible.
tx = np.flatnonzero(alloc.schedule.rho[:, 0])
starts = np.sort(alloc.tau[tx, 0])
print(f"slot 1: {len(tx)} transmitters, packet starts between {starts[0]:.3f} s and {starts[-1]:.3f} s")

baseline = allocate(sc, eh_mode="max", power_mode="max")
for name, al in (("optimal EH + CCCP", alloc), ("max EH + max power", baseline)):
    r = rates(al.tau, al.power, sc, al.schedule, al.assignment.toa_class)
    print(f"{name:20s}: {r.sum_rate:7.3f} bit/s/Hz  ({r.in_bps(125e3) / 1e3:.0f} kbit/s), "
          f"constraints {validate_allocation(al, sc).summary()}")
