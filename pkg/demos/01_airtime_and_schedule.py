"""Airtime classes and the duty-cycled slot grid.

Run with ``python demos/01_airtime_and_schedule.py``.
"""

import numpy as np

from lpwa_noma import ScenarioConfig, build_schedule, build_toa_set

# %% The airtime ladder
# Six LoRa spreading factors (SF7..SF12) at 125 kHz. Every step doubles the
# symbol time, so a 10-symbol packet doubles its time on air.
cfg = ScenarioConfig()
toa = build_toa_set(cfg)
for sf, ta, off in zip(toa.spreading_factors, toa.toas, toa.time_offs):
    print(f"SF{sf:2d}: airtime {ta * 1e3:7.2f} ms, silent for {off:6.2f} s afterwards")

# The slot is one shortest packet plus its off time (1 % duty cycle), and
# all six airtimes together still fit inside one slot.
print(f"\nslot duration {toa.slot_duration:.3f} s, sum of airtimes {toa.toas.sum():.3f} s")

# %% Who transmits when
# Class i may transmit once every 2**i slots. Over four slots the three
# longest classes never get a turn.
sched = build_schedule(toa, np.arange(6), num_slots=4)
print("\nrho (rows: class SF7..SF12, columns: slots 1..4)")
print(sched.rho)
print("attempts so far (mu):")
print(sched.mu)

# %% Too tight a duty cycle
# At 10 % the off time shrinks and the ladder no longer fits in a slot.
try:
    ScenarioConfig(duty_cycle=0.1)
except ValueError as exc:
    print(f"\nd = 10 % rejected: {exc}")
