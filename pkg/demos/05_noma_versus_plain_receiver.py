"""How much successive interference cancellation buys, by density.

At low density the harvesting times can keep every packet apart, so the
receiver type makes no difference. Once packets can no longer be kept
apart, decoding with SIC keeps the rate up.
"""

from lpwa_noma import Configuration, ExperimentSpec, run_experiment

densities = (200.0, 1000.0, 1500.0)
confs = tuple(Configuration("solar", "co_inter_sf", noma=n) for n in (True, False))
rep = run_experiment(ExperimentSpec(densities=densities, trials=3, configurations=confs))

for d in densities:
    on, off = (rep.mean(d, c) for c in confs)
    print(f"{d:6.0f} nodes/km²: with SIC {on:7.3f}, without {off:7.3f}, ratio {on / off:.3f}")
