"""A small version of the throughput-versus-density experiment.

Full-size runs go through the command line, e.g.
``lpwa-noma recipes fig1a -o fig1a.csv --workers 4``.
"""

from lpwa_noma import ExperimentSpec, run_experiment
from lpwa_noma.harness import configurations

confs = configurations(("solar", "rf_nonlinear"), ("none", "co_sf", "co_inter_sf"))
spec = ExperimentSpec(densities=(100.0, 400.0, 1000.0), trials=3, configurations=confs)
report = run_experiment(spec)

# %% Mean time-averaged sum rate (bit/s/Hz)
print(f"{'density':>8}  " + "  ".join(f"{c.eh_source[:5]}/{c.interference:>11}" for c in confs))
for d in spec.densities:
    print(f"{d:8.0f}  " + "  ".join(f"{report.mean(d, c):17.3f}" for c in confs))
print(f"\n{report.wall_clock:.1f} s for {len(spec.densities) * spec.trials * len(confs)} trials")

# The CSV that the command line writes is the same table in long form.
print(report.csv_text().splitlines()[1])
print(report.csv_text().splitlines()[2])
