"""Monte Carlo experiment driver, constraint validator and figure recipes."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .airtime import ConfigError
from .allocator import EH_MODES, POWER_MODES, TOA_MODES, Allocation, allocate
from .configfile import EXPERIMENT_KEYS, read_keyvalue, scenario_from_dict, source_params
from .energy import make_source
from .interference import rates
from .scenario import INTERFERENCE_SCENARIOS, Scenario, ScenarioConfig, build_scenario, nodes_for_density

log = logging.getLogger(__name__)

CSV_SCHEMA = "# lpwa-noma results schema 1"
CSV_COLUMNS = ("density", "eh_source", "interference_scenario", "toa_mode", "eh_mode", "power_mode",
               "noma", "mean_sum_rate_bps_hz", "stderr", "trials", "seed_base")
DEFAULT_DENSITIES = tuple(float(d) for d in np.round(np.geomspace(100, 3000, 8), 1))


# --------------------------------------------------------------------------
# Constraint validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    node: int
    slot: int  # 1-based
    constraint: str
    magnitude: float


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return f"PASS ({len(self.warnings)} warnings)"
        lines = [f"FAIL: {len(self.violations)} violations"]
        lines += [f"  node {v.node} slot {v.slot}: {v.constraint} off by {v.magnitude:.3g}"
                  for v in self.violations[:20]]
        return "\n".join(lines)


def check_constraints(tau, power, rho, harvest, airtime, slot_duration, max_tx_power,
                      max_attempts=None, admitted=None, rtol=1e-9) -> ValidationReport:
    """Check C1-C4 from raw per-node, per-slot arrays.

    Works only from the arrays passed in, never from allocator state, so it
    can audit dumps as well as live runs.
    """
    tau, power, harvest = (np.asarray(a, dtype=float) for a in (tau, power, harvest))
    rho = np.asarray(rho).astype(bool)
    airtime = np.asarray(airtime, dtype=float)
    rep = ValidationReport()

    def flag(mask, name, excess):
        for n, k in zip(*np.nonzero(mask)):
            rep.violations.append(Violation(int(n), int(k) + 1, name, float(excess[n, k])))

    slack_p = rtol * max_tx_power
    flag(power < -slack_p, "C1 (power >= 0)", -power)
    flag(power > max_tx_power + slack_p, "C1 (power <= P_t)", power - max_tx_power)
    flag(~rho & (np.abs(power) > 0), "C1 (silent node has power)", np.abs(power))

    spent = np.cumsum(np.where(rho, power, 0.0), axis=1)
    budget = np.cumsum(tau * harvest / airtime[:, None], axis=1)
    excess = spent - budget
    flag(excess > rtol * np.maximum(budget, slack_p), "C2 (causality)", excess)

    tau_max = slot_duration - rho * airtime[:, None]
    slack_t = rtol * slot_duration
    flag(tau < -slack_t, "C3 (tau >= 0)", -tau)
    flag(tau > tau_max + slack_t, "C3 (tau <= tau_max)", tau - tau_max)

    if max_attempts is not None:
        attempts = rho.sum(axis=1)
        over = attempts - np.asarray(max_attempts, dtype=float)
        for n in np.flatnonzero(over > 1e-9):
            rep.violations.append(Violation(int(n), rho.shape[1], "C4 (attempts <= a_n)", float(over[n])))
        if admitted is not None:
            silent = np.asarray(admitted)[attempts[np.asarray(admitted)] == 0] if len(admitted) else []
            if len(silent):
                rep.warnings.append(f"{len(silent)} admitted nodes never transmit (C4 lower bound)")
    return rep


def validate_allocation(allocation: Allocation, scenario: Scenario) -> ValidationReport:
    return check_constraints(allocation.tau, allocation.power, allocation.schedule.rho, scenario.harvest,
                             allocation.airtime, scenario.toa_set.slot_duration,
                             scenario.config.max_tx_power, allocation.schedule.max_attempts,
                             allocation.assignment.active)


def save_allocation(path, allocation: Allocation, scenario: Scenario) -> None:
    """Self-contained ``.npz`` dump that :func:`validate_dump` can audit."""
    np.savez(path, tau=allocation.tau, power=allocation.power, rho=allocation.schedule.rho,
             harvest=scenario.harvest, airtime=allocation.airtime,
             slot_duration=scenario.toa_set.slot_duration, max_tx_power=scenario.config.max_tx_power,
             max_attempts=allocation.schedule.max_attempts, admitted=allocation.assignment.active,
             toa_class=allocation.assignment.toa_class)


def validate_dump(path) -> ValidationReport:
    with np.load(path) as z:
        return check_constraints(z["tau"], z["power"], z["rho"], z["harvest"], z["airtime"],
                                 float(z["slot_duration"]), float(z["max_tx_power"]),
                                 z["max_attempts"], z["admitted"])


SCHEDULE_COLUMNS = ("node", "slot", "toa_class", "rho", "mu", "tau_s", "power_w")


def write_schedule_dump(path, allocation: Allocation) -> None:
    """Per node and slot: class, attempt flag and count, harvesting time and power."""
    sched = allocation.schedule
    cls = allocation.assignment.toa_class
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEDULE_COLUMNS)
        U, K = sched.rho.shape
        for n in range(U):
            for k in range(K):
                w.writerow([n, k + 1, int(cls[n]) + 1 if cls[n] >= 0 else 0, int(sched.rho[n, k]),
                            int(sched.mu[n, k]), _fmt(float(allocation.tau[n, k])),
                            _fmt(float(allocation.power[n, k]))])


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    eh_source: str = "rf_nonlinear"
    interference: str = "co_inter_sf"
    toa_mode: str = "unfair"
    eh_mode: str = "optimal"
    power_mode: str = "cccp"
    noma: bool = True

    def __post_init__(self):
        if self.interference not in INTERFERENCE_SCENARIOS:
            raise ConfigError(f"unknown interference scenario {self.interference!r}")
        if self.toa_mode not in TOA_MODES or self.eh_mode not in EH_MODES or self.power_mode not in POWER_MODES:
            raise ConfigError(f"bad allocator modes in {self}")

    def label(self) -> str:
        return (f"{self.eh_source}/{self.interference}/{self.toa_mode}/{self.eh_mode}/"
                f"{self.power_mode}/{'noma' if self.noma else 'oma'}")


@dataclass(frozen=True)
class ExperimentSpec:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    densities: tuple = DEFAULT_DENSITIES
    trials: int = 50
    configurations: tuple = (Configuration(),)
    output: str | None = None
    seed_base: int = 0
    workers: int = 1
    source_overrides: dict = field(default_factory=dict)  # kind -> constructor kwargs

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.densities or not self.configurations:
            raise ConfigError("densities and configurations must be non-empty")


@dataclass
class TrialResult:
    sum_rate: float
    valid: bool
    flags: list


@dataclass
class RunReport:
    rows: list  # dicts keyed by CSV_COLUMNS
    samples: dict  # (density, Configuration) -> per-trial sum rates (nan when failed)
    seeds: dict  # (point index, trial) -> seed
    failures: list
    invalid: int
    wall_clock: float

    def mean(self, density, conf) -> float:
        return float(np.nanmean(self.samples[(density, conf)]))

    def csv_text(self) -> str:
        return format_csv(self.rows)


def trial_seed(seed_base: int, point: int, trial: int) -> int:
    """Seed shared by every configuration at one (density, trial), so comparisons are paired."""
    return int(np.random.SeedSequence([seed_base, point, trial]).generate_state(1, np.uint64)[0])


def scenario_for(base: ScenarioConfig, conf: Configuration, density: float | None, seed: int,
                 source_overrides=None) -> ScenarioConfig:
    src = base.eh_source
    if src.kind != conf.eh_source:
        src = make_source(conf.eh_source, **(source_overrides or {}).get(conf.eh_source, {}))
    kw = dict(eh_source=src, interference=conf.interference, seed=seed)
    if density is not None:
        kw["num_nodes"] = nodes_for_density(density, base.radius)
    return replace(base, **kw)


def run_trial(cfg: ScenarioConfig, conf: Configuration, keep=False):
    """One realisation: build, allocate, validate and score."""
    scenario = build_scenario(cfg)
    alloc = allocate(scenario, conf.toa_mode, conf.eh_mode, conf.power_mode, conf.noma)
    report = validate_allocation(alloc, scenario)
    if not report.ok:
        log.error("constraint violations for %s seed %d:\n%s", conf.label(), cfg.seed, report.summary())
    r = rates(alloc.tau, alloc.power, scenario, alloc.schedule, alloc.assignment.toa_class, conf.noma)
    result = TrialResult(r.sum_rate, report.ok, alloc.diagnostics.flags)
    if keep:
        return result, scenario, alloc
    return result


def _task(args):
    cfg, conf = args
    try:
        return run_trial(cfg, conf)
    except Exception as exc:  # recorded per trial, the run goes on
        return exc


def run_experiment(spec: ExperimentSpec) -> RunReport:
    """Every (density, configuration) pair over ``spec.trials`` paired seeds."""
    start = time.perf_counter()
    tasks, keys, seeds = [], [], {}
    for p, density in enumerate(spec.densities):
        for t in range(spec.trials):
            seeds[(p, t)] = trial_seed(spec.seed_base, p, t)
            for conf in spec.configurations:
                cfg = scenario_for(spec.base, conf, density, seeds[(p, t)], spec.source_overrides)
                tasks.append((cfg, conf))
                keys.append((density, conf, t))

    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.workers))))
    else:
        results = [_task(t) for t in tasks]

    samples = {(d, c): np.full(spec.trials, np.nan) for d in spec.densities for c in spec.configurations}
    failures, invalid = [], 0
    for (density, conf, t), res in zip(keys, results):
        if isinstance(res, Exception):
            failures.append((density, conf.label(), t, repr(res)))
            continue
        samples[(density, conf)][t] = res.sum_rate
        invalid += not res.valid

    rows = []
    for density in spec.densities:
        for conf in spec.configurations:
            x = samples[(density, conf)]
            done = x[~np.isnan(x)]
            n = len(done)
            rows.append(dict(
                density=density, eh_source=conf.eh_source, interference_scenario=conf.interference,
                toa_mode=conf.toa_mode, eh_mode=conf.eh_mode, power_mode=conf.power_mode,
                noma="on" if conf.noma else "off",
                mean_sum_rate_bps_hz=float(done.mean()) if n else float("nan"),
                stderr=float(done.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
                trials=n, seed_base=spec.seed_base))
    report = RunReport(rows, samples, seeds, failures, invalid, time.perf_counter() - start)
    if spec.output:
        Path(spec.output).write_text(report.csv_text())
    return report


def format_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def configurations(eh_sources=("rf_nonlinear",), interference=("co_inter_sf",), toa_modes=("unfair",),
                   eh_modes=("optimal",), power_modes=("cccp",), noma=(True,)) -> tuple:
    """Cartesian product of allocator and scenario options."""
    return tuple(Configuration(*combo) for combo in itertools.product(
        eh_sources, interference, toa_modes, eh_modes, power_modes, noma))


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


def _onoff(v):
    if isinstance(v, str):
        if v.lower() in ("on", "true", "yes"):
            return True
        if v.lower() in ("off", "false", "no"):
            return False
        raise ConfigError(f"expected on/off, got {v!r}")
    return bool(v)


def load_experiment(path) -> ExperimentSpec:
    """Experiment file: scenario keys plus the experiment keys listed in ``EXPERIMENT_KEYS``."""
    values = read_keyvalue(path)
    exp = {k: values.pop(k) for k in list(values) if k in EXPERIMENT_KEYS}
    single = "density" in values or "num_nodes" in values
    if "densities" in exp:
        if "num_nodes" in values:
            raise ConfigError("give densities or num_nodes, not both")
        values.pop("density", None)
    base = scenario_from_dict(values)
    sources = [str(s) for s in _as_list(exp.get("eh_sources", base.eh_source.kind))]
    confs = configurations(
        sources,
        [str(s) for s in _as_list(exp.get("interference_scenarios", base.interference))],
        [str(s) for s in _as_list(exp.get("toa_modes", "unfair"))],
        [str(s) for s in _as_list(exp.get("eh_modes", "optimal"))],
        [str(s) for s in _as_list(exp.get("power_modes", "cccp"))],
        [_onoff(s) for s in _as_list(exp.get("noma", "on"))],
    )
    if "densities" in exp:
        densities = tuple(float(d) for d in _as_list(exp["densities"]))
    elif single:  # one point at the node count given in the file
        densities = (base.density,)
    else:
        densities = DEFAULT_DENSITIES
    return ExperimentSpec(base=base, densities=densities, trials=int(exp.get("trials", 50)),
                          configurations=confs, output=exp.get("output"),
                          seed_base=int(exp.get("seed_base", 0)), workers=int(exp.get("workers", 1)),
                          source_overrides={k: source_params(values, k) for k in sources})


# --------------------------------------------------------------------------
# Figure recipes
# --------------------------------------------------------------------------

SOURCES = ("solar", "rf_nonlinear")
SCENARIOS = ("none", "co_sf", "co_inter_sf")


def recipe(name: str, base: ScenarioConfig | None = None, densities=DEFAULT_DENSITIES, trials=50,
           output=None, seed_base=0, workers=1) -> ExperimentSpec:
    """Experiment designs behind the three throughput-versus-density figures.

    ``fig1a`` compares optimal and maximum harvesting times, ``fig1b``
    optimal and maximum powers with and without NOMA, ``fig1c`` the three
    class-assignment rules.
    """
    if name == "fig1a":
        confs = configurations(SOURCES, SCENARIOS, ("unfair",), EH_MODES, ("cccp",), (True,))
    elif name == "fig1b":
        confs = configurations(SOURCES, SCENARIOS, ("unfair",), ("optimal",), POWER_MODES, (True, False))
    elif name == "fig1c":
        confs = configurations(SOURCES, SCENARIOS, TOA_MODES, ("optimal",), ("cccp",), (True,))
    else:
        raise ValueError(f"unknown recipe {name!r}; expected fig1a, fig1b or fig1c")
    return ExperimentSpec(base=base or ScenarioConfig(), densities=tuple(densities), trials=trials,
                          configurations=confs, output=output, seed_base=seed_base, workers=workers)
