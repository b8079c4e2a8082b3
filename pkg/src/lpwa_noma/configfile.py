"""Flat ``key = value`` text files for scenarios and experiments.

Format (schema version 1)::

    # comments start with '#'
    schema_version = 1
    density = 1000          # or num_nodes = 200
    radius = 250
    eh_source = solar
    correlation_matrix = 1, 0.1; 0.1, 1   # rows separated by ';'

Lists are comma separated. Unknown keys are rejected.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .airtime import ConfigError
from .energy import make_source
from .scenario import ScenarioConfig, dbm_to_watt, nodes_for_density

SCHEMA_VERSION = 1

_INT = {"num_nodes", "num_slots", "num_toa_classes", "num_symbols", "base_sf", "seed"}
_FLOAT = {"radius", "duty_cycle", "bandwidth", "pathloss_exp", "pathloss_exp_beacon", "max_tx_power",
          "noise_figure_db", "inter_sf_correlation", "sensitivity_dbm", "min_distance"}
_STR = {"interference"}
# file key -> (source kinds it applies to, constructor argument)
SOURCE_KEYS = {
    "rf_efficiency": (("rf_linear",), "efficiency"),
    "num_beacons": (("rf_linear", "rf_nonlinear"), "num_beacons"),
    "beacon_power": (("rf_linear", "rf_nonlinear"), "beacon_power"),
    "beacon_positions": (("rf_linear", "rf_nonlinear"), "beacon_positions"),
    "nl_a": (("rf_nonlinear",), "a"),
    "nl_b": (("rf_nonlinear",), "b"),
    "nl_max_power": (("rf_nonlinear",), "max_power"),
    "solar_efficiency": (("solar",), "efficiency"),
    "solar_area": (("solar",), "area"),
    "solar_irradiance": (("solar",), "irradiance"),
    "solar_max_angle": (("solar",), "max_angle"),
}
SCENARIO_KEYS = (_INT | _FLOAT | _STR | set(SOURCE_KEYS)
                 | {"schema_version", "density", "max_tx_power_dbm", "eh_source", "correlation_matrix"})
EXPERIMENT_KEYS = {"densities", "trials", "eh_sources", "interference_scenarios", "toa_modes",
                   "eh_modes", "power_modes", "noma", "output", "seed_base", "workers"}


def parse_value(text: str):
    text = text.strip()
    if ";" in text:
        return [[_scalar(v) for v in row.split(",") if v.strip()] for row in text.split(";") if row.strip()]
    if "," in text:
        return [_scalar(v) for v in text.split(",") if v.strip()]
    return _scalar(text)


def _scalar(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_keyvalue(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    version = out.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version}")
    return out


def source_params(values: dict, kind: str) -> dict:
    params = {}
    for key, (kinds, arg) in SOURCE_KEYS.items():
        if key in values and kind in kinds:
            v = values[key]
            if arg == "beacon_positions":
                v = tuple(tuple(float(c) for c in row) for row in np.atleast_2d(v))
            params[arg] = v
    return params


def scenario_from_dict(values: dict) -> ScenarioConfig:
    unknown = set(values) - SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    kw = {}
    for key, v in values.items():
        if key in _INT:
            kw[key] = int(v)
        elif key in _FLOAT:
            kw[key] = float(v)
        elif key in _STR:
            kw[key] = str(v)
    if "max_tx_power_dbm" in values:
        if "max_tx_power" in values:
            raise ConfigError("give max_tx_power or max_tx_power_dbm, not both")
        kw["max_tx_power"] = float(dbm_to_watt(values["max_tx_power_dbm"]))
    if "density" in values:
        if "num_nodes" in values:
            raise ConfigError("give num_nodes or density, not both")
        kw["num_nodes"] = nodes_for_density(float(values["density"]), kw.get("radius", 250.0))
    if "correlation_matrix" in values:
        kw["correlation_matrix"] = tuple(tuple(float(c) for c in row)
                                         for row in np.atleast_2d(values["correlation_matrix"]))
    kind = str(values.get("eh_source", "rf_nonlinear"))
    kw["eh_source"] = make_source(kind, **source_params(values, kind))
    return ScenarioConfig(**kw)


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_dict(read_keyvalue(path))


def dump_scenario(cfg: ScenarioConfig, path) -> None:
    src = cfg.eh_source
    lines = [f"schema_version = {SCHEMA_VERSION}"]
    for name in ("num_nodes", "radius", "num_slots", "duty_cycle", "bandwidth", "num_toa_classes",
                 "num_symbols", "base_sf", "pathloss_exp", "pathloss_exp_beacon", "max_tx_power",
                 "noise_figure_db", "interference", "inter_sf_correlation", "sensitivity_dbm",
                 "seed", "min_distance"):
        lines.append(f"{name} = {getattr(cfg, name)!r}".replace("'", ""))
    if cfg.correlation_matrix is not None:
        rows = "; ".join(", ".join(repr(float(c)) for c in row) for row in cfg.correlation_matrix)
        lines.append(f"correlation_matrix = {rows}")
    lines.append(f"eh_source = {src.kind}")
    for key, (kinds, arg) in SOURCE_KEYS.items():
        if src.kind not in kinds:
            continue
        v = getattr(src, arg)
        if v is None:
            continue
        if arg == "beacon_positions":
            v = "; ".join(", ".join(repr(float(c)) for c in row) for row in v)
            lines.append(f"{key} = {v}")
        else:
            lines.append(f"{key} = {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")
