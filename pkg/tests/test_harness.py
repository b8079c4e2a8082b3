import csv

import numpy as np
import pytest

from lpwa_noma import ConfigError, ScenarioConfig, Solar, allocate, build_scenario
from lpwa_noma.cli import main
from lpwa_noma.configfile import dump_scenario, load_scenario, parse_value
from lpwa_noma.harness import (CSV_COLUMNS, CSV_SCHEMA, Configuration, ExperimentSpec, check_constraints,
                               load_experiment, recipe, run_experiment, save_allocation, trial_seed,
                               validate_allocation, validate_dump)

T = 1.024
TA = np.array([0.01024, 0.02048])


def zero_case():
    rho = np.array([[1, 1], [0, 1]])
    tau = T - rho * TA[:, None]
    return dict(tau=tau, power=np.zeros((2, 2)), rho=rho, harvest=np.full((2, 2), 1e-4), airtime=TA,
                slot_duration=T, max_tx_power=0.025)


# ---------------------------------------------------------------- validator

def test_all_zero_allocation_passes():
    assert check_constraints(**zero_case()).ok


def test_c1_violation_is_named():
    case = zero_case()
    case["harvest"] = np.full((2, 2), 10.0)  # plenty of energy: only C1 can fail
    case["power"][0, 0] = 2 * 0.025
    rep = check_constraints(**case)
    assert not rep.ok
    v = rep.violations[0]
    assert (v.node, v.slot) == (0, 1) and v.constraint.startswith("C1")
    assert v.magnitude == pytest.approx(0.025)
    assert "C1" in rep.summary()


def test_silent_node_with_power_fails():
    case = zero_case()
    case["power"][1, 0] = 1e-3
    assert any("silent" in v.constraint for v in check_constraints(**case).violations)


def test_c2_is_cumulative():
    case = zero_case()
    budget = case["tau"] * case["harvest"] / TA[:, None]
    # spend nothing in slot 1 and everything harvested so far in slot 2: fine
    case["power"][0] = [0.0, budget[0].sum()]
    assert check_constraints(**case).ok
    case["power"][0] = [budget[0, 0] * 1.01, 0.0]
    rep = check_constraints(**case)
    assert [v.constraint[:2] for v in rep.violations] == ["C2"]


def test_c3_bounds():
    case = zero_case()
    case["tau"][0, 0] = T  # transmitting node cannot harvest the whole slot
    assert check_constraints(**case).violations[0].constraint.startswith("C3")
    case = zero_case()
    case["tau"][1, 1] = -1e-3
    assert check_constraints(**case).violations[0].constraint.startswith("C3")


def test_c4_attempt_cap():
    case = zero_case()
    rep = check_constraints(**case, max_attempts=np.array([1.0, 1.0]))
    assert any(v.constraint.startswith("C4") for v in rep.violations)


def test_dump_roundtrip(tmp_path):
    sc = build_scenario(ScenarioConfig(num_nodes=30, seed=2))
    a = allocate(sc)
    save_allocation(tmp_path / "a.npz", a, sc)
    assert validate_dump(tmp_path / "a.npz").ok
    assert validate_allocation(a, sc).ok


# ---------------------------------------------------------------- config files

def test_parse_value():
    assert parse_value("3") == 3 and parse_value("2.5") == 2.5 and parse_value("solar") == "solar"
    assert parse_value("1, 2") == [1, 2]
    assert parse_value("1, 0.1; 0.1, 1") == [[1, 0.1], [0.1, 1]]


def test_scenario_file_roundtrip(tmp_path):
    cfg = ScenarioConfig(num_nodes=17, radius=300.0, eh_source=Solar(efficiency=0.2), interference="co_sf",
                         seed=9)
    dump_scenario(cfg, tmp_path / "s.txt")
    assert load_scenario(tmp_path / "s.txt") == cfg


def test_scenario_file_custom_matrix(tmp_path):
    (tmp_path / "s.txt").write_text(
        "schema_version = 1\nnum_toa_classes = 2\ninterference = custom\n"
        "correlation_matrix = 1, 0.3; 0.3, 1\nmax_tx_power_dbm = 10\n")
    cfg = load_scenario(tmp_path / "s.txt")
    np.testing.assert_allclose(cfg.correlation(), [[1, 0.3], [0.3, 1]])
    assert cfg.max_tx_power == pytest.approx(0.01)


@pytest.mark.parametrize("text, match", [
    ("bogus = 1\n", "unknown"),
    ("seed = 1\nseed = 2\n", "duplicate"),
    ("schema_version = 2\n", "schema_version"),
    ("density = 100\nnum_nodes = 5\n", "not both"),
    ("just words\n", "key = value"),
])
def test_bad_scenario_files(tmp_path, text, match):
    (tmp_path / "s.txt").write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_scenario(tmp_path / "s.txt")


def test_experiment_file(tmp_path):
    (tmp_path / "e.txt").write_text(
        "# two sources, both interference scenarios\n"
        "densities = 100, 200\ntrials = 3\neh_sources = solar, rf_nonlinear\n"
        "interference_scenarios = co_sf, co_inter_sf\nnoma = on, off\nsolar_efficiency = 0.2\n")
    spec = load_experiment(tmp_path / "e.txt")
    assert spec.densities == (100.0, 200.0) and spec.trials == 3
    assert len(spec.configurations) == 8
    assert spec.source_overrides["solar"] == {"efficiency": 0.2}


def test_experiment_single_point(tmp_path):
    (tmp_path / "e.txt").write_text("num_nodes = 12\ntrials = 1\n")
    spec = load_experiment(tmp_path / "e.txt")
    rep = run_experiment(spec)
    assert len(rep.rows) == 1
    cfg_nodes = ScenarioConfig.from_density(rep.rows[0]["density"]).num_nodes
    assert cfg_nodes == 12


# ---------------------------------------------------------------- experiments

def small_spec(**kw):
    confs = (Configuration("solar", "co_sf"), Configuration("rf_nonlinear", "co_inter_sf", noma=False))
    return ExperimentSpec(densities=(100.0, 150.0), trials=2, configurations=confs, **kw)


def test_csv_schema_and_columns():
    text = run_experiment(small_spec(seed_base=4)).csv_text()
    lines = text.splitlines()
    assert lines[0] == CSV_SCHEMA
    rows = list(csv.DictReader(lines[1:]))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4 and {r["seed_base"] for r in rows} == {"4"}
    assert {r["noma"] for r in rows} == {"on", "off"}


def test_rerun_is_byte_identical_and_order_free(tmp_path):
    a = run_experiment(small_spec(output=str(tmp_path / "a.csv")))
    b = run_experiment(small_spec(output=str(tmp_path / "b.csv"), workers=2))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.seeds == b.seeds


def test_seeds_are_paired_across_configurations():
    rep = run_experiment(small_spec())
    assert len(set(rep.seeds.values())) == 4
    assert rep.seeds[(1, 0)] == trial_seed(0, 1, 0)


def test_trial_failures_are_recorded(monkeypatch):
    import lpwa_noma.harness as h

    real = h.run_trial

    def flaky(cfg, conf, keep=False):
        if conf.eh_source == "solar" and cfg.seed == trial_seed(0, 0, 1):
            raise RuntimeError("boom")
        return real(cfg, conf, keep)

    monkeypatch.setattr(h, "run_trial", flaky)
    rep = run_experiment(small_spec())
    assert len(rep.failures) == 1
    row = rep.rows[0]
    assert row["eh_source"] == "solar" and row["trials"] == 1


def test_recipes():
    a, b, c = (recipe(n) for n in ("fig1a", "fig1b", "fig1c"))
    assert len(a.configurations) == 12 and {x.eh_mode for x in a.configurations} == {"optimal", "max"}
    assert len(b.configurations) == 24 and {x.noma for x in b.configurations} == {True, False}
    assert {x.toa_mode for x in c.configurations} == {"unfair", "fair", "distance"}
    assert len(a.densities) == 8 and a.densities[0] == 100.0 and a.densities[-1] == 3000.0
    with pytest.raises(ValueError):
        recipe("fig2")


# ---------------------------------------------------------------- command line

def test_cli_run_and_validate(tmp_path, capsys):
    spec = tmp_path / "e.txt"
    spec.write_text(f"densities = 100\ntrials = 1\noutput = {tmp_path / 'out.csv'}\n")
    rc = main(["run", str(spec), "--dump-schedule", str(tmp_path / "s.csv"),
               "--dump-allocation", str(tmp_path / "a.npz")])
    assert rc == 0
    assert (tmp_path / "out.csv").read_text().startswith(CSV_SCHEMA)
    rows = list(csv.DictReader((tmp_path / "s.csv").open()))
    assert set(rows[0]) == {"node", "slot", "toa_class", "rho", "mu", "tau_s", "power_w"}
    assert main(["validate", str(tmp_path / "a.npz")]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_validate_fails_on_violation(tmp_path, capsys):
    case = zero_case()
    case["power"][0, 0] = 0.05
    np.savez(tmp_path / "bad.npz", **case, max_attempts=np.array([4.0, 2.0]), admitted=np.array([0, 1]))
    assert main(["validate", str(tmp_path / "bad.npz")]) == 1
    assert "C1" in capsys.readouterr().out


def test_cli_rejects_unknown_keys(tmp_path, capsys):
    (tmp_path / "e.txt").write_text("trials = 1\ncolour = blue\n")
    assert main(["run", str(tmp_path / "e.txt")]) == 2
    assert "colour" in capsys.readouterr().err


def test_cli_recipes(tmp_path, capsys):
    assert main(["recipes", "fig1c", "--list"]) == 0
    assert "distance" in capsys.readouterr().out
    out = tmp_path / "c.csv"
    assert main(["recipes", "fig1c", "--densities", "100", "--trials", "1", "-o", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2 + 18
