import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpwa_noma import NonlinearRF, ScenarioConfig, Solar, allocate, assign_toa, build_scenario, cccp_power, optimize_eh_time
from lpwa_noma.airtime import SlotSchedule
from lpwa_noma.allocator import (SlotRateModel, collision_profile_monotonicity, first_slot_max_power, group_sizes,
                                 largest_remainder)
from lpwa_noma.harness import validate_allocation
from lpwa_noma.interference import coupling, slot_objective
from lpwa_noma.scenario import dbm_to_watt

from .helpers import two_node_slot

PT = 0.025  # cap used by the hand-built slots
PT_14DBM = float(dbm_to_watt(14.0))


# ---------------------------------------------------------------- airtime classes

def test_unfair_split():
    np.testing.assert_array_equal(group_sizes(60, 2.0 ** np.arange(6), "unfair"), [10] * 6)
    # remainder goes to the shortest classes
    np.testing.assert_array_equal(group_sizes(63, 2.0 ** np.arange(6), "unfair"), [11, 11, 11, 10, 10, 10])


def test_fair_split():
    # k_i proportional to 1 / t_i with doubling airtimes
    np.testing.assert_array_equal(group_sizes(63, 2.0 ** np.arange(6), "fair"), [32, 16, 8, 4, 2, 1])


@given(st.integers(0, 3000), st.integers(1, 8))
def test_fair_split_equalises_airtime(U, M):
    t = 2.0 ** np.arange(M)
    k = group_sizes(U, t, "fair")
    assert k.sum() == U and np.all(k >= 0)
    kt = k * t
    assert kt.max() - kt.min() <= t[-1] + 1e-12


@given(st.lists(st.floats(0, 100), min_size=1, max_size=10))
def test_largest_remainder_keeps_total(q):
    q = np.asarray(q)
    q = q * (np.round(q.sum()) / q.sum()) if q.sum() > 0 else q
    r = largest_remainder(q)
    assert r.sum() == int(round(q.sum()))
    assert np.all(np.abs(r - q) < 1 + 1e-9)


def test_assignment_orders_by_rssi():
    sc = build_scenario(ScenarioConfig(num_nodes=120, seed=3))
    a = assign_toa(sc, "unfair")
    cls = a.toa_class[a.active]
    assert np.all(np.diff(cls) >= 0)  # strongest first, shortest classes first
    assert np.all(np.diff(a.rssi_dbm[a.active]) <= 0)
    assert np.all(a.rssi_dbm[a.active] > -137.0)
    assert np.all(a.toa_class[np.setdiff1d(np.arange(120), a.active)] == -1)
    np.testing.assert_array_equal(np.bincount(cls, minlength=6), a.group_sizes)


def test_rssi_uses_first_slot_budget():
    sc = build_scenario(ScenarioConfig(num_nodes=30, seed=1))
    ta, T = sc.toa_set.toas[0], sc.toa_set.slot_duration
    expected = np.minimum(PT_14DBM, (T - ta) * sc.harvest[:, 0] / ta)
    np.testing.assert_allclose(first_slot_max_power(sc), expected, rtol=1e-12)
    a = assign_toa(sc)
    np.testing.assert_allclose(a.rssi_dbm, 10 * np.log10(expected * sc.nodes.gain[:, 0]) + 30)


def test_sensitivity_gates_admission():
    cfg = ScenarioConfig(num_nodes=60, seed=2, sensitivity_dbm=0.0)
    a = assign_toa(build_scenario(cfg))
    assert a.num_active == 0 and np.all(a.toa_class == -1)
    alloc = allocate(build_scenario(cfg))
    assert np.all(alloc.power == 0) and "no active nodes" in alloc.diagnostics.flags


def test_distance_mode_uses_equal_area_rings():
    sc = build_scenario(ScenarioConfig(num_nodes=200, seed=4, sensitivity_dbm=-1e9))
    a = assign_toa(sc, "distance")
    d = sc.nodes.distance
    np.testing.assert_array_equal(a.toa_class, np.minimum(np.floor(6 * (d / 250.0) ** 2), 5))


def test_unknown_modes():
    sc = build_scenario(ScenarioConfig(num_nodes=5))
    with pytest.raises(ValueError):
        assign_toa(sc, "random")
    with pytest.raises(ValueError):
        allocate(sc, eh_mode="min")
    with pytest.raises(ValueError):
        allocate(sc, power_mode="waterfill")


# ---------------------------------------------------------------- harvesting time

def test_eh_mode_returns_whole_slot():
    ledger, sched, state = two_node_slot(0.01)
    rho = sched.rho.copy()
    rho[0] = 0
    sched = SlotSchedule(rho, np.cumsum(rho, axis=1), sched.max_attempts, sched.window)
    d = optimize_eh_time(0, 0, ledger, sched, state)
    assert d.tau == 0.02 and d.branch == "eh_mode"


def test_profile_shapes():
    assert collision_profile_monotonicity(0, two_node_slot(0.01)[2], 0.01) == "increasing"
    assert collision_profile_monotonicity(0, two_node_slot(0.0)[2], 0.01) == "decreasing"
    assert collision_profile_monotonicity(0, two_node_slot(0.04, slot=0.05)[2], 0.04) == "mixed"
    assert collision_profile_monotonicity(0, two_node_slot(0.5, slot=1.0)[2], 0.3) == "constant"


def test_surplus_increasing_closed_form():
    ledger, sched, state = two_node_slot(0.01, harvest=0.0625)
    d = optimize_eh_time(0, 0, ledger, sched, state)
    assert d.branch == "surplus_increasing"
    assert d.tau == pytest.approx(PT * 0.01 / 0.0625, abs=1e-12)


def test_surplus_history_needs_no_harvest():
    # a full slot of harvesting at 1 W already covers two full-power packets
    ledger, sched, state = two_node_slot(0.01, k=1, harvest_history=[1.0], tau_history=[0.01])
    d = optimize_eh_time(0, 1, ledger, sched, state)
    assert d.branch == "surplus_increasing" and d.tau == 0.0


def test_deficit_increasing_closed_form():
    ledger, sched, state = two_node_slot(0.01, harvest=0.01)
    d = optimize_eh_time(0, 0, ledger, sched, state)
    assert d.branch == "deficit_increasing"
    assert d.tau == pytest.approx(0.01, abs=1e-12)


def test_decreasing_collision_harvests_longest():
    ledger, sched, state = two_node_slot(0.0, harvest=0.0625)
    d = optimize_eh_time(0, 0, ledger, sched, state)
    assert d.branch == "decreasing" and d.tau == pytest.approx(0.01, abs=1e-12)


def test_missing_harvest_is_flagged():
    ledger, sched, state = two_node_slot(0.01, harvest=0.0)
    d = optimize_eh_time(0, 0, ledger, sched, state)
    assert d.flagged and d.tau == pytest.approx(0.01)


def _slot_rate_oracle(taus, ledger, state, node=0):
    ta = state.link.airtime
    out = []
    for t in taus:
        tau = state.tau.copy()
        tau[node] = t
        p = state.power.copy()
        p[node] = min(PT, t * ledger.harvest[node, 0] / ta[node])
        W = coupling(state.link.xi * np.maximum(0, ta.min() - np.abs(tau[:, None] - tau[None, :])) / ta[:, None],
                     state.link.order)
        out.append(slot_objective(p, state.link.gain, W, state.noise, state.weight))
    return np.array(out)


def test_line_search_avoids_the_collision():
    # the other packet sits at the end of the slot; full power is reached after 4 ms
    ledger, sched, state = two_node_slot(0.04, slot=0.05, harvest=0.0625)
    d = optimize_eh_time(0, 0, ledger, sched, state)
    assert d.branch == "line_search"
    grid = np.linspace(0, 0.04, 40001)
    best = _slot_rate_oracle(grid, ledger, state).max()
    assert _slot_rate_oracle([d.tau], ledger, state)[0] >= best * (1 - 1e-9)
    # longest harvest among the collision-free maximisers
    assert d.tau == pytest.approx(0.03, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.04), st.floats(1e-3, 1.0), st.floats(0.1, 10.0))
def test_line_search_matches_dense_oracle(tau_other, harvest, gain_ratio):
    ledger, sched, state = two_node_slot(tau_other, slot=0.05, harvest=harvest, gains=(1e-9, gain_ratio * 1e-9))
    d = optimize_eh_time(0, 0, ledger, sched, state)
    if d.branch != "line_search":
        return
    grid = np.linspace(0, 0.04, 8001)
    best = _slot_rate_oracle(grid, ledger, state).max()
    assert _slot_rate_oracle([d.tau], ledger, state)[0] >= best * (1 - 1e-6)


# ---------------------------------------------------------------- transmit power

def random_slot(rng, S, overlap=True):
    gain = rng.exponential(size=S) * 1e-9
    upper = rng.uniform(0.1, 1.0, S) * PT
    eta = rng.uniform(0, 1, (S, S)) if overlap else np.zeros((S, S))
    W = coupling(eta, np.argsort(-gain), noma=bool(rng.integers(2)))
    weight = rng.uniform(0.01, 0.1, S)
    return gain, upper, W, 1e-13, weight


def test_no_interference_gives_caps():
    rng = np.random.default_rng(0)
    gain, upper, W, N, w = random_slot(rng, 8, overlap=False)
    res = cccp_power(gain, upper, W, N, w, p_init=0.2 * upper)
    np.testing.assert_allclose(res.power, upper, rtol=1e-9)


def test_surrogate_minorises_and_touches():
    rng = np.random.default_rng(1)
    for _ in range(50):
        gain, upper, W, N, w = random_slot(rng, 6)
        m = SlotRateModel(gain, upper, W, N, w)
        x_hat, x = rng.uniform(size=6), rng.uniform(size=6)
        true = slot_objective(x * upper, gain, W, N, w)
        assert m.rate(x) == pytest.approx(true, rel=1e-12)
        assert m.surrogate(x, x_hat) <= true * (1 + 1e-9)
        assert m.surrogate(x_hat, x_hat) == pytest.approx(m.rate(x_hat), rel=1e-9)


def test_surrogate_gradient():
    rng = np.random.default_rng(2)
    gain, upper, W, N, w = random_slot(rng, 5)
    m = SlotRateModel(gain, upper, W, N, w)
    x_hat, x = rng.uniform(size=5), rng.uniform(0.1, 0.9, size=5)
    h = 1e-6
    num = [(m.surrogate(x + h * e, x_hat) - m.surrogate(x - h * e, x_hat)) / (2 * h) for e in np.eye(5)]
    np.testing.assert_allclose(m.surrogate_grad(x, x_hat), num, rtol=1e-5, atol=1e-9)


def test_cccp_trace_nondecreasing_and_feasible():
    rng = np.random.default_rng(3)
    for _ in range(30):
        gain, upper, W, N, w = random_slot(rng, 10)
        res = cccp_power(gain, upper, W, N, w)
        assert np.all(np.diff(res.trace) >= -1e-9)
        assert np.all(res.power >= 0) and np.all(res.power <= upper * (1 + 1e-12))
        assert res.trace[-1] == pytest.approx(slot_objective(res.power, gain, W, N, w), rel=1e-12)


def test_cccp_empty_slot():
    res = cccp_power(np.zeros(0), np.zeros(0), np.zeros((0, 0)), 1e-13, np.zeros(0))
    assert res.power.shape == (0,) and res.converged


# ---------------------------------------------------------------- full allocation

def test_single_node_single_slot_closed_form():
    cfg = ScenarioConfig(num_nodes=1, num_slots=1, seed=0, sensitivity_dbm=-1e9)
    for src in (NonlinearRF(), Solar()):
        sc = build_scenario(cfg.replace(eh_source=src))
        a = allocate(sc)
        ta, E, T = sc.toa_set.toas[0], sc.harvest[0, 0], sc.toa_set.slot_duration
        tau = np.clip(PT_14DBM * ta / E, 0, T - ta)
        assert a.tau[0, 0] == pytest.approx(tau, rel=1e-12)
        assert a.power[0, 0] == pytest.approx(min(PT_14DBM, tau * E / ta), rel=1e-12)


@pytest.mark.parametrize("toa_mode", ["unfair", "fair", "distance"])
@pytest.mark.parametrize("eh_mode", ["optimal", "max"])
@pytest.mark.parametrize("power_mode", ["cccp", "max"])
def test_allocations_are_feasible(toa_mode, eh_mode, power_mode):
    sc = build_scenario(ScenarioConfig(num_nodes=60, seed=11, interference="co_inter_sf"))
    a = allocate(sc, toa_mode, eh_mode, power_mode)
    rep = validate_allocation(a, sc)
    assert rep.ok, rep.summary()
    assert np.all(a.power[a.schedule.rho == 0] == 0)
    silent = a.schedule.rho == 0
    np.testing.assert_allclose(a.tau[silent], sc.toa_set.slot_duration)
    if eh_mode == "max":
        np.testing.assert_allclose(a.tau, sc.toa_set.slot_duration - a.schedule.rho * a.airtime[:, None])


def test_max_power_baseline_spends_the_budget():
    sc = build_scenario(ScenarioConfig(num_nodes=40, seed=5))
    a = allocate(sc, eh_mode="max", power_mode="max")
    tx = a.schedule.rho[:, 0] == 1
    budget = a.tau[:, 0] * sc.harvest[:, 0] / a.airtime
    np.testing.assert_allclose(a.power[tx, 0], np.minimum(PT_14DBM, budget[tx]), rtol=1e-12)


def test_unreachable_classes_are_reported(caplog):
    sc = build_scenario(ScenarioConfig(num_nodes=60, seed=1))
    with caplog.at_level("INFO", logger="lpwa_noma"):
        a = allocate(sc)
    assert any("never transmit" in f for f in a.diagnostics.flags)
