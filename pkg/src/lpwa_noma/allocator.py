"""Three-stage resource allocation: airtime classes, harvesting times, powers.

The stages run in that order. Classes are fixed once from first-slot RSSI;
then slots are processed one after the other, each one choosing
harvesting times before transmit powers, so that the battery history of
earlier slots is final when a slot is optimised.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .airtime import SlotSchedule, build_schedule, unreachable_classes
from .energy import EnergyLedger
from .interference import LN2, SlotLink, collision_time, slot_link, slot_objective
from .scenario import Scenario, watt_to_dbm

log = logging.getLogger(__name__)

TOA_MODES = ("unfair", "fair", "distance")
EH_MODES = ("optimal", "max")
POWER_MODES = ("cccp", "max")


# --------------------------------------------------------------------------
# Stage 1: airtime classes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ToaAssignment:
    toa_class: np.ndarray  # (U,) class per node, -1 when not admitted
    active: np.ndarray  # admitted nodes, strongest RSSI first
    group_sizes: np.ndarray  # (M,)
    rssi_dbm: np.ndarray  # (U,)
    mode: str

    @property
    def num_active(self):
        return len(self.active)


def largest_remainder(quotas) -> np.ndarray:
    """Round non-negative quotas to integers preserving their (integral) total.

    Leftover units go to the largest fractional parts; ties favour lower
    indices.
    """
    quotas = np.asarray(quotas, dtype=float)
    total = int(round(quotas.sum()))
    base = np.floor(quotas + 1e-9).astype(int)
    rem = quotas - base
    short = total - base.sum()
    if short > 0:
        idx = np.argsort(-rem, kind="stable")[:short]
        base[idx] += 1
    return base


def group_sizes(num_active: int, toas, mode: str) -> np.ndarray:
    toas = np.asarray(toas, dtype=float)
    M = len(toas)
    if mode == "unfair":
        return largest_remainder(np.full(M, num_active / M))
    if mode == "fair":
        inv = 1.0 / toas
        return largest_remainder(num_active * inv / inv.sum())
    raise ValueError(f"group sizes are defined for unfair/fair modes, not {mode!r}")


def first_slot_max_power(scenario: Scenario) -> np.ndarray:
    """Largest power each node could use in slot 1 if it held the shortest class.

    The node harvests for the whole slot minus one shortest airtime.
    """
    toa = scenario.toa_set
    ta1 = toa.toas[0]
    budget = (toa.slot_duration - ta1) * scenario.harvest[:, 0] / ta1
    return np.minimum(scenario.config.max_tx_power, budget)


def assign_toa(scenario: Scenario, mode: str = "unfair") -> ToaAssignment:
    """Admit nodes above the gateway sensitivity and split them into classes.

    The strongest nodes receive the shortest airtimes. ``distance`` mode
    instead maps equal-area annuli around the gateway onto classes.
    """
    if mode not in TOA_MODES:
        raise ValueError(f"unknown toa mode {mode!r}")
    cfg = scenario.config
    M = scenario.toa_set.num_classes
    U = scenario.num_nodes
    with np.errstate(divide="ignore"):
        rssi = watt_to_dbm(first_slot_max_power(scenario) * scenario.nodes.gain[:, 0]) if U else np.zeros(0)
    ids = np.arange(U)
    admitted = rssi > cfg.sensitivity_dbm
    order = np.lexsort((ids, -rssi))
    active = order[admitted[order]]
    cls = np.full(U, -1, dtype=int)

    if mode == "distance":
        d = scenario.nodes.distance[active]
        ring = np.floor(M * (d / cfg.radius) ** 2).astype(int)
        cls[active] = np.clip(ring, 0, M - 1)
        sizes = np.bincount(cls[active], minlength=M)
    else:
        sizes = group_sizes(len(active), scenario.toa_set.toas, mode)
        cls[active] = np.repeat(np.arange(M), sizes)
    if len(active) == 0:
        log.warning("no node exceeds the sensitivity threshold of %.1f dBm", cfg.sensitivity_dbm)
    return ToaAssignment(cls, active, sizes, rssi, mode)


# --------------------------------------------------------------------------
# Stage 2: harvesting time
# --------------------------------------------------------------------------

@dataclass
class SlotState:
    """Provisional decisions of the transmitters of one slot.

    ``tau`` and ``power`` are aligned with ``link.nodes``.
    """

    k: int
    link: SlotLink
    tau: np.ndarray
    power: np.ndarray
    weight: np.ndarray  # T_a / T per transmitter
    noise: float
    max_tx_power: float
    slot_duration: float


@dataclass(frozen=True)
class EhDecision:
    tau: float
    branch: str  # eh_mode | surplus_increasing | deficit_increasing | decreasing | line_search
    flagged: bool = False


def collision_profile_monotonicity(j: int, state: SlotState, upper: float) -> str:
    """Shape of node ``j``'s total overlap with the other transmitters over ``[0, upper]``.

    The overlap is piecewise linear in the harvesting time with breakpoints
    at ``tau_m`` and ``tau_m +- min(T_a)``, so its value at the interval
    ends and at every breakpoint inside pins down every segment slope.
    Returns ``"constant"``, ``"increasing"`` or ``"decreasing"`` (strictly,
    on every segment) or ``"mixed"``; a profile that is flat on part of the
    interval and moves elsewhere counts as mixed.
    """
    link = state.link
    others = np.flatnonzero(np.arange(len(link.nodes)) != j)
    if len(others) == 0 or upper <= 0:
        return "constant"
    tau_m = state.tau[others]
    L = np.minimum(link.airtime[j], link.airtime[others])
    pts = np.concatenate([[0.0, 0.5 * upper, upper], tau_m - L, tau_m, tau_m + L])
    pts = np.unique(pts[(pts >= 0.0) & (pts <= upper)])
    col = collision_time(pts[:, None], tau_m[None, :], link.airtime[j], link.airtime[others])
    total = col.sum(axis=1)
    diff = np.diff(total)
    eps = 1e-12 * max(float(np.abs(total).max()), float(link.airtime.max()))
    if np.all(np.abs(diff) <= eps):
        return "constant"
    if np.all(diff > eps):
        return "increasing"
    if np.all(diff < -eps):
        return "decreasing"
    return "mixed"


class _TauObjective:
    """Slot objective as a function of transmitter ``j``'s harvesting time.

    Node ``j`` uses all the power it can afford (capped at the maximum);
    the other transmitters keep their provisional times and powers. Terms
    that do not depend on ``j``'s time are computed once.
    """

    def __init__(self, j, state: SlotState, carried, harvest_rate):
        link = state.link
        self.j = j
        self.state = state
        self.ta = link.airtime
        self.rx = state.power * link.gain
        self.carried = carried
        self.rate = harvest_rate
        W = link.weights(state.tau)
        self.interf = W @ self.rx - W[:, j] * self.rx[j]  # interference without j
        self.row = np.where(link.mask[j], link.xi[j], 0.0) / self.ta[j]  # eta[j, m] per second of overlap
        self.col = np.where(link.mask[:, j], link.xi[:, j], 0.0) / self.ta  # eta[m, j] likewise
        self.row[j] = self.col[j] = 0.0

    def __call__(self, taus):
        st, j = self.state, self.j
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        p_j = np.minimum(st.max_tx_power, np.maximum(self.carried + taus * self.rate / self.ta[j], 0.0))
        rx_j = p_j * st.link.gain[j]
        col = collision_time(taus[:, None], st.tau[None, :], self.ta[j], self.ta[None, :])  # (G, S)
        I = self.interf[None, :] + (col * self.col) * rx_j[:, None]
        I[:, j] = (col * self.row) @ self.rx
        rx_all = np.broadcast_to(self.rx, I.shape).copy()
        rx_all[:, j] = rx_j
        return np.log1p(rx_all / (I + st.noise)) @ st.weight / LN2


def optimize_eh_time(node: int, k: int, ledger: EnergyLedger, schedule: SlotSchedule,
                     state: SlotState | None = None, grid_points: int = 64) -> EhDecision:
    """Harvesting time of ``node`` in slot ``k`` (0-based) given earlier slots.

    Silent nodes harvest for the whole slot. A transmitting node first works
    out how long it must harvest so that its cumulative budget covers full
    power on every attempt so far; whether it should stop there, harvest
    for as long as allowed, or search in between depends on how its packet
    overlap with the other transmitters evolves with the harvesting time.
    """
    T_slot = state.slot_duration if state is not None else None
    if not schedule.rho[node, k]:
        if T_slot is None:
            raise ValueError("slot duration unknown: pass a SlotState")
        return EhDecision(T_slot, "eh_mode")

    link = state.link
    j = int(np.flatnonzero(link.nodes == node)[0])
    ta = ledger.airtime[node]
    tau_max = T_slot - ta
    E = ledger.harvest[node, k]
    if E <= 0:
        return EhDecision(tau_max, "no_harvest", flagged=True)

    past = float(np.dot(ledger.tau[node, :k], ledger.harvest[node, :k]))
    tau_1 = state.max_tx_power * ta / E * schedule.mu[node, k] - past / E
    tau_2 = min(tau_1, tau_max)
    label = "surplus" if tau_1 <= tau_max else "deficit"

    shape = collision_profile_monotonicity(j, state, tau_max)
    if shape in ("increasing", "constant"):
        return EhDecision(float(np.clip(tau_2, 0.0, tau_max)), f"{label}_increasing")
    if shape == "decreasing":
        return EhDecision(tau_max, "decreasing")
    return EhDecision(_line_search(j, state, ledger, node, k, tau_max, tau_2, grid_points), "line_search")


def _line_search(j, state, ledger, node, k, tau_max, tau_2, grid_points, zoom_rounds=4):
    carried = float(ledger.carried_power(k)[node])
    E = ledger.harvest[node, k]
    ta = state.link.airtime

    f = _TauObjective(j, state, carried, E)

    others = np.arange(len(ta)) != j
    L = np.minimum(ta[j], ta[others])
    kinks = np.concatenate([state.tau[others] - L, state.tau[others], state.tau[others] + L])
    t_full = (state.max_tx_power - carried) * ta[j] / E  # where the power cap binds
    cand = np.concatenate([np.linspace(0.0, tau_max, grid_points + 1)[1:], kinks,
                           [t_full, max(tau_2, 0.0), 0.0]])
    cand = np.unique(cand[(cand >= 0.0) & (cand <= tau_max)])
    vals = f(cand)
    top = vals.max()
    # among (near-)ties keep the longest harvest: the extra energy is free
    i = int(np.flatnonzero(vals >= top - 1e-12 * max(abs(top), 1e-300))[-1])
    best_t, best_v = float(cand[i]), float(vals[i])
    lo = cand[max(i - 1, 0)]
    hi = cand[min(i + 1, len(cand) - 1)]
    # zoom in around the incumbent; each round is one vectorised evaluation
    for _ in range(zoom_rounds):
        if hi - lo <= 1e-9 * max(tau_max, 1e-12):
            break
        sub = np.linspace(lo, hi, 17)
        sv = f(sub)
        m = int(np.flatnonzero(sv >= sv.max() - 1e-12 * max(abs(sv.max()), 1e-300))[-1])
        if sv[m] > best_v + 1e-12 * max(abs(best_v), 1e-300):
            best_t, best_v = float(sub[m]), float(sv[m])
        step = sub[1] - sub[0]
        lo, hi = max(lo, best_t - step), min(hi, best_t + step)
    return best_t


# --------------------------------------------------------------------------
# Stage 3: transmit powers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CccpResult:
    power: np.ndarray
    trace: list  # true slot objective after each outer iteration, starting point first
    iterations: int
    converged: bool


class SlotRateModel:
    """Slot sum rate in normalised powers ``x = p / p_upper`` and its concave minorant.

    With received SNRs ``s = c * x`` the rate of node ``n`` is
    ``log2(A_n) - log2(B_n)``, ``A = 1 + s + W s`` and ``B = 1 + W s``. The
    convex part ``-log2(B)`` is linearised around an expansion point,
    which gives a concave lower bound that touches the rate there.
    """

    def __init__(self, gain, upper, W, noise, weight):
        self.upper = np.asarray(upper, dtype=float)
        self.c = self.upper * np.asarray(gain, dtype=float) / noise
        self.W = np.asarray(W, dtype=float)
        self.weight = np.asarray(weight, dtype=float)

    def rate(self, x):
        s = self.c * x
        return float(np.dot(self.weight, np.log1p(s / (1.0 + self.W @ s))) / LN2)

    def surrogate(self, x, x_hat):
        s = self.c * x
        Bh = 1.0 + self.W @ (self.c * x_hat)
        B = 1.0 + self.W @ s
        A = B + s
        terms = np.log(A) / LN2 - B / (Bh * LN2) + 1.0 / LN2 - np.log(Bh) / LN2
        return float(np.dot(self.weight, terms))

    def surrogate_grad(self, x, x_hat):
        s = self.c * x
        Bh = 1.0 + self.W @ (self.c * x_hat)
        A = 1.0 + s + self.W @ s
        gs = (self.weight / A + self.W.T @ (self.weight / A) - self.W.T @ (self.weight / Bh)) / LN2
        return self.c * gs


def _maximize_box(fun, grad, x0, max_iter=500, tol=1e-13):
    """Projected gradient ascent on [0, 1]^n with Barzilai-Borwein steps and Armijo backtracking."""
    x = x0.copy()
    fx = fun(x)
    g = grad(x)
    t = 1.0
    for it in range(max_iter):
        while True:
            x_new = np.clip(x + t * g, 0.0, 1.0)
            d = x_new - x
            f_new = fun(x_new)
            if f_new >= fx + 1e-4 * float(g @ d) or t < 1e-30:
                break
            t *= 0.5
        if f_new < fx:  # backtracking exhausted
            return x, it
        if np.max(np.abs(d)) < 1e-14 or f_new - fx <= tol * max(1.0, abs(fx)):
            return x_new, it + 1
        g_new = grad(x_new)
        curv = -float(d @ (g_new - g))
        t = float(d @ d) / curv if curv > 0 else 2.0 * t
        x, fx, g = x_new, f_new, g_new
    return x, max_iter


def _extrapolate(rate, x_hat, x, max_doublings=30):
    """Push further along the step just taken while the true rate keeps improving.

    Minorise-maximise steps get short where the rate is flat; accepting only
    improvements keeps the objective trace nondecreasing.
    """
    best = rate(x)
    d = x - x_hat
    if not np.any(d):
        return x, best
    alpha = 2.0
    for _ in range(max_doublings):
        y = np.clip(x_hat + alpha * d, 0.0, 1.0)
        fy = rate(y)
        if fy <= best:
            break
        x, best = y, fy
        alpha *= 2.0
    return x, best


def cccp_power(gain, upper, W, noise, weight, p_init=None, tol=1e-6, max_outer=50) -> CccpResult:
    """Concave-convex procedure for one slot's powers over ``0 <= p <= upper``.

    Parameters
    ----------
    gain, upper, weight : ndarray, shape (S,)
        Channel gains, per-node power caps ``min(P_t, P_a)`` and rate
        weights of the slot's transmitters.
    W : ndarray, shape (S, S)
        Interference coefficients (see :func:`interference.coupling`).
    p_init : ndarray, optional
        Feasible starting point; defaults to the caps.
    """
    upper = np.asarray(upper, dtype=float)
    S = len(upper)
    if S == 0:
        return CccpResult(np.zeros(0), [0.0], 0, True)
    model = SlotRateModel(gain, upper, W, noise, weight)
    safe = np.where(upper > 0, upper, 1.0)
    x = np.ones(S) if p_init is None else np.clip(np.asarray(p_init, dtype=float) / safe, 0.0, 1.0)
    x = np.where(upper > 0, x, 0.0)
    trace = [model.rate(x)]
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        x_hat = x
        x, _ = _maximize_box(lambda z: model.surrogate(z, x_hat),
                             lambda z: model.surrogate_grad(z, x_hat), x_hat)
        x, fx = _extrapolate(model.rate, x_hat, x)
        trace.append(fx)
        if abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-2]), 1e-300):
            converged = True
            break
    return CccpResult(x * upper, trace, it, converged)


# --------------------------------------------------------------------------
# Full allocation
# --------------------------------------------------------------------------

@dataclass
class Diagnostics:
    cccp_iterations: list = field(default_factory=list)
    objective_traces: list = field(default_factory=list)
    eh_branches: Counter = field(default_factory=Counter)
    flags: list = field(default_factory=list)


@dataclass
class Allocation:
    tau: np.ndarray  # (U, K) seconds
    power: np.ndarray  # (U, K) watts
    assignment: ToaAssignment
    schedule: SlotSchedule
    airtime: np.ndarray  # (U,)
    diagnostics: Diagnostics
    modes: dict


def allocate(scenario: Scenario, toa_mode="unfair", eh_mode="optimal", power_mode="cccp",
             noma=True, grid_points=64, eh_sweeps=3) -> Allocation:
    """Run all three stages over the slot horizon.

    Harvesting times within a slot are chosen node by node in decoding
    order, each node reacting to the others' current times; up to
    ``eh_sweeps`` passes are made until the times stop moving.
    """
    if eh_mode not in EH_MODES:
        raise ValueError(f"unknown eh mode {eh_mode!r}")
    if power_mode not in POWER_MODES:
        raise ValueError(f"unknown power mode {power_mode!r}")
    cfg = scenario.config
    toa = scenario.toa_set
    U, K = scenario.num_nodes, scenario.num_slots
    diag = Diagnostics()

    assignment = assign_toa(scenario, toa_mode)
    schedule = build_schedule(toa, assignment.toa_class, K)
    airtime = toa.toas[np.where(assignment.toa_class >= 0, assignment.toa_class, 0)]
    ledger = EnergyLedger(scenario.harvest, airtime, schedule.rho)
    modes = dict(toa_mode=toa_mode, eh_mode=eh_mode, power_mode=power_mode, noma=bool(noma))

    if assignment.num_active == 0:
        diag.flags.append("no active nodes")
    used = np.unique(assignment.toa_class[assignment.active])
    idle = sorted(set(used.tolist()) & set(unreachable_classes(toa, K)))
    if idle:
        diag.flags.append(f"classes {idle} never transmit within {K} slots")
        log.info("classes %s get no transmission slot within %d slots", idle, K)

    T_slot = toa.slot_duration
    for k in range(K):
        link = slot_link(k, scenario, schedule, assignment.toa_class, noma)
        rho_k = schedule.rho[:, k]
        tau_k = T_slot - rho_k * airtime
        S = link.nodes
        if len(S):
            state = SlotState(k, link, tau_k[S].copy(), np.zeros(len(S)),
                              link.airtime / schedule.window, scenario.noise,
                              cfg.max_tx_power, T_slot)
            state.power = np.minimum(cfg.max_tx_power, ledger.available_power(k, tau_k)[S])
            if eh_mode == "optimal":
                carried = ledger.carried_power(k)
                for sweep in range(eh_sweeps):
                    before = state.tau.copy()
                    for j in link.order:
                        n = S[j]
                        dec = optimize_eh_time(n, k, ledger, schedule, state, grid_points)
                        if sweep == 0:
                            diag.eh_branches[dec.branch] += 1
                            if dec.flagged:
                                diag.flags.append(f"slot {k + 1} node {n}: {dec.branch}")
                        state.tau[j] = dec.tau
                        state.power[j] = min(cfg.max_tx_power,
                                             carried[n] + dec.tau * ledger.harvest[n, k] / airtime[n])
                    if np.max(np.abs(state.tau - before)) <= 1e-9 * T_slot:
                        break
                tau_k[S] = state.tau
        ledger.tau[:, k] = tau_k
        upper = np.minimum(cfg.max_tx_power, ledger.available_power(k))[S]

        if len(S) and power_mode == "cccp":
            W = link.weights(tau_k[S])
            res = cccp_power(link.gain, upper, W, scenario.noise, link.airtime / schedule.window)
            diag.cccp_iterations.append(res.iterations)
            diag.objective_traces.append(res.trace)
            if not res.converged:
                diag.flags.append(f"slot {k + 1}: CCCP hit the iteration cap")
            p_S = res.power
        else:
            p_S = upper
        p_k = np.zeros(U)
        p_k[S] = p_S
        ledger.power[:, k] = p_k

    return Allocation(ledger.tau.copy(), ledger.power.copy(), assignment, schedule, airtime, diag, modes)


def slot_sum_rate(link: SlotLink, tau, power, noise, weight) -> float:
    """True weighted slot objective for the given transmitter times and powers."""
    return slot_objective(power, link.gain, link.weights(tau), noise, weight)
