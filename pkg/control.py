"""
Per-slot control schemes: load-aware drift-plus-penalty, Greedy-off and Fixed.
Each scheme maps (state, scenario, gains, config) to a SlotDecision.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from phy import noise_power_w, sinr_matrix, subcarrier_rate, transmitting_power, user_rates
from sim_config import CONTROL_DEFAULTS, ORACLE_LIMITS
from traffic import RateTable

logger = logging.getLogger(__name__)

POWER_MODES = ('uniform-on-assigned', 'off')
UNASSIGNED = -1
POWER_TOLERANCE = 1e-9


class ConstraintViolation(AssertionError):
    """A decision broke C3, C4, C5, off-BS emptiness or macro pinning"""


class OracleLimitError(ValueError):
    """Instance too large for exhaustive enumeration"""

    def __init__(self, limit, value, maximum):
        self.limit = limit
        super().__init__(f"{limit} = {value} exceeds the brute-force guard rail of {maximum}")


@dataclass(frozen=True)
class ControlConfig:
    v_weight: float = CONTROL_DEFAULTS['v_weight']
    bs_epoch_slots: int = CONTROL_DEFAULTS['bs_epoch_slots']
    max_toggles_per_epoch: int = CONTROL_DEFAULTS['max_toggles_per_epoch']
    power_mode: str = CONTROL_DEFAULTS['power_mode']
    greedy_off_utilization_threshold: float = CONTROL_DEFAULTS['greedy_off_utilization_threshold']
    queue_unit_bits: float = CONTROL_DEFAULTS['queue_unit_bits']
    hysteresis_epochs: int = CONTROL_DEFAULTS['hysteresis_epochs']

    def __post_init__(self):
        if not np.isfinite(self.v_weight) or self.v_weight < 0:
            raise ValueError("v_weight must be finite and >= 0")
        if self.bs_epoch_slots < 1:
            raise ValueError("bs_epoch_slots must be >= 1")
        if self.max_toggles_per_epoch < 0:
            raise ValueError("max_toggles_per_epoch must be >= 0")
        if self.power_mode not in POWER_MODES:
            raise ValueError(f"power_mode must be one of {POWER_MODES}")
        if not 0 <= self.greedy_off_utilization_threshold < 1:
            raise ValueError("greedy_off_utilization_threshold must lie in [0, 1)")
        if self.queue_unit_bits <= 0:
            raise ValueError("queue_unit_bits must be > 0")
        if self.hysteresis_epochs < 0:
            raise ValueError("hysteresis_epochs must be >= 0")

    def as_dict(self):
        return {
            'v_weight': self.v_weight,
            'bs_epoch_slots': self.bs_epoch_slots,
            'max_toggles_per_epoch': self.max_toggles_per_epoch,
            'power_mode': self.power_mode,
            'greedy_off_utilization_threshold': self.greedy_off_utilization_threshold,
            'queue_unit_bits': self.queue_unit_bits,
            'hysteresis_epochs': self.hysteresis_epochs,
        }


@dataclass(eq=False)
class SlotDecision:
    """s_i(t), u_i(x, t), rho_i^n(x, t) and P_i^n(x, t) for one slot"""
    bs_on: np.ndarray
    association: np.ndarray
    assignment: np.ndarray
    power_w: np.ndarray

    @classmethod
    def empty(cls, scenario, bs_on=None):
        B, U, N = len(scenario.base_stations), len(scenario.user_points), scenario.num_subcarriers
        on = np.ones(B, dtype=bool) if bs_on is None else np.asarray(bs_on, dtype=bool).copy()
        return cls(
            bs_on=on,
            association=np.full(U, UNASSIGNED, dtype=int),
            assignment=np.full((B, N), UNASSIGNED, dtype=int),
            power_w=np.zeros((B, N)),
        )

    def copy(self):
        return SlotDecision(self.bs_on.copy(), self.association.copy(),
                            self.assignment.copy(), self.power_w.copy())

    def same_as(self, other):
        return (np.array_equal(self.bs_on, other.bs_on)
                and np.array_equal(self.association, other.association)
                and np.array_equal(self.assignment, other.assignment)
                and np.array_equal(self.power_w, other.power_w))

    @property
    def on_count(self):
        return int(self.bs_on.sum())


# ===== Fleet helpers =====

def _max_power(scenario):
    return np.array([bs.max_transmit_power_w for bs in scenario.base_stations], dtype=float)


def _macro_mask(scenario):
    return np.array([bs.tier == 'macro' for bs in scenario.base_stations], dtype=bool)


def _distances(scenario):
    bs_xy = np.array([bs.position for bs in scenario.base_stations], dtype=float)
    user_xy = np.array([u.position for u in scenario.user_points], dtype=float).reshape(-1, 2)
    return np.linalg.norm(bs_xy[:, None, :] - user_xy[None, :, :], axis=2)


def nearest_on(scenario, bs_on, distances=None):
    """Nearest ON BS per user; ties go to the lowest BS id"""
    d = _distances(scenario) if distances is None else distances
    masked = np.where(np.asarray(bs_on, dtype=bool)[:, None], d, np.inf)
    return np.argmin(masked, axis=0).astype(int)


_rate_tables = {}


def _rate_table(scenario):
    cached = _rate_tables.get(id(scenario))
    if cached is None or cached[0] is not scenario:
        if len(_rate_tables) > 32:
            _rate_tables.clear()
        cached = (scenario, RateTable(scenario))
        _rate_tables[id(scenario)] = cached
    return cached[1]


def required_rates(scenario, slot):
    return _rate_table(scenario).at(slot)


# ===== Constraint checks =====

def validate_decision(decision, scenario):
    """Raise ConstraintViolation unless C3, C4, C5, off-BS emptiness and macro pinning hold"""
    B, U, N = len(scenario.base_stations), len(scenario.user_points), scenario.num_subcarriers
    if decision.bs_on.shape != (B,) or decision.association.shape != (U,):
        raise ConstraintViolation("decision shape does not match scenario")
    if decision.assignment.shape != (B, N) or decision.power_w.shape != (B, N):
        raise ConstraintViolation("decision shape does not match scenario")

    macros = _macro_mask(scenario)
    if not decision.bs_on[macros].all():
        raise ConstraintViolation("macro BS switched off")

    assoc = decision.association
    if np.any(assoc < 0) or np.any(assoc >= B):
        raise ConstraintViolation("C3: every user must be associated with exactly one BS")
    if not decision.bs_on[assoc].all():
        bad = int(np.flatnonzero(~decision.bs_on[assoc])[0])
        raise ConstraintViolation(f"C3: user {bad} associated with an off BS")

    # C4: one user per (BS, subcarrier), and only a user of that BS
    for i, n in zip(*np.nonzero(decision.assignment >= 0)):
        x = decision.assignment[i, n]
        if x >= U:
            raise ConstraintViolation(f"C4: subcarrier {n} of BS {i} names unknown user {x}")
        if assoc[x] != i:
            raise ConstraintViolation(f"C4: subcarrier {n} of BS {i} serves user {x} not associated with it")

    if np.any(decision.power_w < 0):
        raise ConstraintViolation("negative subcarrier power")
    budget = _max_power(scenario)
    total = decision.power_w.sum(axis=1)
    over = total > budget * (1 + POWER_TOLERANCE)
    if over.any():
        i = int(np.flatnonzero(over)[0])
        raise ConstraintViolation(f"C5: BS {i} transmits {total[i]:.6g} W over budget {budget[i]:.6g} W")

    off = ~decision.bs_on
    if (decision.assignment[off] >= 0).any() or (decision.power_w[off] != 0).any():
        raise ConstraintViolation("off BS holds assignments or power")
    return True


# ===== Objective =====

def total_power(decision, scenario):
    """PC_i for every BS, [B]"""
    xi = np.array([bs.power_model.amplifier_inefficiency for bs in scenario.base_stations])
    static = np.array([bs.power_model.static_power_w for bs in scenario.base_stations])
    tx = transmitting_power(decision).sum(axis=1)
    return np.where(decision.bs_on, xi * tx + static, 0.0)


def dpp_objective(decision, state, scenario, gains, v_weight, queue_unit_bits=1.0):
    """V * sum_i PC_i - sum_x Q(x) R(x); lower is better.

    Only Q is expressed in queue_unit_bits, so V is in watts per (unit x bit/slot).
    With the default unit of one bit this is the plain objective.
    """
    penalty = v_weight * total_power(decision, scenario).sum()
    q = state.queues.queue_bits / queue_unit_bits
    if not q.any():
        return float(penalty)
    r = user_rates(decision, scenario, gains)
    return float(penalty - np.dot(q, r))


def _objective(decision, state, scenario, gains, config):
    return dpp_objective(decision, state, scenario, gains, config.v_weight, config.queue_unit_bits)


# ===== Inner rules =====

def measured_interference(previous, gains):
    """Interference each serving BS would see at every user on every subcarrier, [B, U, N].

    Measured from the previous slot's realized transmissions, so it does not
    depend on the decision being built.
    """
    tx = transmitting_power(previous)
    total = np.einsum('jn,jxn->xn', tx, gains)
    return total[None, :, :] - tx[:, None, :] * gains


def estimated_rates(scenario, gains, interference):
    """Bits per slot BS i would give user x on subcarrier n at P_max / N, [B, U, N]"""
    per_subcarrier = _max_power(scenario) / scenario.num_subcarriers
    signal = per_subcarrier[:, None, None] * gains
    gamma = signal / (np.maximum(interference, 0.0) + noise_power_w(scenario))
    return subcarrier_rate(gamma, scenario.subcarrier_bandwidth_hz, scenario.slot_duration_s)


def associate_by_weight(bs_on, weights, rates):
    """Each user to the ON BS maximizing weight x best-subcarrier rate; ties to lowest id"""
    score = weights[None, :] * rates.max(axis=2)
    score = np.where(bs_on[:, None], score, -np.inf)
    return np.argmax(score, axis=0).astype(int)


def assign_subcarriers(bs_on, association, weights, rates):
    """Each (BS, n) to its associated user maximizing weight x rate, skipping zero weight"""
    B, U, N = rates.shape
    eligible = (association[None, :] == np.arange(B)[:, None]) & (weights[None, :] > 0) & bs_on[:, None]
    score = np.where(eligible[:, :, None], weights[None, :, None] * rates, -np.inf)
    best = np.argmax(score, axis=1)
    has_user = eligible.any(axis=1)[:, None] & np.ones((1, N), dtype=bool)
    return np.where(has_user, best, UNASSIGNED).astype(int)


def allocate_power(scenario, bs_on, assignment, power_mode):
    """UniformOnAssigned: P_max / N per assigned subcarrier; off: P_max spread over assigned ones"""
    pmax = _max_power(scenario)
    assigned = assignment >= 0
    if power_mode == 'off':
        count = assigned.sum(axis=1)
        per = np.divide(pmax, count, out=np.zeros_like(pmax), where=count > 0)
    else:
        per = pmax / scenario.num_subcarriers
    power = np.where(assigned, per[:, None], 0.0)
    power[~np.asarray(bs_on, dtype=bool)] = 0.0
    return power


def build_decision(scenario, bs_on, association, weights, rates, power_mode):
    bs_on = np.asarray(bs_on, dtype=bool)
    assignment = assign_subcarriers(bs_on, association, weights, rates)
    power = allocate_power(scenario, bs_on, assignment, power_mode)
    return SlotDecision(bs_on.copy(), np.asarray(association, dtype=int), assignment, power)


def _inner_load_aware(scenario, bs_on, queues, rates, config):
    association = associate_by_weight(bs_on, queues, rates)
    return build_decision(scenario, bs_on, association, queues, rates, config.power_mode)


def _incumbent_on(state, scenario):
    on = state.incumbent_decision.bs_on.copy()
    on[_macro_mask(scenario)] = True
    return on


def is_epoch_boundary(slot, config):
    return slot % config.bs_epoch_slots == 0


def _frozen(state, scenario, config):
    """BSs switched off too recently to be switched back on"""
    epoch = state.slot // config.bs_epoch_slots
    last_off = getattr(state, 'last_off_epoch', None)
    if last_off is None:
        return np.zeros(len(scenario.base_stations), dtype=bool)
    return (last_off >= 0) & (epoch - last_off <= config.hysteresis_epochs) & ~state.incumbent_decision.bs_on


# ===== Schemes =====

def load_aware_step(state, scenario, gains, config):
    """Heuristic drift-plus-penalty minimizer.

    (a) on epoch boundaries, best-improvement single-BS toggle descent from the
        incumbent on-set, macros pinned;
    (b) association by Q x estimated best-subcarrier rate;
    (c) subcarriers by Q x rate, users with Q = 0 skipped;
    (d) power per config.power_mode.
    """
    queues = state.queues.queue_bits
    rates = estimated_rates(scenario, gains, measured_interference(state.incumbent_decision, gains))
    on = _incumbent_on(state, scenario)
    decision = _inner_load_aware(scenario, on, queues, rates, config)
    if not is_epoch_boundary(state.slot, config) or config.max_toggles_per_epoch == 0:
        return decision

    objective = _objective(decision, state, scenario, gains, config)
    frozen = _frozen(state, scenario, config)
    candidates = [i for i in scenario.small_ids if not frozen[i]]
    toggled = set()
    for _ in range(config.max_toggles_per_epoch):
        best = None
        for i in candidates:
            if i in toggled:
                continue
            trial_on = on.copy()
            trial_on[i] = not trial_on[i]
            trial = _inner_load_aware(scenario, trial_on, queues, rates, config)
            value = _objective(trial, state, scenario, gains, config)
            if value < objective and (best is None or value < best[0]):
                best = (value, i, trial_on, trial)
        if best is None:
            break
        objective, i, on, decision = best
        toggled.add(i)
        logger.debug("slot %d: BS %d switched %s (objective %.6g)",
                     state.slot, i, 'on' if on[i] else 'off', objective)
    return decision


def fixed_step(state, scenario, gains=None):
    """All BSs on, nearest-BS association, round-robin subcarriers, P_max / N everywhere"""
    B, N = len(scenario.base_stations), scenario.num_subcarriers
    on = np.ones(B, dtype=bool)
    association = nearest_on(scenario, on)
    assignment = np.full((B, N), UNASSIGNED, dtype=int)
    for i in range(B):
        users = np.flatnonzero(association == i)
        if len(users):
            assignment[i] = users[np.arange(N) % len(users)]
    power = np.repeat((_max_power(scenario) / N)[:, None], N, axis=1)
    return SlotDecision(on, association, assignment, power)


def bs_utilization(association, loads, rates, bs_on):
    """Offered load over capacity per BS; capacity is N x the mean per-subcarrier rate of its users"""
    B, U, N = rates.shape
    util = np.zeros(B)
    for i in np.flatnonzero(bs_on):
        users = np.flatnonzero(association == i)
        load = loads[users].sum()
        if load == 0:
            continue
        capacity = rates[i, users, :].mean(axis=0).sum()
        util[i] = load / capacity if capacity > 0 else np.inf
    return util


def greedy_off_on_set(scenario, loads, rates, threshold, distances=None):
    """Switch off the least-utilized small BS that its neighbours can absorb, until none qualifies"""
    d = _distances(scenario) if distances is None else distances
    on = np.ones(len(scenario.base_stations), dtype=bool)
    small = np.array(scenario.small_ids, dtype=int)
    association = nearest_on(scenario, on, d)
    while True:
        util = bs_utilization(association, loads, rates, on)
        live = [i for i in small if on[i]]
        switched = False
        for i in sorted(live, key=lambda k: (util[k], k)):
            trial_on = on.copy()
            trial_on[i] = False
            trial_assoc = nearest_on(scenario, trial_on, d)
            receivers = np.unique(trial_assoc[association == i])
            trial_util = bs_utilization(trial_assoc, loads, rates, trial_on)
            if np.all(trial_util[receivers] <= threshold):
                on, association = trial_on, trial_assoc
                switched = True
                break
        if not switched:
            return on


def greedy_off_step(state, scenario, gains, config):
    """Utilization-threshold BS switch-off, nearest-BS association, rate-weighted subcarriers"""
    loads = required_rates(scenario, state.slot)
    rates = estimated_rates(scenario, gains, measured_interference(state.incumbent_decision, gains))
    d = _distances(scenario)
    if is_epoch_boundary(state.slot, config):
        on = greedy_off_on_set(scenario, loads, rates, config.greedy_off_utilization_threshold, d)
    else:
        on = _incumbent_on(state, scenario)
    association = nearest_on(scenario, on, d)
    return build_decision(scenario, on, association, loads, rates, config.power_mode)


def _check_oracle_limits(scenario):
    sizes = (
        ('base stations', len(scenario.base_stations), ORACLE_LIMITS['max_base_stations']),
        ('users', len(scenario.user_points), ORACLE_LIMITS['max_users']),
        ('subcarriers', scenario.num_subcarriers, ORACLE_LIMITS['max_subcarriers']),
    )
    for name, value, maximum in sizes:
        if value > maximum:
            raise OracleLimitError(name, value, maximum)


def brute_force_step(state, scenario, gains, config):
    """Exact minimizer of the per-slot objective by exhaustive enumeration"""
    _check_oracle_limits(scenario)
    B, U, N = len(scenario.base_stations), len(scenario.user_points), scenario.num_subcarriers
    macros = _macro_mask(scenario)
    small = [i for i in range(B) if not macros[i]]
    best = None
    for flags in itertools.product((True, False), repeat=len(small)):
        on = macros.copy()
        on[small] = flags
        on_ids = [int(i) for i in np.flatnonzero(on)]
        for assoc in itertools.product(on_ids, repeat=U):
            association = np.array(assoc, dtype=int)
            options = []
            for i in range(B):
                users = [UNASSIGNED] + [int(x) for x in np.flatnonzero(association == i)]
                options.extend([users] * N)
            for picks in itertools.product(*options):
                assignment = np.array(picks, dtype=int).reshape(B, N)
                power = allocate_power(scenario, on, assignment, config.power_mode)
                decision = SlotDecision(on.copy(), association, assignment, power)
                value = _objective(decision, state, scenario, gains, config)
                if best is None or value < best[1]:
                    best = (decision, value)
    return best


SCHEMES = {
    'load-aware': load_aware_step,
    'greedy-off': greedy_off_step,
    'fixed': lambda state, scenario, gains, config: fixed_step(state, scenario, gains),
}


def scheme_step(name):
    if name not in SCHEMES:
        raise ValueError(f"Unknown scheme '{name}'; choose from {sorted(SCHEMES)}")
    return SCHEMES[name]
