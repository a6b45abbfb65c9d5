import numpy as np
import pytest

from conftest import build_scenario, make_decision
from control import (ConstraintViolation, ControlConfig, OracleLimitError, SlotDecision, allocate_power,
                     associate_by_weight, brute_force_step, bs_utilization, dpp_objective, estimated_rates,
                     fixed_step, greedy_off_on_set, greedy_off_step, load_aware_step, measured_interference,
                     nearest_on, scheme_step, total_power, validate_decision)
from phy import gain_matrix, user_rates
from sim import initial_state
from traffic import QueueState


def _state(scenario, queues, slot=0):
    state = initial_state(scenario, seed=0)
    state.queues = QueueState(np.asarray(queues, dtype=float), slot=slot)
    state.slot = slot
    return state


# ===== Config =====

def test_control_config_validation():
    for bad in ({'v_weight': -1.0}, {'bs_epoch_slots': 0}, {'max_toggles_per_epoch': -1},
                {'power_mode': 'waterfill'}, {'greedy_off_utilization_threshold': 1.0},
                {'queue_unit_bits': 0.0}, {'hysteresis_epochs': -1}):
        with pytest.raises(ValueError):
            ControlConfig(**bad)
    assert ControlConfig().as_dict()['power_mode'] == 'uniform-on-assigned'


# ===== Fixed =====

def test_fixed_round_robin_example():
    s = build_scenario([('macro', (0.0, 0.0))], [(100.0, 0.0), (200.0, 0.0)], num_subcarriers=4)
    d = fixed_step(_state(s, [0, 0]), s)
    assert d.association.tolist() == [0, 0]
    assert set(np.flatnonzero(d.assignment[0] == 0)) == {0, 2}
    assert set(np.flatnonzero(d.assignment[0] == 1)) == {1, 3}
    assert np.allclose(d.power_w, 5.0)
    assert validate_decision(d, s)


def test_fixed_keeps_everything_on(two_cell_scenario):
    d = fixed_step(_state(two_cell_scenario, [0, 0, 0]), two_cell_scenario)
    assert d.bs_on.all()
    assert d.association.tolist() == [0, 1, 1]
    assert total_power(d, two_cell_scenario) == pytest.approx([766.0, 14.0])


def test_nearest_on_ties_go_to_lowest_id():
    s = build_scenario([('macro', (0.0, 0.0)), ('small', (200.0, 0.0))], [(100.0, 0.0)])
    assert nearest_on(s, [True, True]).tolist() == [0]
    assert nearest_on(s, [False, True]).tolist() == [1]


# ===== Constraint checks =====

def test_validate_rejects_violations(two_cell_scenario):
    s = two_cell_scenario
    good = make_decision(s, [True, True], [0, 1, 1], [[0, -1], [1, 2]], [[10.0, 0.0], [0.5, 0.5]])
    assert validate_decision(good, s)

    cases = [
        make_decision(s, [False, True], [1, 1, 1], [[-1, -1], [1, 2]], [[0.0, 0.0], [0.5, 0.5]]),  # macro off
        make_decision(s, [True, False], [0, 1, 0], [[0, -1], [-1, -1]], [[10.0, 0.0], [0.0, 0.0]]),  # C3
        make_decision(s, [True, True], [-1, 1, 1], [[-1, -1], [1, 2]], [[0.0, 0.0], [0.5, 0.5]]),  # C3
        make_decision(s, [True, True], [0, 1, 1], [[1, -1], [1, 2]], [[10.0, 0.0], [0.5, 0.5]]),  # C4
        make_decision(s, [True, True], [0, 1, 1], [[0, -1], [1, 2]], [[15.0, 6.0], [0.5, 0.5]]),  # C5
        make_decision(s, [True, True], [0, 1, 1], [[0, -1], [1, 2]], [[10.0, 0.0], [-0.5, 0.5]]),
        make_decision(s, [True, False], [0, 0, 0], [[0, 1], [-1, -1]], [[10.0, 10.0], [0.5, 0.0]]),
    ]
    for bad in cases:
        with pytest.raises(ConstraintViolation):
            validate_decision(bad, s)


# ===== Objective and inner rules =====

def test_objective_with_empty_queues_is_weighted_power(two_cell_scenario):
    s = two_cell_scenario
    gains = gain_matrix(s, 0, 0)
    d = fixed_step(_state(s, [0, 0, 0]), s)
    value = dpp_objective(d, _state(s, [0, 0, 0]), s, gains, v_weight=3.0)
    assert value == pytest.approx(3.0 * (766.0 + 14.0))


def test_objective_subtracts_queue_weighted_rate(two_cell_scenario):
    s = two_cell_scenario
    gains = gain_matrix(s, 0, 0)
    d = fixed_step(_state(s, [0, 0, 0]), s)
    queues = np.array([2e6, 1e6, 0.0])
    rates = user_rates(d, s, gains)
    expected = 10.0 * total_power(d, s).sum() - np.dot(queues, rates)
    assert dpp_objective(d, _state(s, queues), s, gains, 10.0) == pytest.approx(expected)
    config = ControlConfig(v_weight=10.0)
    value = dpp_objective(d, _state(s, queues), s, gains, config.v_weight, config.queue_unit_bits)
    assert value == pytest.approx(expected)


def test_queue_unit_scales_only_the_backlog(two_cell_scenario):
    s = two_cell_scenario
    gains = gain_matrix(s, 0, 0)
    d = fixed_step(_state(s, [0, 0, 0]), s)
    queues = np.array([2e6, 1e6, 0.0])
    rates = user_rates(d, s, gains)
    expected = 10.0 * total_power(d, s).sum() - np.dot(queues / 1e6, rates)
    assert dpp_objective(d, _state(s, queues), s, gains, 10.0, 1e6) == pytest.approx(expected)


def test_measured_interference_excludes_serving_bs(two_cell_scenario):
    s = two_cell_scenario
    gains = gain_matrix(s, 0, 0)
    previous = make_decision(s, [True, True], [0, 1, 1], [[0, 0], [1, -1]], [[10.0, 10.0], [0.5, 0.5]])
    interference = measured_interference(previous, gains)
    # subcarrier 0: both transmit, so each BS sees the other
    assert interference[0, 2, 0] == pytest.approx(0.5 * gains[1, 2, 0])
    assert interference[1, 2, 0] == pytest.approx(10.0 * gains[0, 2, 0])
    # subcarrier 1: only the macro transmits
    assert interference[1, 2, 1] == pytest.approx(10.0 * gains[0, 2, 1])
    assert interference[0, 2, 1] == pytest.approx(0.0)


def test_zero_queue_users_go_to_lowest_on_bs():
    rates = np.ones((3, 2, 1))
    association = associate_by_weight(np.array([False, True, True]), np.zeros(2), rates)
    assert association.tolist() == [1, 1]


def test_power_modes(two_cell_scenario):
    s = two_cell_scenario
    assignment = np.array([[0, -1], [1, 2]])
    uniform = allocate_power(s, [True, True], assignment, 'uniform-on-assigned')
    assert uniform.tolist() == [[10.0, 0.0], [0.5, 0.5]]
    spread = allocate_power(s, [True, True], assignment, 'off')
    assert spread.tolist() == [[20.0, 0.0], [0.5, 0.5]]
    assert allocate_power(s, [True, False], assignment, 'off')[1].tolist() == [0.0, 0.0]


# ===== Load-aware =====

def test_load_aware_switches_idle_small_cells_off(tiny_scenario, control_config):
    s = tiny_scenario
    gains = gain_matrix(s, 0, 0)
    d = load_aware_step(_state(s, np.zeros(8)), s, gains, control_config)
    assert validate_decision(d, s)
    assert d.bs_on.tolist() == [True, False, False, False]
    assert not (d.assignment >= 0).any()


def test_load_aware_toggle_budget(tiny_scenario):
    s = tiny_scenario
    config = ControlConfig(bs_epoch_slots=5, max_toggles_per_epoch=1)
    d = load_aware_step(_state(s, np.zeros(8)), s, gain_matrix(s, 0, 0), config)
    assert d.bs_on.tolist() == [True, False, True, True]


def test_load_aware_keeps_on_set_between_epochs(tiny_scenario, control_config):
    s = tiny_scenario
    state = _state(s, np.zeros(8), slot=3)
    d = load_aware_step(state, s, gain_matrix(s, 3, 0), control_config)
    assert d.bs_on.all()


def test_load_aware_never_worse_than_keeping_all_on(tiny_scenario, control_config):
    s = tiny_scenario
    no_toggle = ControlConfig(bs_epoch_slots=5, max_toggles_per_epoch=0)
    for k in range(10):
        rng = np.random.default_rng(k)
        queues = rng.uniform(0, 5e6, 8) * (rng.random(8) < 0.7)
        state = _state(s, queues)
        gains = gain_matrix(s, 0, k)
        chosen = load_aware_step(state, s, gains, control_config)
        baseline = load_aware_step(state, s, gains, no_toggle)
        assert validate_decision(chosen, s)
        assert (dpp_objective(chosen, state, s, gains, 10.0)
                <= dpp_objective(baseline, state, s, gains, 10.0))


def _backlogged_small_cell(two_cell_scenario, last_off):
    s = two_cell_scenario
    state = _state(s, [0.0, 1e9, 1e9], slot=10)
    state.incumbent_decision = SlotDecision.empty(s, bs_on=[True, False])
    state.last_off_epoch = np.array([-1, last_off])
    return state


def test_backlog_switches_small_cell_back_on(two_cell_scenario, control_config):
    s = two_cell_scenario
    state = _backlogged_small_cell(s, last_off=-1)
    d = load_aware_step(state, s, gain_matrix(s, 10, 0), control_config)
    assert d.bs_on.tolist() == [True, True]
    assert d.association[2] == 1


def test_hysteresis_freezes_recently_switched_off_cell(two_cell_scenario, control_config):
    s = two_cell_scenario
    gains = gain_matrix(s, 10, 0)
    frozen = load_aware_step(_backlogged_small_cell(s, last_off=1), s, gains, control_config)
    assert frozen.bs_on.tolist() == [True, False]
    released = load_aware_step(_backlogged_small_cell(s, last_off=0), s, gains, control_config)
    assert released.bs_on.tolist() == [True, True]


# ===== Greedy-off =====

def test_bs_utilization_example():
    rates = np.zeros((2, 2, 2))
    rates[1, :, :] = [[100.0, 300.0], [200.0, 200.0]]
    util = bs_utilization(np.array([1, 1]), np.array([150.0, 250.0]), rates, np.array([True, True]))
    # capacity: per-subcarrier mean (150, 250) summed over N = 400
    assert util.tolist() == [0.0, 1.0]


def test_greedy_off_switches_off_idle_cells(tiny_scenario):
    s = tiny_scenario
    rates = estimated_rates(s, gain_matrix(s, 0, 0), np.zeros((4, 8, 4)))
    on = greedy_off_on_set(s, np.zeros(8), rates, 0.5)
    assert on.tolist() == [True, False, False, False]


def test_greedy_off_keeps_cells_when_neighbours_are_full(two_cell_scenario):
    s = two_cell_scenario
    rates = estimated_rates(s, gain_matrix(s, 0, 0), np.zeros((2, 3, 2)))
    on = greedy_off_on_set(s, np.full(3, 1e12), rates, 0.5)
    assert on.all()


def test_greedy_off_step_is_feasible(tiny_scenario, control_config):
    s = tiny_scenario
    for slot in (0, 1, 5):
        d = greedy_off_step(_state(s, np.full(8, 1e5), slot=slot), s, gain_matrix(s, slot, 0), control_config)
        assert validate_decision(d, s)
        assert d.bs_on[s.macro_ids].all()


# ===== Oracle =====

def test_brute_force_never_worse_than_load_aware(control_config):
    for k in range(5):
        rng = np.random.default_rng(100 + k)
        s = build_scenario([('macro', (150.0, 150.0)), ('small', tuple(rng.uniform(0, 300, 2))),
                            ('small', tuple(rng.uniform(0, 300, 2)))],
                           [tuple(rng.uniform(0, 300, 2)) for _ in range(3)], num_subcarriers=1,
                           width=300.0, height=300.0)
        state = _state(s, rng.uniform(0, 4e6, 3))
        gains = gain_matrix(s, 0, k)
        decision, best = brute_force_step(state, s, gains, control_config)
        assert validate_decision(decision, s)
        heuristic = load_aware_step(state, s, gains, control_config)
        assert best <= dpp_objective(heuristic, state, s, gains, 10.0) + 1e-9


def test_brute_force_guard_rails(control_config):
    s = build_scenario([('macro', (0.0, 0.0))] + [('small', (100.0 * i, 0.0)) for i in range(1, 5)],
                       [(50.0, 50.0)], num_subcarriers=1)
    with pytest.raises(OracleLimitError) as info:
        brute_force_step(_state(s, [1e6]), s, gain_matrix(s, 0, 0), control_config)
    assert info.value.limit == 'base stations'


def test_unknown_scheme():
    with pytest.raises(ValueError):
        scheme_step('always-off')


def test_brute_force_invariant_under_relabeling(control_config):
    stations = [('macro', (150.0, 150.0)), ('small', (40.0, 60.0)), ('small', (260.0, 220.0))]
    users = [(50.0, 70.0), (250.0, 230.0), (140.0, 20.0)]
    swapped = [stations[0], stations[2], stations[1]]
    a = build_scenario(stations, users, num_subcarriers=1, width=300.0, height=300.0)
    b = build_scenario(swapped, users, num_subcarriers=1, width=300.0, height=300.0)
    queues = [3e6, 1e6, 2e6]
    da, va = brute_force_step(_state(a, queues), a, gain_matrix(a, 0, 0), control_config)
    db, vb = brute_force_step(_state(b, queues), b, gain_matrix(b, 0, 0), control_config)
    assert va == pytest.approx(vb)
    assert da.bs_on[[0, 2, 1]].tolist() == db.bs_on.tolist()


def test_idle_network_power_ordering(two_cell_scenario, control_config):
    s = two_cell_scenario
    state = _state(s, np.zeros(3))
    gains = gain_matrix(s, 0, 0)
    powers = [total_power(scheme_step(name)(state, s, gains, control_config), s).sum()
              for name in ('load-aware', 'greedy-off', 'fixed')]
    assert powers[0] <= powers[1] <= powers[2]
    assert powers[0] == pytest.approx(298.0)
