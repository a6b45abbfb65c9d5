"""
Experiment configuration, artifact writing and the oracle verification suite
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from control import (SCHEMES, ConstraintViolation, ControlConfig, OracleLimitError, brute_force_step,
                     load_aware_step, validate_decision, dpp_objective)
from phy import ChannelModel, PowerModel, gain_matrix, power_envelope_report
from scenario import BaseStation, Scenario, UserPoint, default_power_model, generate_scenario, load_scenario
from sim import comparison_table, fixed_load, initial_state, slots_frame, summary_records, sweep
from sim_config import (CHANNEL_DEFAULTS, CONTROL_DEFAULTS, DAY_SHAPES, DEFAULT_JOBS, DENSITY_TIERS,
                        EXPERIMENT_DEFAULTS, ORACLE_LIMITS, OUTPUT_DIR, POWER_MODEL_DEFAULTS,
                        SCENARIO_DEFAULTS, TRAFFIC_DEFAULTS)
from traffic import ARRIVAL_MODES, QueueState, default_profile, fraction_below

logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG_FILE = 'effective_config.json'
SLOTS_FILE = 'slots.csv'
SUMMARY_FILE = 'summary.json'
TABLE_FILE = 'summary.txt'
GAPS_FILE = 'gaps.csv'


class ConfigError(ValueError):
    """Invalid experiment configuration"""

    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class ExperimentConfig:
    tiers: list = field(default_factory=lambda: list(EXPERIMENT_DEFAULTS['tiers']))
    scenario_seed: int = EXPERIMENT_DEFAULTS['scenario_seed']
    scenario_file: Optional[str] = None
    region_m: tuple = (SCENARIO_DEFAULTS['region_width_m'], SCENARIO_DEFAULTS['region_height_m'])
    base_rate_bits_per_slot: float = TRAFFIC_DEFAULTS['base_rate_bits_per_slot']
    day_shape: str = TRAFFIC_DEFAULTS['day_shape']
    weekend_shape: Optional[str] = TRAFFIC_DEFAULTS['weekend_shape']
    schemes: list = field(default_factory=lambda: list(EXPERIMENT_DEFAULTS['schemes']))
    control: ControlConfig = field(default_factory=ControlConfig)
    v_values: list = field(default_factory=lambda: list(EXPERIMENT_DEFAULTS['v_values']))
    horizon_slots: int = EXPERIMENT_DEFAULTS['horizon_slots']
    seeds: list = field(default_factory=lambda: list(EXPERIMENT_DEFAULTS['seeds']))
    output_dir: str = OUTPUT_DIR
    jobs: int = DEFAULT_JOBS
    arrival_mode: str = EXPERIMENT_DEFAULTS['arrival_mode']
    packet_size_bits: float = EXPERIMENT_DEFAULTS['packet_size_bits']

    def validate(self):
        if self.scenario_file is None:
            if not self.tiers:
                raise ConfigError('scenario.tiers', "at least one tier is required")
            for tier in self.tiers:
                if tier not in DENSITY_TIERS:
                    raise ConfigError('scenario.tiers', f"unknown tier '{tier}'")
        elif not os.path.exists(self.scenario_file):
            raise ConfigError('scenario.file', f"scenario file not found: {self.scenario_file}")
        if len(self.region_m) != 2 or min(self.region_m) <= 0:
            raise ConfigError('scenario.region_m', "expected two positive lengths")
        if self.base_rate_bits_per_slot < 0:
            raise ConfigError('scenario.base_rate_bits_per_slot', "must be >= 0")
        for name, shape in (('scenario.day_shape', self.day_shape), ('scenario.weekend_shape', self.weekend_shape)):
            if shape is not None and shape not in DAY_SHAPES:
                raise ConfigError(name, f"unknown day shape '{shape}'")
        if not self.schemes:
            raise ConfigError('schemes', "at least one scheme is required")
        for scheme in self.schemes:
            if scheme not in SCHEMES:
                raise ConfigError('schemes', f"unknown scheme '{scheme}', choose from {sorted(SCHEMES)}")
        if not self.v_values or any(not np.isfinite(v) or v < 0 for v in self.v_values):
            raise ConfigError('v_values', "expected a non-empty list of finite V >= 0")
        if self.horizon_slots < 1:
            raise ConfigError('horizon_slots', "must be >= 1")
        if not self.seeds:
            raise ConfigError('seeds', "at least one seed is required")
        if self.jobs < 1:
            raise ConfigError('jobs', "must be >= 1")
        if self.arrival_mode not in ARRIVAL_MODES:
            raise ConfigError('arrival_mode', f"must be one of {ARRIVAL_MODES}")
        if self.packet_size_bits <= 0:
            raise ConfigError('packet_size_bits', "must be > 0")
        return self

    def as_dict(self):
        return {
            'scenario': {
                'tiers': list(self.tiers),
                'seed': self.scenario_seed,
                'file': self.scenario_file,
                'region_m': list(self.region_m),
                'base_rate_bits_per_slot': self.base_rate_bits_per_slot,
                'day_shape': self.day_shape,
                'weekend_shape': self.weekend_shape,
            },
            'schemes': list(self.schemes),
            'control': self.control.as_dict(),
            'v_values': list(self.v_values),
            'horizon_slots': self.horizon_slots,
            'seeds': list(self.seeds),
            'output_dir': self.output_dir,
            'jobs': self.jobs,
            'arrival_mode': self.arrival_mode,
            'packet_size_bits': self.packet_size_bits,
        }


def _typed(value, kind, name):
    try:
        if kind is list:
            if not isinstance(value, list):
                raise TypeError
            return value
        if isinstance(value, bool) and kind is not bool:
            raise TypeError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None


def config_from_dict(data, base_dir='.', overrides=None):
    """Merge defaults, file contents and flag overrides (flag > file > default)"""
    if not isinstance(data, dict):
        raise ConfigError('<document>', "top level must be an object")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cfg = ExperimentConfig()

    sc = data.get('scenario', {})
    if not isinstance(sc, dict):
        raise ConfigError('scenario', "must be an object")
    if 'file' in sc and sc['file'] is not None:
        path = str(sc['file'])
        cfg.scenario_file = path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))
    if 'tiers' in sc:
        cfg.tiers = [str(t).lower() for t in _typed(sc['tiers'], list, 'scenario.tiers')]
    if 'seed' in sc:
        cfg.scenario_seed = _typed(sc['seed'], int, 'scenario.seed')
    if 'region_m' in sc:
        cfg.region_m = tuple(_typed(v, float, 'scenario.region_m') for v in _typed(sc['region_m'], list, 'scenario.region_m'))
    if 'base_rate_bits_per_slot' in sc:
        cfg.base_rate_bits_per_slot = _typed(sc['base_rate_bits_per_slot'], float, 'scenario.base_rate_bits_per_slot')
    if 'day_shape' in sc:
        cfg.day_shape = str(sc['day_shape'])
    if 'weekend_shape' in sc:
        cfg.weekend_shape = sc['weekend_shape']

    if 'schemes' in data:
        cfg.schemes = [str(s) for s in _typed(data['schemes'], list, 'schemes')]
    if 'v_values' in data:
        cfg.v_values = [_typed(v, float, 'v_values') for v in _typed(data['v_values'], list, 'v_values')]
    for name, kind in (('horizon_slots', int), ('jobs', int), ('output_dir', str),
                       ('arrival_mode', str), ('packet_size_bits', float)):
        if name in data:
            setattr(cfg, name, _typed(data[name], kind, name))
    if 'seeds' in data:
        cfg.seeds = [_typed(s, int, 'seeds') for s in _typed(data['seeds'], list, 'seeds')]

    control = dict(CONTROL_DEFAULTS)
    file_control = data.get('control', {})
    if not isinstance(file_control, dict):
        raise ConfigError('control', "must be an object")
    unknown = set(file_control) - set(CONTROL_DEFAULTS)
    if unknown:
        raise ConfigError('control', f"unknown field(s) {sorted(unknown)}")
    control.update(file_control)
    if 'v_values' in data and 'v_weight' not in file_control and cfg.v_values:
        control['v_weight'] = cfg.v_values[0]

    # flags
    if 'v_weight' in overrides:
        control['v_weight'] = float(overrides['v_weight'])
        cfg.v_values = [float(overrides['v_weight'])]
    elif 'v_values' not in data:
        cfg.v_values = [float(control['v_weight'])]
    if 'bs_epoch_slots' in overrides:
        control['bs_epoch_slots'] = int(overrides['bs_epoch_slots'])
    for name in ('horizon_slots', 'jobs', 'output_dir', 'arrival_mode'):
        if name in overrides:
            setattr(cfg, name, overrides[name])

    cfg.validate()
    try:
        cfg.control = ControlConfig(**control)
    except (TypeError, ValueError) as e:
        raise ConfigError('control', str(e)) from None
    return cfg


def load_experiment_config(path, overrides=None):
    if not os.path.exists(path):
        raise ConfigError('config', f"config file not found: {path}")
    with open(path, 'r') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError('config', f"{path} line {e.lineno}: {e.msg}") from None
    return config_from_dict(data, os.path.dirname(os.path.abspath(path)), overrides)


def build_scenarios(cfg):
    if cfg.scenario_file:
        return [load_scenario(cfg.scenario_file)]
    return [generate_scenario(tier, cfg.region_m, cfg.scenario_seed,
                              base_rate=cfg.base_rate_bits_per_slot,
                              day_shape=cfg.day_shape, weekend_shape=cfg.weekend_shape)
            for tier in cfg.tiers]


def run_experiment(cfg):
    scenarios = build_scenarios(cfg)
    return sweep(scenarios, cfg.schemes, cfg.v_values, cfg.control, cfg.horizon_slots, cfg.seeds,
                 jobs=cfg.jobs, arrival_mode=cfg.arrival_mode, packet_size_bits=cfg.packet_size_bits)


def format_table(table):
    lines = ["=" * 50, "AVERAGE POWER BY TIER AND SCHEME", "=" * 50]
    if len(table):
        lines.append(table.to_string(index=False, float_format=lambda v: f"{v:,.2f}"))
    else:
        lines.append("(no runs)")
    return "\n".join(lines) + "\n"


def write_artifacts(results, cfg, out_dir=None, db=None):
    """slots.csv, summary.json, summary.txt and effective_config.json; runs go to the results database"""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, EFFECTIVE_CONFIG_FILE), 'w') as f:
        json.dump(cfg.as_dict(), f, indent=2)

    slots = slots_frame(results)
    slots.to_csv(os.path.join(out_dir, SLOTS_FILE), index=False)

    summary = summary_records(results)
    with open(os.path.join(out_dir, SUMMARY_FILE), 'w') as f:
        json.dump({'runs': summary}, f, indent=2)

    table = comparison_table(results)
    with open(os.path.join(out_dir, TABLE_FILE), 'w') as f:
        f.write(format_table(table))

    if db is not None:
        db.insert_runs(summary, slots, output_dir=out_dir)
    logger.info("Wrote %d runs to %s", len(summary), out_dir)
    return table


# ===== Oracle verification =====

def check_oracle_size(num_bs, num_users, num_subcarriers):
    for name, value, maximum in (('base stations', num_bs, ORACLE_LIMITS['max_base_stations']),
                                 ('users', num_users, ORACLE_LIMITS['max_users']),
                                 ('subcarriers', num_subcarriers, ORACLE_LIMITS['max_subcarriers'])):
        if value > maximum:
            raise OracleLimitError(name, value, maximum)
        if value < 1:
            raise ConfigError(name, "must be >= 1")


def tiny_instance(rng, num_bs, num_users, num_subcarriers, side_m=300.0):
    """One macro at the center, the rest small cells, users uniform; random queues"""
    stations = [BaseStation(0, 'macro', (side_m / 2, side_m / 2),
                            POWER_MODEL_DEFAULTS['macro']['max_transmit_power_w'], default_power_model('macro'))]
    for i in range(1, num_bs):
        x, y = rng.uniform(0, side_m, size=2)
        stations.append(BaseStation(i, 'small', (float(x), float(y)),
                                    POWER_MODEL_DEFAULTS['small']['max_transmit_power_w'],
                                    default_power_model('small')))
    users = []
    for k in range(num_users):
        x, y = rng.uniform(0, side_m, size=2)
        users.append(UserPoint(k, (float(x), float(y)), default_profile()))
    scenario = Scenario(side_m, side_m, stations, users, num_subcarriers=num_subcarriers,
                        channel=ChannelModel(fading='block-rayleigh', frequency_selective=True),
                        tier_name='oracle')
    queues = rng.uniform(0, 4e6, size=num_users) * (rng.random(num_users) < 0.8)
    return scenario, queues


def verification_config(instances, num_bs, num_users, num_subcarriers, seed, config=None):
    """Everything a verify run depends on, as written to effective_config.json"""
    return {
        'instances': instances,
        'num_bs': num_bs,
        'num_users': num_users,
        'num_subcarriers': num_subcarriers,
        'seed': seed,
        'control': (config or ControlConfig()).as_dict(),
        'oracle_limits': ORACLE_LIMITS,
    }


def verify_oracle(instances, num_bs=2, num_users=2, num_subcarriers=1, seed=0, config=None):
    """Compare load_aware_step against the exhaustive optimum on seeded tiny instances"""
    check_oracle_size(num_bs, num_users, num_subcarriers)
    config = config or ControlConfig()
    no_toggle = replace(config, max_toggles_per_epoch=0)
    rows = []
    for k in range(instances):
        rng = np.random.default_rng([seed, k])
        scenario, queues = tiny_instance(rng, num_bs, num_users, num_subcarriers)
        state = initial_state(scenario, seed=k)
        state.queues = QueueState(queue_bits=queues, slot=0)
        gains = gain_matrix(scenario, 0, k)

        decision = load_aware_step(state, scenario, gains, config)
        try:
            feasible = validate_decision(decision, scenario)
        except ConstraintViolation as e:
            logger.error("instance %d: %s", k, e)
            feasible = False
        greedy = dpp_objective(decision, state, scenario, gains, config.v_weight, config.queue_unit_bits)
        all_on = load_aware_step(state, scenario, gains, no_toggle)
        baseline = dpp_objective(all_on, state, scenario, gains, config.v_weight, config.queue_unit_bits)
        _, optimum = brute_force_step(state, scenario, gains, config)

        if optimum == greedy:
            gap = 0.0
        else:
            gap = (greedy - optimum) / abs(optimum) if optimum != 0 else float('inf')
        rows.append({
            'instance': k,
            'feasible': bool(feasible),
            'objective_load_aware': greedy,
            'objective_all_on': baseline,
            'objective_optimum': optimum,
            'gap': gap,
            'not_worse_than_all_on': greedy <= baseline,
        })
    columns = ['instance', 'feasible', 'objective_load_aware', 'objective_all_on', 'objective_optimum',
               'gap', 'not_worse_than_all_on']
    return pd.DataFrame(rows, columns=columns)


def gap_statistics(report):
    if not len(report):
        return {'instances': 0, 'feasible': 0, 'median_gap': None, 'mean_gap': None, 'max_gap': None,
                'not_worse_than_all_on': 0}
    return {
        'instances': int(len(report)),
        'feasible': int(report['feasible'].sum()),
        'median_gap': float(report['gap'].median()),
        'mean_gap': float(report['gap'].mean()),
        'max_gap': float(report['gap'].max()),
        'not_worse_than_all_on': int(report['not_worse_than_all_on'].sum()),
    }


def fixed_load_report(tiers=None, seed=None):
    """Per tier: mean and peak-hour Fixed-scheme load over the default scenario's BSs with users"""
    tiers = tiers or EXPERIMENT_DEFAULTS['tiers']
    seed = EXPERIMENT_DEFAULTS['scenario_seed'] if seed is None else seed
    report = {}
    for tier in tiers:
        scenario = generate_scenario(tier, seed=seed)
        load = fixed_load(scenario, seed)
        serving = load.max(axis=0) > 0
        report[tier] = {
            'mean': float(load[:, serving].mean()) if serving.any() else 0.0,
            'peak_hour_mean': float(load[:, serving].mean(axis=1).max()) if serving.any() else 0.0,
            'max': float(load.max()),
        }
    return report


def describe_defaults():
    """Every default the simulator runs with"""
    macro = PowerModel(POWER_MODEL_DEFAULTS['macro']['amplifier_inefficiency'],
                       POWER_MODEL_DEFAULTS['macro']['static_power_w'])
    return {
        'density_tiers': DENSITY_TIERS,
        'scenario': SCENARIO_DEFAULTS,
        'channel': CHANNEL_DEFAULTS,
        'power_models': POWER_MODEL_DEFAULTS,
        'macro_power_envelope': power_envelope_report(macro),
        'traffic': TRAFFIC_DEFAULTS,
        'day_shapes': {name: {'multipliers': list(shape), 'fraction_below_10pct': fraction_below(shape)}
                       for name, shape in DAY_SHAPES.items()},
        'control': CONTROL_DEFAULTS,
        'experiment': EXPERIMENT_DEFAULTS,
        'oracle_limits': ORACLE_LIMITS,
        'fixed_load': fixed_load_report(),
    }
