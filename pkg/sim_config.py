"""
Default tables for the Ud-HetNet simulator
Density tiers, channel and power constants, day shapes and control knobs.
Every value here is a configurable default, not ground truth.
"""

import os

from dotenv import load_dotenv

load_dotenv()

RESULTS_DB = os.getenv('UDN_RESULTS_DB', 'udn_results.db')
OUTPUT_DIR = os.getenv('UDN_OUTPUT_DIR', 'results')
DEFAULT_JOBS = int(os.getenv('UDN_JOBS', '0')) or (os.cpu_count() or 1)

# Per 1 km x 1 km region
DENSITY_TIERS = {
    'urban': {
        'macro_count': 4,
        'small_count': 16,
        'user_count': 200,
    },
    'suburban': {
        'macro_count': 4,
        'small_count': 8,
        'user_count': 120,
    },
    'rural': {
        'macro_count': 4,
        'small_count': 2,
        'user_count': 60,
    },
}

SCENARIO_DEFAULTS = {
    'region_width_m': 1000.0,
    'region_height_m': 1000.0,
    'num_subcarriers': 16,
    'subcarrier_bandwidth_hz': 180e3,
    'noise_psd_dbm_per_hz': -174.0,
    'slot_duration_s': 1.0,
    'slots_per_day': 1000,
    'hotspot_shape': 4.0,  # gamma shape of the mean-1 spatial weight
}

# Log-distance path loss with d in km
CHANNEL_DEFAULTS = {
    'pathloss_macro': (128.1, 37.6),
    'pathloss_small': (140.7, 36.7),
    'shadowing_sigma_db': 0.0,
    'fading': 'none',
    'min_distance_m': 10.0,
    'fading_block_slots': 10,
    'frequency_selective': False,
}

# Macro: exact linear fit through 766 W @ 20 W and 532 W @ 10 W.
# Small: chosen defaults, no published numbers behind them.
POWER_MODEL_DEFAULTS = {
    'macro': {
        'amplifier_inefficiency': 23.4,
        'static_power_w': 298.0,
        'max_transmit_power_w': 20.0,
    },
    'small': {
        'amplifier_inefficiency': 4.0,
        'static_power_w': 10.0,
        'max_transmit_power_w': 1.0,
    },
}

# Typical UMTS BS: 800-1500 W total for 20-40 W RF output
POWER_ENVELOPE_W = (800.0, 1500.0)
POWER_ENVELOPE_RF_W = (20.0, 40.0)

# Hour-of-day multipliers, peak normalized to 1.
# weekday: 7 of 24 hours below 10% of peak (about 30%), 02:00-05:00 idle
# weekend: 11 of 24 hours below 10% of peak (about 45%), 03:00-06:00 idle
DAY_SHAPES = {
    'weekday': (
        0.20, 0.08, 0.00, 0.00, 0.00, 0.04, 0.06, 0.09,
        0.25, 0.45, 0.60, 0.70, 0.75, 0.70, 0.68, 0.70,
        0.75, 0.80, 0.85, 0.90, 0.95, 1.00, 0.70, 0.35,
    ),
    'weekend': (
        0.20, 0.09, 0.06, 0.00, 0.00, 0.00, 0.04, 0.05,
        0.06, 0.08, 0.09, 0.09, 0.30, 0.45, 0.55, 0.60,
        0.65, 0.70, 0.75, 0.85, 0.95, 1.00, 0.80, 0.45,
    ),
    'flat': tuple([1.0] * 24),
}

LOW_TRAFFIC_FRACTION = 0.1

TRAFFIC_DEFAULTS = {
    'base_rate_bits_per_slot': 15e3,
    'packet_size_bits': 20e6,
    'day_shape': 'weekday',
    'weekend_shape': None,
    'arrival_mode': 'poisson',
}

CONTROL_DEFAULTS = {
    'v_weight': 10.0,
    'bs_epoch_slots': 10,
    'max_toggles_per_epoch': 8,
    'power_mode': 'uniform-on-assigned',
    'greedy_off_utilization_threshold': 0.5,
    'queue_unit_bits': 1.0,
    'hysteresis_epochs': 1,
}

EXPERIMENT_DEFAULTS = {
    'tiers': ['urban', 'suburban', 'rural'],
    'scenario_seed': 1,
    'schemes': ['load-aware', 'greedy-off', 'fixed'],
    'v_values': [CONTROL_DEFAULTS['v_weight']],
    'horizon_slots': 5000,
    'seeds': [1, 2, 3, 4, 5],
    'arrival_mode': TRAFFIC_DEFAULTS['arrival_mode'],
    'packet_size_bits': TRAFFIC_DEFAULTS['packet_size_bits'],
}

# Brute-force oracle guard rails
ORACLE_LIMITS = {
    'max_base_stations': 4,
    'max_users': 4,
    'max_subcarriers': 2,
}
