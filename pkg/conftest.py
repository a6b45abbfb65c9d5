import numpy as np
import pytest

from control import ControlConfig, SlotDecision
from phy import ChannelModel
from scenario import BaseStation, DensityTier, Scenario, UserPoint, default_power_model, generate_scenario
from sim_config import POWER_MODEL_DEFAULTS
from traffic import default_profile


def build_scenario(stations, users, num_subcarriers=2, width=1000.0, height=1000.0, channel=None,
                   shape_name='flat', slots_per_day=1000):
    """stations: [(tier, (x, y))]; users: [(x, y)]"""
    base_stations = [
        BaseStation(i, tier, pos, POWER_MODEL_DEFAULTS[tier]['max_transmit_power_w'], default_power_model(tier))
        for i, (tier, pos) in enumerate(stations)
    ]
    user_points = [UserPoint(k, pos, default_profile(shape_name=shape_name)) for k, pos in enumerate(users)]
    return Scenario(width, height, base_stations, user_points, num_subcarriers=num_subcarriers,
                    channel=channel or ChannelModel(), slots_per_day=slots_per_day, tier_name='test')


def make_decision(scenario, bs_on, association, assignment, power_w):
    return SlotDecision(np.array(bs_on, dtype=bool), np.array(association, dtype=int),
                        np.array(assignment, dtype=int), np.array(power_w, dtype=float))


@pytest.fixture
def two_cell_scenario():
    """Macro at the origin, one small cell at (500, 0), users near each"""
    return build_scenario(
        [('macro', (0.0, 0.0)), ('small', (500.0, 0.0))],
        [(50.0, 0.0), (480.0, 10.0), (520.0, 0.0)],
        num_subcarriers=2,
    )


@pytest.fixture
def tiny_tier():
    return DensityTier('tiny', macro_count=1, small_count=3, user_count=8)


@pytest.fixture
def tiny_scenario(tiny_tier):
    return generate_scenario(tiny_tier, (400.0, 400.0), seed=3, num_subcarriers=4)


@pytest.fixture
def control_config():
    return ControlConfig(v_weight=10.0, bs_epoch_slots=5, max_toggles_per_epoch=4)
