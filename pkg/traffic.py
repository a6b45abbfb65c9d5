"""
Arrival process and per-user queues
Mean rate lambda(x, t) varies by hour of day and by user location weight.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from sim_config import DAY_SHAPES, LOW_TRAFFIC_FRACTION, TRAFFIC_DEFAULTS

ARRIVAL_MODES = ('poisson', 'deterministic')

HOURS_PER_DAY = 24
DAYS_PER_WEEK = 7
WEEKEND_DAYS = (5, 6)


class TrafficError(ValueError):
    """Invalid traffic parameters"""


def _check_shape(shape, name):
    if len(shape) != HOURS_PER_DAY:
        raise TrafficError(f"{name} must have {HOURS_PER_DAY} entries, got {len(shape)}")
    if any(v < 0 or v > 1 for v in shape):
        raise TrafficError(f"{name} multipliers must lie in [0, 1]")
    if max(shape) != 1.0:
        raise TrafficError(f"{name} must be peak-normalized (max = 1)")


@dataclass(frozen=True)
class ArrivalProfile:
    base_rate_bits_per_slot: float
    day_shape: tuple = DAY_SHAPES['weekday']
    hotspot_weight: float = 1.0
    weekend_shape: Optional[tuple] = None
    shape_name: str = 'weekday'
    weekend_name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'day_shape', tuple(float(v) for v in self.day_shape))
        _check_shape(self.day_shape, 'day_shape')
        if self.weekend_shape is not None:
            object.__setattr__(self, 'weekend_shape',
                               tuple(float(v) for v in self.weekend_shape))
            _check_shape(self.weekend_shape, 'weekend_shape')
        if self.base_rate_bits_per_slot < 0:
            raise TrafficError("base_rate_bits_per_slot must be >= 0")
        if self.hotspot_weight < 0:
            raise TrafficError("hotspot_weight must be >= 0")


@dataclass
class QueueState:
    queue_bits: np.ndarray
    slot: int = 0

    @classmethod
    def empty(cls, num_users):
        return cls(queue_bits=np.zeros(num_users, dtype=float), slot=0)


def default_profile(hotspot_weight=1.0, base_rate=None, shape_name=None, weekend_name=None):
    """Build a profile from the shipped day-shape tables"""
    shape_name = shape_name or TRAFFIC_DEFAULTS['day_shape']
    weekend_name = weekend_name if weekend_name is not None else TRAFFIC_DEFAULTS['weekend_shape']
    return ArrivalProfile(
        base_rate_bits_per_slot=float(base_rate if base_rate is not None
                                      else TRAFFIC_DEFAULTS['base_rate_bits_per_slot']),
        day_shape=DAY_SHAPES[shape_name],
        hotspot_weight=float(hotspot_weight),
        weekend_shape=DAY_SHAPES[weekend_name] if weekend_name else None,
        shape_name=shape_name,
        weekend_name=weekend_name,
    )


def hour_of_slot(slot, slots_per_day):
    return ((slot % slots_per_day) * HOURS_PER_DAY) // slots_per_day


def mean_rate(profile, slot, slots_per_day):
    """lambda(x, t) = base rate x day_shape[hour] x hotspot weight"""
    if slots_per_day < HOURS_PER_DAY:
        raise TrafficError(f"slots_per_day must be >= {HOURS_PER_DAY}")
    shape = profile.day_shape
    if profile.weekend_shape is not None:
        day = slot // slots_per_day
        if day % DAYS_PER_WEEK in WEEKEND_DAYS:
            shape = profile.weekend_shape
    return profile.base_rate_bits_per_slot * shape[hour_of_slot(slot, slots_per_day)] * profile.hotspot_weight


class RateTable:
    """Vectorized mean_rate over all user points of a scenario"""

    def __init__(self, scenario):
        profiles = [u.arrival_profile for u in scenario.user_points]
        self.slots_per_day = scenario.slots_per_day
        self.scale = np.array([p.base_rate_bits_per_slot * p.hotspot_weight for p in profiles])
        self.weekday = np.array([p.day_shape for p in profiles]).reshape(len(profiles), HOURS_PER_DAY)
        self.weekend = np.array([p.weekend_shape if p.weekend_shape is not None else p.day_shape
                                 for p in profiles]).reshape(len(profiles), HOURS_PER_DAY)

    def at(self, slot):
        hour = hour_of_slot(slot, self.slots_per_day)
        day = slot // self.slots_per_day
        shapes = self.weekend if day % DAYS_PER_WEEK in WEEKEND_DAYS else self.weekday
        return self.scale * shapes[:, hour]


def mean_rates(scenario, slot, table=None):
    table = table or RateTable(scenario)
    return table.at(slot)


def draw_arrivals(rng, scenario, slot, mode='poisson', packet_size_bits=None, table=None):
    """Draw A(x, t) for every user point.

    Every user consumes exactly one draw per slot in poisson mode, so two
    schemes fed from equally seeded generators see the same arrivals.
    """
    means = mean_rates(scenario, slot, table)
    if mode == 'deterministic':
        return means
    if mode != 'poisson':
        raise TrafficError(f"Unknown arrival mode '{mode}'")
    packet = float(packet_size_bits or TRAFFIC_DEFAULTS['packet_size_bits'])
    counts = rng.poisson(means / packet)
    return counts.astype(float) * packet


def queue_update(q, served, arrivals):
    """Q(x, t+1) = max[Q(x, t) - R(x, t), 0] + A(x, t)"""
    served = np.asarray(served, dtype=float)
    arrivals = np.asarray(arrivals, dtype=float)
    if np.any(served < 0) or np.any(arrivals < 0):
        raise TrafficError("served and arrivals must be non-negative")
    queue = np.maximum(q.queue_bits - served, 0.0) + arrivals
    return QueueState(queue_bits=queue, slot=q.slot + 1)


def fraction_below(shape: Sequence[float], threshold=LOW_TRAFFIC_FRACTION):
    """Fraction of hours whose multiplier is below threshold x peak"""
    peak = max(shape)
    return sum(1 for v in shape if v < threshold * peak) / len(shape)
