"""
Simulated world: region, BS deployment by density tier, user points
"""

import itertools
import json
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from phy import ChannelModel, PowerModel
from sim_config import DAY_SHAPES, DENSITY_TIERS, POWER_MODEL_DEFAULTS, SCENARIO_DEFAULTS, TRAFFIC_DEFAULTS
from traffic import ArrivalProfile, TrafficError

logger = logging.getLogger(__name__)

TIERS = ('macro', 'small')
SCENARIO_FORMAT_VERSION = 1


class ScenarioError(ValueError):
    """A scenario violates one of its invariants"""


class ScenarioFileError(ValueError):
    """Malformed scenario file"""

    def __init__(self, field_name, line, message):
        self.field = field_name
        self.line = line
        super().__init__(f"{field_name} (line {line}): {message}")


@dataclass(frozen=True)
class DensityTier:
    name: str
    macro_count: int
    small_count: int
    user_count: int

    @classmethod
    def named(cls, name):
        key = name.lower()
        if key not in DENSITY_TIERS:
            raise ScenarioError(f"Unknown density tier '{name}'")
        return cls(name=key, **DENSITY_TIERS[key])


@dataclass(frozen=True)
class BaseStation:
    id: int
    tier: str
    position: tuple
    max_transmit_power_w: float
    power_model: PowerModel


@dataclass(frozen=True)
class UserPoint:
    id: int
    position: tuple
    arrival_profile: ArrivalProfile


@dataclass(frozen=True)
class Scenario:
    region_width_m: float
    region_height_m: float
    base_stations: tuple
    user_points: tuple
    num_subcarriers: int = SCENARIO_DEFAULTS['num_subcarriers']
    subcarrier_bandwidth_hz: float = SCENARIO_DEFAULTS['subcarrier_bandwidth_hz']
    noise_psd_dbm_per_hz: float = SCENARIO_DEFAULTS['noise_psd_dbm_per_hz']
    slot_duration_s: float = SCENARIO_DEFAULTS['slot_duration_s']
    rng_seed: int = 0
    channel: ChannelModel = field(default_factory=ChannelModel)
    slots_per_day: int = SCENARIO_DEFAULTS['slots_per_day']
    tier_name: str = 'custom'

    def __post_init__(self):
        object.__setattr__(self, 'base_stations', tuple(self.base_stations))
        object.__setattr__(self, 'user_points', tuple(self.user_points))
        self.validate()

    def validate(self):
        if self.region_width_m <= 0 or self.region_height_m <= 0:
            raise ScenarioError("region dimensions must be positive")
        if self.num_subcarriers < 1:
            raise ScenarioError("num_subcarriers must be >= 1")
        if self.slots_per_day < 24:
            raise ScenarioError("slots_per_day must be >= 24")
        if self.slot_duration_s <= 0 or self.subcarrier_bandwidth_hz <= 0:
            raise ScenarioError("slot_duration_s and subcarrier_bandwidth_hz must be positive")
        if not any(bs.tier == 'macro' for bs in self.base_stations):
            raise ScenarioError("at least one macro BS is required")
        for kind, items in (('base station', self.base_stations), ('user point', self.user_points)):
            ids = [item.id for item in items]
            if ids != list(range(len(items))):
                raise ScenarioError(f"{kind} ids must be unique and contiguous from 0")
            for item in items:
                if not self.contains(item.position):
                    raise ScenarioError(f"{kind} {item.id} at {item.position} lies outside the region")
        for bs in self.base_stations:
            if bs.tier not in TIERS:
                raise ScenarioError(f"base station {bs.id} has unknown tier '{bs.tier}'")
            if bs.max_transmit_power_w <= 0:
                raise ScenarioError(f"base station {bs.id} max_transmit_power_w must be > 0")

    def contains(self, position):
        x, y = position
        return 0.0 <= x <= self.region_width_m and 0.0 <= y <= self.region_height_m

    @property
    def macro_ids(self):
        return [bs.id for bs in self.base_stations if bs.tier == 'macro']

    @property
    def small_ids(self):
        return [bs.id for bs in self.base_stations if bs.tier == 'small']

    def counts(self):
        return {
            'macro': len(self.macro_ids),
            'small': len(self.small_ids),
            'users': len(self.user_points),
            'subcarriers': self.num_subcarriers,
        }


def default_power_model(tier):
    params = POWER_MODEL_DEFAULTS[tier]
    return PowerModel(params['amplifier_inefficiency'], params['static_power_w'])


def _macro_grid(count, width, height):
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    return [((k % cols + 0.5) * width / cols, (k // cols + 0.5) * height / rows)
            for k in range(count)]


def generate_scenario(tier, dims=(SCENARIO_DEFAULTS['region_width_m'], SCENARIO_DEFAULTS['region_height_m']),
                      seed=0, base_rate=None, hotspot_shape=SCENARIO_DEFAULTS['hotspot_shape'],
                      channel=None, num_subcarriers=SCENARIO_DEFAULTS['num_subcarriers'],
                      slots_per_day=SCENARIO_DEFAULTS['slots_per_day'],
                      day_shape=None, weekend_shape=None):
    """Macros on a grid, small BSs and users uniform at random; pure in (tier, dims, seed)"""
    if isinstance(tier, str):
        tier = DensityTier.named(tier)
    width, height = (float(v) for v in dims)
    if width <= 0 or height <= 0:
        raise ScenarioError(f"region dimensions must be positive, got {width} x {height}")
    if tier.macro_count < 1:
        raise ScenarioError("macro_count must be >= 1: macros anchor coverage")
    if tier.user_count < 1:
        raise ScenarioError("user_count must be >= 1")
    if tier.small_count < 0:
        raise ScenarioError("small_count must be >= 0")

    rng = np.random.default_rng(seed)
    macro_model, small_model = default_power_model('macro'), default_power_model('small')
    stations = []
    for pos in _macro_grid(tier.macro_count, width, height):
        stations.append(BaseStation(len(stations), 'macro', pos,
                                    POWER_MODEL_DEFAULTS['macro']['max_transmit_power_w'], macro_model))
    small_xy = rng.uniform((0.0, 0.0), (width, height), size=(tier.small_count, 2))
    for x, y in small_xy:
        stations.append(BaseStation(len(stations), 'small', (float(x), float(y)),
                                    POWER_MODEL_DEFAULTS['small']['max_transmit_power_w'], small_model))

    user_xy = rng.uniform((0.0, 0.0), (width, height), size=(tier.user_count, 2))
    if hotspot_shape and math.isfinite(hotspot_shape):
        weights = rng.gamma(hotspot_shape, 1.0 / hotspot_shape, size=tier.user_count)
    else:
        weights = np.ones(tier.user_count)
    shape_name = day_shape or TRAFFIC_DEFAULTS['day_shape']
    weekend_name = weekend_shape if weekend_shape is not None else TRAFFIC_DEFAULTS['weekend_shape']
    rate = float(base_rate if base_rate is not None else TRAFFIC_DEFAULTS['base_rate_bits_per_slot'])
    users = []
    for k, ((x, y), w) in enumerate(zip(user_xy, weights)):
        profile = ArrivalProfile(
            base_rate_bits_per_slot=rate,
            day_shape=DAY_SHAPES[shape_name],
            hotspot_weight=float(w),
            weekend_shape=DAY_SHAPES[weekend_name] if weekend_name else None,
            shape_name=shape_name,
            weekend_name=weekend_name,
        )
        users.append(UserPoint(k, (float(x), float(y)), profile))

    scenario = Scenario(
        region_width_m=width,
        region_height_m=height,
        base_stations=stations,
        user_points=users,
        num_subcarriers=num_subcarriers,
        rng_seed=int(seed),
        channel=channel or ChannelModel(),
        slots_per_day=slots_per_day,
        tier_name=tier.name,
    )
    logger.debug("Generated %s scenario: %s", tier.name, scenario.counts())
    return scenario


# ===== Scenario files =====

def scenario_to_dict(s):
    shapes = {}
    for user in s.user_points:
        p = user.arrival_profile
        shapes[p.shape_name] = list(p.day_shape)
        if p.weekend_shape is not None:
            shapes[p.weekend_name] = list(p.weekend_shape)
    ch = s.channel
    return {
        'version': SCENARIO_FORMAT_VERSION,
        'tier_name': s.tier_name,
        'region_width_m': s.region_width_m,
        'region_height_m': s.region_height_m,
        'num_subcarriers': s.num_subcarriers,
        'subcarrier_bandwidth_hz': s.subcarrier_bandwidth_hz,
        'noise_psd_dbm_per_hz': s.noise_psd_dbm_per_hz,
        'slot_duration_s': s.slot_duration_s,
        'slots_per_day': s.slots_per_day,
        'rng_seed': s.rng_seed,
        'channel': {
            'pathloss_macro': list(ch.pathloss_macro),
            'pathloss_small': list(ch.pathloss_small),
            'shadowing_sigma_db': ch.shadowing_sigma_db,
            'fading': ch.fading,
            'min_distance_m': ch.min_distance_m,
            'fading_block_slots': ch.fading_block_slots,
            'frequency_selective': ch.frequency_selective,
        },
        'day_shapes': shapes,
        'base_stations': [
            {
                'id': bs.id,
                'tier': bs.tier,
                'x': bs.position[0],
                'y': bs.position[1],
                'max_transmit_power_w': bs.max_transmit_power_w,
                'amplifier_inefficiency': bs.power_model.amplifier_inefficiency,
                'static_power_w': bs.power_model.static_power_w,
            } for bs in s.base_stations
        ],
        'user_points': [
            {
                'id': u.id,
                'x': u.position[0],
                'y': u.position[1],
                'base_rate_bits_per_slot': u.arrival_profile.base_rate_bits_per_slot,
                'hotspot_weight': u.arrival_profile.hotspot_weight,
                'day_shape': u.arrival_profile.shape_name,
                'weekend_shape': u.arrival_profile.weekend_name,
            } for u in s.user_points
        ],
    }


def save_scenario(s, path):
    with open(path, 'w') as f:
        json.dump(scenario_to_dict(s), f, indent=2)
    logger.info("Saved scenario (%s) to %s", s.tier_name, path)


_WHITESPACE = ' \t\r\n'
_PATH_PART = re.compile(r'^(\w+)(?:\[(\d+)\])?$')


class _FieldReader:
    """Pulls typed fields out of parsed JSON, reporting the source line on failure.

    Contexts are paths such as 'channel' or 'base_stations[3]'; a field is
    looked up inside the span of its context's value, so the reported line
    belongs to the right record.
    """

    def __init__(self, text):
        self.text = text
        self._spans = {}

    def _skip(self, i):
        while i < len(self.text) and self.text[i] in _WHITESPACE:
            i += 1
        return i

    def _string_end(self, i):
        i += 1
        while self.text[i] != '"':
            i += 2 if self.text[i] == '\\' else 1
        return i + 1

    def _value_end(self, i):
        c = self.text[i]
        if c == '"':
            return self._string_end(i)
        if c not in '{[':
            while i < len(self.text) and self.text[i] not in ',}]' + _WHITESPACE:
                i += 1
            return i
        depth = 0
        while True:
            c = self.text[i]
            if c == '"':
                i = self._string_end(i)
                continue
            if c in '{[':
                depth += 1
            elif c in '}]':
                depth -= 1
                if depth == 0:
                    return i + 1
            i += 1

    def _members(self, start):
        """(key, key position, value position) of the object opening at start"""
        i = self._skip(start + 1)
        while i < len(self.text) and self.text[i] == '"':
            key_end = self._string_end(i)
            key = json.loads(self.text[i:key_end])
            value = self._skip(self._skip(key_end) + 1)
            yield key, i, value
            i = self._skip(self._value_end(value))
            if i < len(self.text) and self.text[i] == ',':
                i = self._skip(i + 1)

    def _elements(self, start):
        i = self._skip(start + 1)
        while i < len(self.text) and self.text[i] != ']':
            end = self._value_end(i)
            yield i
            i = self._skip(end)
            if i < len(self.text) and self.text[i] == ',':
                i = self._skip(i + 1)

    def span_start(self, context=None):
        """Position where the value at context begins; the closest enclosing value if it is absent"""
        if context in self._spans:
            return self._spans[context]
        pos = self._skip(0)
        for part in (context.split('.') if context else ()):
            match = _PATH_PART.match(part)
            if not match or self.text[pos] != '{':
                break
            name, index = match.group(1), match.group(2)
            found = next((value for key, _, value in self._members(pos) if key == name), None)
            if found is None:
                break
            pos = found
            if index is not None:
                if self.text[pos] != '[':
                    break
                element = next(itertools.islice(self._elements(pos), int(index), None), None)
                if element is None:
                    break
                pos = element
        self._spans[context] = pos
        return pos

    def _line(self, pos):
        return self.text.count('\n', 0, pos) + 1

    def line_at(self, context=None):
        return self._line(self.span_start(context))

    def line_of(self, name, context=None):
        """Line of field name inside context, or of the context itself when the field is absent"""
        start = self.span_start(context)
        if self.text[start] == '{':
            for key, pos, _ in self._members(start):
                if key == name:
                    return self._line(pos)
        return self._line(start)

    def get(self, obj, name, kind, context=None):
        label = f"{context}.{name}" if context else name
        if not isinstance(obj, dict) or name not in obj:
            raise ScenarioFileError(label, self.line_of(name, context), "missing required field")
        value = obj[name]
        try:
            if kind is bool:
                if not isinstance(value, bool):
                    raise TypeError
                return value
            if kind in (int, float) and isinstance(value, bool):
                raise TypeError
            if kind is int and isinstance(value, float) and not value.is_integer():
                raise TypeError
            return kind(value)
        except (TypeError, ValueError):
            raise ScenarioFileError(label, self.line_of(name, context),
                                    f"expected {kind.__name__}, got {value!r}") from None


def _base_station(r, item, ctx):
    tier = r.get(item, 'tier', str, ctx)
    if tier not in TIERS:
        raise ScenarioFileError(f"{ctx}.tier", r.line_of('tier', ctx),
                                f"unknown tier '{tier}', expected one of {TIERS}")
    max_power = r.get(item, 'max_transmit_power_w', float, ctx)
    if not max_power > 0:
        raise ScenarioFileError(f"{ctx}.max_transmit_power_w", r.line_of('max_transmit_power_w', ctx),
                                "must be > 0")
    fields = {name: r.get(item, name, float, ctx) for name in ('amplifier_inefficiency', 'static_power_w')}
    try:
        power_model = PowerModel(**fields)
    except ValueError as e:
        name = next((n for n in fields if str(e).startswith(n)), 'static_power_w')
        raise ScenarioFileError(f"{ctx}.{name}", r.line_of(name, ctx), str(e)) from None
    return BaseStation(
        id=r.get(item, 'id', int, ctx),
        tier=tier,
        position=(r.get(item, 'x', float, ctx), r.get(item, 'y', float, ctx)),
        max_transmit_power_w=max_power,
        power_model=power_model,
    )


def scenario_from_text(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFileError('<document>', e.lineno, e.msg) from None
    r = _FieldReader(text)
    ch = r.get(data, 'channel', dict)
    shapes = r.get(data, 'day_shapes', dict)
    try:
        channel = ChannelModel(
            pathloss_macro=tuple(r.get(ch, 'pathloss_macro', list, 'channel')),
            pathloss_small=tuple(r.get(ch, 'pathloss_small', list, 'channel')),
            shadowing_sigma_db=r.get(ch, 'shadowing_sigma_db', float, 'channel'),
            fading=r.get(ch, 'fading', str, 'channel'),
            min_distance_m=r.get(ch, 'min_distance_m', float, 'channel'),
            fading_block_slots=r.get(ch, 'fading_block_slots', int, 'channel'),
            frequency_selective=r.get(ch, 'frequency_selective', bool, 'channel'),
        )
    except ValueError as e:
        if isinstance(e, ScenarioFileError):
            raise
        raise ScenarioFileError('channel', r.line_of('channel'), str(e)) from None

    stations = [_base_station(r, item, f"base_stations[{k}]")
                for k, item in enumerate(r.get(data, 'base_stations', list))]

    def shape(name, ctx, field_name):
        if name is None:
            return None
        if name not in shapes:
            raise ScenarioFileError(f"{ctx}.{field_name}", r.line_of(field_name, ctx),
                                    f"unknown day shape '{name}'")
        return tuple(shapes[name])

    users = []
    for k, item in enumerate(r.get(data, 'user_points', list)):
        ctx = f"user_points[{k}]"
        shape_name = r.get(item, 'day_shape', str, ctx)
        weekend_name = item.get('weekend_shape') if isinstance(item, dict) else None
        try:
            profile = ArrivalProfile(
                base_rate_bits_per_slot=r.get(item, 'base_rate_bits_per_slot', float, ctx),
                day_shape=shape(shape_name, ctx, 'day_shape'),
                hotspot_weight=r.get(item, 'hotspot_weight', float, ctx),
                weekend_shape=shape(weekend_name, ctx, 'weekend_shape'),
                shape_name=shape_name,
                weekend_name=weekend_name,
            )
        except TrafficError as e:
            raise ScenarioFileError(ctx, r.line_at(ctx), str(e)) from None
        users.append(UserPoint(
            id=r.get(item, 'id', int, ctx),
            position=(r.get(item, 'x', float, ctx), r.get(item, 'y', float, ctx)),
            arrival_profile=profile,
        ))

    return Scenario(
        region_width_m=r.get(data, 'region_width_m', float),
        region_height_m=r.get(data, 'region_height_m', float),
        base_stations=stations,
        user_points=users,
        num_subcarriers=r.get(data, 'num_subcarriers', int),
        subcarrier_bandwidth_hz=r.get(data, 'subcarrier_bandwidth_hz', float),
        noise_psd_dbm_per_hz=r.get(data, 'noise_psd_dbm_per_hz', float),
        slot_duration_s=r.get(data, 'slot_duration_s', float),
        rng_seed=r.get(data, 'rng_seed', int),
        channel=channel,
        slots_per_day=r.get(data, 'slots_per_day', int),
        tier_name=str(data.get('tier_name', 'custom')),
    )


def load_scenario(path):
    """Read a scenario file; ScenarioFileError for bad syntax or fields, ScenarioError for invariants"""
    with open(path, 'r') as f:
        text = f.read()
    return scenario_from_text(text)
