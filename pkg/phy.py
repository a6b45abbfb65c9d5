"""
Channel gains, SINR, rates and the BS power-consumption model
"""

import math
from dataclasses import dataclass

import numpy as np

from sim_config import CHANNEL_DEFAULTS, POWER_ENVELOPE_RF_W, POWER_ENVELOPE_W

FADING_MODES = ('none', 'block-rayleigh')

# Seed-sequence tags keeping shadowing and fading streams apart
SHADOW_STREAM = 101
FADING_STREAM = 202


class SinrUndefinedError(ValueError):
    """SINR asked for an off BS or a subcarrier not serving that user"""


@dataclass(frozen=True)
class ChannelModel:
    pathloss_macro: tuple = CHANNEL_DEFAULTS['pathloss_macro']
    pathloss_small: tuple = CHANNEL_DEFAULTS['pathloss_small']
    shadowing_sigma_db: float = CHANNEL_DEFAULTS['shadowing_sigma_db']
    fading: str = CHANNEL_DEFAULTS['fading']
    min_distance_m: float = CHANNEL_DEFAULTS['min_distance_m']
    fading_block_slots: int = CHANNEL_DEFAULTS['fading_block_slots']
    frequency_selective: bool = CHANNEL_DEFAULTS['frequency_selective']

    def __post_init__(self):
        object.__setattr__(self, 'pathloss_macro', tuple(float(v) for v in self.pathloss_macro))
        object.__setattr__(self, 'pathloss_small', tuple(float(v) for v in self.pathloss_small))
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if self.fading not in FADING_MODES:
            raise ValueError(f"fading must be one of {FADING_MODES}")
        if self.min_distance_m <= 0:
            raise ValueError("min_distance_m must be > 0")
        if self.fading_block_slots < 1:
            raise ValueError("fading_block_slots must be >= 1")

    def pathloss(self, tier):
        return self.pathloss_macro if tier == 'macro' else self.pathloss_small


@dataclass(frozen=True)
class PowerModel:
    amplifier_inefficiency: float
    static_power_w: float

    def __post_init__(self):
        if self.amplifier_inefficiency <= 0:
            raise ValueError("amplifier_inefficiency must be > 0")
        if self.static_power_w < 0:
            raise ValueError("static_power_w must be >= 0")


def noise_power_w(scenario):
    """sigma^2 per subcarrier from the noise PSD and subcarrier bandwidth"""
    return 10 ** ((scenario.noise_psd_dbm_per_hz - 30.0) / 10.0) * scenario.subcarrier_bandwidth_hz


def pathloss_db(model, tier, distance_m):
    offset, slope = model.pathloss(tier)
    d_km = max(distance_m, model.min_distance_m) / 1000.0
    return offset + slope * math.log10(d_km)


def _distance(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _shadow(model, bs_id, user_id, seed):
    if model.shadowing_sigma_db == 0:
        return 1.0
    rng = np.random.default_rng([seed, SHADOW_STREAM, bs_id, user_id])
    return 10 ** (rng.normal(0.0, model.shadowing_sigma_db) / 10.0)


def _fade(model, bs_id, user_id, subcarrier, slot, seed):
    if model.fading == 'none':
        return 1.0
    block = slot // model.fading_block_slots
    key = [seed, FADING_STREAM, block, bs_id, user_id]
    if model.frequency_selective:
        key.append(subcarrier)
    return float(np.random.default_rng(key).exponential(1.0))


def channel_gain(model, bs, user, subcarrier, slot, seed):
    """g_i^n(x, t): log-distance path loss x log-normal shadow x block fade"""
    loss = pathloss_db(model, bs.tier, _distance(bs.position, user.position))
    gain = 10 ** (-loss / 10.0)
    gain *= _shadow(model, bs.id, user.id, seed)
    gain *= _fade(model, bs.id, user.id, subcarrier, slot, seed)
    return gain


def large_scale_gains(scenario, seed):
    """Path loss and shadowing, [B, U]"""
    model = scenario.channel
    out = np.empty((len(scenario.base_stations), len(scenario.user_points)))
    for bs in scenario.base_stations:
        for user in scenario.user_points:
            loss = pathloss_db(model, bs.tier, _distance(bs.position, user.position))
            out[bs.id, user.id] = 10 ** (-loss / 10.0) * _shadow(model, bs.id, user.id, seed)
    return out


def fading_gains(scenario, slot, seed):
    """Small-scale fade per (BS, user, subcarrier) for the block holding slot"""
    model = scenario.channel
    B, U, N = len(scenario.base_stations), len(scenario.user_points), scenario.num_subcarriers
    if model.fading == 'none':
        return np.ones((B, U, N))
    out = np.empty((B, U, N))
    for i in range(B):
        for x in range(U):
            if model.frequency_selective:
                for n in range(N):
                    out[i, x, n] = _fade(model, i, x, n, slot, seed)
            else:
                out[i, x, :] = _fade(model, i, x, 0, slot, seed)
    return out


def gain_matrix(scenario, slot, seed, large_scale=None):
    """All g_i^n(x, t) as an array [B, U, N]"""
    if large_scale is None:
        large_scale = large_scale_gains(scenario, seed)
    return large_scale[:, :, None] * fading_gains(scenario, slot, seed)


class GainCache:
    """Keeps the gain array of the current fading block"""

    def __init__(self, scenario, seed):
        self.scenario = scenario
        self.seed = seed
        self.large_scale = large_scale_gains(scenario, seed)
        self._block = None
        self._gains = None

    def at(self, slot):
        block = slot // self.scenario.channel.fading_block_slots
        if block != self._block:
            self._gains = gain_matrix(self.scenario, slot, self.seed, self.large_scale)
            self._block = block
        return self._gains


def subcarrier_rate(gamma, bandwidth_hz=1.0, slot_duration_s=1.0):
    """log2(1 + gamma) scaled to bits per slot"""
    return np.log2(1.0 + gamma) * bandwidth_hz * slot_duration_s


def transmitting_power(decision):
    """P_j^n for every (BS, subcarrier) actually serving someone, [B, N]"""
    active = (decision.assignment >= 0) & decision.bs_on[:, None]
    return np.where(active, decision.power_w, 0.0)


def sinr_matrix(decision, gains, noise_w):
    """Self-consistent gamma for every assigned (BS, subcarrier), [B, N]; 0 where unassigned"""
    B, N = decision.assignment.shape
    tx = transmitting_power(decision)
    users = np.where(decision.assignment >= 0, decision.assignment, 0)
    n_idx = np.arange(N)[None, :]
    # g[j, i, n] = gain from BS j to the user BS i serves on n
    g = gains[:, users, n_idx]
    received = np.einsum('jn,jin->in', tx, g)
    own = tx * g[np.arange(B), np.arange(B), :]
    interference = received - own
    gamma = own / (np.maximum(interference, 0.0) + noise_w)
    return np.where(tx > 0, gamma, 0.0)


def sinr(decision, scenario, gains, bs, user, subcarrier):
    """gamma_i^n(x): own power x gain over co-channel interference plus noise"""
    if not decision.bs_on[bs]:
        raise SinrUndefinedError(f"BS {bs} is off")
    if decision.assignment[bs, subcarrier] != user:
        raise SinrUndefinedError(f"Subcarrier {subcarrier} of BS {bs} is not assigned to user {user}")
    interference = 0.0
    for j in range(len(decision.bs_on)):
        if j == bs or not decision.bs_on[j]:
            continue
        if decision.assignment[j, subcarrier] < 0:
            continue
        interference += decision.power_w[j, subcarrier] * gains[j, user, subcarrier]
    signal = decision.power_w[bs, subcarrier] * gains[bs, user, subcarrier]
    return signal / (interference + noise_power_w(scenario))


def rate_matrix(decision, scenario, gains):
    """Bits per slot delivered on each (BS, subcarrier), [B, N]"""
    gamma = sinr_matrix(decision, gains, noise_power_w(scenario))
    return subcarrier_rate(gamma, scenario.subcarrier_bandwidth_hz, scenario.slot_duration_s)


def user_rates(decision, scenario, gains):
    """R(x, t) for every user point"""
    rates = rate_matrix(decision, scenario, gains)
    mask = decision.assignment >= 0
    return np.bincount(decision.assignment[mask], weights=rates[mask],
                       minlength=len(scenario.user_points)).astype(float)


def user_rate(decision, scenario, gains, user):
    serving = decision.association[user]
    if serving < 0 or not decision.bs_on[serving]:
        return 0.0
    total = 0.0
    for n in np.flatnonzero(decision.assignment[serving] == user):
        gamma = sinr(decision, scenario, gains, serving, user, n)
        total += subcarrier_rate(gamma, scenario.subcarrier_bandwidth_hz, scenario.slot_duration_s)
    return float(total)


def bs_transmit_power(decision, bs):
    """P_i(t): sum over assigned subcarriers; 0 when off"""
    if not decision.bs_on[bs]:
        return 0.0
    return float(transmitting_power(decision)[bs].sum())


def bs_power_consumption(power_model, on, transmit_power_w):
    """PC_i(t) = s_i [xi_i P_i(t) + P_i^c]"""
    if transmit_power_w < 0:
        raise ValueError("transmit power must be >= 0")
    if not on:
        return 0.0
    return power_model.amplifier_inefficiency * transmit_power_w + power_model.static_power_w


def network_power(decision, scenario):
    """Per-BS PC_i for a decision, [B]"""
    tx = transmitting_power(decision).sum(axis=1)
    return np.array([bs_power_consumption(bs.power_model, bool(decision.bs_on[bs.id]), float(tx[bs.id]))
                     for bs in scenario.base_stations])


def power_envelope_report(power_model, rf_range=POWER_ENVELOPE_RF_W, envelope=POWER_ENVELOPE_W):
    """Where a power model lands against the typical total-vs-RF envelope"""
    low = bs_power_consumption(power_model, True, rf_range[0])
    high = bs_power_consumption(power_model, True, rf_range[1])
    return {
        'rf_range_w': tuple(rf_range),
        'pc_range_w': (low, high),
        'envelope_w': tuple(envelope),
        'inside_envelope': bool(envelope[0] <= low and high <= envelope[1]),
        'static_share_at_min_rf': power_model.static_power_w / low if low else 0.0,
    }
