"""
Slot-by-slot simulation engine
Ties traffic, PHY and control together and keeps the time-averaged metrics.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from control import SlotDecision, fixed_step, scheme_step, total_power, validate_decision
from phy import GainCache, user_rates
from traffic import HOURS_PER_DAY, QueueState, RateTable, draw_arrivals, queue_update

logger = logging.getLogger(__name__)

ARRIVAL_STREAM = 303

SLOT_COLUMNS = ['run_key', 'slot', 'scheme', 'total_power_w', 'mean_queue_bits', 'on_bs_count', 'sum_rate']


@dataclass
class NetworkState:
    queues: QueueState
    incumbent_decision: SlotDecision
    slot: int
    streams: dict
    last_off_epoch: np.ndarray
    seed: int = 0


def initial_state(scenario, seed=0):
    """Empty queues, every BS on with nothing assigned"""
    return NetworkState(
        queues=QueueState.empty(len(scenario.user_points)),
        incumbent_decision=SlotDecision.empty(scenario),
        slot=0,
        streams={'arrivals': np.random.default_rng([seed, ARRIVAL_STREAM])},
        last_off_epoch=np.full(len(scenario.base_stations), -1, dtype=int),
        seed=seed,
    )


def step(state, scenario, scheme, config, gains=None, arrival_mode='poisson',
         packet_size_bits=None, rate_table=None):
    """Advance one slot: decide, serve, record, draw arrivals, update queues"""
    if gains is None:
        gains = GainCache(scenario, state.seed).at(state.slot)

    decision = scheme_step(scheme)(state, scenario, gains, config)
    validate_decision(decision, scenario)

    rates = user_rates(decision, scenario, gains)
    queue = state.queues.queue_bits
    bs_power = total_power(decision, scenario)
    served = np.minimum(queue, rates)

    record = {
        'slot': state.slot,
        'total_power_w': float(bs_power.sum()),
        'mean_queue_bits': float(queue.mean()) if len(queue) else 0.0,
        'on_bs_count': decision.on_count,
        'sum_rate': float(rates.sum()),
        'served_bits': float(served.sum()),
        'bs_power_w': bs_power,
        'queue_bits': queue.copy(),
        'rate': rates,
    }

    arrivals = draw_arrivals(state.streams['arrivals'], scenario, state.slot,
                             arrival_mode, packet_size_bits, rate_table)
    record['arrived_bits'] = float(arrivals.sum())

    epoch = state.slot // config.bs_epoch_slots
    last_off = state.last_off_epoch.copy()
    last_off[state.incumbent_decision.bs_on & ~decision.bs_on] = epoch

    next_state = NetworkState(
        queues=queue_update(state.queues, rates, arrivals),
        incumbent_decision=decision,
        slot=state.slot + 1,
        streams=state.streams,
        last_off_epoch=last_off,
        seed=state.seed,
    )
    return next_state, record


@dataclass
class RunMetrics:
    run_key: str
    tier: str
    scheme: str
    v_weight: float
    seed: int
    slots: pd.DataFrame
    bs_power_w: np.ndarray
    queue_bits: np.ndarray
    served_rate: np.ndarray
    warmup_slots: int
    aggregates: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return len(self.slots)

    def compute_aggregates(self):
        """Means over the post-warm-up window, recomputed from the stored series"""
        window = slice(self.warmup_slots, self.horizon)
        avg_queue = self.queue_bits[window].mean(axis=0)
        return {
            'avg_power_w': float(self.slots['total_power_w'].iloc[window].mean()),
            'avg_bs_power_w': self.bs_power_w[window].mean(axis=0).tolist(),
            'avg_queue_bits': avg_queue.tolist(),
            'mean_queue_bits': float(avg_queue.mean()) if avg_queue.size else 0.0,
            'max_user_queue_bits': float(avg_queue.max()) if avg_queue.size else 0.0,
            'avg_on_bs': float(self.slots['on_bs_count'].iloc[window].mean()),
            'avg_sum_rate': float(self.slots['sum_rate'].iloc[window].mean()),
            'total_arrived_bits': float(self.slots['arrived_bits'].sum()),
            'total_served_bits': float(self.slots['served_bits'].sum()),
        }

    @property
    def avg_power_w(self):
        return self.aggregates['avg_power_w']

    @property
    def mean_queue_bits(self):
        return self.aggregates['mean_queue_bits']


def make_run_key(tier, scheme, v_weight, seed):
    return f"{tier}/{scheme}/V{v_weight:g}/s{seed}"


def run(scenario, scheme, config, horizon_slots, seed=0, arrival_mode='poisson',
        packet_size_bits=None, run_key=None):
    """T slots from empty queues; aggregates skip the first T // 2 slots"""
    if horizon_slots < 1:
        raise ValueError("horizon_slots must be >= 1")
    run_key = run_key or make_run_key(scenario.tier_name, scheme, config.v_weight, seed)
    logger.info("Starting run %s (%d slots)", run_key, horizon_slots)

    state = initial_state(scenario, seed)
    gains = GainCache(scenario, seed)
    table = RateTable(scenario)
    records = []
    for _ in range(horizon_slots):
        state, record = step(state, scenario, scheme, config, gains.at(state.slot),
                             arrival_mode, packet_size_bits, table)
        records.append(record)

    frame = pd.DataFrame([{k: r[k] for k in ('slot', 'total_power_w', 'mean_queue_bits', 'on_bs_count',
                                             'sum_rate', 'arrived_bits', 'served_bits')}
                          for r in records])
    metrics = RunMetrics(
        run_key=run_key,
        tier=scenario.tier_name,
        scheme=scheme,
        v_weight=float(config.v_weight),
        seed=int(seed),
        slots=frame,
        bs_power_w=np.array([r['bs_power_w'] for r in records]),
        queue_bits=np.array([r['queue_bits'] for r in records]),
        served_rate=np.array([r['rate'] for r in records]),
        warmup_slots=horizon_slots // 2,
    )
    metrics.aggregates = metrics.compute_aggregates()
    logger.info("Finished run %s: avg power %.1f W, mean queue %.0f bits",
                run_key, metrics.avg_power_w, metrics.mean_queue_bits)
    return metrics


def trailing_queue_growth(metrics):
    """Relative growth of the max-over-users mean queue from [T/2, 3T/4) to [3T/4, T)"""
    T = metrics.horizon
    first = metrics.queue_bits[T // 2:(3 * T) // 4]
    second = metrics.queue_bits[(3 * T) // 4:]
    if not len(first) or not len(second):
        return 0.0
    a = first.mean(axis=0).max()
    b = second.mean(axis=0).max()
    if a == 0:
        return 0.0 if b == 0 else float('inf')
    return float((b - a) / a)


def fixed_load(scenario, seed=0, hours=range(HOURS_PER_DAY)):
    """Offered load over Fixed-scheme throughput per BS, one row per hour, [H, B].

    A BS's throughput is the sum of its users' rates under the Fixed
    decision; a BS with no users reports 0.
    """
    decision = fixed_step(None, scenario)
    gains = GainCache(scenario, seed)
    table = RateTable(scenario)
    B = len(scenario.base_stations)
    rows = []
    for hour in hours:
        slot = -(-hour * scenario.slots_per_day // HOURS_PER_DAY)
        capacity = np.bincount(decision.association, weights=user_rates(decision, scenario, gains.at(slot)),
                               minlength=B)
        offered = np.bincount(decision.association, weights=table.at(slot), minlength=B)
        rows.append(np.divide(offered, capacity, out=np.zeros(B), where=capacity > 0))
    return np.array(rows)


def _run_cell(args):
    scenario, scheme, config, horizon, seed, arrival_mode, packet_size_bits, key = args
    return key, run(scenario, scheme, config, horizon, seed, arrival_mode, packet_size_bits,
                    make_run_key(*key))


def sweep(scenarios, schemes, v_values, config, horizon_slots, seeds, jobs=1,
          arrival_mode='poisson', packet_size_bits=None):
    """Cartesian product of tiers x schemes x V x seeds.

    The arrival and channel seeds depend only on the seed, so every scheme
    and V in a cell sees the same random numbers.
    """
    if isinstance(scenarios, dict):
        scenarios = list(scenarios.values())
    cells = []
    for scenario in scenarios:
        for scheme in schemes:
            for v in v_values:
                cell_config = replace(config, v_weight=float(v))
                for seed in seeds:
                    key = (scenario.tier_name, scheme, float(v), int(seed))
                    cells.append((scenario, scheme, cell_config, horizon_slots, int(seed),
                                  arrival_mode, packet_size_bits, key))
    logger.info("Sweep: %d runs on %d worker(s)", len(cells), max(1, jobs))

    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            finished = list(pool.map(_run_cell, cells))
    else:
        finished = [_run_cell(cell) for cell in cells]
    return {key: metrics for key, metrics in finished}


# ===== Exports =====

def slots_frame(results):
    """One row per slot per run with the fixed CSV columns"""
    frames = []
    for metrics in results.values():
        frame = metrics.slots.copy()
        frame.insert(0, 'run_key', metrics.run_key)
        frame['scheme'] = metrics.scheme
        frames.append(frame[SLOT_COLUMNS])
    if not frames:
        return pd.DataFrame(columns=SLOT_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def summary_records(results):
    records = []
    for (tier, scheme, v, seed), metrics in results.items():
        agg = metrics.aggregates
        records.append({
            'run_key': metrics.run_key,
            'tier': tier,
            'scheme': scheme,
            'v_weight': v,
            'seed': seed,
            'horizon_slots': metrics.horizon,
            'warmup_slots': metrics.warmup_slots,
            'avg_power_w': agg['avg_power_w'],
            'mean_queue_bits': agg['mean_queue_bits'],
            'max_user_queue_bits': agg['max_user_queue_bits'],
            'avg_on_bs': agg['avg_on_bs'],
            'avg_sum_rate': agg['avg_sum_rate'],
            'total_arrived_bits': agg['total_arrived_bits'],
            'total_served_bits': agg['total_served_bits'],
            'queue_growth': trailing_queue_growth(metrics),
        })
    return records


def comparison_table(results):
    """Mean power and queue per (tier, scheme, V) across seeds, with savings against Fixed"""
    columns = ['tier', 'scheme', 'v_weight', 'runs', 'avg_power_w', 'mean_queue_bits', 'avg_on_bs',
               'saving_vs_fixed_w', 'saving_vs_fixed_pct']
    records = summary_records(results)
    if not records:
        return pd.DataFrame(columns=columns)
    df = pd.DataFrame(records)
    table = (df.groupby(['tier', 'scheme', 'v_weight'], sort=False)
               .agg(runs=('seed', 'count'),
                    avg_power_w=('avg_power_w', 'mean'),
                    mean_queue_bits=('mean_queue_bits', 'mean'),
                    avg_on_bs=('avg_on_bs', 'mean'))
               .reset_index())
    fixed = df[df['scheme'] == 'fixed'].groupby('tier')['avg_power_w'].mean()
    baseline = table['tier'].map(fixed)
    table['saving_vs_fixed_w'] = baseline - table['avg_power_w']
    table['saving_vs_fixed_pct'] = 100.0 * table['saving_vs_fixed_w'] / baseline
    return table[columns]
