import pandas as pd
import pytest

from database import ResultsDatabase
from sim import SLOT_COLUMNS


def _summary(run_key, tier='urban', scheme='fixed', v=10.0, seed=1, power=900.0):
    return {
        'run_key': run_key, 'tier': tier, 'scheme': scheme, 'v_weight': v, 'seed': seed,
        'horizon_slots': 4, 'warmup_slots': 2, 'avg_power_w': power, 'mean_queue_bits': 1e5,
        'max_user_queue_bits': 2e5, 'avg_on_bs': 3.0, 'avg_sum_rate': 5e6, 'total_arrived_bits': 1e6,
        'total_served_bits': 9e5, 'queue_growth': 0.01,
    }


def _slots(run_key, scheme='fixed', n=4):
    return pd.DataFrame({
        'run_key': run_key, 'slot': range(n), 'scheme': scheme,
        'total_power_w': [900.0 + k for k in range(n)], 'mean_queue_bits': 1e5, 'on_bs_count': 3,
        'sum_rate': 5e6,
    })[SLOT_COLUMNS]


@pytest.fixture
def db(tmp_path):
    return ResultsDatabase(str(tmp_path / 'results.db'))


def test_insert_and_read_back(db):
    db.insert_runs([_summary('urban/fixed/V10/s1')], _slots('urban/fixed/V10/s1'), output_dir='out')
    run = db.get_run('urban/fixed/V10/s1')
    assert run['avg_power_w'] == 900.0
    assert run['output_dir'] == 'out'
    assert run['recorded_at']
    slots = db.get_slots('urban/fixed/V10/s1')
    assert slots['slot'].tolist() == [0, 1, 2, 3]
    assert len(db.get_slots('urban/fixed/V10/s1', limit=2)) == 2


def test_missing_run(db):
    assert db.get_run('nope') is None
    assert db.get_slots('nope').empty


def test_reinsert_replaces_run(db):
    key = 'rural/load-aware/V10/s1'
    db.insert_runs([_summary(key, 'rural', 'load-aware', power=500.0)], _slots(key, 'load-aware'))
    db.insert_runs([_summary(key, 'rural', 'load-aware', power=450.0)], _slots(key, 'load-aware', n=3))
    assert db.get_run(key)['avg_power_w'] == 450.0
    assert len(db.get_slots(key)) == 3
    assert db.get_stats()['total_runs'] == 1


def test_filters_and_comparison(db):
    summary = [
        _summary('urban/fixed/V10/s1', power=1000.0),
        _summary('urban/fixed/V10/s2', seed=2, power=1000.0),
        _summary('urban/load-aware/V10/s1', scheme='load-aware', power=700.0),
        _summary('urban/load-aware/V10/s2', scheme='load-aware', seed=2, power=800.0),
        _summary('rural/fixed/V10/s1', tier='rural', power=600.0),
    ]
    db.insert_runs(summary, pd.DataFrame(columns=SLOT_COLUMNS))
    assert len(db.get_all_runs()) == 5
    assert len(db.get_all_runs(tier='urban')) == 4
    assert len(db.get_all_runs(tier='urban', scheme='load-aware')) == 2

    table = db.get_power_comparison()
    urban = table[table['tier'] == 'urban'].set_index('scheme')
    assert urban.loc['load-aware', 'avg_power_w'] == pytest.approx(750.0)
    assert urban.loc['fixed', 'runs'] == 2


def test_stats(db):
    db.insert_runs([_summary('urban/fixed/V10/s1')], _slots('urban/fixed/V10/s1'))
    stats = db.get_stats()
    assert stats['total_runs'] == 1
    assert stats['total_slots'] == 4
    assert [tuple(row) for row in stats['scheme_stats']] == [('urban', 'fixed', 1)]
