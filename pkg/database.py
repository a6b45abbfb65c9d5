import sqlite3
import logging
from datetime import datetime

import pandas as pd

from sim_config import RESULTS_DB

logger = logging.getLogger(__name__)


class ResultsDatabase:
    def __init__(self, db_path=RESULTS_DB):
        self.db_path = db_path
        self.create_tables()

    def create_tables(self):
        """Create tables for runs and their per-slot series"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                run_key TEXT PRIMARY KEY,
                tier TEXT NOT NULL,
                scheme TEXT NOT NULL,
                v_weight REAL,
                seed INTEGER,
                horizon_slots INTEGER,
                warmup_slots INTEGER,
                avg_power_w REAL,
                mean_queue_bits REAL,
                max_user_queue_bits REAL,
                avg_on_bs REAL,
                avg_sum_rate REAL,
                total_arrived_bits REAL,
                total_served_bits REAL,
                queue_growth REAL,
                output_dir TEXT,
                recorded_at TIMESTAMP
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS slots (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_key TEXT NOT NULL,
                slot INTEGER NOT NULL,
                scheme TEXT,
                total_power_w REAL,
                mean_queue_bits REAL,
                on_bs_count INTEGER,
                sum_rate REAL,
                FOREIGN KEY (run_key) REFERENCES runs(run_key)
            )
        ''')

        cursor.execute('CREATE INDEX IF NOT EXISTS idx_slots_run ON slots(run_key, slot)')
        cursor.execute('CREATE INDEX IF NOT EXISTS idx_runs_tier ON runs(tier, scheme)')

        conn.commit()
        conn.close()

    def insert_runs(self, summary, slots, output_dir=None):
        """Store run summaries and their slot rows, replacing earlier runs with the same key"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        keys = [(record['run_key'],) for record in summary]
        cursor.executemany("DELETE FROM slots WHERE run_key = ?", keys)
        cursor.executemany("DELETE FROM runs WHERE run_key = ?", keys)

        now = datetime.now().isoformat(timespec="seconds")
        cursor.executemany('''
            INSERT INTO runs (
                run_key, tier, scheme, v_weight, seed, horizon_slots, warmup_slots,
                avg_power_w, mean_queue_bits, max_user_queue_bits, avg_on_bs, avg_sum_rate,
                total_arrived_bits, total_served_bits, queue_growth, output_dir, recorded_at
            ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        ''', [(
            r['run_key'], r['tier'], r['scheme'], r['v_weight'], r['seed'], r['horizon_slots'],
            r['warmup_slots'], r['avg_power_w'], r['mean_queue_bits'], r['max_user_queue_bits'],
            r['avg_on_bs'], r['avg_sum_rate'], r['total_arrived_bits'], r['total_served_bits'],
            r['queue_growth'], output_dir, now,
        ) for r in summary])

        if len(slots):
            slots.to_sql('slots_temp', conn, if_exists='replace', index=False)
            cursor.execute('''
                INSERT INTO slots (run_key, slot, scheme, total_power_w, mean_queue_bits, on_bs_count, sum_rate)
                SELECT run_key, slot, scheme, total_power_w, mean_queue_bits, on_bs_count, sum_rate
                FROM slots_temp
            ''')
            cursor.execute("DROP TABLE slots_temp")

        conn.commit()
        conn.close()

        logger.info("Stored %d runs (%d slot rows) in %s", len(summary), len(slots), self.db_path)

    def get_all_runs(self, tier=None, scheme=None):
        """Get run summaries, optionally filtered by tier and scheme"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()

        query = "SELECT * FROM runs"
        clauses, params = [], []
        if tier:
            clauses.append("tier = ?")
            params.append(tier)
        if scheme:
            clauses.append("scheme = ?")
            params.append(scheme)
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY tier, scheme, v_weight, seed"

        cursor.execute(query, params)
        results = [dict(row) for row in cursor.fetchall()]
        conn.close()

        return results

    def get_run(self, run_key):
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()

        cursor.execute("SELECT * FROM runs WHERE run_key = ?", (run_key,))
        row = cursor.fetchone()
        conn.close()

        return dict(row) if row else None

    def get_slots(self, run_key, limit=None):
        """Per-slot rows of one run in slot order"""
        conn = sqlite3.connect(self.db_path)
        query = '''
            SELECT run_key, slot, scheme, total_power_w, mean_queue_bits, on_bs_count, sum_rate
            FROM slots WHERE run_key = ? ORDER BY slot
        '''
        params = [run_key]
        if limit:
            query += " LIMIT ?"
            params.append(int(limit))
        df = pd.read_sql_query(query, conn, params=params)
        conn.close()

        return df

    def get_power_comparison(self):
        """Mean power and queue per (tier, scheme, V) across seeds"""
        conn = sqlite3.connect(self.db_path)
        df = pd.read_sql_query('''
            SELECT tier, scheme, v_weight,
                   COUNT(*) AS runs,
                   AVG(avg_power_w) AS avg_power_w,
                   AVG(mean_queue_bits) AS mean_queue_bits,
                   AVG(avg_on_bs) AS avg_on_bs
            FROM runs
            GROUP BY tier, scheme, v_weight
            ORDER BY tier, avg_power_w
        ''', conn)
        conn.close()

        return df

    def get_stats(self):
        """Get database statistics"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute("SELECT COUNT(*) FROM runs")
        total_runs = cursor.fetchone()[0]

        cursor.execute("SELECT COUNT(*) FROM slots")
        total_slots = cursor.fetchone()[0]

        cursor.execute("SELECT MAX(recorded_at) FROM runs")
        latest_run = cursor.fetchone()[0]

        cursor.execute('''
            SELECT tier, scheme, COUNT(*) AS runs
            FROM runs
            GROUP BY tier, scheme
            ORDER BY tier, scheme
        ''')
        scheme_stats = cursor.fetchall()

        conn.close()

        return {
            'total_runs': total_runs,
            'total_slots': total_slots,
            'latest_run': latest_run,
            'scheme_stats': scheme_stats
        }
