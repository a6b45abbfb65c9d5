"""
Command line for the UDN energy simulator
generate a scenario, run an experiment sweep, verify against the exhaustive
optimum, print the defaults, or serve stored results.
"""

import json
import logging
import os

import click

from control import ConstraintViolation, OracleLimitError
from database import ResultsDatabase
from experiment import (EFFECTIVE_CONFIG_FILE, GAPS_FILE, ConfigError, describe_defaults, format_table,
                        gap_statistics, load_experiment_config, run_experiment, verification_config,
                        verify_oracle, write_artifacts)
from scenario import ScenarioError, ScenarioFileError, generate_scenario, save_scenario
from sim_config import DENSITY_TIERS, OUTPUT_DIR, RESULTS_DB
from traffic import ARRIVAL_MODES

logger = logging.getLogger(__name__)


def banner(title):
    click.echo(f"\n{'=' * 50}")
    click.echo(title)
    click.echo('=' * 50)


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Log at DEBUG level.')
def cli(verbose):
    """Energy-aware Ud-HetNet simulator"""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


@cli.command()
@click.option('--tier', type=click.Choice(sorted(DENSITY_TIERS)), required=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--width', type=float, default=1000.0, show_default=True, help='Region width in meters.')
@click.option('--height', type=float, default=1000.0, show_default=True, help='Region height in meters.')
@click.option('--out', type=click.Path(dir_okay=False), required=True)
def generate(tier, seed, width, height, out):
    """Write a generated scenario file"""
    try:
        scenario = generate_scenario(tier, (width, height), seed)
    except ScenarioError as e:
        raise click.ClickException(str(e))
    save_scenario(scenario, out)

    banner(f"Generated {tier} scenario (seed {seed})")
    for name, count in scenario.counts().items():
        click.echo(f"{name}: {count}")
    click.echo(f"\nSaved to {out}")


@cli.command()
@click.argument('config', type=click.Path(dir_okay=False))
@click.option('--horizon', 'horizon_slots', type=int, help='Slots per run.')
@click.option('--v', 'v_weight', type=float, help='Energy-delay tradeoff weight V.')
@click.option('--epoch', 'bs_epoch_slots', type=int, help='Slots between BS on/off decisions.')
@click.option('--jobs', type=int, help='Worker processes (default UDN_JOBS or CPU count).')
@click.option('--out', 'output_dir', type=click.Path(file_okay=False), help='Output directory.')
@click.option('--arrival-mode', type=click.Choice(ARRIVAL_MODES))
@click.option('--db', 'db_path', default=RESULTS_DB, show_default=True, help='Results database.')
def run(config, horizon_slots, v_weight, bs_epoch_slots, jobs, output_dir, arrival_mode, db_path):
    """Run the experiment sweep described by CONFIG"""
    overrides = {
        'horizon_slots': horizon_slots,
        'v_weight': v_weight,
        'bs_epoch_slots': bs_epoch_slots,
        'jobs': jobs,
        'output_dir': output_dir,
        'arrival_mode': arrival_mode,
    }
    try:
        cfg = load_experiment_config(config, overrides)
    except ConfigError as e:
        raise click.ClickException(f"invalid config: {e}")

    banner("EXPERIMENT")
    click.echo(f"Tiers: {cfg.scenario_file or ', '.join(cfg.tiers)}")
    click.echo(f"Schemes: {', '.join(cfg.schemes)}")
    click.echo(f"V: {', '.join(f'{v:g}' for v in cfg.v_values)}")
    click.echo(f"Seeds: {len(cfg.seeds)}, horizon: {cfg.horizon_slots} slots, jobs: {cfg.jobs}")

    try:
        results = run_experiment(cfg)
    except (ScenarioFileError, ScenarioError) as e:
        raise click.ClickException(f"scenario: {e}")
    except ConstraintViolation as e:
        raise click.ClickException(f"constraint violation: {e}")

    table = write_artifacts(results, cfg, db=ResultsDatabase(db_path))
    click.echo(format_table(table))
    click.echo(f"Artifacts written to {cfg.output_dir}")


@cli.command()
@click.option('--instances', type=int, default=100, show_default=True)
@click.option('--bs', 'num_bs', type=int, default=3, show_default=True)
@click.option('--users', 'num_users', type=int, default=3, show_default=True)
@click.option('--subcarriers', 'num_subcarriers', type=int, default=1, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', 'output_dir', type=click.Path(file_okay=False), default=OUTPUT_DIR, show_default=True)
def verify(instances, num_bs, num_users, num_subcarriers, seed, output_dir):
    """Compare load-aware decisions with the exhaustive optimum on tiny instances"""
    if instances < 0:
        raise click.ClickException("instances must be >= 0")
    try:
        report = verify_oracle(instances, num_bs, num_users, num_subcarriers, seed)
    except OracleLimitError as e:
        raise click.ClickException(f"instance too large: {e}")
    except ConfigError as e:
        raise click.ClickException(str(e))

    os.makedirs(output_dir, exist_ok=True)
    with open(os.path.join(output_dir, EFFECTIVE_CONFIG_FILE), 'w') as f:
        json.dump(verification_config(instances, num_bs, num_users, num_subcarriers, seed), f, indent=2)
    path = os.path.join(output_dir, GAPS_FILE)
    report.to_csv(path, index=False)
    stats = gap_statistics(report)

    banner("VERIFICATION SUMMARY")
    click.echo(f"Instances: {stats['instances']}")
    if stats['instances']:
        click.echo(f"Feasible: {stats['feasible']}/{stats['instances']}")
        click.echo(f"Not worse than all-on: {stats['not_worse_than_all_on']}/{stats['instances']}")
        click.echo(f"Gap median {stats['median_gap']:.4%}, mean {stats['mean_gap']:.4%}, "
                   f"max {stats['max_gap']:.4%}")
    click.echo(f"Report: {path}")

    if stats['feasible'] < stats['instances'] or stats['not_worse_than_all_on'] < stats['instances']:
        raise click.ClickException("structural invariant failed on at least one instance")


@cli.command()
def describe():
    """Print every default the simulator uses"""
    banner("DEFAULTS")
    click.echo(json.dumps(describe_defaults(), indent=2))


@cli.command()
@click.option('--port', type=int, default=8080, show_default=True)
@click.option('--host', default='127.0.0.1', show_default=True)
@click.option('--db', 'db_path', default=RESULTS_DB, show_default=True)
def serve(port, host, db_path):
    """Serve stored results as a JSON API"""
    from app import create_app, print_banner

    print_banner(port)
    create_app(ResultsDatabase(db_path)).run(port=port, host=host)


if __name__ == '__main__':
    cli()
