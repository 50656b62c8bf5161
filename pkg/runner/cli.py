"""Command line entry point: run scenarios, list them, emit plot tables."""

import logging
import sys
from typing import Optional

import click

from config import LogConfig
from runner.export import emit_plot_tables
from runner.run_scenario import ExitCode, format_summary, run_scenario
from runner.scenario import ScenarioConfig, bundled_scenarios, load_scenario
from vlasovkit.errors import ConfigError

logger = logging.getLogger("vlasovkit.cli")

seed_option = click.option("--seed", type=int, default=None, help="Override numeric.seed")
out_option = click.option("--out", type=click.Path(file_okay=False), default=None,
                          help="Output root (default: VLASOVKIT_OUTPUT_ROOT or ./runs)")
steps_option = click.option("--steps", type=int, default=None, help="Override numeric.steps")
tol_option = click.option("--tol", type=float, default=None, help="Override every check tolerance")


def _execute(config: ScenarioConfig, seed, out, steps, tol, quiet: bool) -> int:
    try:
        config = config.with_overrides(seed=seed, out=out, steps=steps, tol=tol)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        return ExitCode.CONFIG_ERROR
    summary = run_scenario(config, LogConfig.from_env())
    if not quiet:
        click.echo(format_summary(summary))
    return int(summary.exit_code)


def _load(source: str) -> Optional[ScenarioConfig]:
    try:
        return load_scenario(source)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        return None


@click.group()
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Console log level for library loggers")
def cli(log_level: Optional[str]):
    """Parameterisation-free relativistic kinetic scenarios."""
    level = (log_level or LogConfig.from_env().level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
                        stream=sys.stderr)


@cli.command("run")
@click.argument("config_path", metavar="CONFIG")
@seed_option
@out_option
@steps_option
@tol_option
@click.option("--quiet", is_flag=True, help="Skip the console summary table")
def run_command(config_path, seed, out, steps, tol, quiet):
    """Run the scenario in CONFIG (a YAML file or a bundled scenario name)."""
    config = _load(config_path)
    if config is None:
        sys.exit(ExitCode.CONFIG_ERROR)
    sys.exit(_execute(config, seed, out, steps, tol, quiet))


@cli.command("list-scenarios")
def list_scenarios():
    """List the bundled scenarios."""
    scenarios = bundled_scenarios()
    width = max((len(name) for name, _ in scenarios), default=10)
    for name, description in scenarios:
        click.echo(f"{name:<{width}}  {description}")


@cli.command("check")
@click.argument("suite_name")
@seed_option
@out_option
@steps_option
@tol_option
@click.option("--quiet", is_flag=True)
def check_command(suite_name, seed, out, steps, tol, quiet):
    """Run a bundled scenario by name; exit status reports the checks."""
    known = {name for name, _ in bundled_scenarios()}
    if suite_name not in known:
        click.echo(f"Unknown suite '{suite_name}'. Known: {', '.join(sorted(known))}", err=True)
        sys.exit(ExitCode.CONFIG_ERROR)
    config = _load(suite_name)
    if config is None:
        sys.exit(ExitCode.CONFIG_ERROR)
    sys.exit(_execute(config, seed, out, steps, tol, quiet))


@cli.command("emit-plots")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def emit_plots(run_dir):
    """Write plot-ready (panel, series, x, y) CSV tables for a finished run."""
    written = emit_plot_tables(run_dir)
    if not written:
        click.echo(f"No plottable tables in {run_dir}", err=True)
        sys.exit(ExitCode.CHECK_FAILED)
    for path in written:
        click.echo(str(path))


def main():
    cli(prog_name="vlasovkit")


if __name__ == "__main__":
    main()
