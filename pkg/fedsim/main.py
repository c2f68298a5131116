"""
fedsim - Command-Line Entry Point
Runs federated experiments and sweeps, and renders impact tables

Commands:
- run:     one experiment -> rounds.csv, summary.csv (prints A)
- sweep:   paired no-attack/attacked runs over one axis -> impact.csv
- report:  aggregator x attack impact matrix -> table.csv
- profile: print a named preset as an experiment file

Exit codes: 0 success, 1 simulation failure, 2 invalid input.
"""

import os
import sys
from pathlib import Path
from typing import List, Optional

import typer
import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

# Load environment variables from .env file
load_dotenv()

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from fedsim import __version__
from fedsim.core.errors import ConfigurationError, FedSimError
from fedsim.core.reporting import (
    ImpactRow,
    collect_impacts,
    format_float,
    format_value,
    impact_table,
    write_impact,
    write_run,
    write_sweep_manifest,
    write_table,
)
from fedsim.core.simulator import compute_attack_impact, run_experiment, worker_count
from fedsim.models.validation import apply_axis, load_config, load_sweep
from fedsim.utils.safe_logging import configure_logging, get_logger, safe_log
from fedsim.utils.table_formatter import format_summary, format_table

SERVICE_NAME = "fedsim"
EXIT_FAILURE = 1
EXIT_INVALID = 2

app = typer.Typer(
    name=SERVICE_NAME,
    help="Deterministic federated learning simulations with model poisoning attacks and defenses.",
    add_completion=False,
    no_args_is_help=True,
)
logger = get_logger(__name__)


def _fail(message: str, code: int) -> None:
    typer.echo(f"error: {message}", err=True)
    raise typer.Exit(code)


def _describe_validation(exc: ValidationError, source: Path) -> str:
    lines = [f"{source}: invalid configuration"]
    for err in exc.errors():
        location = ".".join(str(part) for part in err["loc"]) or "(root)"
        lines.append(f"  {location}: {err['msg']}")
    return "\n".join(lines)


def _describe_yaml(exc: yaml.YAMLError, source: Path) -> str:
    mark = getattr(exc, "problem_mark", None)
    where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark is not None else ""
    return f"{source}: malformed YAML{where}: {getattr(exc, 'problem', exc)}"


def _load(loader, path: Path):
    """Run a config loader and turn parse/validation failures into exit code 2"""
    try:
        return loader(path)
    except ValidationError as exc:
        _fail(_describe_validation(exc, path), EXIT_INVALID)
    except yaml.YAMLError as exc:
        _fail(_describe_yaml(exc, path), EXIT_INVALID)
    except ValueError as exc:
        # ConfigurationError and json decoding errors are both ValueErrors
        _fail(f"{path}: {exc}", EXIT_INVALID)


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides FEDSIM_LOG_LEVEL"),
    log_format: Optional[str] = typer.Option(None, "--log-format", help="console or json; overrides FEDSIM_LOG_FORMAT"),
):
    configure_logging(log_level, log_format)


@app.command()
def run(
    config: Path = typer.Option(..., "--config", help="Experiment file (YAML, or JSON by suffix)"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Overrides FEDSIM_THREADS"),
):
    """Run one experiment and write rounds.csv and summary.csv."""
    cfg = _load(load_config, config)
    try:
        result = run_experiment(cfg, threads=threads or worker_count())
    except FedSimError as exc:
        _fail(str(exc), EXIT_FAILURE)
    write_run(out, cfg, result)
    typer.echo(format_summary({"digest": result.digest[:12], "rounds": len(result.records), "out": str(out)}), err=True)
    typer.echo(format_float(result.accuracy))


@app.command()
def sweep(
    spec: Path = typer.Option(..., "--spec", help="Sweep file"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Overrides FEDSIM_THREADS"),
):
    """Run paired no-attack/attacked experiments for every swept value and write impact.csv."""
    sweep_spec, base = _load(load_sweep, spec)
    threads = threads or worker_count()
    baselines = {}
    rows: List[ImpactRow] = []

    for value in sweep_spec.values:
        child = apply_axis(base, sweep_spec.axis, value)
        row = ImpactRow(axis=sweep_spec.axis, value=value, digest=child.digest(),
                        baseline_digest=child.baseline_digest())
        child_dir = out / "runs" / f"value-{format_value(value)}"
        try:
            attacked = run_experiment(child, threads=threads)
            write_run(child_dir / "attacked", child, attacked)
            row.Astar = attacked.accuracy
            if sweep_spec.paired:
                clean = child.without_attack()
                key = clean.digest()
                if key not in baselines:
                    baselines[key] = run_experiment(clean, threads=threads)
                    write_run(out / "runs" / f"baseline-{key[:12]}", clean, baselines[key])
                row.A = baselines[key].accuracy
                row.I = compute_attack_impact(baselines[key], attacked)
        except FedSimError as exc:
            row.error = str(exc)
            logger.error("sweep_child_failed", axis=sweep_spec.axis, value=value, error=str(exc))
        rows.append(row)
        typer.echo(safe_log("sweep value done", value=value, I=row.I, error=row.error or None), err=True)

    write_impact(out / "impact.csv", rows)
    write_sweep_manifest(out / "sweep.json", base.aggregator.kind, base.attack.kind, sweep_spec.axis, rows)
    if rows and all(row.error for row in rows):
        _fail("every sweep value failed", EXIT_FAILURE)


@app.command()
def report(
    dirs: List[Path] = typer.Argument(..., help="Run or sweep output directories"),
    out: Path = typer.Option(Path("."), "--out", help="Directory for table.csv"),
):
    """Print the aggregator x attack impact matrix and write table.csv."""
    try:
        table = impact_table(collect_impacts(dirs))
    except FedSimError as exc:
        _fail(str(exc), EXIT_FAILURE)
    except ValidationError as exc:
        _fail(_describe_validation(exc, Path("config.yaml")), EXIT_INVALID)
    write_table(out / "table.csv", table)
    typer.echo(format_table(table, title="Attack impact (accuracy points)"))


@app.command()
def profile(
    name: Optional[str] = typer.Argument(None, help="Profile name; defaults to FEDSIM_PROFILE"),
):
    """Print a named preset as an experiment file."""
    from config.experiment_profiles import get_active_profile, get_profile_by_name

    try:
        chosen = get_profile_by_name(name) if name else get_active_profile()
        typer.echo(chosen.to_config().to_yaml(), nl=False)
    except (ValueError, ConfigurationError) as exc:
        _fail(str(exc), EXIT_INVALID)


@app.command()
def version():
    """Print the fedsim version."""
    typer.echo(f"{SERVICE_NAME} {__version__}")


if __name__ == "__main__":
    app()
