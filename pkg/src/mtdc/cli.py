"""Command line entry point: ``mtdc analyze|simulate|bench|verify|sweep``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import runner
from .analysis import NotConverged, SingularSystem
from .bench import benchmark_config, write_bench
from .densela import LinAlgError
from .plant import Config, PlantError, VoltageCollapse
from .scenario import ScenarioError, load
from .sim import StepSizeUnstable

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

NUMERICAL = (StepSizeUnstable, SingularSystem, LinAlgError, VoltageCollapse, NotConverged, ArithmeticError)
CONTROLLERS = [c.value for c in Config]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True)


def _fail(code: int, exc: Exception) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(code)


def _run(fn):
    """Call ``fn`` and map library exceptions onto exit codes."""
    try:
        return fn()
    except ScenarioError as exc:
        _fail(EXIT_INPUT, exc)
    except PlantError as exc:
        if isinstance(exc, VoltageCollapse):
            _fail(EXIT_NUMERIC, exc)
        _fail(EXIT_INPUT, exc)
    except NUMERICAL as exc:
        _fail(EXIT_NUMERIC, exc)
    except (OSError, ValueError) as exc:
        _fail(EXIT_INPUT, exc)


def _config(path, controller, bench):
    if bench:
        return benchmark_config(controller or Config.DROOP_ONLY)
    if path is None:
        raise ScenarioError("a scenario file is required unless --bench is given")
    cfg = load(path)
    if controller:
        cfg = cfg.replace(controller=controller)
    return cfg


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Simulate and certify frequency control over an MTDC grid."""


@main.command()
@click.argument("file", required=False, type=click.Path(dir_okay=False))
@click.option("--controller", type=click.Choice(CONTROLLERS), help="Override the scenario controller.")
@click.option("--bench", is_flag=True, help="Use the built-in six-terminal benchmark.")
def analyze(file, controller, bench):
    """Stability, equilibrium and bounds without time integration."""
    report = _run(lambda: runner.analyze(_config(file, controller, bench)))
    click.echo(_dump(report))


@main.command()
@click.argument("file", required=False, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Trajectory CSV path.")
@click.option("--controller", type=click.Choice(CONTROLLERS))
@click.option("--bench", is_flag=True)
def simulate(file, out, controller, bench):
    """Integrate the scenario, write the CSV and a JSON report beside it."""
    report, _ = _run(lambda: runner.simulate(_config(file, controller, bench), out))
    Path(out).with_suffix(".report.json").write_text(_dump(report) + "\n", encoding="utf-8")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--dir", "directory", required=True, type=click.Path(file_okay=False))
def bench(directory):
    """Write the six-terminal benchmark scenarios, one per controller."""
    for p in _run(lambda: write_bench(directory)):
        click.echo(str(p))


@main.command()
@click.argument("file", required=False, type=click.Path(dir_okay=False))
@click.option("--controller", type=click.Choice(CONTROLLERS))
@click.option("--bench", is_flag=True)
def verify(file, controller, bench):
    """Check every applicable invariant; exit 1 naming the first failure."""
    checks = _run(lambda: runner.verify(_config(file, controller, bench)))
    for c in checks:
        click.echo(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}: {c['detail']}")
    failed = [c for c in checks if not c["passed"]]
    if failed:
        click.echo(f"verification failed: {failed[0]['check']}", err=True)
        sys.exit(EXIT_VERIFY)


def _values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise ScenarioError(f"cannot parse value list {text!r}", "--values") from exc
    if not vals:
        raise ScenarioError("empty value list", "--values")
    return vals


@main.command()
@click.argument("file", required=False, type=click.Path(dir_okay=False))
@click.option("--param", required=True, help="Controller parameter to vary.")
@click.option("--values", "values", required=True, help="Comma separated values.")
@click.option("--controller", type=click.Choice(CONTROLLERS))
@click.option("--bench", is_flag=True)
def sweep(file, param, values, controller, bench):
    """Equilibrium and bound verdict for each value of one parameter."""
    report = _run(lambda: runner.sweep_report(_config(file, controller, bench), param, _values(values)))
    click.echo(_dump(report))


if __name__ == "__main__":
    main()
