"""Command-line interface for beamnet using Typer.

This module provides CLI commands:
- simulate: forward simulation to a trajectory CSV
- control: nodal profile control synthesis on the A-shaped network
- reconstruct: centerline and rotations from an intrinsic trajectory
- plan: control-path schedule for the charged/controlled nodes of a config
- check: validation and compatibility reports
- list-networks: bundled configurations

Every error prints ``Error: <kind>-error: <message>`` to stderr and exits with
2 (parse), 3 (validation) or 4 (runtime).

Time Complexity: Varies per command
Space Complexity: Varies per command
"""

import logging
import os
from collections.abc import Iterator
from contextlib import contextmanager
from enum import IntEnum
from pathlib import Path
from typing import NoReturn

import numpy as np
import typer
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from beamnet.beam import DiagonalizedBeam
from beamnet.config_loader import LoadedRun, NetworkLoader
from beamnet.control import synthesize, verify_initial_recovery
from beamnet.exceptions import BeamNetError, ConfigParseError, ConfigValidationError
from beamnet.geb import (
    GebField,
    check_first_order_compat,
    fn_from_qn,
    reconstruct_network,
    reconstruction_report,
)
from beamnet.network import Endpoint, NodeKind, diagonalize_network, validate
from beamnet.planner import PlanInput, build_plan, check_sufficient_conditions
from beamnet.reporting import ReportRenderer
from beamnet.solver import BeamField, Grid, Trajectory, solve_forward
from beamnet.utils import (
    atomic_write,
    ensure_directory,
    read_trajectory,
    write_centerline,
    write_series,
    write_trajectory,
)

app = typer.Typer(
    name="beamnet",
    help="Simulate and control networks of geometrically exact beams",
    add_completion=False,
)

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "BEAMNET_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class ExitCode(IntEnum):
    """Process exit codes."""

    OK = 0
    PARSE = 2
    VALIDATION = 3
    RUNTIME = 4


def _fail(code: ExitCode, kind: str, error: Exception) -> NoReturn:
    err_console.print(f"Error: {kind}-error: {error}", markup=False, highlight=False, soft_wrap=True)
    raise typer.Exit(code=int(code))


@contextmanager
def _handle_errors() -> Iterator[None]:
    """Map package errors to exit codes.

    ``ValueError`` comes from rejected numeric parameters (``--cfl``, grid
    sizes, sample layouts) and counts as a validation failure.
    """
    try:
        yield
    except ConfigParseError as e:
        _fail(ExitCode.PARSE, "parse", e)
    except ConfigValidationError as e:
        _fail(ExitCode.VALIDATION, "validation", e)
    except BeamNetError as e:
        logger.debug("Runtime failure", exc_info=True)
        _fail(ExitCode.RUNTIME, "runtime", e)
    except ValueError as e:
        logger.debug("Rejected parameter", exc_info=True)
        _fail(ExitCode.VALIDATION, "validation", e)
    except OSError as e:
        logger.debug("I/O failure", exc_info=True)
        _fail(ExitCode.RUNTIME, "runtime", e)


ConfigOption = typer.Option(..., "--config", "-c", help="Run configuration (path or bundled name)")
OutDirOption = typer.Option(None, "--out-dir", "-o", help="Output directory (default: io.out_dir)")
NxOption = typer.Option(None, "--nx", help="Cells per beam (default: simulation.nx)", min=4, max=20000)
CflOption = typer.Option(None, "--cfl", help="CFL number in (0, 1] (default: simulation.cfl)")
TolOption = typer.Option(1e-6, "--tol", help="Tolerance of reports")


def _prepare(config: str, nx: int | None) -> tuple[LoadedRun, dict[int, DiagonalizedBeam]]:
    run = NetworkLoader().load(config)
    cells = nx if nx is not None else run.config.simulation.nx
    return run, diagonalize_network(run.network, cells)


def _out_dir(run: LoadedRun, out_dir: Path | None) -> Path:
    return ensure_directory(out_dir if out_dir is not None else Path(run.config.io.out_dir))


def _cfl(run: LoadedRun, cfl: float | None) -> float:
    return cfl if cfl is not None else run.config.simulation.cfl


def _field_tuples(trajectory: Trajectory) -> dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    return {i: (f.x, f.t, f.y) for i, f in trajectory.fields.items()}


def _write_text(path: Path, text: str) -> None:
    atomic_write(path, text.encode("utf-8"))


def _write_reconstruction(
    run: LoadedRun, trajectory: Trajectory, out: Path, precision: int
) -> dict[int, GebField]:
    fields = reconstruct_network(trajectory, run.network)
    write_centerline(out / "centerline.csv", {i: (g.x, g.t, g.p) for i, g in fields.items()}, precision)
    report = reconstruction_report(trajectory, run.network, fields)
    _write_text(out / "reconstruction.txt", ReportRenderer().reconstruction(report))
    return fields


@app.command()
def simulate(
    config: str = ConfigOption,
    out_dir: Path | None = OutDirOption,
    nx: int | None = NxOption,
    cfl: float | None = CflOption,
) -> None:
    """Solve the network forward and write trajectory.csv.

    Example:
        beamnet simulate --config a_network_unit
    """
    with _handle_errors():
        run, dbs = _prepare(config, nx)
        sim = run.config.simulation
        grid = Grid.from_cfl(dbs, sim.horizon, _cfl(run, cfl))
        y0 = run.initial_state(dbs)
        with Progress(
            SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console
        ) as progress:
            task = progress.add_task(f"Simulating {grid.nt} steps...", total=grid.nt)
            trajectory = solve_forward(
                run.network,
                dbs,
                y0,
                grid,
                blowup_bound=sim.blowup_bound,
                progress=lambda step, _nt: progress.update(task, completed=step),
            )
        out = _out_dir(run, out_dir)
        write_trajectory(out / "trajectory.csv", _field_tuples(trajectory), run.config.io.precision)

        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Beam", style="cyan", no_wrap=True)
        table.add_column("Samples")
        table.add_column("max |y|")
        for i, f in trajectory.fields.items():
            table.add_row(str(i), str(len(f.x)), f"{float(np.max(np.abs(f.y))):.3e}")
        console.print(table)
        console.print(f"dt={grid.dt:.6g}, steps={grid.nt}, output: [cyan]{out / 'trajectory.csv'}[/cyan]")


@app.command()
def control(
    config: str = ConfigOption,
    out_dir: Path | None = OutDirOption,
    nx: int | None = NxOption,
    cfl: float | None = CflOption,
    tol: float = TolOption,
    reconstruct: bool = typer.Option(False, "--reconstruct", help="Also write centerlines and nodal loads"),
) -> None:
    """Synthesise controls at the controlled nodes of the A-shaped network.

    Writes controls_node<n>.csv, trajectory.csv, control.txt and verification.txt.
    """
    with _handle_errors():
        run, dbs = _prepare(config, nx)
        problem = run.control_problem(dbs)
        grid = Grid.from_cfl(dbs, problem.horizon, _cfl(run, cfl))
        result = synthesize(problem, dbs, grid, blowup_bound=run.config.simulation.blowup_bound)
        verification = verify_initial_recovery(result, dbs, tol)

        out = _out_dir(run, out_dir)
        precision = run.config.io.precision
        for n, series in sorted(result.controls.items()):
            write_series(out / f"controls_node{n}.csv", series.t, series.values, precision)
        write_trajectory(out / "trajectory.csv", _field_tuples(result.trajectory), precision)
        renderer = ReportRenderer()
        _write_text(out / "control.txt", renderer.control(result.report))
        _write_text(out / "verification.txt", renderer.verification(verification))

        if reconstruct:
            fields = _write_reconstruction(run, result.trajectory, out, precision)
            for n, q in sorted(result.controls.items()):
                inc = run.network.ordered_incidences(n)[0]
                R = fields[inc.beam].R[:, 0 if inc.endpoint is Endpoint.START else -1]
                kind = run.network.node(n).kind
                if kind is NodeKind.DIRICHLET:
                    continue
                reference = run.network.beam(inc.beam).rotation(
                    0.0 if inc.endpoint is Endpoint.START else run.network.beam(inc.beam).length
                )
                loads = fn_from_qn(q, R, kind, reference)
                write_series(out / f"loads_node{n}.csv", loads.t, loads.values, precision)

        console.print(renderer.control(result.report), markup=False)
        status = "[green]PASS[/green]" if verification.passed else "[red]FAIL[/red]"
        console.print(f"verification: {status} (max deviation {verification.max_deviation:.3e})")
        console.print(f"Output directory: [cyan]{out}[/cyan]")


@app.command("reconstruct")
def reconstruct_command(
    config: str = ConfigOption,
    trajectory: Path | None = typer.Option(None, "--trajectory", "-t", help="Trajectory CSV (default: simulate)"),
    out_dir: Path | None = OutDirOption,
    nx: int | None = NxOption,
    cfl: float | None = CflOption,
) -> None:
    """Reconstruct centerlines and rotations; writes centerline.csv and reconstruction.txt."""
    with _handle_errors():
        if trajectory is None:
            run, dbs = _prepare(config, nx)
            grid = Grid.from_cfl(dbs, run.config.simulation.horizon, _cfl(run, cfl))
            traj = solve_forward(
                run.network, dbs, run.initial_state(dbs), grid, blowup_bound=run.config.simulation.blowup_bound
            )
        else:
            data = read_trajectory(trajectory)
            run = NetworkLoader().load(config)
            if sorted(data) != run.network.beam_indices:
                raise ConfigParseError(f"{trajectory}: beams {sorted(data)} do not match the network")
            cells = len(next(iter(data.values()))[0]) - 1
            dbs = diagonalize_network(run.network, cells)
            times = next(iter(data.values()))[1]
            fields: dict[int, BeamField] = {}
            for i, (x, t, y) in data.items():
                if len(x) != dbs[i].n_samples or not np.allclose(t, times):
                    raise ConfigParseError(f"{trajectory}: beam {i} is not on the shared (t, x) grid")
                fields[i] = BeamField(beam=i, x=dbs[i].x, t=times, y=y, L=dbs[i].L)
            traj = Trajectory(t=times, fields=fields)
        out = _out_dir(run, out_dir)
        _write_reconstruction(run, traj, out, run.config.io.precision)
        console.print(f"Output directory: [cyan]{out}[/cyan]")


@app.command()
def plan(
    config: str = ConfigOption,
    out_dir: Path | None = OutDirOption,
) -> None:
    """Schedule forward and sidewise solves for the config's control block."""
    with _handle_errors():
        run = NetworkLoader().load(config)
        control_cfg = run.config.control
        if control_cfg is None:
            raise ConfigParseError("Configuration has no 'control' block")
        plan_input = PlanInput(
            run.network,
            tuple(control_cfg.charged),
            tuple(control_cfg.controlled),
            tuple(control_cfg.path_edges),
        )
        sufficiency = check_sufficient_conditions(plan_input)
        schedule = build_plan(plan_input)
        text = ReportRenderer().plan(
            schedule.listing(),
            sufficiency,
            list(control_cfg.charged),
            list(control_cfg.controlled),
            list(control_cfg.path_edges),
        )
        out = _out_dir(run, out_dir)
        _write_text(out / "plan.txt", text)
        console.print(text, markup=False)


@app.command()
def check(
    config: str = ConfigOption,
    out_dir: Path | None = OutDirOption,
    nx: int | None = NxOption,
    tol: float = TolOption,
) -> None:
    """Write compatibility.txt for the initial data and nodal data at t = 0."""
    with _handle_errors():
        run, dbs = _prepare(config, nx)
        structure = validate(run.network)
        report = check_first_order_compat(run.initial_state(dbs), run.network, dbs, tol)
        text = ReportRenderer().compatibility(report)
        out = _out_dir(run, out_dir)
        _write_text(out / "compatibility.txt", text)
        console.print(f"network: {'valid' if structure.valid else 'INVALID'}")
        console.print(text, markup=False)


@app.command("list-networks")
def list_networks() -> None:
    """List bundled network configurations."""
    loader = NetworkLoader()
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Network", style="cyan", no_wrap=True)
    table.add_column("Status", style="green")
    table.add_column("Details")
    for name in loader.list_available_networks():
        valid, message = loader.validate_config(name)
        table.add_row(name, "✓ Valid" if valid else "✗ Invalid", message.splitlines()[-1].strip())
    console.print(table)


@app.callback()
def main() -> None:
    """beamnet - intrinsic beam network simulation and nodal profile control.

    Log verbosity follows the BEAMNET_LOG_LEVEL environment variable.
    """
    level = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format=LOG_FORMAT)


if __name__ == "__main__":
    app()
