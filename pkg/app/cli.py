"""
Command-line interface.

    python -m app.cli sim --scenario flask-250 --out runs/flask-250
    python -m app.cli replay --in runs/flask-250
    python -m app.cli report --in runs/flask-250 --out-dir runs/flask-250/report
    python -m app.cli list-scenarios
    python -m app.cli reflector-scan
    python -m app.cli serve
"""

import logging
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

from app.core.config import settings
from app.core.exceptions import MonitorError
from app.core.logging import configure_logging
from app.harness.reflector import reflector_scan
from app.harness.report import render_summary, write_report
from app.harness.runner import load_session_log, replay, run_scenario, save_session_log
from app.harness.scenarios import get_scenario, list_scenarios, load_scenario_file
from app.sim.acoustics import write_trace


logger = logging.getLogger(__name__)

cli = typer.Typer(help="Bladder volume monitor simulator and processing tools.", no_args_is_help=True)
console = Console()


@cli.callback()
def main(log_level: str = typer.Option(settings.log_level, "--log-level", help="Logging level")):
    configure_logging(log_level)


@cli.command()
def sim(
    scenario: Optional[str] = typer.Option(None, "--scenario", help="Shipped or configured scenario name"),
    config: Optional[Path] = typer.Option(None, "--config", exists=True, dir_okay=False, help="Scenario YAML file"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Override the scenario seed"),
    snr_db: Optional[float] = typer.Option(None, "--snr-db", help="Override the noise level (dB)"),
    noiseless: bool = typer.Option(False, "--noiseless", help="Run without noise"),
    out: Optional[Path] = typer.Option(None, "--out", help="Session directory to write"),
    traces_dir: Optional[Path] = typer.Option(None, "--traces-dir", help="Export the first sweep's echo traces"),
):
    """Run a scenario and write its session log."""
    if (scenario is None) == (config is None):
        raise typer.BadParameter("give exactly one of --scenario or --config")
    try:
        chosen = load_scenario_file(config) if config is not None else get_scenario(scenario)
        updates = {}
        if seed is not None:
            updates["seed"] = seed
        if noiseless:
            updates["noise_snr_db"] = None
        elif snr_db is not None:
            updates["noise_snr_db"] = snr_db
        if updates:
            chosen = chosen.with_overrides(**updates)

        sink = None
        if traces_dir is not None:
            traces_dir.mkdir(parents=True, exist_ok=True)

            def export_trace(sample_index, transducer_id, trace):
                if sample_index == 0 and transducer_id <= settings.trace_export_limit:
                    write_trace(trace, traces_dir / f"trace_t{transducer_id}.dat")

            sink = export_trace

        log = run_scenario(chosen, trace_sink=sink)
        target = save_session_log(log, out or Path(settings.session_storage_path) / log.session_id)
    except MonitorError as exc:
        logger.error("%s", exc)
        raise typer.Exit(code=1)

    for record in log.records:
        if record.estimate is not None and record.estimate.volume_ml is not None:
            outcome = f"{record.estimate.volume_ml:.1f} mL ({record.estimate.point_count} echoes)"
        elif record.estimate is not None:
            outcome = f"low echo alert ({record.estimate.point_count} echoes): reposition the transducers"
        else:
            outcome = record.error
        console.print(f"t={record.sample_time_min:6.1f} min  truth {record.truth_ml:7.1f} mL  -> {outcome}")
    console.print(f"session {log.session_id} written to {target}")
    if any(r.error is not None for r in log.records):
        raise typer.Exit(code=1)


@cli.command("replay")
def replay_command(
    session_dir: Path = typer.Option(..., "--in", exists=True, file_okay=False, help="Session directory"),
):
    """Re-run the estimator over a stored session and check it against the log."""
    try:
        results = replay(load_session_log(session_dir))
    except MonitorError as exc:
        logger.error("replay failed: %s", exc)
        raise typer.Exit(code=1)
    console.print(f"{len(results)} sweeps replayed; all match the log")


@cli.command()
def report(
    session_dir: Path = typer.Option(..., "--in", exists=True, file_okay=False, help="Session directory"),
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory for summary.txt and the .dat files"),
):
    """Write the summary table and plot-data files of a stored session."""
    try:
        result = write_report(load_session_log(session_dir), out_dir)
    except MonitorError as exc:
        logger.error("%s", exc)
        raise typer.Exit(code=1)
    console.print(render_summary(result), end="")


@cli.command("list-scenarios")
def list_scenarios_command():
    """List runnable scenarios."""
    for name in list_scenarios():
        console.print(f"{name:20s} {get_scenario(name).description}")


@cli.command("reflector-scan")
def reflector_scan_command(
    snr_db: Optional[float] = typer.Option(None, "--snr-db", help="Noise level (dB); noiseless if omitted"),
    seed: int = typer.Option(settings.default_seed, "--seed", min=0),
):
    """Measure a planar reflector at several distances with 1-8 MHz transducers."""
    table = Table(title="planar reflector scan")
    for column in ("f (MHz)", "true (mm)", "measured (mm)", "error (mm)", "edges"):
        table.add_column(column, justify="right")
    for r in reflector_scan(noise_snr_db=snr_db, seed=seed):
        measured = "-" if r.measured_mm is None else f"{r.measured_mm:.2f}"
        error = "-" if r.error_mm is None else f"{r.error_mm:+.2f}"
        table.add_row(f"{r.resonance_mhz:g}", f"{r.distance_mm:.0f}", measured, error, str(r.edge_count))
    console.print(table)


@cli.command()
def serve(
    host: str = typer.Option(settings.host, "--host"),
    port: int = typer.Option(settings.port, "--port"),
):
    """Start the HTTP processing service."""
    import uvicorn

    uvicorn.run("app.main:app", host=host, port=port, reload=settings.debug)


if __name__ == "__main__":
    cli()
