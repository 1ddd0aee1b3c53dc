"""
Session reports: estimate vs truth vs the clinical 0.52 formula.

Files written by :func:`write_report`:

- ``summary.txt``: rendered table plus aggregate errors
- ``volumes.dat``: ``time_min truth_ml estimate_ml relative_error clinical_ml``
- ``estimates.dat``: ``time_s volume_ml point_count quality residual_mm``

Each starts with a versioned ``#`` header line; missing values are ``nan``.
"""

import io
import logging
from pathlib import Path
from typing import List, Optional, TextIO, Union

from pydantic import BaseModel, ConfigDict
from rich.console import Console
from rich.table import Table

from app.harness.runner import SessionLog
from app.processing.estimator import clinical_ellipsoid_volume


logger = logging.getLogger(__name__)

VOLUMES_HEADER = "# ubvm-volumes/1 time_min truth_ml estimate_ml relative_error clinical_ml"
ESTIMATES_HEADER = "# ubvm-estimates/1 time_s volume_ml point_count quality residual_mm"


class ReportRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    time_min: float
    truth_ml: float
    estimate_ml: Optional[float] = None
    relative_error: Optional[float] = None
    clinical_ml: Optional[float] = None
    status: str


class SessionReport(BaseModel):
    """Per-sample rows and aggregate errors of one session."""
    model_config = ConfigDict(frozen=True)

    session_id: str
    scenario: str
    rows: List[ReportRow]
    max_error: Optional[float] = None
    mean_error: Optional[float] = None
    accuracy_bound: Optional[float] = None

    @property
    def within_bound(self) -> Optional[bool]:
        if self.accuracy_bound is None or self.max_error is None:
            return None
        return self.max_error < self.accuracy_bound


def relative_error(estimate: float, truth: float) -> float:
    return abs(estimate - truth) / truth


def build_report(log: SessionLog) -> SessionReport:
    """Tabulate a session log."""
    rows = []
    for record in log.records:
        estimate = record.estimate.volume_ml if record.estimate is not None else None
        diameters = record.diameters_cm
        clinical = clinical_ellipsoid_volume(*diameters) if min(diameters) > 0 else None
        if record.error is not None:
            status = record.error.split(":", 1)[0]
        else:
            status = record.estimate.quality.value
        rows.append(ReportRow(
            index=record.index,
            time_min=record.sample_time_min,
            truth_ml=record.truth_ml,
            estimate_ml=estimate,
            relative_error=relative_error(estimate, record.truth_ml) if estimate is not None else None,
            clinical_ml=clinical,
            status=status,
        ))
    errors = [r.relative_error for r in rows if r.relative_error is not None]
    return SessionReport(
        session_id=log.session_id,
        scenario=log.scenario.name,
        rows=rows,
        max_error=max(errors) if errors else None,
        mean_error=sum(errors) / len(errors) if errors else None,
        accuracy_bound=log.scenario.accuracy_bound,
    )


def _num(value: Optional[float], fmt: str) -> str:
    return "nan" if value is None else format(value, fmt)


def render_summary(report: SessionReport) -> str:
    """Plain-text summary table."""
    table = Table(title=f"{report.scenario} ({report.session_id})")
    for column in ("#", "t (min)", "truth (mL)", "estimate (mL)", "error (%)", "clinical (mL)", "status"):
        table.add_column(column, justify="left" if column == "status" else "right")
    for row in report.rows:
        table.add_row(
            str(row.index),
            f"{row.time_min:.1f}",
            f"{row.truth_ml:.1f}",
            _num(row.estimate_ml, ".1f"),
            _num(None if row.relative_error is None else 100 * row.relative_error, ".2f"),
            _num(row.clinical_ml, ".1f"),
            row.status,
        )

    buf = io.StringIO()
    console = Console(file=buf, width=100, color_system=None, force_terminal=False)
    console.print(table)
    console.print(f"max error: {_num(None if report.max_error is None else 100 * report.max_error, '.2f')} %")
    console.print(f"mean error: {_num(None if report.mean_error is None else 100 * report.mean_error, '.2f')} %")
    if report.within_bound is not None:
        verdict = "within" if report.within_bound else "OUTSIDE"
        console.print(f"{verdict} the {100 * report.accuracy_bound:.0f} % bound")
    return buf.getvalue()


def write_volumes(report: SessionReport, stream: TextIO) -> None:
    stream.write(VOLUMES_HEADER + "\n")
    for row in report.rows:
        stream.write(
            f"{row.time_min:.3f} {row.truth_ml:.3f} {_num(row.estimate_ml, '.1f')} "
            f"{_num(row.relative_error, '.6f')} {_num(row.clinical_ml, '.3f')}\n"
        )


def write_estimates(log: SessionLog, stream: TextIO) -> None:
    """Line-delimited estimate records, one per sweep that produced an estimate."""
    stream.write(ESTIMATES_HEADER + "\n")
    for record in log.records:
        est = record.estimate
        if est is None:
            continue
        stream.write(
            f"{record.time_s:.3f} {_num(est.volume_ml, '.1f')} {est.point_count} "
            f"{est.quality.value} {_num(est.rms_residual_mm, '.6f')}\n"
        )


def write_report(log: SessionLog, out_dir: Union[str, Path]) -> SessionReport:
    """Build the report and write the summary and plot-data files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = build_report(log)
    (out_dir / "summary.txt").write_text(render_summary(report), encoding="utf-8")
    with open(out_dir / "volumes.dat", "w", encoding="utf-8") as f:
        write_volumes(report, f)
    with open(out_dir / "estimates.dat", "w", encoding="utf-8") as f:
        write_estimates(log, f)
    logger.info("report for %s written to %s", log.session_id, out_dir)
    return report
