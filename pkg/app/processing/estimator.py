"""
Sweep processing: mask, cluster, gate, average, convert, fit.

The steps follow the device's processing order:

1. frames flagged with a capture overflow are masked out,
2. each transducer's edges are grouped into echo bursts (anterior, posterior),
3. fewer than four echoes is an error, four raises the low-echo alert,
4. burst ticks are averaged and turned into depths at 1480 m/s,
5. the wall points are fitted with a sphere whose volume is reported.
"""

import logging
from enum import Enum
from typing import Annotated, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import InsufficientPointsError, ParameterError
from app.link.sweep import SweepBuffer
from app.processing.sphere_fit import MIN_POINTS, SphereFit, WallPoint, fit_sphere, sphere_volume
from app.sim.afe import EdgeTimestamps
from app.sim.phantom import TransducerArray


logger = logging.getLogger(__name__)

PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]
CLINICAL_COEFFICIENT = 0.52


class Wall(str, Enum):
    ANTERIOR = "anterior"
    POSTERIOR = "posterior"


class Quality(str, Enum):
    OK = "ok"
    LOW_ECHO_ALERT = "low_echo_alert"


class EstimatorConfig(BaseModel):
    """Processing knobs."""
    model_config = ConfigDict(frozen=True)

    tick_rate: PositiveFloat = 64.0  # MHz
    speed_of_sound: PositiveFloat = 1480.0  # m/s
    gap_threshold_us: PositiveFloat = 5.0
    onset_correction_us: Annotated[float, Field(ge=0, allow_inf_nan=False)] = 1.25
    min_echoes: Annotated[int, Field(ge=MIN_POINTS)] = 5
    max_iterations: Annotated[int, Field(ge=1)] = 200
    gradient_tolerance: PositiveFloat = 1e-10
    condition_bound: PositiveFloat = 1e8


class EchoCluster(BaseModel):
    """Edges of one echo burst from one transducer."""
    model_config = ConfigDict(frozen=True)

    transducer_id: Annotated[int, Field(ge=1, le=4)]
    wall: Wall
    member_ticks: Tuple[int, ...]
    mean_tick: float
    tick_rate: PositiveFloat = 64.0

    @model_validator(mode="after")
    def _mean_within_members(self) -> "EchoCluster":
        if not self.member_ticks:
            raise ValueError("cluster needs at least one tick")
        if not min(self.member_ticks) <= self.mean_tick <= max(self.member_ticks):
            raise ValueError("mean_tick outside member range")
        return self


class VolumeEstimate(BaseModel):
    """Outcome of one sweep."""
    model_config = ConfigDict(frozen=True)

    volume_ml: Optional[float] = None
    point_count: Annotated[int, Field(ge=0)]
    quality: Quality
    rms_residual_mm: Optional[float] = None
    fit: Optional[SphereFit] = None

    @model_validator(mode="after")
    def _volume_when_ok(self) -> "VolumeEstimate":
        if self.quality == Quality.OK and not (self.volume_ml is not None and self.volume_ml > 0):
            raise ValueError("an ok estimate needs a positive volume")
        return self


def cluster_bursts(
    ticks: EdgeTimestamps, gap_threshold_us: float = 5.0, transducer_id: int = 1
) -> List[EchoCluster]:
    """
    Group one transducer's sorted edge ticks into echo bursts.

    Consecutive edges closer than ``gap_threshold_us`` share a burst. The
    first burst is the anterior wall, the second the posterior wall; later
    bursts are discarded with a warning.
    """
    edges = ticks.rising_edges
    if not edges:
        return []
    gap = gap_threshold_us * ticks.tick_rate
    groups: List[List[int]] = [[edges[0]]]
    for prev, tick in zip(edges, edges[1:]):
        if tick - prev < gap:
            groups[-1].append(tick)
        else:
            groups.append([tick])

    if len(groups) > 2:
        logger.warning(
            "transducer %d: discarded %d extra echo bursts", transducer_id, len(groups) - 2
        )
    return [
        EchoCluster(
            transducer_id=transducer_id,
            wall=wall,
            member_ticks=tuple(group),
            mean_tick=float(np.mean(group)),
            tick_rate=ticks.tick_rate,
        )
        for wall, group in zip((Wall.ANTERIOR, Wall.POSTERIOR), groups)
    ]


def gate_echo_count(clusters: Iterable[EchoCluster], min_echoes: int = 5) -> Quality:
    """Low-echo alert when fewer than ``min_echoes`` echoes were received."""
    return Quality.OK if len(list(clusters)) >= min_echoes else Quality.LOW_ECHO_ALERT


def tick_to_depth(mean_tick: float, tick_rate: float, c: float = 1480.0) -> float:
    """One-way depth (mm) of an echo received ``mean_tick`` ticks after firing."""
    if tick_rate <= 0:
        raise ParameterError(f"tick_rate must be positive, got {tick_rate}")
    return c * (mean_tick / tick_rate) / 2000.0


def build_points(
    clusters: Iterable[EchoCluster], array: TransducerArray, cfg: EstimatorConfig = EstimatorConfig()
) -> List[WallPoint]:
    """
    Place each cluster on its element's beam.

    The averaged tick is shifted back by ``cfg.onset_correction_us`` before
    conversion to depth. Clusters that land at or before the element are
    dropped.
    """
    points: List[WallPoint] = []
    for cluster in clusters:
        corrected = cluster.mean_tick - cfg.onset_correction_us * cluster.tick_rate
        depth = tick_to_depth(corrected, cluster.tick_rate, cfg.speed_of_sound)
        if depth <= 0:
            logger.warning(
                "transducer %d: %s echo at non-positive depth dropped",
                cluster.transducer_id, cluster.wall.value,
            )
            continue
        element = array.element(cluster.transducer_id)
        x, y, z = array.world_position(element.id) + depth * np.asarray(element.beam_direction)
        points.append(WallPoint(x=float(x), y=float(y), z=float(z)))
    return points


def clinical_ellipsoid_volume(length_cm: float, width_cm: float, height_cm: float) -> float:
    """Clinical bladder volume 0.52 * L * W * H (mL) from three diameters in cm."""
    if min(length_cm, width_cm, height_cm) <= 0:
        raise ParameterError("all diameters must be positive")
    return CLINICAL_COEFFICIENT * length_cm * width_cm * height_cm


def sweep_clusters(sweep: SweepBuffer, cfg: EstimatorConfig = EstimatorConfig()) -> List[EchoCluster]:
    """Mask overflowed frames and cluster every transducer's edges."""
    masked = [f for f in sweep.frames if not f.overflow]
    dropped = len(sweep.frames) - len(masked)
    if dropped:
        logger.warning("masked %d overflow-flagged frames", dropped)

    clusters: List[EchoCluster] = []
    grouped = SweepBuffer(masked).by_transducer()
    for transducer_id in sorted(grouped):
        ticks = sorted({f.timestamp_ticks for f in grouped[transducer_id]})
        edges = EdgeTimestamps(rising_edges=tuple(ticks), tick_rate=cfg.tick_rate)
        clusters.extend(cluster_bursts(edges, cfg.gap_threshold_us, transducer_id))
    return clusters


def process_sweep(
    sweep: SweepBuffer, array: TransducerArray, cfg: EstimatorConfig = EstimatorConfig()
) -> VolumeEstimate:
    """
    Estimate the bladder volume from one completed sweep.

    Returns:
        VolumeEstimate; a low-echo sweep comes back flagged with no volume

    Raises:
        InsufficientPointsError: Fewer than four usable echoes
        DegenerateGeometryError: Wall points do not determine a sphere
        ConvergenceError: The fit did not converge
    """
    clusters = sweep_clusters(sweep, cfg)
    if len(clusters) < MIN_POINTS:
        raise InsufficientPointsError(
            f"{len(clusters)} echoes received; at least {MIN_POINTS} are needed"
        )
    if gate_echo_count(clusters, cfg.min_echoes) == Quality.LOW_ECHO_ALERT:
        logger.warning(
            "only %d echoes received (need %d): reposition the transducers",
            len(clusters), cfg.min_echoes,
        )
        return VolumeEstimate(point_count=len(clusters), quality=Quality.LOW_ECHO_ALERT)

    points = build_points(clusters, array, cfg)
    fit = fit_sphere(points, cfg.max_iterations, cfg.gradient_tolerance, cfg.condition_bound)
    return VolumeEstimate(
        volume_ml=round(sphere_volume(fit), 1),
        point_count=len(points),
        quality=Quality.OK,
        rms_residual_mm=fit.rms_residual,
        fit=fit,
    )
