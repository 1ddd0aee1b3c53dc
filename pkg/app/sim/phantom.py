"""
Bladder geometries, the tissue medium, the transducer patch and fill profiles.

Coordinates are in mm. The patch lies in the plane ``z = origin.z`` and the
default beams fire along ``+z`` into the body, so a wall depth is the ray
parameter measured from the element along its beam.
"""

import logging
import math
from typing import Annotated, Dict, Literal, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.exceptions import ParameterError, ProfileRangeError


logger = logging.getLogger(__name__)

FiniteFloat = Annotated[float, Field(allow_inf_nan=False)]
PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]
Vec3 = Tuple[FiniteFloat, FiniteFloat, FiniteFloat]

MM3_PER_ML = 1000.0
ELEMENT_IDS = (1, 2, 3, 4)


def sphere_radius_for_volume(volume_ml: float) -> float:
    """Radius (mm) of the sphere holding ``volume_ml``."""
    if not volume_ml > 0 or not math.isfinite(volume_ml):
        raise ParameterError(f"volume must be positive, got {volume_ml}")
    return (3.0 * volume_ml * MM3_PER_ML / (4.0 * math.pi)) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------

class SphereShape(BaseModel):
    """Sphere of given center and radius."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["sphere"] = "sphere"
    center: Vec3
    radius: PositiveFloat


class EllipsoidShape(BaseModel):
    """Axis-aligned ellipsoid; semi-axes (a, b, c) lie along (x, y, z)."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["ellipsoid"] = "ellipsoid"
    center: Vec3
    semi_axes: Tuple[PositiveFloat, PositiveFloat, PositiveFloat]


class FlaskShape(BaseModel):
    """
    Round-bottom flask: a spherical body plus a cylindrical neck.

    The neck points along ``+z``, away from the patch, and starts at the
    rim where its wall meets the sphere.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["flask"] = "flask"
    center: Vec3
    radius: PositiveFloat
    neck_radius: PositiveFloat = 10.0
    neck_length: PositiveFloat = 30.0

    @model_validator(mode="after")
    def _neck_fits_body(self) -> "FlaskShape":
        if self.neck_radius >= self.radius:
            raise ValueError("neck_radius must be smaller than the body radius")
        return self

    @property
    def neck_base(self) -> np.ndarray:
        rim = math.sqrt(self.radius ** 2 - self.neck_radius ** 2)
        return np.asarray(self.center) + np.array([0.0, 0.0, rim])


Shape = Annotated[Union[SphereShape, EllipsoidShape, FlaskShape], Field(discriminator="kind")]


class BladderPhantom(BaseModel):
    """Parametric bladder geometry with an analytic ground-truth volume."""
    model_config = ConfigDict(frozen=True)

    shape: Shape

    @classmethod
    def sphere(cls, center: Tuple[float, float, float], radius: float) -> "BladderPhantom":
        return cls(shape=SphereShape(center=center, radius=radius))

    @classmethod
    def ellipsoid(
        cls, center: Tuple[float, float, float], semi_axes: Tuple[float, float, float]
    ) -> "BladderPhantom":
        return cls(shape=EllipsoidShape(center=center, semi_axes=semi_axes))

    @classmethod
    def sphere_from_volume(
        cls, volume_ml: float, center: Tuple[float, float, float] = (0.0, 0.0, 60.0)
    ) -> "BladderPhantom":
        """Sphere phantom holding ``volume_ml``."""
        return cls.sphere(center, sphere_radius_for_volume(volume_ml))

    @classmethod
    def flask_from_volume(
        cls,
        total_ml: float,
        center: Tuple[float, float, float] = (0.0, 0.0, 60.0),
        neck_radius: float = 10.0,
        neck_length: float = 30.0,
    ) -> "BladderPhantom":
        """
        Flask whose body + neck volume equals the nominal ``total_ml``.

        Args:
            total_ml: Nominal flask volume (e.g. 250 for a 250 mL flask)
            center: Center of the spherical body
            neck_radius: Neck radius in mm
            neck_length: Neck length in mm

        Returns:
            Flask phantom
        """
        neck_ml = math.pi * neck_radius ** 2 * neck_length / MM3_PER_ML
        radius = sphere_radius_for_volume(total_ml - neck_ml)
        return cls(shape=FlaskShape(
            center=center, radius=radius, neck_radius=neck_radius, neck_length=neck_length
        ))

    @classmethod
    def anchored(
        cls,
        volume_ml: float,
        medium: "TissueMedium",
        kind: Literal["sphere", "flask"] = "sphere",
        lateral: Tuple[float, float] = (0.0, 0.0),
    ) -> "BladderPhantom":
        """Sphere or flask with its anterior pole at the medium's pre-wall offset."""
        if kind == "flask":
            draft = cls.flask_from_volume(volume_ml)
        else:
            draft = cls.sphere_from_volume(volume_ml)
        radius = draft.shape.radius
        center = (lateral[0], lateral[1], medium.pre_wall_offset + radius)
        return draft.model_copy(update={"shape": draft.shape.model_copy(update={"center": center})})

    def volume_ml(self) -> float:
        return phantom_volume(self)

    def translated(self, offset: Tuple[float, float, float]) -> "BladderPhantom":
        center = tuple(float(c + o) for c, o in zip(self.shape.center, offset))
        return self.model_copy(update={"shape": self.shape.model_copy(update={"center": center})})

    def bounding_diameters_cm(self) -> Tuple[float, float, float]:
        """
        Caliper diameters (L, W, H) in cm as an imaging exam would measure them.

        For a flask only the insonified body counts.
        """
        shape = self.shape
        if isinstance(shape, EllipsoidShape):
            a, b, c = shape.semi_axes
            return (0.2 * a, 0.2 * b, 0.2 * c)
        d = 0.2 * shape.radius
        return (d, d, d)


# ---------------------------------------------------------------------------
# Medium, patch and profile
# ---------------------------------------------------------------------------

class TissueMedium(BaseModel):
    """Propagation medium between the patch and the bladder."""
    model_config = ConfigDict(frozen=True)

    speed_of_sound: PositiveFloat = 1480.0  # m/s
    attenuation_coeff: Annotated[float, Field(ge=0, allow_inf_nan=False)] = 0.3  # dB/cm/MHz
    pre_wall_offset: Annotated[float, Field(ge=0, allow_inf_nan=False)] = 15.0  # mm

    @classmethod
    def water(cls) -> "TissueMedium":
        """Deionized water tank used for the flask experiments."""
        return cls(attenuation_coeff=0.0022, pre_wall_offset=20.0)

    @classmethod
    def abdominal(cls) -> "TissueMedium":
        """Effective attenuation of a path that is mostly urine."""
        return cls(attenuation_coeff=0.1, pre_wall_offset=15.0)


class TransducerElement(BaseModel):
    """One element of the patch: id, position on the patch plane, beam direction."""
    model_config = ConfigDict(frozen=True)

    id: Annotated[int, Field(ge=1, le=4)]
    position: Tuple[FiniteFloat, FiniteFloat]
    beam_direction: Vec3 = (0.0, 0.0, 1.0)

    @field_validator("beam_direction")
    @classmethod
    def _unit(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        norm = math.sqrt(sum(c * c for c in v))
        if norm == 0:
            raise ValueError("beam_direction must be non-zero")
        return tuple(c / norm for c in v)


class TransducerArray(BaseModel):
    """
    The four-element patch.

    Element positions are relative to ``origin``, the patch center in world
    coordinates; they must lie inside ``patch_extent``.
    """
    model_config = ConfigDict(frozen=True)

    elements: Tuple[TransducerElement, ...]
    patch_extent: Tuple[PositiveFloat, PositiveFloat] = (30.0, 30.0)
    origin: Vec3 = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _four_distinct_elements(self) -> "TransducerArray":
        ids = sorted(e.id for e in self.elements)
        if tuple(ids) != ELEMENT_IDS:
            raise ValueError(f"array needs exactly elements 1..4, got ids {ids}")
        half_w, half_h = self.patch_extent[0] / 2, self.patch_extent[1] / 2
        for e in self.elements:
            if abs(e.position[0]) > half_w or abs(e.position[1]) > half_h:
                raise ValueError(f"element {e.id} lies outside the patch")
        return self

    @classmethod
    def default_grid(cls, pitch: float = 15.0, extent: float = 30.0) -> "TransducerArray":
        """
        2 x 2 grid centered on the patch with normal beams.

        Ids run around the ring. A silent element 1 or 4 removes the 4 -> 1
        rollover, so consecutive sweeps merge until it answers again.
        """
        h = pitch / 2
        positions = {1: (-h, h), 2: (h, h), 3: (h, -h), 4: (-h, -h)}
        return cls(
            elements=tuple(TransducerElement(id=i, position=p) for i, p in positions.items()),
            patch_extent=(extent, extent),
        )

    def element(self, element_id: int) -> TransducerElement:
        for e in self.elements:
            if e.id == element_id:
                return e
        raise KeyError(element_id)

    def world_position(self, element_id: int) -> np.ndarray:
        e = self.element(element_id)
        return np.asarray(self.origin) + np.array([e.position[0], e.position[1], 0.0])

    def translated(self, offset: Tuple[float, float, float]) -> "TransducerArray":
        origin = tuple(float(c + o) for c, o in zip(self.origin, offset))
        return self.model_copy(update={"origin": origin})


class MicturitionProfile(BaseModel):
    """Bladder volume over time, interpolated piecewise-linearly."""
    model_config = ConfigDict(frozen=True)

    samples: Tuple[Tuple[FiniteFloat, FiniteFloat], ...]  # (time min, volume mL)

    @field_validator("samples")
    @classmethod
    def _ordered(cls, v):
        if len(v) < 2:
            raise ValueError("profile needs at least two samples")
        times = [t for t, _ in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")
        if any(vol < 0 for _, vol in v):
            raise ValueError("volumes must be non-negative")
        return v

    @classmethod
    def linear_fill(
        cls,
        start_ml: float,
        end_ml: float,
        duration_min: float,
        void_residual_ml: Optional[float] = None,
        void_duration_min: float = 1.0,
    ) -> "MicturitionProfile":
        """
        Fill linearly from ``start_ml`` to ``end_ml``, optionally followed by a void.

        With ``void_residual_ml`` set, the bladder empties to that post-void
        residual over ``void_duration_min`` right after the fill ends.
        """
        profile = cls(samples=((0.0, start_ml), (duration_min, end_ml)))
        if void_residual_ml is None:
            return profile
        return profile.with_void(duration_min, void_residual_ml, void_duration_min)

    def with_void(self, t_min: float, residual_ml: float, duration_min: float = 1.0) -> "MicturitionProfile":
        """
        Copy of the profile that voids at ``t_min`` down to ``residual_ml``.

        The volume holds its last sampled value until ``t_min`` and drops
        linearly to the residual over ``duration_min``.

        Raises:
            ParameterError: Void starts inside the sampled range, lasts no time,
                or leaves more than the bladder held
        """
        if t_min < self.end:
            raise ParameterError(f"void at t={t_min} min starts before the profile ends at {self.end} min")
        if not duration_min > 0:
            raise ParameterError(f"void duration must be positive, got {duration_min}")
        held = self.samples[-1][1]
        if not 0 <= residual_ml <= held:
            raise ParameterError(f"post-void residual {residual_ml} mL outside [0, {held}] mL")
        samples = list(self.samples)
        if t_min > self.end:
            samples.append((t_min, held))
        samples.append((t_min + duration_min, residual_ml))
        return MicturitionProfile(samples=tuple(samples))
    @property
    def start(self) -> float:
        return self.samples[0][0]

    @property
    def end(self) -> float:
        return self.samples[-1][0]

    def volume_at(self, t: float) -> float:
        return profile_volume_at(self, t)

    def phantom_at(self, t: float, medium: TissueMedium) -> Optional[BladderPhantom]:
        """Sphere phantom holding the volume at ``t``, anchored below the patch; None when empty."""
        volume = self.volume_at(t)
        if volume == 0.0:
            return None
        return BladderPhantom.anchored(volume, medium)


class WallDepths(NamedTuple):
    """Anterior and posterior wall depth (mm) along one beam."""
    anterior: float
    posterior: float


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _sphere_interval(o: np.ndarray, d: np.ndarray, center, radius: float) -> Optional[Tuple[float, float]]:
    m = o - np.asarray(center)
    b = float(d @ m)
    c = float(m @ m) - radius * radius
    disc = b * b - c
    if disc <= 0:
        return None
    s = math.sqrt(disc)
    return (-b - s, -b + s)


def _ellipsoid_interval(o: np.ndarray, d: np.ndarray, shape: EllipsoidShape) -> Optional[Tuple[float, float]]:
    axes = np.asarray(shape.semi_axes)
    os_ = (o - np.asarray(shape.center)) / axes
    ds = d / axes
    a = float(ds @ ds)
    b = float(ds @ os_)
    c = float(os_ @ os_) - 1.0
    disc = b * b - a * c
    if disc <= 0:
        return None
    s = math.sqrt(disc)
    return ((-b - s) / a, (-b + s) / a)


def _neck_interval(o: np.ndarray, d: np.ndarray, shape: FlaskShape) -> Optional[Tuple[float, float]]:
    axis = np.array([0.0, 0.0, 1.0])
    m = o - shape.neck_base
    z0, zs = float(m @ axis), float(d @ axis)
    mp, dp = m - z0 * axis, d - zs * axis
    a = float(dp @ dp)
    b = float(dp @ mp)
    c = float(mp @ mp) - shape.neck_radius ** 2

    if a < 1e-15:
        if c >= 0:
            return None
        lo, hi = -math.inf, math.inf
    else:
        disc = b * b - a * c
        if disc <= 0:
            return None
        s = math.sqrt(disc)
        lo, hi = (-b - s) / a, (-b + s) / a

    if abs(zs) < 1e-15:
        if not 0.0 <= z0 <= shape.neck_length:
            return None
    else:
        ta, tb = sorted(((0.0 - z0) / zs, (shape.neck_length - z0) / zs))
        lo, hi = max(lo, ta), min(hi, tb)
    return (lo, hi) if hi > lo else None


def _ray_interval(o: np.ndarray, d: np.ndarray, phantom: BladderPhantom) -> Optional[Tuple[float, float]]:
    shape = phantom.shape
    if isinstance(shape, SphereShape):
        return _sphere_interval(o, d, shape.center, shape.radius)
    if isinstance(shape, EllipsoidShape):
        return _ellipsoid_interval(o, d, shape)

    hits = [
        iv for iv in (_sphere_interval(o, d, shape.center, shape.radius), _neck_interval(o, d, shape))
        if iv is not None
    ]
    if not hits:
        return None
    return (min(iv[0] for iv in hits), max(iv[1] for iv in hits))


def wall_intersections(
    array: TransducerArray, phantom: BladderPhantom, medium: TissueMedium
) -> Dict[int, Optional[WallDepths]]:
    """
    Anterior/posterior wall depths seen by each element's beam.

    A beam that crosses the surface fewer than twice in front of the element
    (no hit, a tangent, or an element inside the phantom) is a miss (``None``).

    Args:
        array: Transducer patch
        phantom: Bladder geometry
        medium: Medium; walls shallower than its pre-wall layer are reported

    Returns:
        Mapping element id -> WallDepths or None
    """
    result: Dict[int, Optional[WallDepths]] = {}
    for element in array.elements:
        o = array.world_position(element.id)
        d = np.asarray(element.beam_direction)
        interval = _ray_interval(o, d, phantom)
        if interval is None or interval[0] <= 0:
            result[element.id] = None
            continue
        depths = WallDepths(anterior=interval[0], posterior=interval[1])
        if depths.anterior < medium.pre_wall_offset:
            logger.warning(
                "element %d: anterior wall at %.1f mm lies inside the %.1f mm pre-wall layer",
                element.id, depths.anterior, medium.pre_wall_offset,
            )
        result[element.id] = depths
    return result


def phantom_volume(phantom: BladderPhantom) -> float:
    """Analytic phantom volume in mL; a flask counts body plus neck."""
    shape = phantom.shape
    if isinstance(shape, SphereShape):
        mm3 = 4.0 / 3.0 * math.pi * shape.radius ** 3
    elif isinstance(shape, EllipsoidShape):
        a, b, c = shape.semi_axes
        mm3 = 4.0 / 3.0 * math.pi * a * b * c
    else:
        mm3 = 4.0 / 3.0 * math.pi * shape.radius ** 3 + math.pi * shape.neck_radius ** 2 * shape.neck_length
    return mm3 / MM3_PER_ML


def profile_volume_at(profile: MicturitionProfile, t: float) -> float:
    """
    Volume (mL) at time ``t`` (min).

    Raises:
        ProfileRangeError: If ``t`` lies outside the sampled range
    """
    if not profile.start <= t <= profile.end:
        raise ProfileRangeError(
            f"t={t} min outside profile range [{profile.start}, {profile.end}]"
        )
    times = [s[0] for s in profile.samples]
    volumes = [s[1] for s in profile.samples]
    return float(np.interp(t, times, volumes))
