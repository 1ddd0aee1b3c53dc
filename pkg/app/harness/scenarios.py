"""
Experiment scenarios: the shipped registry and YAML scenario files.

A scenario file is YAML with a mandatory header key::

    format: ubvm-scenario/1
    name: flask-300            # required
    base: flask-250            # optional shipped scenario to start from
    seed: 11
    noise_snr_db: 20           # null for noiseless
    accuracy_bound: 0.1        # relative; omit for none
    medium: {attenuation_coeff: 0.0022, pre_wall_offset: 20}
    pulse: {drive_amplitude: 30}
    phantoms:                  # one per sample time ...
      - {kind: flask, volume_ml: 300}
      - {shape: {kind: sphere, center: [0, 0, 60], radius: 40}}
    sample_times_min: [0, 1]
    profile:                   # ... or a fill profile
      samples: [[0, 20], [240, 400]]

Nested sections (medium, pulse, response, receiver, echo_model, schedule,
estimator, array) are merged key by key into the base scenario.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.config import settings
from app.core.exceptions import ScenarioError
from app.link.sweep import SweepSchedule
from app.processing.estimator import EstimatorConfig
from app.sim.acoustics import EchoModel, PulseSpec, TransducerResponse
from app.sim.afe import ReceiverConfig
from app.sim.phantom import BladderPhantom, MicturitionProfile, TissueMedium, TransducerArray


logger = logging.getLogger(__name__)

FORMAT_TAG = "ubvm-scenario/1"
NESTED_SECTIONS = ("medium", "pulse", "response", "receiver", "echo_model", "schedule", "estimator", "array")


class Scenario(BaseModel):
    """A reproducible experiment: geometry over time plus every chain setting."""
    model_config = ConfigDict(frozen=True)

    name: str
    description: str = ""
    phantoms: Optional[Tuple[BladderPhantom, ...]] = None
    profile: Optional[MicturitionProfile] = None
    sample_times_min: Tuple[float, ...]
    array: TransducerArray = Field(default_factory=TransducerArray.default_grid)
    medium: TissueMedium = Field(default_factory=TissueMedium)
    pulse: PulseSpec = Field(default_factory=PulseSpec)
    response: TransducerResponse = Field(default_factory=TransducerResponse)
    receiver: ReceiverConfig = Field(default_factory=ReceiverConfig)
    echo_model: EchoModel = Field(default_factory=EchoModel)
    schedule: SweepSchedule = Field(default_factory=SweepSchedule)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    noise_snr_db: Optional[float] = None
    seed: Annotated[int, Field(ge=0)] = Field(default_factory=lambda: settings.default_seed)
    session_tag: Annotated[int, Field(ge=0, le=0xFFFF)] = 1
    accuracy_bound: Optional[Annotated[float, Field(gt=0)]] = None

    @model_validator(mode="after")
    def _geometry_source(self) -> "Scenario":
        if (self.phantoms is None) == (self.profile is None):
            raise ValueError("give exactly one of phantoms or profile")
        if not self.sample_times_min:
            raise ValueError("sample_times_min must not be empty")
        times = self.sample_times_min
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")
        if self.phantoms is not None and len(self.phantoms) != len(times):
            raise ValueError(f"{len(self.phantoms)} phantoms for {len(times)} sample times")
        if self.profile is not None and not (self.profile.start <= times[0] and times[-1] <= self.profile.end):
            raise ValueError("sample times fall outside the profile")
        sweep_min = self.schedule.sweep_duration / 60.0
        if any(b - a < sweep_min for a, b in zip(times, times[1:])):
            raise ValueError(f"samples closer than one sweep ({sweep_min:.2f} min)")
        if self.receiver.tick_rate != self.estimator.tick_rate:
            raise ValueError("receiver and estimator tick rates differ")
        return self

    def phantom_for(self, index: int) -> Optional[BladderPhantom]:
        """Phantom of one sample; None when the profile has the bladder empty."""
        if self.phantoms is not None:
            return self.phantoms[index]
        return self.profile.phantom_at(self.sample_times_min[index], self.medium)

    def truth_ml(self, index: int) -> float:
        if self.phantoms is not None:
            return self.phantoms[index].volume_ml()
        return self.profile.volume_at(self.sample_times_min[index])

    def samples(self) -> List[Tuple[float, Optional[BladderPhantom]]]:
        """(sample time in min, phantom) for every sample."""
        return [(t, self.phantom_for(k)) for k, t in enumerate(self.sample_times_min)]

    def with_overrides(self, **updates: Any) -> "Scenario":
        """Validated copy with top-level fields replaced."""
        data = self.model_dump()
        data.update(updates)
        return Scenario.model_validate(data)

    def fingerprint(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:8]


# ---------------------------------------------------------------------------
# Shipped scenarios
# ---------------------------------------------------------------------------

FLASK_DRIVE = 30.0
ABDOMINAL_DRIVE = 60.0
VOLUME_SWEEP_ML = (84.0, 100.0, 200.0, 300.0, 400.0, 500.0, 650.0, 800.0)


def flask_250() -> Scenario:
    medium = TissueMedium.water()
    return Scenario(
        name="flask-250",
        description="250 mL round-bottom flask in a water tank, 20 dB SNR",
        phantoms=(BladderPhantom.anchored(250.0, medium, kind="flask"),),
        sample_times_min=(0.0,),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=FLASK_DRIVE),
        noise_snr_db=20.0,
        accuracy_bound=0.10,
    )


def flask_500() -> Scenario:
    medium = TissueMedium.water()
    return Scenario(
        name="flask-500",
        description="500 mL round-bottom flask in a water tank, 20 dB SNR",
        phantoms=(BladderPhantom.anchored(500.0, medium, kind="flask"),),
        sample_times_min=(0.0,),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=FLASK_DRIVE),
        noise_snr_db=20.0,
        accuracy_bound=0.10,
    )


def flask_pair() -> Scenario:
    medium = TissueMedium.water()
    return Scenario(
        name="flask-pair",
        description="250 mL then 500 mL flask in one session",
        phantoms=tuple(BladderPhantom.anchored(v, medium, kind="flask") for v in (250.0, 500.0)),
        sample_times_min=(0.0, 1.0),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=FLASK_DRIVE),
        noise_snr_db=20.0,
        accuracy_bound=0.10,
    )


def volume_sweep() -> Scenario:
    medium = TissueMedium.abdominal()
    return Scenario(
        name="volume-sweep",
        description="noiseless spheres from 84 to 800 mL",
        phantoms=tuple(BladderPhantom.anchored(v, medium) for v in VOLUME_SWEEP_ML),
        sample_times_min=tuple(float(k) for k in range(len(VOLUME_SWEEP_ML))),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=ABDOMINAL_DRIVE),
        noise_snr_db=None,
        accuracy_bound=0.02,
    )


def micturition_linear() -> Scenario:
    medium = TissueMedium.abdominal()
    return Scenario(
        name="micturition-linear",
        description="linear fill from a 20 mL residual to 400 mL over 240 min, sampled every 30 min",
        profile=MicturitionProfile.linear_fill(20.0, 400.0, 240.0),
        sample_times_min=tuple(float(t) for t in range(0, 241, 30)),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=FLASK_DRIVE),
        noise_snr_db=20.0,
    )


def micturition_cycle() -> Scenario:
    medium = TissueMedium.abdominal()
    return Scenario(
        name="micturition-cycle",
        description="fill from 20 mL to 400 mL over 240 min, then a 2 min void back to a 20 mL residual",
        profile=MicturitionProfile.linear_fill(20.0, 400.0, 240.0, void_residual_ml=20.0, void_duration_min=2.0),
        sample_times_min=tuple(float(t) for t in range(0, 241, 30)) + (242.0,),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=FLASK_DRIVE),
        noise_snr_db=20.0,
    )


def low_echo() -> Scenario:
    # First sample: element 2 misses (6 echoes). Second: only 1 and 4 hit (4 echoes).
    medium = TissueMedium.abdominal()
    return Scenario(
        name="low-echo",
        description="off-center bladders that some beams miss",
        phantoms=(
            BladderPhantom.sphere((-18.0, -18.0, 50.0), 35.0),
            BladderPhantom.sphere((-30.0, 0.0, 40.0), 25.0),
        ),
        sample_times_min=(0.0, 1.0),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=ABDOMINAL_DRIVE),
        noise_snr_db=None,
    )


def ellipsoid_mild() -> Scenario:
    medium = TissueMedium.abdominal()
    semi_axes = (49.5, 38.05, 38.05)
    return Scenario(
        name="ellipsoid-mild",
        description="300 mL ellipsoid with axis ratio 1.3; sphere-model error only",
        phantoms=(BladderPhantom.ellipsoid((0.0, 0.0, medium.pre_wall_offset + semi_axes[2]), semi_axes),),
        sample_times_min=(0.0,),
        medium=medium,
        pulse=PulseSpec(drive_amplitude=ABDOMINAL_DRIVE),
        noise_snr_db=None,
    )


SCENARIOS: Dict[str, Callable[[], Scenario]] = {
    "flask-250": flask_250,
    "flask-500": flask_500,
    "flask-pair": flask_pair,
    "volume-sweep": volume_sweep,
    "micturition-linear": micturition_linear,
    "micturition-cycle": micturition_cycle,
    "low-echo": low_echo,
    "ellipsoid-mild": ellipsoid_mild,
}


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def _expand_phantom(entry: Dict[str, Any], medium: TissueMedium) -> Dict[str, Any]:
    if "volume_ml" in entry:
        lateral = tuple(entry.get("lateral", (0.0, 0.0)))
        phantom = BladderPhantom.anchored(entry["volume_ml"], medium, entry.get("kind", "sphere"), lateral)
        return phantom.model_dump()
    return entry


def scenario_from_dict(doc: Dict[str, Any]) -> Scenario:
    """
    Build a scenario from a parsed scenario document.

    Raises:
        ScenarioError: Wrong format tag, unknown base or invalid fields
    """
    if doc.get("format") != FORMAT_TAG:
        raise ScenarioError(f"expected 'format: {FORMAT_TAG}', got {doc.get('format')!r}")
    doc = {k: v for k, v in doc.items() if k != "format"}

    base_name = doc.pop("base", None)
    data: Dict[str, Any] = get_scenario(base_name).model_dump() if base_name else {}
    for key, value in doc.items():
        if key in NESTED_SECTIONS and isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    if doc.get("phantoms") is not None:
        data["profile"] = None
    elif doc.get("profile") is not None:
        data["phantoms"] = None

    try:
        medium = TissueMedium.model_validate(data.get("medium", {}))
        if data.get("phantoms") is not None:
            data["phantoms"] = [_expand_phantom(p, medium) for p in data["phantoms"]]
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(f"invalid scenario {data.get('name')!r}: {exc}") from exc


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    """Read a YAML scenario file."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario file must hold a mapping")
    return scenario_from_dict(doc)


def dump_scenario(scenario: Scenario) -> str:
    """Full scenario as a YAML scenario document."""
    doc = {"format": FORMAT_TAG, **scenario.model_dump(mode="json")}
    return yaml.safe_dump(doc, sort_keys=False)


def _file_scenarios() -> Dict[str, Path]:
    if not settings.scenario_dir:
        return {}
    found: Dict[str, Path] = {}
    for path in sorted(Path(settings.scenario_dir).glob("*.y*ml")):
        try:
            found[load_scenario_file(path).name] = path
        except ScenarioError as exc:
            logger.warning("skipping %s: %s", path, exc)
    return found


def list_scenarios() -> List[str]:
    """Names of shipped scenarios followed by those found in ``settings.scenario_dir``."""
    names = list(SCENARIOS)
    names.extend(n for n in _file_scenarios() if n not in SCENARIOS)
    return names


def get_scenario(name: str) -> Scenario:
    """
    Look up a scenario by name.

    Raises:
        ScenarioError: Unknown name
    """
    if name in SCENARIOS:
        return SCENARIOS[name]()
    path = _file_scenarios().get(name)
    if path is None:
        raise ScenarioError(f"unknown scenario {name!r}; known: {', '.join(list_scenarios())}")
    return load_scenario_file(path)
