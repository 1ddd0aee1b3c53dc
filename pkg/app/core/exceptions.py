"""
Error hierarchy shared by the simulator, link layer, estimator and harness.
"""

from typing import List, Sequence


class MonitorError(Exception):
    """Base class for all bladder-monitor errors."""


class ParameterError(MonitorError, ValueError):
    """A numeric parameter is outside its valid domain."""


class ProfileRangeError(ParameterError):
    """A fill profile was queried outside its sampled time range."""


class CaptureOverflowError(MonitorError):
    """
    More comparator edges arrived than the capture buffer holds.

    The ticks that did fit in the buffer are kept on the exception so the
    firmware path can forward them with the overflow flag set.
    """

    def __init__(self, captured: Sequence[int], total_edges: int, capture_depth: int):
        self.captured: List[int] = list(captured)
        self.total_edges = total_edges
        self.capture_depth = capture_depth
        super().__init__(
            f"{total_edges} edges exceed capture depth {capture_depth}"
        )


class LinkError(MonitorError):
    """Base class for wire-protocol errors."""


class FramingError(LinkError):
    """A frame or stream has the wrong length or header."""


class ProtocolError(LinkError):
    """A frame is well-sized but carries invalid field values."""


class EstimationError(MonitorError):
    """Base class for volume-estimation failures."""


class InsufficientPointsError(EstimationError):
    """Too few wall points to define a sphere."""


class DegenerateGeometryError(EstimationError):
    """Wall points are (nearly) coplanar; the sphere is not determined."""


class ConvergenceError(EstimationError):
    """Quasi-Newton refinement did not converge."""


class IntegrityError(MonitorError):
    """Replayed estimates differ from the ones stored in a session log."""


class ScenarioError(MonitorError):
    """Unknown scenario, unreadable config file or missing session."""
