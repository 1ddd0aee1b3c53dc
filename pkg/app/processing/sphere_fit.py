"""
Least-squares sphere fitting.

A linear (algebraic) fit gives the starting sphere; BFGS then minimises the
geometric cost ``sum_i (|p_i - c| - r)^2``. Both stages work on points that
are centred on their centroid and scaled to unit RMS spread, so the result
does not depend on where the points sit or how they are oriented.
"""

import logging
import math
from typing import Annotated, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize

from app.core.exceptions import ConvergenceError, DegenerateGeometryError, InsufficientPointsError


logger = logging.getLogger(__name__)

FiniteFloat = Annotated[float, Field(allow_inf_nan=False)]
MIN_POINTS = 4


class WallPoint(BaseModel):
    """Inferred wall reflection point (mm)."""
    model_config = ConfigDict(frozen=True)

    x: FiniteFloat
    y: FiniteFloat
    z: Annotated[float, Field(gt=0, allow_inf_nan=False)]


class SphereFit(BaseModel):
    """Best-fit sphere."""
    model_config = ConfigDict(frozen=True)

    center: Tuple[FiniteFloat, FiniteFloat, FiniteFloat]
    radius: Annotated[float, Field(gt=0, allow_inf_nan=False)]
    rms_residual: Annotated[float, Field(ge=0, allow_inf_nan=False)]
    iterations: Annotated[int, Field(ge=0)]

    def volume_ml(self) -> float:
        return sphere_volume(self)


PointsLike = Union[Sequence[WallPoint], np.ndarray]


def _as_array(points: PointsLike) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    else:
        arr = np.array([[p.x, p.y, p.z] for p in points], dtype=float).reshape(-1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {arr.shape}")
    return arr


def _normalize(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    centroid = p.mean(axis=0)
    q = p - centroid
    scale = math.sqrt(float(np.mean(np.sum(q * q, axis=1))))
    if scale == 0.0:
        raise DegenerateGeometryError("all points coincide")
    return q / scale, centroid, scale


def _algebraic_fit(u: np.ndarray, condition_bound: float) -> np.ndarray:
    """Solve ``2 u.c + k = |u|^2`` for (c, k) in the least-squares sense; returns (c, r)."""
    design = np.column_stack([2.0 * u, np.ones(len(u))])
    cond = np.linalg.cond(design)
    if not np.isfinite(cond) or cond > condition_bound:
        raise DegenerateGeometryError(
            f"points are (nearly) coplanar: condition number {cond:.3g} > {condition_bound:.3g}"
        )
    rhs = np.sum(u * u, axis=1)
    sol, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    center = sol[:3]
    r2 = sol[3] + float(center @ center)
    if r2 <= 0:
        raise DegenerateGeometryError("algebraic fit produced no real sphere")
    return np.append(center, math.sqrt(r2))


def _cost_and_gradient(params: np.ndarray, u: np.ndarray) -> Tuple[float, np.ndarray]:
    center, radius = params[:3], params[3]
    diff = u - center
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    resid = dist - radius
    cost = float(resid @ resid)
    safe = np.where(dist > 0, dist, 1.0)
    grad_c = -2.0 * np.sum((resid / safe)[:, None] * diff, axis=0)
    grad_r = -2.0 * float(np.sum(resid))
    return cost, np.append(grad_c, grad_r)


def fit_sphere(
    points: PointsLike,
    max_iterations: int = 200,
    gradient_tolerance: float = 1e-10,
    condition_bound: float = 1e8,
) -> SphereFit:
    """
    Fit a sphere to wall points.

    Args:
        points: At least four non-coplanar points (WallPoints or an (n, 3) array)
        max_iterations: BFGS iteration cap
        gradient_tolerance: Converged when |grad| < tol * (1 + cost)
        condition_bound: Largest accepted condition number of the linear system

    Returns:
        SphereFit in the units of the input

    Raises:
        InsufficientPointsError: Fewer than four points
        DegenerateGeometryError: Coplanar or otherwise undetermined configuration
        ConvergenceError: BFGS hit the iteration cap without converging
    """
    p = _as_array(points)
    if len(p) < MIN_POINTS:
        raise InsufficientPointsError(f"a sphere needs at least {MIN_POINTS} points, got {len(p)}")

    u, centroid, scale = _normalize(p)
    start = _algebraic_fit(u, condition_bound)
    cost0, _ = _cost_and_gradient(start, u)

    result = minimize(
        _cost_and_gradient,
        start,
        args=(u,),
        jac=True,
        method="BFGS",
        options={"gtol": gradient_tolerance * (1.0 + cost0), "maxiter": max_iterations},
    )
    cost, grad = _cost_and_gradient(result.x, u)
    gnorm = float(np.max(np.abs(grad)))
    converged = result.success or gnorm < gradient_tolerance * (1.0 + cost)
    # status 2: the line search cannot improve on xk, i.e. a numerical minimum.
    if not converged and result.status != 2:
        raise ConvergenceError(
            f"BFGS stopped after {result.nit} iterations with |grad| = {gnorm:.3g}: {result.message}"
        )
    if result.x[3] <= 0:
        raise ConvergenceError("fit collapsed to a non-positive radius")

    logger.debug("sphere fit: %d iterations, cost %.3g -> %.3g", result.nit, cost0, cost)
    center = centroid + scale * result.x[:3]
    return SphereFit(
        center=tuple(float(c) for c in center),
        radius=float(scale * result.x[3]),
        rms_residual=float(scale * math.sqrt(cost / len(p))),
        iterations=int(result.nit),
    )


def sphere_volume(fit: SphereFit) -> float:
    """Sphere volume in mL."""
    return 4.0 / 3.0 * math.pi * fit.radius ** 3 / 1000.0
