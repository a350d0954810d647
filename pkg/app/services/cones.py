"""
Cone geometry in the nonnegative plane.

Distances to the cones that carry the first-order limit mass (a ray, a wedge
between two slopes, or the origin), the generalized polar transform, the
(xi, eta) pairs used to look for hidden regular variation above a wedge, and
the closed-form limit of the full-dependence example.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import integrate, special, stats

from app.models.errors import OnConeError, ParameterError, ShapeError, UnsupportedNormError
from app.services.mirg_graph import DegreeMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagonalRay:
    """{x1 = x2 >= 0}."""


@dataclass(frozen=True)
class Wedge:
    """{a x1 <= x2 <= b x1, x1 >= 0}; the default is the 2/3 .. 3/2 wedge."""

    a: float = 2.0 / 3.0
    b: float = 1.5

    def __post_init__(self):
        if not 0 < self.a < self.b or not math.isfinite(self.b):
            raise ParameterError(f"wedge needs 0 < a < b, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class OriginCone:
    """The zero cone, used for plain multivariate regular variation."""


ConeSpec = Union[DiagonalRay, Wedge, OriginCone]


@dataclass
class PolarPoint:
    r: float
    angle: np.ndarray


def _ray_distance(x: np.ndarray, slope: float) -> np.ndarray:
    """Distance from points x (..., 2) to the ray {t (1, slope) : t >= 0}."""
    norm = math.sqrt(1.0 + slope * slope)
    u1, u2 = 1.0 / norm, slope / norm
    t = x[..., 0] * u1 + x[..., 1] * u2
    perpendicular = np.abs(x[..., 1] * u1 - x[..., 0] * u2)
    # foot of the perpendicular behind the vertex: nearest point is the origin
    return np.where(t >= 0, perpendicular, np.hypot(x[..., 0], x[..., 1]))


def distances_to_cone(points, cone: ConeSpec, p: float = 2) -> np.ndarray:
    """Vectorized distance_to_cone over an (n, 2) array."""
    x = np.asarray(points, dtype=float)
    if x.shape[-1] != 2:
        raise ShapeError(f"points must have 2 coordinates, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("points must be finite")

    if isinstance(cone, OriginCone):
        return np.linalg.norm(x, ord=p, axis=-1)
    if p != 2:
        raise UnsupportedNormError(f"only the Euclidean distance (p=2) is available for {type(cone).__name__}")
    if isinstance(cone, DiagonalRay):
        return _ray_distance(x, 1.0)
    if isinstance(cone, Wedge):
        inside = (x[..., 0] >= 0) & (x[..., 1] >= cone.a * x[..., 0]) & (x[..., 1] <= cone.b * x[..., 0])
        outside = np.minimum(_ray_distance(x, cone.b), _ray_distance(x, cone.a))
        return np.where(inside, 0.0, outside)
    raise ParameterError(f"unknown cone {cone!r}")


def distance_to_cone(x, cone: ConeSpec, p: float = 2) -> float:
    """d_p(x, C0) for a single point x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ShapeError(f"expected a point in the plane, got shape {x.shape}")
    return float(distances_to_cone(x, cone, p))


def gpolar(x, cone: ConeSpec, p: float = 2) -> PolarPoint:
    """GPOLAR(x) = (d(x, C0), x / d(x, C0)); undefined on the cone."""
    x = np.asarray(x, dtype=float)
    r = distance_to_cone(x, cone, p)
    if r == 0:
        raise OnConeError(f"point {x.tolist()} lies on the cone; GPOLAR is undefined there")
    return PolarPoint(r=r, angle=x / r)


# ============================================
# (xi, eta) PAIRS
# ============================================

@dataclass
class XiEtaPairs:
    """
    xi_i = d_i2 - slope d_i1 and eta_i = d_i2 / d_i1. eta is +inf when only
    d_i1 is zero; rows with both degrees zero are excluded.
    """

    xi: np.ndarray
    eta: np.ndarray
    excluded: np.ndarray

    @property
    def n_excluded(self) -> int:
        return int(np.count_nonzero(self.excluded))

    def retained(self) -> Tuple[np.ndarray, np.ndarray]:
        keep = ~self.excluded
        return self.xi[keep], self.eta[keep]


def xi_eta(d: DegreeMatrix, slope: float = 1.5) -> XiEtaPairs:
    if d.L != 2:
        raise ShapeError(f"(xi, eta) needs two layers, got L={d.L}")
    d1 = d.d[:, 0].astype(float)
    d2 = d.d[:, 1].astype(float)
    excluded = (d1 == 0) & (d2 == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(d1 > 0, d2 / np.where(d1 > 0, d1, 1.0), np.inf)
    eta[excluded] = np.nan
    return XiEtaPairs(xi=d2 - slope * d1, eta=eta, excluded=excluded)


# ============================================
# FULL-DEPENDENCE LIMIT
# ============================================

def example31_constant(alpha: float) -> float:
    """2^(1 - alpha) sqrt(pi) / Gamma(alpha + 1/2)."""
    return math.exp((1.0 - alpha) * math.log(2.0) + 0.5 * math.log(math.pi) - special.gammaln(alpha + 0.5))


def example31_normalization(alpha: float) -> float:
    """(sqrt(pi) / Gamma(alpha + 1/2))^(1 / (2 alpha)), the scale applied to the distance."""
    return math.exp((0.5 * math.log(math.pi) - special.gammaln(alpha + 0.5)) / (2.0 * alpha))


def example31_limit(u: float, v: float, alpha: float) -> float:
    """
    Limit of t P(scaled distance > u, scaled ratio > v) for fully dependent weights:
    u^(-2 alpha) * constant * int_0^(1/v) z^(2 alpha) phi(z) dz, with v = 0 meaning (0, inf).
    """
    if not alpha > 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}")
    if not u > 0:
        raise ParameterError(f"the limit diverges at u = {u}; need u > 0")
    if not v >= 0:
        raise ParameterError(f"v must be >= 0, got {v}")
    if math.isinf(v):
        return 0.0
    upper = math.inf if v == 0 else 1.0 / v
    moment, _ = integrate.quad(lambda z: z ** (2.0 * alpha) * stats.norm.pdf(z), 0.0, upper,
                               epsabs=1e-12, epsrel=1e-12, limit=200)
    return u ** (-2.0 * alpha) * example31_constant(alpha) * moment
