"""
Latent weight matrices for the MIRG.

Three fixed two-layer constructions (the HRV mixture, full dependence along the
diagonal, and a single Pareto factor split by a random angle) plus a generic
radius x angle builder for any number of layers. All of them are inverse l1
polar transforms: the row sum is the radius, the row divided by its sum lies on
the simplex.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.models.errors import OutputError, ParameterError, ShapeError
from app.services.samplers import (
    Bernoulli,
    DistSpec,
    Pareto,
    RngStream,
    ShiftedBeta,
    Uniform,
    sample,
)

logger = logging.getLogger(__name__)

# Angle laws of the HRV mixture: component 1 sits inside the wedge 2/3 <= x2/x1 <= 3/2,
# component 2 strictly above it.
CONE_ANGLE = ShiftedBeta(5.0, 5.0, 0.4, 0.6)
OFF_CONE_ANGLE = Uniform(0.0, 0.4)


@dataclass
class WeightMatrix:
    """n x L nonnegative weights, row i is W_i. components is set only in debug mode."""

    w: np.ndarray
    components: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 2 or self.w.shape[1] < 1:
            raise ShapeError(f"weight matrix must be n x L with L >= 1, got shape {self.w.shape}")
        if not np.all(np.isfinite(self.w)) or np.any(self.w < 0):
            raise ParameterError("weights must be finite and nonnegative")

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def L(self) -> int:
        return self.w.shape[1]

    def radius(self, p: float = 1) -> np.ndarray:
        return np.linalg.norm(self.w, ord=p, axis=1)


# ============================================
# WEIGHT MODELS
# ============================================

def _check_alpha(alpha: float):
    if not np.isfinite(alpha) or alpha <= 0:
        raise ParameterError(f"tail index alpha must be > 0, got {alpha}")


def _check_unit_angle(angle: DistSpec):
    if isinstance(angle, ShiftedBeta) and angle.c2 <= 1.0:
        return
    if isinstance(angle, Uniform) and angle.lo >= 0.0 and angle.hi <= 1.0:
        return
    raise ParameterError(f"angle law must be supported on [0, 1], got {angle}")


@dataclass(frozen=True)
class HrvMixture:
    """
    Half the rows are (V1 T1, V1 (1 - T1)) with V1 ~ Pareto(alpha), T1 ~ Beta(5, 5, 0.4, 0.6);
    the other half (V2 T2, V2 (1 - T2)) with V2 ~ Pareto(alpha0), T2 ~ Uniform(0, 0.4).
    """

    alpha: float
    alpha0: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        _check_alpha(self.alpha0)
        if self.alpha0 < self.alpha:
            raise ParameterError(f"alpha0 must be >= alpha, got alpha={self.alpha}, alpha0={self.alpha0}")

    @property
    def L(self) -> int:
        return 2

    @property
    def detectable(self) -> bool:
        """Hidden regular variation survives in the degrees only when alpha0 < 2 alpha."""
        return self.alpha0 < 2 * self.alpha

    def radius_cdf(self, x):
        return 0.5 * Pareto(self.alpha).cdf(x) + 0.5 * Pareto(self.alpha0).cdf(x)


@dataclass(frozen=True)
class FullDependence:
    """W_2 = W_1 = V with V ~ Pareto(alpha)."""

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def L(self) -> int:
        return 2

    def radius_cdf(self, x):
        return Pareto(self.alpha).cdf(np.asarray(x, dtype=float) / 2.0)


@dataclass(frozen=True)
class SingleFactor:
    """(V T, V (1 - T)) with V ~ Pareto(alpha) and T from the angle law."""

    alpha: float
    angle: DistSpec = CONE_ANGLE

    def __post_init__(self):
        _check_alpha(self.alpha)
        _check_unit_angle(self.angle)

    @property
    def L(self) -> int:
        return 2

    def radius_cdf(self, x):
        return Pareto(self.alpha).cdf(x)


AngleSampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class GenericPolar:
    """
    Rows R * Theta with R from the radius law and Theta an (n, L) array of
    simplex points returned by angle_sampler(generator, n).
    """

    radius: DistSpec
    angle_sampler: AngleSampler
    L: int = 2

    def __post_init__(self):
        if self.L < 2:
            raise ParameterError(f"generic polar weights need L >= 2, got {self.L}")

    def radius_cdf(self, x):
        if not hasattr(self.radius, "cdf"):
            raise ParameterError(f"radius law {self.radius} has no closed-form CDF")
        return self.radius.cdf(x)


WeightModelSpec = Union[HrvMixture, FullDependence, SingleFactor, GenericPolar]


def _split(radius: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.column_stack([radius * theta, radius * (1.0 - theta)])


def sample_weights(spec: WeightModelSpec, n: int, rng: RngStream, debug: bool = False) -> WeightMatrix:
    """
    n iid weight rows from spec. With debug=True the HRV mixture records the
    mixture component (1 or 2) of every row in WeightMatrix.components.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
        raise ParameterError(f"node count must be a nonnegative integer, got {n!r}")
    n = int(n)
    if n == 0:
        return WeightMatrix(np.zeros((0, spec.L)))

    components = None
    if isinstance(spec, HrvMixture):
        first = sample(Bernoulli(0.5), n, rng.child("component")) > 0
        on_cone = _split(sample(Pareto(spec.alpha), n, rng.child("v1")),
                         sample(CONE_ANGLE, n, rng.child("theta1")))
        off_cone = _split(sample(Pareto(spec.alpha0), n, rng.child("v2")),
                          sample(OFF_CONE_ANGLE, n, rng.child("theta2")))
        w = np.where(first[:, None], on_cone, off_cone)
        if debug:
            components = np.where(first, 1, 2)
    elif isinstance(spec, FullDependence):
        v = sample(Pareto(spec.alpha), n, rng.child("v"))
        w = np.column_stack([v, v])
    elif isinstance(spec, SingleFactor):
        w = _split(sample(Pareto(spec.alpha), n, rng.child("v")),
                   sample(spec.angle, n, rng.child("theta")))
    elif isinstance(spec, GenericPolar):
        radius = sample(spec.radius, n, rng.child("radius"))
        theta = np.asarray(spec.angle_sampler(rng.child("angle").generator(), n), dtype=float)
        if theta.shape != (n, spec.L):
            raise ShapeError(f"angle sampler returned shape {theta.shape}, expected {(n, spec.L)}")
        if np.any(theta < 0) or not np.allclose(theta.sum(axis=1), 1.0):
            raise ParameterError("angle sampler must return points on the unit simplex")
        w = radius[:, None] * theta
    else:
        raise ParameterError(f"unknown weight model {spec!r}")

    logger.debug(f"Sampled {n} weight rows from {type(spec).__name__}")
    return WeightMatrix(w, components=components)


def scaled_weights(w: WeightMatrix, c: Sequence[float]) -> WeightMatrix:
    """Column-wise scaling: entry (i, l) becomes c_l * w_il."""
    c = np.asarray(c, dtype=float).ravel()
    if c.size != w.L:
        raise ShapeError(f"need one scale per layer: got {c.size} scales for {w.L} layers")
    if np.any(~(c > 0)) or not np.all(np.isfinite(c)):
        raise ParameterError("layer scales must be positive and finite")
    return WeightMatrix(w.w * c, components=w.components)


# ============================================
# CSV I/O
# ============================================

def weights_frame(w: WeightMatrix) -> pd.DataFrame:
    frame = pd.DataFrame(w.w, columns=[f"w{l + 1}" for l in range(w.L)])
    frame.insert(0, "node", np.arange(1, w.n + 1))
    return frame


def write_weights_csv(w: WeightMatrix, path: str) -> str:
    try:
        weights_frame(w).to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    except OSError as e:
        raise OutputError(f"could not write weights to {path}: {e}") from e
    logger.info(f"Wrote {w.n} x {w.L} weights to {path}")
    return path


def read_weights_csv(path: str) -> WeightMatrix:
    if not os.path.exists(path):
        raise OutputError(f"weights file not found: {path}")
    frame = pd.read_csv(path)
    columns = [c for c in frame.columns if c.startswith("w")]
    if "node" not in frame.columns or not columns:
        raise ShapeError(f"{path}: expected header node,w1,...,wL")
    frame = frame.sort_values("node")
    return WeightMatrix(frame[columns].to_numpy(dtype=float))
