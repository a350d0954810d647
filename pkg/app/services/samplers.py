"""
Seedable random sources for the MIRG toolkit.

An RngStream is a plain value. Every operation that receives one builds its own
numpy Generator from (seed, stream_id), so the same stream always produces the
same draws no matter which thread or process consumes it. Sub-streams are split
off with RngStream.child(), never drawn sequentially from a shared generator.

Poisson draws go through numpy's Generator.poisson, which uses inversion below
rate 10 and PTRS rejection above it.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Any, Sequence, Union

import numpy as np

from app.models.errors import ParameterError

logger = logging.getLogger(__name__)

UINT64_LIMIT = 1 << 64


def _hash64(*parts: Any) -> int:
    """Stable 64-bit digest of a tuple of keys (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        digest.update(repr(part).encode("utf-8"))
        digest.update(b"\x1f")
    return int.from_bytes(digest.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) < UINT64_LIMIT:
                raise ParameterError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        """Fresh PCG64 generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys: Any) -> "RngStream":
        """Derive an independent sub-stream labelled by keys."""
        return RngStream(self.seed, _hash64(int(self.stream_id), *keys))


def experiment_stream(seed: int, experiment: str, replicate: int) -> RngStream:
    """Stream for replicate r of experiment e: stream_id = hash(e, r)."""
    return RngStream(seed, _hash64(experiment, int(replicate)))


# ============================================
# DISTRIBUTIONS
# ============================================

def _check_finite(name: str, value: float):
    if not np.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class Pareto:
    """Pareto(alpha) on [1, inf) with P(X > x) = x^-alpha."""

    alpha: float

    def __post_init__(self):
        _check_finite("alpha", self.alpha)
        if self.alpha <= 0:
            raise ParameterError(f"Pareto tail index must be > 0, got {self.alpha}")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        # 1 - U lies in (0, 1], so the quantile is always finite
        return pareto_quantile(1.0 - gen.random(n), self.alpha)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x < 1.0, 0.0, 1.0 - np.power(np.maximum(x, 1.0), -self.alpha))


@dataclass(frozen=True)
class ShiftedBeta:
    """Y = (c2 - c1) X + c1 with X ~ Beta(b1, b2)."""

    b1: float
    b2: float
    c1: float = 0.0
    c2: float = 1.0

    def __post_init__(self):
        for name in ("b1", "b2", "c1", "c2"):
            _check_finite(name, getattr(self, name))
        if self.b1 <= 0 or self.b2 <= 0:
            raise ParameterError(f"Beta shapes must be > 0, got ({self.b1}, {self.b2})")
        if not 0 <= self.c1 < self.c2:
            raise ParameterError(f"shifted Beta needs 0 <= c1 < c2, got ({self.c1}, {self.c2})")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return (self.c2 - self.c1) * gen.beta(self.b1, self.b2, n) + self.c1


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        _check_finite("lo", self.lo)
        _check_finite("hi", self.hi)
        if self.lo >= self.hi:
            raise ParameterError(f"Uniform needs lo < hi, got ({self.lo}, {self.hi})")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return gen.uniform(self.lo, self.hi, n)


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        _check_finite("lam", self.lam)
        if self.lam < 0:
            raise ParameterError(f"Poisson rate must be >= 0, got {self.lam}")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return gen.poisson(self.lam, n).astype(float)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"Bernoulli probability must lie in [0, 1], got {self.p}")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return (gen.random(n) < self.p).astype(float)


@dataclass(frozen=True)
class StdNormal:
    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return gen.standard_normal(n)


DistSpec = Union[Pareto, ShiftedBeta, Uniform, Poisson, Bernoulli, StdNormal]


def _check_count(n: int) -> int:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
        raise ParameterError(f"sample size must be a nonnegative integer, got {n!r}")
    return int(n)


def sample(dist: DistSpec, n: int, rng: RngStream) -> np.ndarray:
    """n iid draws from dist; a pure function of (dist, n, rng)."""
    n = _check_count(n)
    return dist.draw(rng.generator(), n)


def pareto_quantile(u, alpha: float):
    """Inverse CDF of Pareto(alpha) evaluated at the upper-tail probability u."""
    if alpha <= 0:
        raise ParameterError(f"Pareto tail index must be > 0, got {alpha}")
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0.0)) or np.any(u_arr > 1.0):
        raise ParameterError("Pareto quantile needs u in (0, 1]")
    x = np.power(u_arr, -1.0 / alpha)
    return float(x) if x.ndim == 0 else x


# ============================================
# EXACT SMALL-CASE ORACLES
# ============================================

def poisson_binomial_pmf(probs: Sequence[float]) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoulli(p_i), by DP convolution."""
    p = np.asarray(probs, dtype=float).ravel()
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ParameterError("Poisson-binomial probabilities must lie in [0, 1]")

    pmf = np.zeros(p.size + 1)
    pmf[0] = 1.0
    for count, pk in enumerate(p, start=1):
        shifted = pmf[:count] * pk
        pmf[:count + 1] *= 1.0 - pk
        pmf[1:count + 1] += shifted
    return pmf


class AliasTable:
    """
    Vose alias table for O(1) draws from a discrete law proportional to weights.
    """

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ParameterError("alias table needs a nonempty 1-d weight vector")
        if np.any(~np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
            raise ParameterError("alias weights must be finite, nonnegative and not all zero")

        n = w.size
        scaled = (w * (n / w.sum())).tolist()
        accept = [1.0] * n
        alias = list(range(n))
        small = [i for i, s in enumerate(scaled) if s < 1.0]
        large = [i for i, s in enumerate(scaled) if s >= 1.0]

        while small and large:
            s = small.pop()
            l = large.pop()
            accept[s] = scaled[s]
            alias[s] = l
            scaled[l] = scaled[l] - (1.0 - scaled[s])
            if scaled[l] < 1.0:
                small.append(l)
            else:
                large.append(l)
        # anything left over is 1 up to rounding, except true zeros
        for s in small:
            if w[s] == 0.0:
                accept[s] = 0.0
                alias[s] = int(np.argmax(w))

        self.size = n
        self.accept = np.asarray(accept)
        self.alias = np.asarray(alias, dtype=np.int64)

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        idx = gen.integers(0, self.size, size=size)
        u = gen.random(size)
        return np.where(u < self.accept[idx], idx, self.alias[idx])
