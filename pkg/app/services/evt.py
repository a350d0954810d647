"""
Tail-index estimation and hidden-regular-variation detection.

Hill estimator on radii R_i = ||D_i||_p, tail empirical measures, the upper
order-statistic quantile b(t), the k_n selector for MIRG degree data, and the
rank-based Hillish statistic on (xi, eta) pairs.

Order statistics are taken from a stable descending sort; integer degree data
has ties and the formulas are applied verbatim to them.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.models.errors import DegenerateTailError, ParameterError, RangeError, ShapeError
from app.services.mirg_graph import DegreeMatrix
from app.services.weights import WeightMatrix

logger = logging.getLogger(__name__)


@dataclass
class RadiusVector:
    values: np.ndarray
    p: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if np.any(np.isnan(self.values)) or np.any(self.values < 0):
            raise ParameterError("radii must be nonnegative")

    def __len__(self) -> int:
        return self.values.size


@dataclass
class TailIndexEstimate:
    k: int
    hill: float
    alpha_hat: Optional[float]


@dataclass
class HillishTrace:
    ks: List[int]
    values: List[float]
    orientation: str


ValuesLike = Union[RadiusVector, Sequence[float], np.ndarray]


def _values(values: ValuesLike) -> np.ndarray:
    if isinstance(values, RadiusVector):
        return values.values
    return np.asarray(values, dtype=float).ravel()


def _descending(x: np.ndarray) -> np.ndarray:
    return np.sort(x, kind="stable")[::-1]


# ============================================
# RADII
# ============================================

def norms(d: Union[DegreeMatrix, WeightMatrix, np.ndarray], p: float = 1) -> RadiusVector:
    """Row norms (sum_l |x_il|^p)^(1/p); p = inf gives the max-norm."""
    if not (p == math.inf or p >= 1):
        raise ParameterError(f"norm order must be >= 1 or inf, got {p}")
    if isinstance(d, DegreeMatrix):
        x = d.d.astype(float)
    elif isinstance(d, WeightMatrix):
        x = d.w
    else:
        x = np.asarray(d, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"norms need an n x L matrix, got shape {x.shape}")
    return RadiusVector(np.linalg.norm(x, ord=p, axis=1), p=p)


# ============================================
# HILL
# ============================================

def _check_k(k: int, n: int):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise RangeError(f"k must be a positive integer, got {k!r}")
    if k + 1 > n:
        raise RangeError(f"Hill needs k + 1 <= n, got k={k}, n={n}")


def _estimate(k: int, h: float) -> TailIndexEstimate:
    return TailIndexEstimate(k=int(k), hill=h, alpha_hat=1.0 / h if h > 0 else None)


def hill(values: ValuesLike, k: int) -> TailIndexEstimate:
    """H_{k,n} = (1/k) sum_{i<=k} log(X_(i) / X_(k+1)) on descending order statistics."""
    x = _values(values)
    _check_k(k, x.size)
    desc = _descending(x)
    threshold = desc[k]
    if not threshold > 0:
        raise DegenerateTailError(
            f"X_(k+1) = 0 at k={k}: k reaches into the zero part of the sample"
        )
    h = float(np.mean(np.log(desc[:k] / threshold)))
    return _estimate(k, max(h, 0.0))


def hill_trace(values: ValuesLike, ks: Sequence[int]) -> Tuple[List[TailIndexEstimate], List[int]]:
    """
    Hill estimates over a list of k from a single sort. Returns the estimates and
    the k values skipped because X_(k+1) = 0.
    """
    x = _values(values)
    desc = _descending(x)
    with np.errstate(divide="ignore"):
        logs = np.log(desc)
    prefix = np.cumsum(logs)
    estimates, skipped = [], []
    for k in sorted(set(int(k) for k in ks)):
        _check_k(k, x.size)
        if not desc[k] > 0:
            skipped.append(k)
            continue
        h = float(prefix[k - 1] / k - logs[k])
        estimates.append(_estimate(k, max(h, 0.0)))
    if skipped:
        logger.debug(f"Hill trace skipped degenerate k values: {skipped}")
    return estimates, skipped


def hill_via_tail_measure(values: ValuesLike, k: int) -> float:
    """
    Integral of y -> nu_hat(y, inf] dy / y over [1, inf), with the scale set to
    X_(k+1). The integrand is a step function, integrated exactly between jumps.
    """
    x = _values(values)
    _check_k(k, x.size)
    desc = _descending(x)
    scale = desc[k]
    if not scale > 0:
        raise DegenerateTailError(f"X_(k+1) = 0 at k={k}")
    jumps = np.sort(x[x > scale] / scale)
    if jumps.size == 0:
        return 0.0
    edges = np.concatenate([[1.0], jumps])
    counts = jumps.size - np.arange(jumps.size)
    return float(np.sum(counts * np.log(edges[1:] / edges[:-1])) / k)


# ============================================
# QUANTILES AND TAIL MEASURES
# ============================================

def empirical_quantile(values: ValuesLike, t: float) -> float:
    """b(t): the ceil(n/t)-th largest value."""
    if not t > 1:
        raise ParameterError(f"quantile level t must be > 1, got {t}")
    x = _values(values)
    if x.size == 0:
        raise RangeError("empirical quantile of an empty sample")
    m = x.size / t
    rank = int(round(m)) if math.isclose(m, round(m), rel_tol=1e-12) else math.ceil(m)
    rank = min(max(rank, 1), x.size)
    return float(_descending(x)[rank - 1])


def tail_empirical_measure(values: ValuesLike, k: int, scale: float, y: float) -> float:
    """nu_n(y, inf] = (1/k) #{i : X_i / scale > y}."""
    if isinstance(k, bool) or k < 1:
        raise RangeError(f"k must be >= 1, got {k}")
    if not scale > 0:
        raise ParameterError(f"scale must be > 0, got {scale}")
    if not y > 0:
        raise ParameterError(f"y must be > 0, got {y}")
    x = _values(values)
    return float(np.count_nonzero(x / scale > y)) / k


def select_kn(n: int, alpha: float, kappa: float) -> int:
    """k_n = ceil(n^(1/alpha + kappa)) clamped to [1, n - 1], for kappa in (0, (alpha-1)/alpha)."""
    if not alpha > 1:
        raise ParameterError(f"select_kn needs alpha > 1, got {alpha}")
    upper = (alpha - 1.0) / alpha
    if not 0 < kappa < upper:
        raise ParameterError(f"kappa must lie in the open interval (0, {upper:.6g}), got {kappa}")
    if n < 2:
        raise RangeError(f"select_kn needs n >= 2, got {n}")
    k = math.ceil(n ** (1.0 / alpha + kappa))
    return int(min(max(k, 1), n - 1))


# ============================================
# HILLISH
# ============================================

def _check_pairs(xi, eta) -> Tuple[np.ndarray, np.ndarray]:
    xi = np.asarray(xi, dtype=float).ravel()
    eta = np.asarray(eta, dtype=float).ravel()
    if xi.size != eta.size:
        raise ShapeError(f"xi and eta differ in length: {xi.size} vs {eta.size}")
    if np.any(np.isnan(xi)) or np.any(np.isnan(eta)):
        raise ParameterError("xi and eta must not contain NaN; drop excluded rows first")
    return xi, eta


def _hillish_from_concomitants(eta_star: np.ndarray) -> float:
    k = eta_star.size
    # ties in eta* go to the earlier xi-rank (stable sort)
    rank_order = np.argsort(-eta_star, kind="stable")
    N = np.empty(k)
    N[rank_order] = np.arange(1, k + 1)
    i = np.arange(1, k + 1)
    return float(np.mean(np.log(k / i) * np.log(k / N)))


def hillish(xi, eta, k: int) -> float:
    """(1/k) sum_{i<=k} log(k/i) log(k/N_i^k) with N_i^k the rank of the i-th concomitant."""
    xi, eta = _check_pairs(xi, eta)
    if isinstance(k, bool) or k < 1 or k > xi.size:
        raise RangeError(f"Hillish needs 1 <= k <= n, got k={k}, n={xi.size}")
    order = np.argsort(-xi, kind="stable")[:k]
    return _hillish_from_concomitants(eta[order])


def _trace(xi: np.ndarray, eta: np.ndarray, ks: List[int], orientation: str) -> HillishTrace:
    order = np.argsort(-xi, kind="stable")
    eta_sorted = eta[order]
    return HillishTrace(ks=list(ks),
                        values=[_hillish_from_concomitants(eta_sorted[:k]) for k in ks],
                        orientation=orientation)


def hillish_pair(xi, eta, ks: Sequence[int]) -> Tuple[HillishTrace, HillishTrace]:
    """Hillish traces for (xi, eta) and (xi, -eta) over ks."""
    xi, eta = _check_pairs(xi, eta)
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1 or ks[-1] > xi.size:
        raise RangeError(f"Hillish needs 1 <= k <= n for every k, n={xi.size}")
    return _trace(xi, eta, ks, "(xi,eta)"), _trace(xi, -eta, ks, "(xi,-eta)")


# ============================================
# TABLES
# ============================================

def estimates_frame(estimates: Sequence[TailIndexEstimate]) -> pd.DataFrame:
    return pd.DataFrame({
        "k": [e.k for e in estimates],
        "hill": [e.hill for e in estimates],
        "alpha_hat": [np.nan if e.alpha_hat is None else e.alpha_hat for e in estimates],
    })


def hillish_frame(pos: HillishTrace, neg: HillishTrace) -> pd.DataFrame:
    return pd.DataFrame({"k": pos.ks, "hillish_pos": pos.values, "hillish_neg": neg.values})
