"""
Numerical sentinels for the bounds the degree asymptotics rest on.

- maximal Poisson/Bernoulli coupling and its total-variation disagreement
- Poisson central-moment bounds E|X - lambda|^m <= a_m lambda^(m/2) + C_m
- the Poisson-binomial third absolute central moment bound
  E|S - sum p|^3 <= 2 sum p + 2 (sum p)^(3/2)

(a_m, C_m) = (3.5, 2) are test witnesses valid on the checked grid.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from app.models.errors import ParameterError
from app.services.samplers import RngStream, poisson_binomial_pmf

logger = logging.getLogger(__name__)

MOMENT_WITNESS = (3.5, 2.0)
COUPLING_K = 3.0
# rows of one report are checked jointly
Z_TOLERANCE = 4.0


@dataclass
class CoupledPair:
    bernoulli_draw: int
    poisson_draw: int


@dataclass
class OracleReport:
    name: str
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row["holds"] for row in self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{self.name}: {status} ({len(self.rows)} checks)"]
        for row in self.rows:
            cells = ", ".join(
                f"{key}={value:.6g}" if isinstance(value, float) else f"{key}={value}"
                for key, value in row.items()
            )
            lines.append(f"  {cells}")
        return "\n".join(lines)


# ============================================
# MAXIMAL COUPLING
# ============================================

def _check_coupling_p(p: float):
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"coupling needs p in [0, 1), got {p}")


def _poisson_cdf_table(p: float) -> np.ndarray:
    cdf = stats.poisson.cdf(np.arange(40), p)
    cdf[-1] = 1.0
    return cdf


def coupling_draws(p: float, size: int, rng: RngStream):
    """
    Quantile coupling through one shared uniform U: B = 1{U > 1 - p},
    P = F_Poisson^-1(U). Since e^-p >= 1 - p this disagrees exactly on
    (1 - p, e^-p] and (e^-p (1 + p), 1), total mass p (1 - e^-p) = d_TV.
    """
    _check_coupling_p(p)
    u = rng.generator().random(size)
    bern = (u > 1.0 - p).astype(np.int64)
    pois = np.searchsorted(_poisson_cdf_table(p), u, side="left").astype(np.int64)
    return bern, pois


def maximal_coupling(p: float, rng: RngStream) -> CoupledPair:
    bern, pois = coupling_draws(p, 1, rng)
    return CoupledPair(bernoulli_draw=int(bern[0]), poisson_draw=int(pois[0]))


def check_coupling(p_grid: Sequence[float], draws: int, rng: RngStream) -> OracleReport:
    report = OracleReport("maximal Poisson-Bernoulli coupling")
    for idx, p in enumerate(p_grid):
        bern, pois = coupling_draws(p, draws, rng.child("p", idx))
        tv = p * (1.0 - math.exp(-p))
        disagree = float(np.mean(bern != pois))
        se = math.sqrt(max(tv * (1.0 - tv), 1e-300) / draws)
        mean_abs = float(np.mean(np.abs(bern - pois)))
        report.rows.append({
            "p": float(p),
            "tv_exact": tv,
            "disagreement": disagree,
            "z": (disagree - tv) / se if tv > 0 else 0.0,
            "mean_abs_diff": mean_abs,
            "poisson_mean": float(np.mean(pois)),
            "holds": bool(abs(disagree - tv) <= Z_TOLERANCE * se + 1e-15
                          and disagree <= p * p + Z_TOLERANCE * se
                          and mean_abs <= COUPLING_K * p * p + Z_TOLERANCE * se),
        })
    logger.info(f"Coupling check over {len(report.rows)} rates: {'pass' if report.passed else 'FAIL'}")
    return report


# ============================================
# POISSON MOMENTS
# ============================================

def poisson_central_moment(lam: float, m: int) -> float:
    if m == 2:
        return lam
    if m == 4:
        return lam + 3.0 * lam * lam
    raise ParameterError(f"central moments available for m in {{2, 4}}, got {m}")


def check_poisson_moment_bound(lambda_grid: Sequence[float], m: int, samples: int,
                               rng: RngStream) -> OracleReport:
    if m not in (2, 4):
        raise ParameterError(f"moment order must be 2 or 4, got {m}")
    a_m, c_m = MOMENT_WITNESS
    report = OracleReport(f"Poisson moment bound (m={m})")
    for idx, lam in enumerate(lambda_grid):
        if not lam >= 0:
            raise ParameterError(f"Poisson rate must be >= 0, got {lam}")
        x = rng.child("lambda", idx).generator().poisson(lam, samples)
        estimate = float(np.mean(np.abs(x - lam) ** m))
        exact = poisson_central_moment(lam, m)
        bound = a_m * lam ** (m / 2.0) + c_m
        report.rows.append({
            "lambda": float(lam),
            "m": m,
            "estimate": estimate,
            "exact": exact,
            "bound": bound,
            "holds": bool(exact <= bound and estimate <= bound),
        })
    return report


# ============================================
# POISSON-BINOMIAL THIRD MOMENT
# ============================================

def _enumerated_third_moment(p: np.ndarray, mean: float) -> float:
    n = p.size
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    weight = np.prod(np.where(bits == 1, p, 1.0 - p), axis=1)
    return float(np.sum(weight * np.abs(bits.sum(axis=1) - mean) ** 3))


def check_pb3_bound(probs: Sequence[float], exhaustive_limit: int = 16) -> OracleReport:
    """Exact E|sum (X_i - p_i)|^3 from the DP pmf, enumerated too when |probs| is small."""
    p = np.asarray(probs, dtype=float).ravel()
    pmf = poisson_binomial_pmf(p)
    mean = float(p.sum())
    third = float(np.sum(pmf * np.abs(np.arange(p.size + 1) - mean) ** 3))
    bound = 2.0 * mean + 2.0 * mean ** 1.5
    row = {"n": int(p.size), "sum_p": mean, "third_moment": third, "bound": bound}
    holds = third <= bound + 1e-12
    if p.size <= exhaustive_limit:
        enumerated = _enumerated_third_moment(p, mean)
        row["enumerated"] = enumerated
        holds = holds and math.isclose(enumerated, third, rel_tol=1e-9, abs_tol=1e-12)
    row["holds"] = bool(holds)
    return OracleReport("Poisson-binomial third moment", [row])


# ============================================
# SUITES
# ============================================

DEFAULT_P_GRID = [0.0, 0.1, 0.3, 0.5, 0.9]
DEFAULT_LAMBDA_GRID = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
SUITES = ("coupling", "moments", "pb3")


def random_probability_vectors(count: int, max_len: int, rng: RngStream) -> List[np.ndarray]:
    gen = rng.generator()
    return [gen.random(int(size)) for size in gen.integers(0, max_len + 1, size=count)]


def run_suite(suite: str, rng: RngStream, draws: int = 1_000_000) -> OracleReport:
    """coupling: p grid with `draws` pairs each; moments: m = 2 and 4 on the lambda grid
    with `draws` Poisson samples per rate;
    pb3: 1000 random vectors of length <= 25."""
    if suite == "coupling":
        return check_coupling(DEFAULT_P_GRID, draws, rng.child("coupling"))
    if suite == "moments":
        report = OracleReport("Poisson moment bounds")
        for m in (2, 4):
            part = check_poisson_moment_bound(DEFAULT_LAMBDA_GRID, m, draws, rng.child("moments", m))
            report.rows.extend(part.rows)
        return report
    if suite == "pb3":
        report = OracleReport("Poisson-binomial third moment")
        for probs in random_probability_vectors(1_000, 25, rng.child("pb3")):
            report.rows.extend(check_pb3_bound(probs).rows)
        logger.info(f"Third-moment bound over {len(report.rows)} vectors: {'pass' if report.passed else 'FAIL'}")
        return report
    raise ParameterError(f"unknown verification suite {suite!r}; choose from {', '.join(SUITES)}")
