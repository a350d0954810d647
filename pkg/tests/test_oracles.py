"""Tests for the coupling and moment-bound verification suites."""

import math

import numpy as np
import pytest
from scipy import stats

from app.models.errors import ParameterError
from app.services.oracles import (
    check_coupling,
    check_pb3_bound,
    check_poisson_moment_bound,
    coupling_draws,
    maximal_coupling,
    poisson_central_moment,
    run_suite,
)
from app.services.samplers import RngStream

DRAWS = 1_000_000


class TestCoupling:

    def test_zero_rate(self):
        bern, pois = coupling_draws(0.0, 1000, RngStream(1))
        assert not bern.any() and not pois.any()

    def test_disagreement_is_total_variation(self):
        p = 0.3
        bern, pois = coupling_draws(p, DRAWS, RngStream(2))
        tv = p * (1 - math.exp(-p))
        se = math.sqrt(tv * (1 - tv) / DRAWS)
        disagree = np.mean(bern != pois)
        assert abs(disagree - tv) <= 3 * se
        assert disagree <= p * p

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_poisson_marginal(self, p):
        _, pois = coupling_draws(p, DRAWS, RngStream(3))
        observed = np.bincount(np.minimum(pois, 3), minlength=4)
        probs = stats.poisson.pmf(np.arange(3), p)
        probs = np.append(probs, 1 - probs.sum())
        assert stats.chisquare(observed, probs * DRAWS).pvalue > 1e-3

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_bernoulli_marginal(self, p):
        bern, _ = coupling_draws(p, DRAWS, RngStream(4))
        assert abs(bern.mean() - p) <= 4 * math.sqrt(p * (1 - p) / DRAWS)

    def test_single_pair(self):
        pair = maximal_coupling(0.4, RngStream(5))
        assert pair.bernoulli_draw in (0, 1)
        assert pair.poisson_draw >= 0

    @pytest.mark.parametrize("p", [1.0, 1.5, -0.1])
    def test_rate_out_of_range(self, p):
        with pytest.raises(ParameterError):
            coupling_draws(p, 10, RngStream(1))

    def test_report(self):
        report = check_coupling([0.0, 0.1, 0.5, 0.9], 200_000, RngStream(6))
        assert report.passed
        frame = report.to_frame()
        assert {"p", "tv_exact", "disagreement", "mean_abs_diff", "holds"} <= set(frame.columns)
        assert "PASS" in report.to_text()


class TestPoissonMoments:

    def test_exact_moments(self):
        assert poisson_central_moment(1.0, 2) == 1.0
        assert poisson_central_moment(4.0, 4) == 52.0
        assert poisson_central_moment(0.0, 4) == 0.0

    def test_bound_report(self):
        report = check_poisson_moment_bound([0.0, 1.0, 4.0, 16.0], 4, 50_000, RngStream(7))
        assert report.passed
        row = report.rows[2]
        assert row["exact"] == 52.0 and row["bound"] == 58.0

    def test_odd_order_unsupported(self):
        with pytest.raises(ParameterError):
            check_poisson_moment_bound([1.0], 3, 10, RngStream(7))


class TestThirdMomentBound:

    def test_fair_coin(self):
        row = check_pb3_bound([0.5]).rows[0]
        assert row["third_moment"] == pytest.approx(0.125)
        assert row["bound"] == pytest.approx(1.0 + 2 * 0.5 ** 1.5)
        assert row["holds"]

    def test_empty(self):
        row = check_pb3_bound([]).rows[0]
        assert row["third_moment"] == 0.0 and row["holds"]

    def test_enumeration_agrees_with_dp(self):
        probs = np.random.default_rng(8).random(12)
        row = check_pb3_bound(probs).rows[0]
        assert row["enumerated"] == pytest.approx(row["third_moment"], rel=1e-9)

    def test_long_vector_uses_dp_only(self):
        row = check_pb3_bound(np.random.default_rng(9).random(20), exhaustive_limit=16).rows[0]
        assert "enumerated" not in row and row["holds"]

    def test_invalid_probabilities(self):
        with pytest.raises(ParameterError):
            check_pb3_bound([0.5, 1.5])


class TestSuites:

    @pytest.mark.parametrize("suite", ["coupling", "moments", "pb3"])
    def test_suites_pass(self, suite):
        assert run_suite(suite, RngStream(10)).passed

    def test_pb3_covers_thousand_vectors(self):
        assert len(run_suite("pb3", RngStream(11)).rows) == 1000

    def test_unknown_suite(self):
        with pytest.raises(ParameterError):
            run_suite("nope", RngStream(1))
