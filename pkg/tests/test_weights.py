"""Tests for the latent weight constructions."""

import os
import tempfile

import numpy as np
import pytest
from scipy import stats

from app.models.errors import OutputError, ParameterError, ShapeError
from app.services.samplers import Pareto, RngStream, Uniform
from app.services.weights import (
    FullDependence,
    GenericPolar,
    HrvMixture,
    SingleFactor,
    WeightMatrix,
    read_weights_csv,
    sample_weights,
    scaled_weights,
    write_weights_csv,
)


@pytest.fixture
def hrv_weights():
    return sample_weights(HrvMixture(1.1, 1.3), 20_000, RngStream(8), debug=True)


class TestHrvMixture:

    def test_shape_and_sign(self, hrv_weights):
        assert hrv_weights.w.shape == (20_000, 2)
        assert np.all(hrv_weights.w >= 0)

    def test_components_sit_where_expected(self, hrv_weights):
        w, comp = hrv_weights.w, hrv_weights.components
        assert set(np.unique(comp)) == {1, 2}
        ratio = w[:, 1] / w[:, 0]
        assert np.all(ratio[comp == 1] >= 2 / 3 - 1e-12)
        assert np.all(ratio[comp == 1] <= 1.5 + 1e-12)
        assert np.all(ratio[comp == 2] > 1.5)

    def test_component_split_is_balanced(self, hrv_weights):
        share = np.mean(hrv_weights.components == 1)
        assert abs(share - 0.5) < 4 * np.sqrt(0.25 / 20_000)

    def test_radius_law(self, hrv_weights):
        spec = HrvMixture(1.1, 1.3)
        result = stats.kstest(hrv_weights.radius(1), spec.radius_cdf)
        assert result.pvalue > 1e-4

    def test_components_absent_without_debug(self):
        w = sample_weights(HrvMixture(1.1, 1.3), 10, RngStream(1))
        assert w.components is None

    def test_alpha0_below_alpha_rejected(self):
        with pytest.raises(ParameterError):
            HrvMixture(1.5, 1.2)

    def test_detectable(self):
        assert HrvMixture(1.1, 1.3).detectable
        assert not HrvMixture(1.1, 2.5).detectable


class TestOtherModels:

    def test_full_dependence_columns_equal(self):
        w = sample_weights(FullDependence(1.0), 1000, RngStream(2))
        assert np.array_equal(w.w[:, 0], w.w[:, 1])
        assert w.w.min() >= 1.0

    def test_full_dependence_radius_law(self):
        spec = FullDependence(1.5)
        w = sample_weights(spec, 10_000, RngStream(2))
        assert stats.kstest(w.radius(1), spec.radius_cdf).pvalue > 1e-4

    def test_single_factor_on_cone(self):
        w = sample_weights(SingleFactor(1.4), 5000, RngStream(3))
        ratio = w.w[:, 1] / w.w[:, 0]
        assert np.all((ratio >= 2 / 3 - 1e-12) & (ratio <= 1.5 + 1e-12))

    def test_single_factor_rejects_wide_angle(self):
        with pytest.raises(ParameterError):
            SingleFactor(1.4, angle=Uniform(0.0, 2.0))

    def test_generic_polar_three_layers(self):
        def angle(gen, n):
            return gen.dirichlet([1.0, 1.0, 1.0], n)

        spec = GenericPolar(Pareto(2.0), angle, L=3)
        w = sample_weights(spec, 500, RngStream(4))
        assert w.w.shape == (500, 3)
        assert np.all(w.radius(1) >= 1.0 - 1e-12)

    def test_generic_polar_checks_angle_shape(self):
        spec = GenericPolar(Pareto(2.0), lambda gen, n: np.full((n, 2), 0.5), L=3)
        with pytest.raises(ShapeError):
            sample_weights(spec, 10, RngStream(4))

    def test_zero_nodes(self):
        w = sample_weights(SingleFactor(1.4), 0, RngStream(1))
        assert w.w.shape == (0, 2)

    def test_deterministic(self):
        a = sample_weights(HrvMixture(1.1, 2.5), 100, RngStream(77))
        b = sample_weights(HrvMixture(1.1, 2.5), 100, RngStream(77))
        assert np.array_equal(a.w, b.w)


class TestWeightMatrix:

    def test_rejects_negative(self):
        with pytest.raises(ParameterError):
            WeightMatrix(np.array([[1.0, -1.0]]))

    def test_rejects_vector(self):
        with pytest.raises(ShapeError):
            WeightMatrix(np.array([1.0, 2.0]))

    def test_scaled_weights(self):
        w = WeightMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert np.array_equal(scaled_weights(w, [2.0, 0.5]).w, [[2.0, 1.0], [6.0, 2.0]])
        with pytest.raises(ShapeError):
            scaled_weights(w, [1.0])

    def test_csv_keeps_full_precision(self):
        w = sample_weights(SingleFactor(1.4), 50, RngStream(6))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_weights_csv(w, os.path.join(tmp, "weights.csv"))
            with open(path) as fh:
                assert fh.readline().strip() == "node,w1,w2"
            assert np.allclose(read_weights_csv(path).w, w.w, rtol=1e-15, atol=0)

    def test_missing_file(self):
        with pytest.raises(OutputError):
            read_weights_csv("/nonexistent/weights.csv")
