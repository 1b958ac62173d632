"""Tests of the change-point probability mass function."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtchangepoint import ConfigError, ModelConfig, StructuralParams, changepoint_pmf
from rtchangepoint.model import location_weight_mean


def pmf_vector(psi, xi, config):
    return np.array(
        [changepoint_pmf(t, xi, psi, config) for t in config.support]
    )


class TestStatedValues:
    def test_no_change_probability_at_average_speed(self):
        """logistic(1.597 - 0.061 * 0) ~= 0.832."""
        config = ModelConfig(n_items=20, boundary=5)
        psi = StructuralParams(0.009, 1.597, -0.061)
        assert changepoint_pmf(20, 0.0, psi, config) == pytest.approx(0.832, abs=1e-3)

    def test_uniform_locations_and_even_split(self):
        """psi = 0 makes locations uniform and the no-change state a coin flip."""
        config = ModelConfig(n_items=20, boundary=5)
        psi = StructuralParams(0.0, 0.0, 0.0)
        for tau in range(6, 20):
            assert changepoint_pmf(tau, 0.0, psi, config) == pytest.approx(
                0.5 / 14, abs=1e-15
            )
        assert changepoint_pmf(20, 0.0, psi, config) == pytest.approx(0.5)

    def test_support_sums_to_one(self):
        config = ModelConfig(n_items=10, boundary=3)
        psi = StructuralParams(0.7, -1.2, 0.4)
        total = pmf_vector(psi, 1.3, config).sum()
        assert total == pytest.approx(1.0, abs=1e-14)

    def test_prevalence_parameterization(self):
        """With the no-change odds set from a 15% prevalence, each of the 14
        locations carries 0.15/14 at average speed (direct two-branch
        evaluation: (1 - logistic(psi2)) / 14)."""
        config = ModelConfig(n_items=20, boundary=5)
        psi2 = np.log(0.85 / 0.15)
        psi = StructuralParams(0.0, psi2, -0.5)
        expected = (1.0 - 1.0 / (1.0 + np.exp(-psi2))) / 14.0
        assert changepoint_pmf(6, 0.0, psi, config) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.0107143, abs=1e-7)


class TestDomain:
    @pytest.mark.parametrize("tau", [0, 5, 21, -1])
    def test_tau_outside_support_raises(self, tau):
        config = ModelConfig(n_items=20, boundary=5)
        with pytest.raises(ConfigError):
            changepoint_pmf(tau, 0.0, StructuralParams(0, 0, 0), config)

    def test_boundary_edges_are_admissible(self):
        config = ModelConfig(n_items=20, boundary=5)
        psi = StructuralParams(0.1, 0.5, -0.2)
        assert changepoint_pmf(6, 0.0, psi, config) > 0
        assert changepoint_pmf(20, 0.0, psi, config) > 0


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(
        psi1=st.floats(-50, 50),
        psi2=st.floats(-10, 10),
        psi3=st.floats(-5, 5),
        xi=st.floats(-8, 8),
        n_items=st.integers(3, 40),
        data=st.data(),
    )
    def test_normalization(self, psi1, psi2, psi3, xi, n_items, data):
        boundary = data.draw(st.integers(1, n_items - 2))
        config = ModelConfig(n_items=n_items, boundary=boundary)
        psi = StructuralParams(psi1, psi2, psi3)
        total = pmf_vector(psi, xi, config).sum()
        assert abs(total - 1.0) < 1e-12

    def test_zero_location_weight_gives_equal_mass(self):
        config = ModelConfig(n_items=20, boundary=5)
        psi = StructuralParams(0.0, 0.8, -0.3)
        locations = pmf_vector(psi, 0.7, config)[:-1]
        assert locations.max() - locations.min() < 1e-14

    def test_no_change_probability_decreasing_in_speed(self):
        """Negative speed slope: faster respondents are likelier to change."""
        config = ModelConfig(n_items=12, boundary=4)
        psi = StructuralParams(0.4, 1.0, -0.7)
        grid = np.linspace(-4, 4, 33)
        values = [changepoint_pmf(12, x, psi, config) for x in grid]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_extreme_psi1_no_overflow(self):
        config = ModelConfig(n_items=30, boundary=5)
        for psi1 in (-50.0, 50.0):
            psi = StructuralParams(psi1, 0.3, 0.1)
            vec = pmf_vector(psi, -2.0, config)
            assert np.all(np.isfinite(vec))
            assert vec.sum() == pytest.approx(1.0, abs=1e-12)

    def test_location_mean_at_zero_weight(self):
        """Uniform weights over 0..13 average to 6.5."""
        assert location_weight_mean(0.0, 14) == pytest.approx(6.5, abs=1e-14)


class TestConfigValidation:
    def test_minimal_legal_configuration(self):
        config = ModelConfig(n_items=3, boundary=1)
        assert list(config.support) == [2, 3]

    @pytest.mark.parametrize(
        "n_items,boundary", [(2, 1), (20, 0), (20, 19), (20, 20), (5, 4)]
    )
    def test_invalid_configurations(self, n_items, boundary):
        with pytest.raises(ConfigError):
            ModelConfig(n_items=n_items, boundary=boundary)
