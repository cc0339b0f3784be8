"""
Unit tests for scale scans and fractal dimension fits
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from tests.test_config import BROWNIAN_DIMENSION, STRAIGHT_DIMENSION
from utils.errors import LadderError, ScaleScanError
from utils.fractal import (
    ScaleScan,
    exclude_transition,
    fit_fractal_dimension,
    fit_power_law,
    geometric_ladder,
    mean_square_velocity_scan,
    path_length,
    scan_path_length,
    transition_scale,
    velocity_scale_decomposition,
)
from utils.geodesics import GAUSSIAN, FractalPath, NoiseSpec, generate_fractal_paths


@pytest.fixture
def brownian_paths(params):
    """
    Driftless paths at base step 1e-4 over unit time

    Returns:
        List of 32 FractalPath objects
    """
    return generate_fractal_paths(32, 0.0, params, delta=1e-4, T=1.0, noise=NoiseSpec(GAUSSIAN, 2024))


class TestLadder:
    """Test resolution ladders and scans"""

    def test_geometric_ladder(self):
        """Test powers of two above the base step"""
        assert np.allclose(geometric_ladder(1e-3, 4), [1e-3, 2e-3, 4e-3, 8e-3, 16e-3])

    def test_scan_must_increase(self):
        """Test that a decreasing ladder is refused"""
        with pytest.raises(ScaleScanError):
            ScaleScan("length", [2.0, 1.0], [1.0, 1.0], [0.0, 0.0])

    def test_window(self):
        """Test that a window keeps resolutions inside its bounds"""
        scan = ScaleScan("w", [1.0, 2.0, 4.0, 8.0], [4.0, 3.0, 2.0, 1.0], np.zeros(4))
        assert scan.window(upper=4.0).resolutions.tolist() == [1.0, 2.0, 4.0]

    def test_exclude_transition(self):
        """Test that only the octave around tau is dropped"""
        ladder = np.array([0.0025, 0.005, 0.01, 0.02, 0.04])
        scan = ScaleScan("w", ladder, np.ones(5), np.zeros(5))
        assert exclude_transition(scan, 0.01).resolutions.tolist() == [0.0025, 0.005, 0.02, 0.04]


class TestFits:
    """Test power-law and dimension fits"""

    def test_exact_power_law(self):
        """Test recovery of a known exponent and prefactor"""
        ladder = geometric_ladder(1e-3, 5)
        scan = ScaleScan("length", ladder, 3.0 * ladder ** -0.5, np.zeros(6))
        fit = fit_power_law(scan)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert fit_fractal_dimension(scan).dimension == pytest.approx(2.0, abs=1e-10)

    def test_too_few_points(self):
        """Test that fits need at least five resolutions"""
        scan = ScaleScan("length", [1.0, 2.0, 4.0], [1.0, 0.7, 0.5], np.zeros(3))
        with pytest.raises(ScaleScanError):
            fit_power_law(scan)

    def test_non_positive_values(self):
        """Test that a log fit refuses zero values"""
        ladder = geometric_ladder(1.0, 5)
        scan = ScaleScan("length", ladder, np.r_[1.0, 0.0, 1.0, 1.0, 1.0, 1.0], np.zeros(6))
        with pytest.raises(ScaleScanError):
            fit_power_law(scan)

    def test_brownian_dimension(self, brownian_paths):
        """Test that driftless paths have fractal dimension two"""
        scan = scan_path_length(brownian_paths, geometric_ladder(1e-4, 7))
        fit = fit_fractal_dimension(scan)
        assert BROWNIAN_DIMENSION[0] < fit.dimension < BROWNIAN_DIMENSION[1]

    def test_straight_dimension(self, params):
        """Test that a straight line has fractal dimension one"""
        path = FractalPath(np.linspace(0.0, 1.0, 1025), 1.0 / 1024, params)
        assert path_length(path, 1.0 / 256) == pytest.approx(1.0)
        fit = fit_fractal_dimension(scan_path_length([path], geometric_ladder(1.0 / 1024, 6)))
        assert STRAIGHT_DIMENSION[0] < fit.dimension < STRAIGHT_DIMENSION[1]

    def test_mean_square_velocity(self, brownian_paths, params):
        """Test <(dX/dt)^2> = 2D/dt"""
        ladder = geometric_ladder(1e-4, 7)
        scan = mean_square_velocity_scan(brownian_paths, ladder)
        assert fit_power_law(scan).slope == pytest.approx(-1.0, abs=0.05)
        assert scan.values[0] == pytest.approx(2 * params.D / 1e-4, rel=0.02)


class TestVelocityDecomposition:
    """Test the split into large-scale velocity and fluctuation"""

    def test_transition_scale(self, params):
        """Test tau = hbar/(m v^2)"""
        assert transition_scale(params, 10.0) == pytest.approx(0.01)
        assert math.isinf(transition_scale(params, 0.0))

    def test_ladder_must_bracket_tau(self, params):
        """Test that a ladder entirely below tau is refused"""
        paths = generate_fractal_paths(2, 10.0, params, 1e-4, 0.1, NoiseSpec(GAUSSIAN, 1))
        with pytest.raises(LadderError):
            velocity_scale_decomposition(paths, 0.01, geometric_ladder(1e-4, 4))

    def test_drifting_paths(self, params):
        """Test v close to the drift and w ~ dt^(-1/2) below tau"""
        tau = transition_scale(params, 10.0)
        paths = generate_fractal_paths(16, 10.0, params, 1e-4, 2.0, NoiseSpec(GAUSSIAN, 99))
        result = velocity_scale_decomposition(paths, tau, geometric_ladder(1e-4, 10))
        assert result.v == pytest.approx(10.0, abs=1.0)
        # Verify the fluctuation dominates at the finest resolution
        assert result.w[0] == pytest.approx(math.sqrt(2 * params.D / 1e-4), rel=0.05)
        assert result.w[-1] < result.v
        slope = fit_power_law(result.scan().window(upper=tau)).slope
        assert -0.55 < slope < -0.45
