"""
Unit tests for the identity checks
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from tests.test_config import MIN_ORDER
from utils.errors import FieldError
from utils.fields import ComplexField, Grid, PhysicalParams, RealField, gradient, interior_mask, laplacian
from utils.hydrodynamics import decompose
from utils.schrodinger import FREE, PLANE_WAVE, AnalyticState, PotentialSpec, evolve_series
from utils.verify import (
    IdentityReport,
    compton_relation_check,
    covariant_derivative,
    geodesic_equation_residual,
    hamiltonian_equivalence,
    refinement_order,
    refinement_study,
    remarkable_identity_residual,
    run_identity_suite,
    strong_covariance_check,
    two_valued_derivatives,
    two_valued_recombination_check,
)


class TestIdentityReport:
    """Test pass and fail rules of identity reports"""

    def test_exact_residual_passes(self):
        """Test that a residual below the exact floor always passes"""
        assert IdentityReport("x", 0.0, 1e-12, 0.1, 0.0, tolerance=0.0).passed

    def test_tolerance_exceeded(self):
        """Test that a residual above its tolerance fails"""
        assert not IdentityReport("x", 1.0, 1.0, 0.1, 0.0, tolerance=0.5).passed

    def test_low_order_fails(self):
        """Test that a first-order refinement fails"""
        report = IdentityReport("x", 1e-3, 1e-3, 0.1, 0.0, order=1.0)
        assert not report.passed
        assert IdentityReport("x", 1e-3, 1e-3, 0.1, 0.0, order=MIN_ORDER + 0.1).passed

    def test_infinite_tolerance_serialized_as_null(self):
        """Test that an unbounded tolerance is written as null"""
        assert IdentityReport("x", 1.0, 1.0, 0.1, 0.0).to_dict()["tolerance"] is None


class TestRefinement:
    """Test observed convergence orders"""

    def test_second_order(self):
        """Test that halving h with a quartered error gives order two"""
        coarse = IdentityReport("x", 4e-2, 4e-2, 0.2, 0.0)
        fine = IdentityReport("x", 1e-2, 1e-2, 0.1, 0.0)
        assert refinement_order(coarse, fine) == pytest.approx(2.0)
        assert refinement_study([coarse, fine]).order == pytest.approx(2.0)

    def test_time_refinement(self):
        """Test that the order falls back to dt when h is unchanged"""
        coarse = IdentityReport("x", 4e-2, 4e-2, 0.1, 0.02)
        fine = IdentityReport("x", 1e-2, 1e-2, 0.1, 0.01)
        assert refinement_order(coarse, fine) == pytest.approx(2.0)

    def test_not_a_refinement(self):
        """Test that a coarser second level is refused"""
        coarse = IdentityReport("x", 4e-2, 4e-2, 0.1, 0.0)
        fine = IdentityReport("x", 1e-2, 1e-2, 0.2, 0.0)
        with pytest.raises(FieldError):
            refinement_order(coarse, fine)

    def test_single_level(self):
        """Test that a study needs two levels"""
        with pytest.raises(FieldError):
            refinement_study([IdentityReport("x", 1.0, 1.0, 0.1, 0.0)])


class TestIdentities:
    """Test individual identity checks"""

    def test_compton_relation(self, params):
        """Test hbar = 2mD to a few ulps"""
        report = compton_relation_check(PhysicalParams(m=3.0, D=0.7, c=2.0))
        assert report.passed
        assert compton_relation_check(params).norm_max == 0.0

    def test_covariant_derivative_of_linear_field(self, params):
        """Test d/dt x = V for a static linear field"""
        grid = Grid.uniform(-1.0, 1.0, 101)
        x = grid.axes[0]
        series = [ComplexField(grid, x, t) for t in (0.0, 1.0, 2.0)]
        result = covariant_derivative(series, 0.7, params).values
        assert np.allclose(result, 0.7, atol=1e-10)

    def test_covariant_derivative_of_quadratic_field(self, params):
        """Test d/dt x^2 = -2iD for a static quadratic field at rest"""
        grid = Grid.uniform(-1.0, 1.0, 101)
        x = grid.axes[0]
        series = [ComplexField(grid, x ** 2, t) for t in (0.0, 1.0, 2.0)]
        result = covariant_derivative(series, 0.0, params).values
        inside = interior_mask(grid, 1)
        assert np.allclose(result[inside], -2j * params.D, atol=1e-10)

    def test_remarkable_identity_refines(self):
        """Test second-order convergence of the remarkable identity for a generic R"""
        levels = []
        for n in (65, 129):
            grid = Grid.uniform(0.0, 2 * np.pi, n)
            R = RealField(grid, 1.0 + 0.3 * np.sin(grid.axes[0]))
            levels.append(remarkable_identity_residual(R, 0.7, tolerance=math.inf))
        assert refinement_study(levels).order >= MIN_ORDER

    def test_remarkable_identity_needs_positive_R(self):
        """Test that R <= 0 is refused"""
        grid = Grid.uniform(-1.0, 1.0, 33)
        with pytest.raises(FieldError):
            remarkable_identity_residual(RealField(grid, grid.axes[0]), 1.0)

    def test_strong_covariance(self, grid, packet_state, params):
        """Test that H equals m V.V - imD div V - L node by node"""
        psi = packet_state.evaluate(grid, params)
        assert strong_covariance_check(psi, PotentialSpec(FREE), params).passed

    def test_two_valued_recombination(self, grid, packet_state, params):
        """Test that forward and backward derivatives recombine into the covariant derivative"""
        psi = packet_state.evaluate(grid, params)
        series = evolve_series(psi, PotentialSpec(FREE), params, dt=1e-3, steps=2)
        hydro = decompose(series[1], params)
        report = two_valued_recombination_check(series, hydro.V + hydro.U, hydro.V - hydro.U, params)
        assert report.passed
        assert report.tolerance < 1e-9

    def test_two_valued_derivatives_differ_by_diffusion(self, grid, packet_state, params):
        """Test d+ - d- = (v+ - v-).grad + 2D Lap with constant drifts"""
        psi = packet_state.evaluate(grid, params)
        series = evolve_series(psi, PotentialSpec(FREE), params, dt=1e-3, steps=2)
        forward, backward = two_valued_derivatives(series, 1.0, -1.0, params)
        middle = series[1].values
        expected = 2.0 * gradient(middle, grid)[0] + 2.0 * params.D * laplacian(middle, grid)
        assert np.allclose(forward.values - backward.values, expected, atol=1e-10)

    def test_geodesic_equation_of_plane_wave(self, periodic_grid, params):
        """Test that a plane wave is a free geodesic flow"""
        psi = AnalyticState(PLANE_WAVE, k=(1.0,)).evaluate(periodic_grid, params)
        series = evolve_series(psi, PotentialSpec(FREE), params, dt=1e-4, steps=2)
        report = geodesic_equation_residual(series, PotentialSpec(FREE), params, tolerance=1e-8)
        assert report.passed
        assert report.name == "geodesic-equation"

    def test_hamiltonian_equivalence_of_eigenstate(self, ground_state, harmonic, params):
        """Test H psi = 2imD dpsi/dt for a stationary state"""
        series = evolve_series(ground_state, harmonic, params, dt=1e-3, steps=2)
        report = hamiltonian_equivalence(series, harmonic, params, tolerance=1e-6)
        assert report.passed
        assert report.dt == pytest.approx(1e-3)


class TestSuite:
    """Test the scenario identity suites"""

    def test_unknown_scenario(self, params):
        """Test that only identity scenarios have a suite"""
        with pytest.raises(FieldError):
            run_identity_suite("double-slit", params)

    def test_plane_wave_suite(self, params):
        """Test that the plane-wave identities hold to rounding"""
        reports = {report.name: report for report in run_identity_suite("plane-wave", params)}
        for name in ("geodesic-equation", "hamiltonian-equivalence", "continuity", "euler", "strong-covariance"):
            assert reports[name].passed, reports[name].to_dict()
        assert reports["compton-relation"].passed

    def test_thread_count_does_not_change_reports(self, params):
        """Test identical reports with one and two worker threads"""
        serial = [r.to_dict() for r in run_identity_suite("plane-wave", params, threads=1)]
        threaded = [r.to_dict() for r in run_identity_suite("plane-wave", params, threads=2)]
        assert serial == threaded
