"""
Unit tests for grids, fields and finite-difference operators
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from tests.test_config import MIN_ORDER
from utils.errors import AlignmentError, CadenceError, ConfigError, FieldError, GridError
from utils.fields import (ComplexField, Grid, PhysicalParams, RealField, derivative, gradient, interior_mask,
                          laplacian, read_field_binary, resolution_multiple, snapshot_spacing, two_sided_derivative,
                          write_field_binary, write_field_csv)


class TestGrid:
    """Test grid construction and quadrature"""

    def test_too_few_points(self):
        """Test that fewer than eight nodes is rejected"""
        with pytest.raises(GridError):
            Grid.uniform(0.0, 1.0, 7)

    def test_inverted_bounds(self):
        """Test that upper must exceed lower"""
        with pytest.raises(GridError):
            Grid.uniform(1.0, 1.0, 16)

    def test_unknown_boundary(self):
        """Test that an unknown boundary name is rejected"""
        with pytest.raises(GridError):
            Grid.uniform(0.0, 1.0, 16, boundary="neumann")

    def test_spacing_and_shape(self, grid):
        """Test node spacing on [-10, 10] with 512 nodes"""
        assert grid.shape == (512,)
        assert grid.spacing[0] == pytest.approx(20.0 / 511)
        assert grid.extent == (20.0,)

    def test_periodic_extent(self, periodic_grid):
        """Test that a periodic grid tiles exactly one period"""
        assert periodic_grid.is_periodic
        assert periodic_grid.extent[0] == pytest.approx(2 * np.pi)
        assert periodic_grid.spacing[0] == pytest.approx(2 * np.pi / 64)

    def test_gaussian_integral(self, grid):
        """Test trapezoidal quadrature of exp(-x^2)"""
        x = grid.axes[0]
        assert grid.integrate(np.exp(-x ** 2)) == pytest.approx(np.sqrt(np.pi), abs=1e-10)

    def test_two_dimensional_integral(self):
        """Test quadrature of a separable gaussian on a square grid"""
        grid = Grid.uniform(-8.0, 8.0, 129, dimension=2)
        x, y = grid.mesh()
        assert grid.integrate(np.exp(-x ** 2 - y ** 2)) == pytest.approx(np.pi, abs=1e-8)

    def test_integrate_wrong_shape(self, grid):
        """Test that quadrature checks the array shape"""
        with pytest.raises(FieldError):
            grid.integrate(np.ones(10))

    def test_coarsened_keeps_domain(self, grid):
        """Test that coarsening keeps bounds and boundary"""
        coarse = grid.coarsened(128)
        assert coarse.lower == grid.lower
        assert coarse.upper == grid.upper
        assert coarse.n == (128,)


class TestFields:
    """Test field containers and physical parameters"""

    def test_non_finite_values_rejected(self, grid):
        """Test that NaN values cannot enter a field"""
        values = np.zeros(grid.shape, dtype=complex)
        values[3] = np.nan
        with pytest.raises(FieldError):
            ComplexField(grid, values)

    def test_wrong_shape_rejected(self, grid):
        """Test that values must match the grid shape"""
        with pytest.raises(FieldError):
            RealField(grid, np.zeros(100))

    def test_values_are_read_only(self, grid):
        """Test that field values cannot be modified in place"""
        field = RealField(grid, np.zeros(grid.shape))
        with pytest.raises(ValueError):
            field.values[0] = 1.0

    def test_hbar_from_D(self):
        """Test the generalized Compton relation"""
        params = PhysicalParams(m=2.0, D=0.25, c=1.0)
        assert params.hbar == pytest.approx(1.0)
        assert params.compton_length == pytest.approx(0.5)
        assert PhysicalParams.from_hbar(m=1.0, hbar=1.0).D == pytest.approx(0.5)

    def test_invalid_mass(self):
        """Test that a non-positive mass is a configuration error"""
        with pytest.raises(ConfigError) as excinfo:
            PhysicalParams(m=0.0)
        # Verify the problem names the parameter
        assert any("m must be positive" in problem for problem in excinfo.value.problems)


class TestOperators:
    """Test derivative stencils"""

    def test_derivative_of_quadratic(self, grid):
        """Test that the second-order gradient is exact for x^2, edges included"""
        x = grid.axes[0]
        assert np.allclose(derivative(x ** 2, grid, 0), 2 * x, atol=1e-8)

    def test_laplacian_of_quadratic(self, grid):
        """Test that the one-sided boundary rows keep the laplacian exact for x^2"""
        x = grid.axes[0]
        assert np.allclose(laplacian(x ** 2, grid), 2.0, atol=1e-6)

    def test_periodic_laplacian_of_sine(self, periodic_grid):
        """Test the periodic laplacian against the three-point symbol"""
        x = periodic_grid.axes[0]
        h = periodic_grid.spacing[0]
        symbol = (2 * np.cos(h) - 2) / h ** 2
        assert np.allclose(laplacian(np.sin(x), periodic_grid), symbol * np.sin(x), atol=1e-12)

    def test_refinement_order_on_sine(self):
        """Test that gradient and laplacian errors on sin(x) shrink as h^2, edges included"""
        gradient_errors, laplacian_errors = [], []
        for n in (41, 81, 161):
            grid = Grid.uniform(0.0, 3.0, n)
            x = grid.axes[0]
            gradient_errors.append(np.max(np.abs(gradient(np.sin(x), grid)[0] - np.cos(x))))
            laplacian_errors.append(np.max(np.abs(laplacian(np.sin(x), grid) + np.sin(x))))

        # Verify the observed order between successive halvings of h
        for errors in (gradient_errors, laplacian_errors):
            orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
            assert np.all(orders >= MIN_ORDER)
            assert np.all(orders <= 2.2)

    def test_interior_mask(self, grid):
        """Test that the margin excludes the outer nodes only"""
        mask = interior_mask(grid, margin=2)
        assert not mask[:2].any()
        assert not mask[-2:].any()
        assert mask[2:-2].all()


class TestResolution:
    """Test time-resolution helpers"""

    def test_integer_multiple(self):
        """Test an aligned resolution"""
        assert resolution_multiple(1e-5, 3e-5) == 3

    def test_misaligned_resolution(self):
        """Test that a half-step resolution is rejected"""
        with pytest.raises(AlignmentError):
            resolution_multiple(1e-5, 2.5e-5)

    def test_uniform_cadence(self):
        """Test the spacing of evenly stored snapshots"""
        assert snapshot_spacing([0.0, 0.1, 0.2, 0.3]) == pytest.approx(0.1)

    def test_non_uniform_cadence(self):
        """Test that irregular snapshot times are rejected"""
        with pytest.raises(CadenceError):
            snapshot_spacing([0.0, 0.1, 0.25])

    def test_two_sided_derivative_of_line(self):
        """Test that forward and backward quotients agree on a straight line"""
        samples = 3.0 * np.arange(11) * 0.01
        result = two_sided_derivative(samples, base_step=0.01, dt=0.02)
        # Verify both sides give the slope
        assert np.allclose(result.forward, 3.0)
        assert np.allclose(result.backward, 3.0)
        assert result.times[0] == pytest.approx(0.02)
        assert len(result.times) == 7

    def test_two_sided_derivative_of_kink(self):
        """Test that |t| has different forward and backward quotients at the kink"""
        times = np.linspace(-0.05, 0.05, 11)
        result = two_sided_derivative(np.abs(times), base_step=0.01, dt=0.01, t0=-0.05)
        kink = int(np.argmin(np.abs(result.times)))
        assert result.forward[kink] == pytest.approx(1.0)
        assert result.backward[kink] == pytest.approx(-1.0)

    def test_two_sided_derivative_of_brownian_path(self):
        """Test that difference quotients of a Brownian path have variance 2D/dt"""
        D, delta = 0.5, 1e-4
        rng = np.random.default_rng(7)
        samples = np.concatenate([[0.0], np.cumsum(rng.standard_normal(100000) * np.sqrt(2 * D * delta))])

        # Verify at several resolutions
        for k in (1, 4, 16):
            result = two_sided_derivative(samples, base_step=delta, dt=k * delta)
            assert np.var(result.forward) == pytest.approx(2 * D / (k * delta), rel=0.08)
            assert np.var(result.backward) == pytest.approx(2 * D / (k * delta), rel=0.08)


class TestFieldFiles:
    """Test field output formats"""

    def test_binary_round_trip(self, periodic_grid, tmp_path):
        """Test that a complex field survives a binary record bit for bit"""
        x = periodic_grid.axes[0]
        field = ComplexField(periodic_grid, np.exp(1j * x), t=0.25)
        path = write_field_binary(field, str(tmp_path / "psi.bin"))
        loaded = read_field_binary(path)
        assert loaded.grid == periodic_grid
        assert loaded.t == 0.25
        assert np.array_equal(loaded.values, field.values)

    def test_binary_rejects_foreign_file(self, tmp_path):
        """Test that a file without the magic header is rejected"""
        path = tmp_path / "other.bin"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(FieldError):
            read_field_binary(str(path))

    def test_csv_columns(self, periodic_grid, tmp_path):
        """Test the CSV header of a complex field"""
        field = ComplexField(periodic_grid, np.ones(periodic_grid.shape))
        path = write_field_csv(field, str(tmp_path / "psi.csv"))
        with open(path) as f:
            lines = f.read().splitlines()
        assert lines[0] == "x,re,im"
        assert len(lines) == 65
