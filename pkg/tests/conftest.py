"""
Pytest configuration for scalelab tests
"""

import os
import sys

import numpy as np
import pytest

# Add the project root directory to the Python path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.fields import Grid, PhysicalParams
from utils.schrodinger import GAUSSIAN_PACKET, HARMONIC, AnalyticState, PotentialSpec, discrete_eigenstates


@pytest.fixture
def params():
    """
    Unit mass with D = 1/2

    Returns:
        PhysicalParams with hbar = 1
    """
    return PhysicalParams(m=1.0, D=0.5, c=1.0)


@pytest.fixture
def grid():
    """
    Desk-scale 1-D dirichlet grid

    Returns:
        Grid on [-10, 10] with 512 nodes
    """
    return Grid.uniform(-10.0, 10.0, 512)


@pytest.fixture
def small_grid():
    """
    Coarse 1-D grid for quick solver runs

    Returns:
        Grid on [-10, 10] with 256 nodes
    """
    return Grid.uniform(-10.0, 10.0, 256)


@pytest.fixture
def periodic_grid():
    """
    Periodic grid over one period of length 2 pi

    Returns:
        Grid with 64 nodes
    """
    return Grid.periodic(0.0, 2 * np.pi, 64)


@pytest.fixture
def harmonic():
    """
    Harmonic potential with omega = 1

    Returns:
        PotentialSpec
    """
    return PotentialSpec(HARMONIC, omega=1.0)


@pytest.fixture
def packet_state():
    """
    Minimum-uncertainty packet moving right

    Returns:
        AnalyticState centred at x = -1 with sigma0 = 1 and k0 = 1
    """
    return AnalyticState(GAUSSIAN_PACKET, x0=(-1.0,), sigma0=(1.0,), k0=(1.0,))


@pytest.fixture
def ground_state(small_grid, harmonic, params):
    """
    Discrete oscillator ground state on the coarse grid

    Returns:
        Normalized ComplexField
    """
    _, states = discrete_eigenstates(small_grid, harmonic, params, 1)
    return states[0]


@pytest.fixture
def output_dir(tmp_path):
    """
    Temporary directory for run folders

    Returns:
        Path as a string
    """
    path = tmp_path / "runs"
    path.mkdir()
    return str(path)
