"""
Time-dependent Schrödinger integration and quantum operators
Crank-Nicolson evolution, analytic reference states, the canonical operator
set, eigenbasis expansions and projective measurement
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import eigsh, splu
from scipy.special import eval_hermite, factorial

from utils.errors import (
    CadenceError,
    ConfigError,
    GeometryError,
    MeasurementImpossibleError,
    NormalizationError,
    SolverError,
    StepSizeError,
)
from utils.fields import (
    ComplexField,
    Grid,
    PhysicalParams,
    derivative,
    laplacian,
    second_derivative,
    snapshot_spacing,
)

logger = logging.getLogger("scalelab.schrodinger")

NORM_TOLERANCE = 1e-6
PROJECTION_TOLERANCE = 1e-12

FREE = "free"
HARMONIC = "harmonic"
DOUBLE_SLIT = "double-slit"
TABULATED = "tabulated"
POTENTIAL_KINDS = (FREE, HARMONIC, DOUBLE_SLIT, TABULATED)

PLANE_WAVE = "plane-wave"
GAUSSIAN_PACKET = "gaussian-packet"
SHO_EIGENSTATE = "sho-eigenstate"
STATE_KINDS = (PLANE_WAVE, GAUSSIAN_PACKET, SHO_EIGENSTATE)

SLIT_CHOICES = ("both", "upper", "lower")


def _per_axis(values: Sequence[float], dimension: int) -> np.ndarray:
    array = np.atleast_1d(np.asarray(values, dtype=float))
    if array.size == 1:
        return np.repeat(array, dimension)
    if array.size != dimension:
        raise ConfigError([f"expected {dimension} components, got {array.size}"])
    return array


@dataclass(frozen=True)
class PotentialSpec:
    """
    External potential descriptor

    The double-slit barrier is a slab of the given height and width across the
    x axis at barrier_position, with two openings of slit_width centred at
    y = +/- slit_separation/2. `slits` closes one of them for control runs.
    """

    kind: str = FREE
    omega: float = 1.0
    slit_width: float = 0.5
    slit_separation: float = 4.0
    barrier_height: float = 400.0
    barrier_width: float = 0.25
    barrier_position: float = 0.0
    slits: str = "both"
    table: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        problems = []
        if self.kind not in POTENTIAL_KINDS:
            problems.append(f"unknown potential kind '{self.kind}'")
        if self.kind == HARMONIC and not self.omega > 0:
            problems.append("harmonic omega must be positive")
        if self.kind == DOUBLE_SLIT:
            if not (self.slit_width > 0 and self.barrier_width > 0 and self.barrier_height > 0):
                problems.append("slit width, barrier width and height must be positive")
            if not self.slit_separation > self.slit_width:
                problems.append("slit separation must exceed slit width")
            if self.slits not in SLIT_CHOICES:
                problems.append(f"slits must be one of {SLIT_CHOICES}")
        if self.kind == TABULATED and self.table is None:
            problems.append("tabulated potential needs a value table")
        if problems:
            raise ConfigError(problems)

    def with_slits(self, slits: str) -> "PotentialSpec":
        return PotentialSpec(self.kind, self.omega, self.slit_width, self.slit_separation,
                             self.barrier_height, self.barrier_width, self.barrier_position,
                             slits, self.table)

    def check_geometry(self, grid: Grid) -> None:
        """Raise GeometryError when the barrier or slits leave the grid"""
        if self.kind == TABULATED and np.shape(self.table) != grid.shape:
            raise GeometryError(f"Potential table shape {np.shape(self.table)} does not match grid {grid.shape}")
        if self.kind != DOUBLE_SLIT:
            return
        if grid.dimension != 2:
            raise GeometryError("Double-slit barrier needs a 2-D grid")
        hx, hy = grid.spacing
        left = self.barrier_position - self.barrier_width / 2
        right = self.barrier_position + self.barrier_width / 2
        if not (grid.lower[0] < left and right < grid.upper[0]):
            raise GeometryError(f"Barrier [{left}, {right}] outside x range {grid.lower[0]}..{grid.upper[0]}")
        reach = self.slit_separation / 2 + self.slit_width / 2
        if not (grid.lower[1] < -reach and reach < grid.upper[1]):
            raise GeometryError(f"Slits reach |y|={reach} outside y range {grid.lower[1]}..{grid.upper[1]}")
        if self.barrier_width < hx or self.slit_width < hy:
            raise GeometryError("Barrier width and slit width must each span at least one grid spacing")

    def evaluate(self, grid: Grid, params: PhysicalParams) -> np.ndarray:
        """Potential values at the grid nodes"""
        self.check_geometry(grid)
        if self.kind == FREE:
            return np.zeros(grid.shape)
        if self.kind == HARMONIC:
            r2 = sum(c ** 2 for c in grid.mesh())
            return 0.5 * params.m * self.omega ** 2 * r2
        if self.kind == TABULATED:
            return np.array(self.table, dtype=float)

        x, y = grid.mesh()
        slab = np.abs(x - self.barrier_position) <= self.barrier_width / 2
        upper = np.abs(y - self.slit_separation / 2) < self.slit_width / 2
        lower = np.abs(y + self.slit_separation / 2) < self.slit_width / 2
        opening = np.zeros(grid.shape, dtype=bool)
        if self.slits in ("both", "upper"):
            opening |= upper
        if self.slits in ("both", "lower"):
            opening |= lower
        return np.where(slab & ~opening, self.barrier_height, 0.0)


@dataclass(frozen=True)
class AnalyticState:
    """
    Closed-form reference states

    plane-wave: exp(i(k.r - wt)) normalized over the grid volume, w = hbar k^2/2m.
    gaussian-packet: exact free evolution of a minimum-uncertainty packet with
    position spread sigma0 per axis and mean wavevector k0.
    sho-eigenstate: harmonic oscillator state n along x (ground state along y in 2-D).
    """

    kind: str
    k: Tuple[float, ...] = (1.0,)
    x0: Tuple[float, ...] = (0.0,)
    sigma0: Tuple[float, ...] = (1.0,)
    k0: Tuple[float, ...] = (0.0,)
    n: int = 0
    omega: float = 1.0

    def __post_init__(self):
        for name in ("k", "x0", "sigma0", "k0"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(getattr(self, name))))
        problems = []
        if self.kind not in STATE_KINDS:
            problems.append(f"unknown state kind '{self.kind}'")
        if self.n < 0:
            problems.append("sho-eigenstate n must be >= 0")
        if not self.omega > 0:
            problems.append("omega must be positive")
        if any(s <= 0 for s in self.sigma0):
            problems.append("sigma0 must be positive")
        if problems:
            raise ConfigError(problems)

    def energy(self, params: PhysicalParams, dimension: int = 1) -> float:
        """Energy eigenvalue (mean energy for packets)"""
        hbar, m = params.hbar, params.m
        if self.kind == PLANE_WAVE:
            k = _per_axis(self.k, dimension)
            return hbar ** 2 * float(np.sum(k ** 2)) / (2 * m)
        if self.kind == GAUSSIAN_PACKET:
            k0 = _per_axis(self.k0, dimension)
            sigma = _per_axis(self.sigma0, dimension)
            return hbar ** 2 * float(np.sum(k0 ** 2 + 1.0 / (4 * sigma ** 2))) / (2 * m)
        return hbar * self.omega * (self.n + 0.5 * dimension)

    def frequency(self, params: PhysicalParams, dimension: int = 1) -> float:
        return self.energy(params, dimension) / params.hbar

    def evaluate(self, grid: Grid, params: PhysicalParams, t: float = 0.0) -> ComplexField:
        """Sample the state on a grid at time t"""
        coords = grid.mesh()
        if self.kind == PLANE_WAVE:
            k = _per_axis(self.k, grid.dimension)
            omega = self.frequency(params, grid.dimension)
            phase = sum(ki * c for ki, c in zip(k, coords)) - omega * t
            volume = float(np.prod(grid.extent))
            return ComplexField(grid, np.exp(1j * phase) / np.sqrt(volume), t)

        if self.kind == GAUSSIAN_PACKET:
            values = np.ones(grid.shape, dtype=complex)
            x0 = _per_axis(self.x0, grid.dimension)
            k0 = _per_axis(self.k0, grid.dimension)
            sigma = _per_axis(self.sigma0, grid.dimension)
            for c, centre, kc, s in zip(coords, x0, k0, sigma):
                values *= _free_gaussian(c, centre, kc, s, t, params)
            return ComplexField(grid, values, t)

        values = _sho_profile(coords[0], self.n, self.omega, params)
        for c in coords[1:]:
            values = values * _sho_profile(c, 0, self.omega, params)
        energy = self.energy(params, grid.dimension)
        return ComplexField(grid, values * np.exp(-1j * energy * t / params.hbar), t)


def _free_gaussian(x, x0, k0, sigma, t, params: PhysicalParams) -> np.ndarray:
    hbar, m = params.hbar, params.m
    spread = 1.0 + 1j * hbar * t / (2 * m * sigma ** 2)
    v = hbar * k0 / m
    amplitude = (2 * np.pi * sigma ** 2) ** -0.25 / np.sqrt(spread)
    return amplitude * np.exp(-(x - x0 - v * t) ** 2 / (4 * sigma ** 2 * spread) + 1j * k0 * (x - v * t / 2))


def _sho_profile(x, n: int, omega: float, params: PhysicalParams) -> np.ndarray:
    scale = np.sqrt(params.m * omega / params.hbar)
    xi = scale * x
    norm = (scale ** 2 / np.pi) ** 0.25 / np.sqrt(2.0 ** n * factorial(n, exact=True))
    return (norm * eval_hermite(n, xi) * np.exp(-xi ** 2 / 2)).astype(complex)


@dataclass(frozen=True)
class Region:
    """Axis-aligned box; usable as a grid mask and as a walker predicate"""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", tuple(float(v) for v in np.atleast_1d(self.upper)))

    @classmethod
    def whole(cls, grid: Grid) -> "Region":
        return cls(tuple(-np.inf for _ in grid.n), tuple(np.inf for _ in grid.n))

    def contains(self, positions: np.ndarray) -> np.ndarray:
        """Boolean per walker for an (N, d) position array"""
        positions = np.atleast_2d(positions)
        return np.all((positions >= np.asarray(self.lower)) & (positions <= np.asarray(self.upper)), axis=1)

    def mask(self, grid: Grid) -> np.ndarray:
        inside = np.ones(grid.shape, dtype=bool)
        for c, lo, hi in zip(grid.mesh(), self.lower, self.upper):
            inside &= (c >= lo) & (c <= hi)
        return inside


RegionLike = Union[Region, np.ndarray]


def _region_mask(grid: Grid, region: RegionLike) -> np.ndarray:
    if isinstance(region, Region):
        return region.mask(grid)
    mask = np.asarray(region, dtype=bool)
    if mask.shape != grid.shape:
        raise MeasurementImpossibleError(f"Region mask shape {mask.shape} does not match grid {grid.shape}")
    return mask


def check_normalized(psi: ComplexField, tolerance: float = NORM_TOLERANCE) -> float:
    """Return the norm, raising NormalizationError when it is not 1 within tolerance"""
    norm = psi.norm()
    if abs(norm - 1.0) > tolerance:
        raise NormalizationError(f"Wavefunction norm is {norm:.12g}, expected 1 within {tolerance}")
    return norm


def normalized(psi: ComplexField) -> ComplexField:
    """Rescale a nonzero field to unit norm"""
    norm = psi.norm()
    if norm <= 0:
        raise NormalizationError("Cannot normalize an identically zero wavefunction")
    return psi.with_values(psi.values / np.sqrt(norm))


def _second_difference(n: int, h: float, periodic: bool) -> sparse.csr_matrix:
    """Three-point second difference with zero ghost nodes (or wrap-around)"""
    matrix = sparse.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1],
                          shape=(n, n), format="lil")
    if periodic:
        matrix[0, n - 1] = 1.0
        matrix[n - 1, 0] = 1.0
    return matrix.tocsr() / h ** 2


def kinetic_matrices(grid: Grid, params: PhysicalParams) -> List[sparse.csr_matrix]:
    """Directional kinetic operators -hbar^2/2m d^2/dx_a^2 on the flattened grid"""
    coefficient = -params.hbar ** 2 / (2 * params.m)
    blocks = [_second_difference(k, h, grid.is_periodic) for k, h in zip(grid.n, grid.spacing)]
    if grid.dimension == 1:
        return [coefficient * blocks[0]]
    nx, ny = grid.n
    return [
        coefficient * sparse.kron(blocks[0], sparse.identity(ny), format="csr"),
        coefficient * sparse.kron(sparse.identity(nx), blocks[1], format="csr"),
    ]


def hamiltonian_matrix(grid: Grid, potential: PotentialSpec, params: PhysicalParams) -> sparse.csr_matrix:
    """Hermitian discrete Hamiltonian used by the solver"""
    values = potential.evaluate(grid, params).ravel()
    return (sum(kinetic_matrices(grid, params)) + sparse.diags(values)).tocsr()


class CrankNicolsonSolver:
    """
    Unitary Crank-Nicolson integrator

    In 1-D each step solves (1 + i dt H/2hbar) psi' = (1 - i dt H/2hbar) psi with a
    sparse LU factorization computed once. In 2-D the step is Strang-split
    into directional Cayley factors (x half step, y full step, x half step),
    the potential shared equally between directions; every factor is unitary.
    """

    def __init__(self, grid: Grid, potential: PotentialSpec, params: PhysicalParams, dt: float):
        self.grid = grid
        self.potential = potential
        self.params = params
        self.dt = float(dt)
        self.potential_values = potential.evaluate(grid, params)

        stiffness = self.dt * float(np.max(np.abs(self.potential_values))) / params.hbar
        if not self.dt > 0:
            raise StepSizeError(f"Time step must be positive, got {dt}")
        if stiffness >= 1.0:
            raise StepSizeError(f"dt*max|potential|/hbar = {stiffness:.3g} must be < 1")

        kinetic = kinetic_matrices(grid, params)
        flat_potential = self.potential_values.ravel()
        try:
            if grid.dimension == 1:
                full = kinetic[0] + sparse.diags(flat_potential)
                self._factors = [self._cayley(full, self.dt)]
            else:
                half_potential = sparse.diags(flat_potential / 2)
                x_half = self._cayley(kinetic[0] + half_potential, self.dt / 2)
                y_full = self._cayley(kinetic[1] + half_potential, self.dt)
                self._factors = [x_half, y_full, x_half]
        except RuntimeError as e:
            raise SolverError(f"Factorization failed: {str(e)}", step=0)
        logger.info(f"Crank-Nicolson solver ready: grid {grid.shape}, dt={self.dt}, stiffness {stiffness:.3g}")

    def _cayley(self, operator: sparse.csr_matrix, tau: float):
        identity = sparse.identity(operator.shape[0], dtype=complex, format="csc")
        scaled = (1j * tau / (2 * self.params.hbar)) * operator.astype(complex)
        return splu((identity + scaled).tocsc()), (identity - scaled).tocsr()

    def step(self, flat: np.ndarray, index: int = 0) -> np.ndarray:
        """Advance flattened node values by one time step"""
        for lu, explicit in self._factors:
            flat = lu.solve(explicit @ flat)
        if not np.all(np.isfinite(flat)):
            logger.error(f"Non-finite values after solver step {index}")
            raise SolverError("Linear solve produced non-finite values", step=index)
        return flat

    def iterate(self, psi: ComplexField, steps: int, every: int = 1) -> Iterator[ComplexField]:
        """Yield the state after every `every` steps (the initial state is not yielded)"""
        if psi.grid != self.grid:
            raise SolverError("Wavefunction grid differs from solver grid", step=0)
        every = max(1, int(every))
        flat = np.array(psi.values, dtype=complex).ravel()
        for index in range(1, steps + 1):
            flat = self.step(flat, index)
            if index % every == 0 or index == steps:
                yield ComplexField(self.grid, flat.reshape(self.grid.shape), psi.t + index * self.dt)

    def evolve(self, psi: ComplexField, steps: int) -> ComplexField:
        check_normalized(psi)
        final = psi
        for final in self.iterate(psi, steps, every=max(1, steps)):
            pass
        return final


def evolve(psi: ComplexField, pot: PotentialSpec, params: PhysicalParams, dt: float, steps: int) -> ComplexField:
    """Evolve a normalized wavefunction by `steps` Crank-Nicolson steps"""
    solver = CrankNicolsonSolver(psi.grid, pot, params, dt)
    return solver.evolve(psi, steps)


def evolve_series(psi: ComplexField, pot: PotentialSpec, params: PhysicalParams, dt: float,
                  steps: int, every: int = 1) -> List[ComplexField]:
    """Initial state followed by a snapshot every `every` steps"""
    check_normalized(psi)
    solver = CrankNicolsonSolver(psi.grid, pot, params, dt)
    return [psi] + list(solver.iterate(psi, steps, every))


def apply_momentum(psi: ComplexField, params: PhysicalParams, axis: int = 0) -> ComplexField:
    """-i hbar d/dx_axis"""
    return psi.with_values(-1j * params.hbar * derivative(psi.values, psi.grid, axis))


def apply_kinetic(psi: ComplexField, params: PhysicalParams) -> ComplexField:
    """-hbar^2/2m Laplacian"""
    return psi.with_values(-params.hbar ** 2 / (2 * params.m) * laplacian(psi.values, psi.grid))


def apply_hamiltonian(psi: ComplexField, pot: PotentialSpec, params: PhysicalParams) -> ComplexField:
    kinetic = apply_kinetic(psi, params).values
    return psi.with_values(kinetic + pot.evaluate(psi.grid, params) * psi.values)


def time_derivative(series: Sequence[ComplexField], index: Optional[int] = None) -> np.ndarray:
    """Centred difference of node values at snapshot `index` (the middle one by default)"""
    index = len(series) // 2 if index is None else index
    step = snapshot_spacing([s.t for s in series])
    if not 0 < index < len(series) - 1:
        raise CadenceError(f"Snapshot {index} has no neighbours on both sides")
    return (series[index + 1].values - series[index - 1].values) / (2 * step)


def energy_operator(series: Sequence[ComplexField], params: PhysicalParams,
                    index: Optional[int] = None) -> ComplexField:
    """i hbar d/dt from a snapshot triple"""
    index = len(series) // 2 if index is None else index
    return series[index].with_values(1j * params.hbar * time_derivative(series, index))


def commutator_residual(i: int, j: int, test: ComplexField, params: PhysicalParams) -> ComplexField:
    """
    (x_i P_j - P_j x_i) test - i hbar delta_ij test on interior nodes

    Nodes on the edges of axis i and j are set to zero; the coordinate
    multiplication is not periodic even on periodic grids.
    """
    grid = test.grid
    x_i = grid.mesh()[i]
    left = x_i * apply_momentum(test, params, j).values
    right = apply_momentum(test.with_values(x_i * test.values), params, j).values
    residual = left - right - (1j * params.hbar if i == j else 0.0) * test.values

    keep = np.ones(grid.shape, dtype=bool)
    for axis in {i, j}:
        index = [slice(None)] * grid.dimension
        index[axis] = 0
        keep[tuple(index)] = False
        index[axis] = -1
        keep[tuple(index)] = False
    return test.with_values(np.where(keep, residual, 0.0))


def _braket(grid: Grid, bra: np.ndarray, ket: np.ndarray) -> complex:
    return complex(grid.integrate(np.conj(bra) * ket))


def expectation(psi: ComplexField, operator: str, params: PhysicalParams,
                pot: Optional[PotentialSpec] = None, axis: int = 0) -> complex:
    """
    Expectation value <psi|A|psi> by trapezoidal quadrature

    Args:
        operator: one of position, position_squared, momentum, momentum_squared,
            kinetic, potential, hamiltonian (alias energy)
    """
    check_normalized(psi)
    grid = psi.grid
    pot = pot or PotentialSpec(FREE)
    x = grid.mesh()[axis]
    if operator == "position":
        image = x * psi.values
    elif operator == "position_squared":
        image = x ** 2 * psi.values
    elif operator == "momentum":
        image = apply_momentum(psi, params, axis).values
    elif operator == "momentum_squared":
        image = -params.hbar ** 2 * second_derivative(psi.values, grid, axis)
    elif operator == "kinetic":
        image = apply_kinetic(psi, params).values
    elif operator == "potential":
        image = pot.evaluate(grid, params) * psi.values
    elif operator in ("hamiltonian", "energy"):
        image = apply_hamiltonian(psi, pot, params).values
    else:
        raise ConfigError([f"unknown operator '{operator}'"])
    return _braket(grid, psi.values, image)


@dataclass(frozen=True)
class UncertaintyProduct:
    delta_x: float
    delta_p: float

    @property
    def product(self) -> float:
        return self.delta_x * self.delta_p


def uncertainty_product(psi: ComplexField, params: PhysicalParams, axis: int = 0) -> UncertaintyProduct:
    """Standard deviations of position and momentum along one axis"""
    mean_x = expectation(psi, "position", params, axis=axis).real
    mean_x2 = expectation(psi, "position_squared", params, axis=axis).real
    mean_p = expectation(psi, "momentum", params, axis=axis).real
    mean_p2 = expectation(psi, "momentum_squared", params, axis=axis).real
    return UncertaintyProduct(
        delta_x=float(np.sqrt(max(mean_x2 - mean_x ** 2, 0.0))),
        delta_p=float(np.sqrt(max(mean_p2 - mean_p ** 2, 0.0))),
    )


def eigenbasis_coefficients(psi: ComplexField, basis: Sequence[Union[AnalyticState, ComplexField]],
                            params: PhysicalParams) -> np.ndarray:
    """Coefficients c_n = <psi_n|psi> for each basis state"""
    coefficients = []
    for state in basis:
        if isinstance(state, AnalyticState):
            state = state.evaluate(psi.grid, params, psi.t)
        coefficients.append(_braket(psi.grid, state.values, psi.values))
    return np.array(coefficients, dtype=complex)


def discrete_eigenstates(grid: Grid, pot: PotentialSpec, params: PhysicalParams,
                         count: int = 1) -> Tuple[np.ndarray, List[ComplexField]]:
    """
    Lowest eigenpairs of the solver's discrete Hamiltonian

    These states are stationary under CrankNicolsonSolver to rounding error.
    """
    potential = pot.evaluate(grid, params)
    if grid.dimension == 1 and not grid.is_periodic:
        h = grid.spacing[0]
        diagonal = params.hbar ** 2 / (params.m * h ** 2) + potential
        off = np.full(grid.n[0] - 1, -params.hbar ** 2 / (2 * params.m * h ** 2))
        energies, vectors = eigh_tridiagonal(diagonal, off, select="i", select_range=(0, count - 1))
    else:
        matrix = hamiltonian_matrix(grid, pot, params)
        energies, vectors = eigsh(matrix, k=count, sigma=float(potential.min()) - 1.0, which="LM")
        order = np.argsort(energies)
        energies, vectors = energies[order], vectors[:, order]

    states = []
    for column in vectors.T:
        values = column.reshape(grid.shape).astype(complex)
        values /= np.sqrt(grid.integrate(np.abs(values) ** 2))
        if values.ravel()[np.argmax(np.abs(values))].real < 0:
            values = -values
        states.append(ComplexField(grid, values))
    return np.asarray(energies), states


def measurement_probability(psi: ComplexField, region: RegionLike) -> float:
    """Integral of |psi|^2 over the region"""
    mask = _region_mask(psi.grid, region)
    return float(psi.grid.integrate(np.where(mask, psi.density(), 0.0)))


def project_measurement(psi: ComplexField, region: RegionLike) -> ComplexField:
    """
    Project onto a region and renormalize

    A state already supported in the region and normalized is returned as is,
    which makes repeated projection exactly idempotent.
    """
    grid = psi.grid
    mask = _region_mask(grid, region)
    if not mask.any():
        raise MeasurementImpossibleError("Measurement region contains no grid nodes")
    projected = np.where(mask, psi.values, 0.0)
    weight = float(grid.integrate(np.abs(projected) ** 2))
    if weight <= 0.0:
        raise MeasurementImpossibleError("Wavefunction has zero overlap with the measurement region")
    if np.array_equal(projected, psi.values) and abs(weight - 1.0) <= PROJECTION_TOLERANCE:
        return psi
    logger.info(f"Projected wavefunction onto region with probability {weight:.6g}")
    return psi.with_values(projected / np.sqrt(weight))
