"""
Madelung fluid representation of a wavefunction
Decomposes psi into density and phase, builds the complex velocity field,
the quantum potential, the probability current, the complex Hamilton and
Lagrange functions, and residuals of the continuity and Euler-like equations
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import binary_erosion

from utils.errors import DecompositionDegenerateError, FieldError, PhaseJumpError
from utils.fields import (
    ComplexField,
    Grid,
    PhysicalParams,
    RealField,
    divergence,
    gradient,
    interior_mask,
    laplacian,
    snapshot_spacing,
)
from utils.schrodinger import PotentialSpec, apply_kinetic, check_normalized

logger = logging.getLogger("scalelab.hydrodynamics")

RELATIVE_NODE_THRESHOLD = 1e-8
MAX_MASKED_FRACTION = 0.5
MAX_PHASE_STEP = 0.9 * np.pi


@dataclass(frozen=True)
class HydroFields:
    """
    Density, phase and velocity fields of one snapshot

    Vector fields carry the component axis first. V, U and Q are zero on
    masked nodes.
    """

    grid: Grid
    t: float
    P: np.ndarray
    theta: np.ndarray
    V: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    valid: np.ndarray
    eps_node: float

    @property
    def complex_velocity(self) -> np.ndarray:
        return self.V - 1j * self.U

    @property
    def masked_fraction(self) -> float:
        return 1.0 - float(self.valid.mean())


@dataclass(frozen=True)
class ComplexDynamicFields:
    momentum: np.ndarray
    action: ComplexField
    lagrangian: ComplexField
    hamiltonian: ComplexField


@dataclass(frozen=True)
class ResidualReport:
    """Residual norms over valid nodes"""

    name: str
    norm_l2: float
    norm_max: float
    h: float
    dt: float

    def to_dict(self) -> dict:
        return {"name": self.name, "norm_l2": self.norm_l2, "norm_max": self.norm_max, "h": self.h, "dt": self.dt}


def node_threshold(P: np.ndarray, eps_node: Optional[float] = None) -> float:
    return RELATIVE_NODE_THRESHOLD * float(np.max(P)) if eps_node is None else float(eps_node)


def valid_mask(P: np.ndarray, eps_node: Optional[float] = None) -> np.ndarray:
    """
    Nodes where P exceeds the node threshold

    Raises DecompositionDegenerateError when no node is valid or when more than
    half of the nodes inside the bounding box of the valid set are masked.
    Tails below threshold outside that box are expected and not counted.
    """
    mask = P > node_threshold(P, eps_node)
    if not mask.any():
        raise DecompositionDegenerateError("Every node is below the density threshold")
    box = tuple(slice(int(idx.min()), int(idx.max()) + 1) for idx in np.nonzero(mask))
    interior_masked = 1.0 - float(mask[box].mean())
    if interior_masked > MAX_MASKED_FRACTION:
        raise DecompositionDegenerateError(
            f"{interior_masked:.0%} of nodes inside the support are masked (limit {MAX_MASKED_FRACTION:.0%})")
    if interior_masked > 0:
        logger.warning(f"{interior_masked:.1%} of nodes inside the support are masked as wavefunction nodes")
    return mask


def unwrap_phase(psi: ComplexField) -> np.ndarray:
    """Continuous phase along the grid sweep order (rows first, then the first column)"""
    theta = np.unwrap(np.angle(psi.values), axis=-1)
    if psi.grid.dimension == 2:
        column = np.unwrap(theta[:, 0])
        theta = theta + (column - theta[:, 0])[:, None]
    return theta


def log_derivative(psi: ComplexField) -> np.ndarray:
    """Gradient of psi divided by psi; shared by every velocity quantity"""
    grad = gradient(psi.values, psi.grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = grad / psi.values
    return np.where(np.isfinite(ratio), ratio, 0.0)


@dataclass(frozen=True)
class VelocityField:
    """Complex velocity V - iU, zero on masked nodes, with the mask it was built under"""

    grid: Grid
    t: float
    values: np.ndarray
    valid: np.ndarray

    def at(self, index) -> np.ndarray:
        """Velocity vector at one node; a masked node raises DecompositionDegenerateError"""
        node = tuple(int(i) for i in np.atleast_1d(index))
        if len(node) != self.grid.dimension:
            raise FieldError(f"Node index {node} does not match a {self.grid.dimension}-D grid")
        if not self.valid[node]:
            raise DecompositionDegenerateError(f"Complex velocity requested at masked node {node}")
        return self.values[(slice(None),) + node]


def complex_velocity(psi: ComplexField, params: PhysicalParams,
                     eps_node: Optional[float] = None) -> VelocityField:
    """V - iU = -2iD grad(ln psi) over the valid nodes of psi"""
    mask = valid_mask(psi.density(), eps_node)
    values = np.where(mask, -2j * params.D * log_derivative(psi), 0.0)
    return VelocityField(psi.grid, psi.t, values, mask)


def quantum_potential(density, params: PhysicalParams, eps_node: Optional[float] = None) -> RealField:
    """Q = -2 m D^2 Lap(sqrt P)/sqrt P on valid nodes"""
    P = np.asarray(density.values)
    mask = valid_mask(P, eps_node)
    root = np.sqrt(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = -2.0 * params.m * params.D ** 2 * laplacian(root, density.grid) / root
    return RealField(density.grid, np.where(mask, Q, 0.0), getattr(density, "t", 0.0))


def kinetic_form_residual(density, params: PhysicalParams, eps_node: Optional[float] = None) -> RealField:
    """|Q - T(sqrt P)/sqrt P| on valid nodes, using the solver's kinetic operator"""
    P = np.asarray(density.values)
    mask = valid_mask(P, eps_node)
    root = ComplexField(density.grid, np.sqrt(P))
    Q = quantum_potential(density, params, eps_node).values
    with np.errstate(divide="ignore", invalid="ignore"):
        kinetic_form = (apply_kinetic(root, params).values / root.values).real
    return RealField(density.grid, np.where(mask, np.abs(Q - kinetic_form), 0.0))


def decompose(psi: ComplexField, params: PhysicalParams, eps_node: Optional[float] = None) -> HydroFields:
    """
    Madelung decomposition psi = sqrt(P) exp(i theta)

    V = 2D Im(grad psi/psi) and U = 2D Re(grad psi/psi) equal 2D grad(theta) and
    D grad(ln P) on valid nodes; using the log-derivative keeps them wrap-safe.
    """
    check_normalized(psi)
    P = psi.density()
    threshold = node_threshold(P, eps_node)
    complex_field = complex_velocity(psi, params, threshold)
    mask, velocity = complex_field.valid, complex_field.values
    Q = quantum_potential(RealField(psi.grid, P, psi.t), params, threshold).values
    return HydroFields(
        grid=psi.grid,
        t=psi.t,
        P=P,
        theta=unwrap_phase(psi),
        V=velocity.real,
        U=-velocity.imag,
        Q=Q,
        valid=mask,
        eps_node=threshold,
    )


def probability_current(psi: ComplexField, params: PhysicalParams) -> np.ndarray:
    """J = (hbar/m) Im(conj(psi) grad psi), component axis first"""
    grad = gradient(psi.values, psi.grid)
    return (params.hbar / params.m) * np.imag(np.conj(psi.values) * grad)


def residual_norms(residual: np.ndarray, mask: np.ndarray, grid: Grid) -> Tuple[float, float]:
    """L2 (quadrature) and max norms of a scalar or vector residual over masked nodes"""
    masked = np.where(mask, np.abs(residual), 0.0)
    if masked.ndim > grid.dimension:
        masked = np.sqrt(np.sum(masked ** 2, axis=0))
    return float(np.sqrt(grid.integrate(masked ** 2))), float(masked.max())


def eroded(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Drop nodes within `iterations` nodes of a masked node (grid edges do not erode)"""
    return binary_erosion(mask, iterations=iterations, border_value=1)


def _common_mask(snapshots: Sequence[HydroFields], index: int, margin: int = 2) -> np.ndarray:
    mask = snapshots[index - 1].valid & snapshots[index].valid & snapshots[index + 1].valid
    return eroded(mask) & interior_mask(snapshots[index].grid, margin)


def continuity_residual(snapshots: Sequence[HydroFields], params: PhysicalParams,
                        psi_series: Optional[Sequence[ComplexField]] = None) -> ResidualReport:
    """
    dP/dt + div(P V) at the interior snapshots of a uniformly spaced series

    The flux P V is evaluated as the probability current when the wavefunctions
    are supplied, which avoids dividing by small densities near the mask edge.
    """
    step = snapshot_spacing([s.t for s in snapshots])
    grid = snapshots[0].grid
    l2, peak = [], []
    for index in range(1, len(snapshots) - 1):
        dP = (snapshots[index + 1].P - snapshots[index - 1].P) / (2 * step)
        if psi_series is not None:
            flux = probability_current(psi_series[index], params)
        else:
            flux = snapshots[index].P * snapshots[index].V
        residual = dP + divergence(flux, grid)
        a, b = residual_norms(residual, _common_mask(snapshots, index), grid)
        l2.append(a)
        peak.append(b)
    return ResidualReport("continuity", max(l2), max(peak), max(grid.spacing), step)


def euler_residual(snapshots: Sequence[HydroFields], pot: PotentialSpec,
                   params: PhysicalParams) -> ResidualReport:
    """(d/dt + V.grad) V + grad(Phi/m + Q/m) on nodes valid in all three snapshots"""
    step = snapshot_spacing([s.t for s in snapshots])
    grid = snapshots[0].grid
    potential = pot.evaluate(grid, params)
    l2, peak = [], []
    for index in range(1, len(snapshots) - 1):
        current = snapshots[index]
        dV = (snapshots[index + 1].V - snapshots[index - 1].V) / (2 * step)
        advection = np.zeros_like(current.V)
        for axis in range(grid.dimension):
            grad_component = gradient(current.V[axis], grid)
            advection[axis] = np.sum(current.V * grad_component, axis=0)
        force = gradient((potential + current.Q) / params.m, grid)
        residual = dV + advection + force
        a, b = residual_norms(residual, _common_mask(snapshots, index), grid)
        l2.append(a)
        peak.append(b)
    return ResidualReport("euler", max(l2), max(peak), max(grid.spacing), step)


def _velocity_and_divergence(psi: ComplexField, params: PhysicalParams, eps_node: Optional[float]):
    velocity = complex_velocity(psi, params, eps_node).values
    return velocity, divergence(velocity, psi.grid)


def complex_hamiltonian(psi: ComplexField, pot: PotentialSpec, params: PhysicalParams,
                        eps_node: Optional[float] = None) -> ComplexField:
    """H = m V.V/2 - i m D div V + Phi (complex square, not modulus)"""
    velocity, div = _velocity_and_divergence(psi, params, eps_node)
    values = (0.5 * params.m * np.sum(velocity * velocity, axis=0)
              - 1j * params.m * params.D * div
              + pot.evaluate(psi.grid, params))
    return psi.with_values(values)


def complex_lagrangian(psi: ComplexField, pot: PotentialSpec, params: PhysicalParams,
                       eps_node: Optional[float] = None) -> ComplexField:
    """L = m V.V/2 - Phi"""
    velocity = complex_velocity(psi, params, eps_node).values
    return psi.with_values(0.5 * params.m * np.sum(velocity * velocity, axis=0) - pot.evaluate(psi.grid, params))


def recover_action(psi: ComplexField, params: PhysicalParams, eps_node: Optional[float] = None) -> ComplexField:
    """
    S = -i hbar ln(psi) = hbar theta - i hbar ln|psi|

    Raises PhaseJumpError when adjacent valid nodes differ in wrapped phase by
    0.9 pi or more, where unwrapping can no longer be trusted.
    """
    P = psi.density()
    mask = valid_mask(P, eps_node)
    wrapped = np.angle(psi.values)
    for axis in range(psi.grid.dimension):
        step = np.abs(np.angle(np.exp(1j * np.diff(wrapped, axis=axis))))
        pair = mask.take(range(1, mask.shape[axis]), axis=axis) & mask.take(range(mask.shape[axis] - 1), axis=axis)
        if np.any(step[pair] >= MAX_PHASE_STEP):
            raise PhaseJumpError(f"Phase jumps by {step[pair].max():.3f} rad between adjacent nodes on axis {axis}")
    with np.errstate(divide="ignore"):
        log_modulus = np.where(mask, 0.5 * np.log(P), 0.0)
    theta = np.where(mask, unwrap_phase(psi), 0.0)
    return psi.with_values(params.hbar * theta - 1j * params.hbar * log_modulus)


def action_gradient(psi: ComplexField, params: PhysicalParams, eps_node: Optional[float] = None) -> np.ndarray:
    """grad S with wrap-safe phase differences; compare with m times the complex velocity"""
    grid = psi.grid
    mask = valid_mask(psi.density(), eps_node)
    values = psi.values
    result = np.zeros((grid.dimension,) + grid.shape, dtype=complex)
    with np.errstate(divide="ignore"):
        log_modulus = np.where(psi.density() > 0, 0.5 * np.log(psi.density()), 0.0)
    modulus_gradient = gradient(log_modulus, grid)
    for axis in range(grid.dimension):
        h = grid.spacing[axis]
        ahead = np.roll(values, -1, axis=axis)
        behind = np.roll(values, 1, axis=axis)
        phase_gradient = np.angle(ahead * np.conj(behind)) / (2 * h)
        if not grid.is_periodic:
            edges = [slice(None)] * grid.dimension
            edges[axis] = 0
            phase_gradient[tuple(edges)] = np.angle(values[tuple(_shifted(edges, axis, 1))] *
                                                    np.conj(values[tuple(edges)])) / h
            edges[axis] = -1
            phase_gradient[tuple(edges)] = np.angle(values[tuple(edges)] *
                                                    np.conj(values[tuple(_shifted(edges, axis, -2))])) / h
        result[axis] = params.hbar * phase_gradient - 1j * params.hbar * modulus_gradient[axis]
    return np.where(mask, result, 0.0)


def _shifted(index: List, axis: int, position: int) -> List:
    shifted = list(index)
    shifted[axis] = position
    return shifted


def dynamic_fields(psi: ComplexField, pot: PotentialSpec, params: PhysicalParams,
                   eps_node: Optional[float] = None) -> ComplexDynamicFields:
    return ComplexDynamicFields(
        momentum=params.m * complex_velocity(psi, params, eps_node).values,
        action=recover_action(psi, params, eps_node),
        lagrangian=complex_lagrangian(psi, pot, params, eps_node),
        hamiltonian=complex_hamiltonian(psi, pot, params, eps_node),
    )


def hamilton_jacobi_residual(series: Sequence[ComplexField], pot: PotentialSpec,
                             params: PhysicalParams, eps_node: Optional[float] = None) -> ResidualReport:
    """
    dS/dt + H at the interior snapshots

    dS/dt is taken as -i hbar (dpsi/dt)/psi, the time derivative of -i hbar ln psi
    without branch ambiguity.
    """
    step = snapshot_spacing([s.t for s in series])
    grid = series[0].grid
    l2, peak = [], []
    for index in range(1, len(series) - 1):
        psi = series[index]
        mask = valid_mask(psi.density(), eps_node)
        for neighbour in (series[index - 1], series[index + 1]):
            mask &= valid_mask(neighbour.density(), eps_node)
        mask = eroded(mask) & interior_mask(grid, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            dS = -1j * params.hbar * (series[index + 1].values - series[index - 1].values) / (2 * step) / psi.values
        residual = np.where(mask, dS + complex_hamiltonian(psi, pot, params, eps_node).values, 0.0)
        a, b = residual_norms(residual, mask, grid)
        l2.append(a)
        peak.append(b)
    return ResidualReport("hamilton-jacobi", max(l2), max(peak), max(grid.spacing), step)


def gauge_transform(psi: ComplexField, alpha: float) -> ComplexField:
    """Multiply by a constant phase exp(i alpha)"""
    return psi.with_values(psi.values * np.exp(1j * alpha))


def screen_flux(psi: ComplexField, params: PhysicalParams, screen: float, axis: int = 0) -> np.ndarray:
    """Forward current max(J_axis, 0) along the grid line nearest to `screen`"""
    grid = psi.grid
    index = int(np.argmin(np.abs(grid.axes[axis] - screen)))
    if not 0 < index < grid.n[axis] - 1:
        raise FieldError(f"Screen at {screen} is not inside the grid along axis {axis}")
    values = np.moveaxis(psi.values, axis, 0)
    slope = (values[index + 1] - values[index - 1]) / (2.0 * grid.spacing[axis])
    current = (params.hbar / params.m) * np.imag(np.conj(values[index]) * slope)
    return np.maximum(current, 0.0)
