"""
Grids, fields and finite-difference operators for scalelab
Provides the uniform-grid substrate shared by the solver, the hydrodynamic
decomposition, the walker engine and the identity checks
"""

import csv
import logging
import struct
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from utils.errors import AlignmentError, CadenceError, ConfigError, FieldError, GridError

logger = logging.getLogger("scalelab.fields")

DIRICHLET = "dirichlet-zero"
PERIODIC = "periodic"
BOUNDARIES = (DIRICHLET, PERIODIC)
MIN_POINTS = 8

BINARY_MAGIC = b"SLFD"
BINARY_VERSION = 1


def _as_tuple(value, dimension: int, cast) -> tuple:
    items = np.atleast_1d(np.asarray(value)).tolist()
    if len(items) == 1 and dimension > 1:
        items = items * dimension
    return tuple(cast(v) for v in items)


@dataclass(frozen=True)
class Grid:
    """
    Uniform grid in one or two dimensions

    Nodes sit at lower + i*h along each axis with h = (upper - lower)/(n - 1).
    On periodic grids the node after the last one is the first one, so the
    period along an axis is n*h.
    """

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    n: Tuple[int, ...]
    boundary: str = DIRICHLET

    def __post_init__(self):
        dimension = max(np.size(self.lower), np.size(self.upper), np.size(self.n))
        lower = _as_tuple(self.lower, dimension, float)
        upper = _as_tuple(self.upper, dimension, float)
        n = _as_tuple(self.n, dimension, int)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "n", n)

        if dimension not in (1, 2):
            raise GridError(f"Grid dimension must be 1 or 2, got {dimension}")
        if not (len(lower) == len(upper) == len(n)):
            raise GridError("Grid bounds and point counts disagree in dimension")
        for axis in range(dimension):
            if n[axis] < MIN_POINTS:
                raise GridError(f"Axis {axis} has {n[axis]} points; at least {MIN_POINTS} required")
            if not upper[axis] > lower[axis]:
                raise GridError(f"Axis {axis} upper bound must exceed lower bound")
        if self.boundary not in BOUNDARIES:
            raise GridError(f"Unknown boundary condition '{self.boundary}'")

    @classmethod
    def uniform(cls, lower: float, upper: float, n: int, dimension: int = 1,
                boundary: str = DIRICHLET) -> "Grid":
        """Build a grid with the same bounds and point count on every axis"""
        return cls((lower,) * dimension, (upper,) * dimension, (n,) * dimension, boundary)

    @classmethod
    def periodic(cls, lower: float, period: float, n: int, dimension: int = 1) -> "Grid":
        """Build a periodic grid whose nodes tile exactly one period"""
        upper = lower + period * (n - 1) / n
        return cls((lower,) * dimension, (upper,) * dimension, (n,) * dimension, PERIODIC)

    @property
    def dimension(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((u - l) / (k - 1) for l, u, k in zip(self.lower, self.upper, self.n))

    @property
    def is_periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def extent(self) -> Tuple[float, ...]:
        """Length of the domain along each axis (the period on periodic grids)"""
        if self.is_periodic:
            return tuple(k * h for k, h in zip(self.n, self.spacing))
        return tuple(u - l for l, u in zip(self.lower, self.upper))

    @property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.linspace(l, u, k) for l, u, k in zip(self.lower, self.upper, self.n))

    def mesh(self) -> Tuple[np.ndarray, ...]:
        """Node coordinates broadcast to the grid shape, one array per axis"""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoidal weights per node (plain h on periodic axes)"""
        weights = None
        for h, k in zip(self.spacing, self.n):
            w = np.full(k, h)
            if not self.is_periodic:
                w[0] = w[-1] = h / 2.0
            weights = w if weights is None else np.multiply.outer(weights, w)
        return weights

    def integrate(self, values: np.ndarray) -> Union[float, complex]:
        """Trapezoidal quadrature of node values over the domain"""
        values = np.asarray(values)
        if values.shape != self.shape:
            raise FieldError(f"Cannot integrate shape {values.shape} on grid {self.shape}")
        if self.is_periodic:
            return values.sum() * float(np.prod(self.spacing))
        result = values
        for axis in reversed(range(self.dimension)):
            result = trapezoid(result, dx=self.spacing[axis], axis=axis)
        return result[()] if isinstance(result, np.ndarray) else result

    def coarsened(self, points: int) -> "Grid":
        """Grid over the same domain with `points` nodes per axis"""
        return Grid(self.lower, self.upper, (points,) * self.dimension, self.boundary)

    def clip(self, positions: np.ndarray) -> np.ndarray:
        """Clamp an (N, d) array of positions into the grid bounds"""
        return np.clip(positions, np.asarray(self.lower), np.asarray(self.upper))

    def describe(self) -> dict:
        return {
            "dimension": self.dimension,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "n": list(self.n),
            "h": list(self.spacing),
            "boundary": self.boundary,
        }


def _frozen(values, dtype, shape, what: str) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    if array.shape != tuple(shape):
        raise FieldError(f"{what} has shape {array.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(array)):
        raise FieldError(f"{what} contains non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ComplexField:
    """Complex scalar field on a grid with a time stamp"""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, complex, self.grid.shape, "ComplexField"))
        object.__setattr__(self, "t", float(self.t))

    def with_values(self, values: np.ndarray, t: Optional[float] = None) -> "ComplexField":
        return ComplexField(self.grid, values, self.t if t is None else t)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        """Integral of |psi|^2 over the grid"""
        return float(self.grid.integrate(self.density()))


@dataclass(frozen=True)
class RealField:
    """Real scalar field on a grid"""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, float, self.grid.shape, "RealField"))
        object.__setattr__(self, "t", float(self.t))

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))


@dataclass(frozen=True)
class RealVectorField:
    """Real d-vector per node; component axis first"""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        shape = (self.grid.dimension,) + self.grid.shape
        object.__setattr__(self, "values", _frozen(self.values, float, shape, "RealVectorField"))
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class PhysicalParams:
    """
    Mass, fractal fluctuation parameter and velocity constant

    hbar = 2*m*D is the generalized Compton relation and
    compton_length = 2*D/c the associated length scale.
    """

    m: float = 1.0
    D: float = 0.5
    c: float = 1.0

    def __post_init__(self):
        problems = [f"{name} must be positive and finite"
                    for name in ("m", "D", "c")
                    if not (np.isfinite(getattr(self, name)) and getattr(self, name) > 0)]
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_hbar(cls, m: float, hbar: float, c: float = 1.0) -> "PhysicalParams":
        return cls(m=m, D=hbar / (2.0 * m), c=c)

    @property
    def hbar(self) -> float:
        return 2.0 * self.m * self.D

    @property
    def compton_length(self) -> float:
        return 2.0 * self.D / self.c

    def describe(self) -> dict:
        return {"m": self.m, "D": self.D, "c": self.c, "hbar": self.hbar, "lambda": self.compton_length}


FieldLike = Union[ComplexField, RealField, np.ndarray]


def _values_of(field: FieldLike) -> np.ndarray:
    return field.values if hasattr(field, "values") else np.asarray(field)


def derivative(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Second-order first derivative along one axis"""
    h = grid.spacing[axis]
    if grid.is_periodic:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)
    return np.gradient(values, h, axis=axis, edge_order=2)


def second_derivative(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Three-point second derivative; one-sided second order at dirichlet ends"""
    h2 = grid.spacing[axis] ** 2
    if grid.is_periodic:
        return (np.roll(values, -1, axis=axis) - 2.0 * values + np.roll(values, 1, axis=axis)) / h2

    out = np.empty(values.shape, dtype=np.result_type(values, float))
    v = np.moveaxis(values, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h2
    o[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
    o[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h2
    return out


def gradient(field: FieldLike, grid: Optional[Grid] = None) -> np.ndarray:
    """
    Central-difference gradient

    Args:
        field: Field object or node array
        grid: Grid of a bare array (taken from the field otherwise)

    Returns:
        Array of shape (dimension, *grid.shape)
    """
    grid = grid or field.grid
    values = _values_of(field)
    return np.stack([derivative(values, grid, axis) for axis in range(grid.dimension)])


def laplacian(field: FieldLike, grid: Optional[Grid] = None) -> np.ndarray:
    """Sum of three-point second derivatives over all axes"""
    grid = grid or field.grid
    values = _values_of(field)
    return sum(second_derivative(values, grid, axis) for axis in range(grid.dimension))


def divergence(vector: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence of a (dimension, *shape) array using the gradient stencil"""
    return sum(derivative(vector[axis], grid, axis) for axis in range(grid.dimension))


def interior_mask(grid: Grid, margin: int = 1) -> np.ndarray:
    """Nodes at least `margin` nodes away from every dirichlet edge"""
    mask = np.ones(grid.shape, dtype=bool)
    if grid.is_periodic or margin <= 0:
        return mask
    for axis in range(grid.dimension):
        index = [slice(None)] * grid.dimension
        index[axis] = slice(0, margin)
        mask[tuple(index)] = False
        index[axis] = slice(grid.n[axis] - margin, None)
        mask[tuple(index)] = False
    return mask


def resolution_multiple(base_step: float, dt: float) -> int:
    """Integer k with dt = k * base_step, or AlignmentError"""
    if base_step <= 0 or dt <= 0:
        raise AlignmentError(f"Steps must be positive (base {base_step}, dt {dt})")
    ratio = dt / base_step
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise AlignmentError(f"dt={dt} is not an integer multiple of base step {base_step}")
    return k


def snapshot_spacing(times: Sequence[float], minimum: int = 3) -> float:
    """Common spacing of snapshot times; CadenceError if too few or non-uniform"""
    times = np.asarray(times, dtype=float)
    if times.size < minimum:
        raise CadenceError(f"Need at least {minimum} snapshots, got {times.size}")
    steps = np.diff(times)
    step = float(steps.mean())
    if not step > 0 or np.max(np.abs(steps - step)) > 1e-9 * max(abs(step), 1e-300):
        raise CadenceError(f"Snapshot cadence is not uniform: {steps.min():.6g}..{steps.max():.6g}")
    return step


@dataclass(frozen=True)
class TwoSidedDerivative:
    """Forward and backward difference quotients at a finite resolution"""

    times: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    dt: float


def two_sided_derivative(samples: Sequence[float], base_step: float, dt: float,
                         t0: float = 0.0) -> TwoSidedDerivative:
    """
    Two-sided derivatives of a sampled function at resolution dt

    f'+(t) = (f(t+dt) - f(t))/dt and f'-(t) = (f(t) - f(t-dt))/dt, evaluated at
    every sample time t for which both t-dt and t+dt are stored.
    """
    samples = np.asarray(samples)
    k = resolution_multiple(base_step, dt)
    if samples.shape[0] < 2 * k + 1:
        raise AlignmentError(f"Series of {samples.shape[0]} samples too short for dt={dt}")
    centre = samples[k:-k]
    forward = (samples[2 * k:] - centre) / dt
    backward = (centre - samples[:-2 * k]) / dt
    times = t0 + base_step * np.arange(k, samples.shape[0] - k)
    return TwoSidedDerivative(times=times, forward=forward, backward=backward, dt=dt)


def write_field_csv(field: Union[ComplexField, RealField, RealVectorField], path: str) -> str:
    """Write node coordinates and values as CSV (re/im columns for complex fields)"""
    grid = field.grid
    coords = [c.ravel() for c in grid.mesh()]
    fieldnames = ["x", "y"][:grid.dimension]
    if isinstance(field, ComplexField):
        columns = [field.values.real.ravel(), field.values.imag.ravel()]
        fieldnames += ["re", "im"]
    elif isinstance(field, RealVectorField):
        columns = [component.ravel() for component in field.values]
        fieldnames += [f"v{axis}" for axis in range(grid.dimension)]
    else:
        columns = [field.values.ravel()]
        fieldnames += ["value"]

    with open(path, "w", newline="") as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(fieldnames)
        for row in zip(*coords, *columns):
            writer.writerow([repr(float(v)) for v in row])
    logger.info(f"Wrote field CSV {path} ({grid.size} nodes)")
    return path


def write_field_binary(field: Union[ComplexField, RealField], path: str) -> str:
    """
    Write a field as a little-endian binary record

    Header: magic, version, dims, complex flag, boundary flag, n per axis (int64),
    lower and upper per axis (f64), t (f64). Payload: f64 values, real and
    imaginary parts interleaved for complex fields.
    """
    grid = field.grid
    is_complex = isinstance(field, ComplexField)
    header = struct.pack("<4sBBBB", BINARY_MAGIC, BINARY_VERSION, grid.dimension,
                         int(is_complex), int(grid.is_periodic))
    header += struct.pack(f"<{grid.dimension}q", *grid.n)
    header += struct.pack(f"<{2 * grid.dimension}d", *grid.lower, *grid.upper)
    header += struct.pack("<d", field.t)
    payload = field.values.view(np.float64) if is_complex else field.values
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())
    return path


def read_field_binary(path: str) -> Union[ComplexField, RealField]:
    """Read a record written by write_field_binary"""
    with open(path, "rb") as f:
        data = f.read()
    magic, version, dims, is_complex, periodic = struct.unpack_from("<4sBBBB", data, 0)
    if magic != BINARY_MAGIC or version != BINARY_VERSION:
        raise FieldError(f"{path} is not a scalelab field record")
    offset = 8
    n = struct.unpack_from(f"<{dims}q", data, offset)
    offset += 8 * dims
    bounds = struct.unpack_from(f"<{2 * dims}d", data, offset)
    offset += 16 * dims
    (t,) = struct.unpack_from("<d", data, offset)
    offset += 8
    grid = Grid(bounds[:dims], bounds[dims:], n, PERIODIC if periodic else DIRICHLET)
    payload = np.frombuffer(data, dtype="<f8", offset=offset)
    if is_complex:
        values = payload.view(np.complex128).reshape(grid.shape)
        return ComplexField(grid, values, t)
    return RealField(grid, payload.reshape(grid.shape), t)
