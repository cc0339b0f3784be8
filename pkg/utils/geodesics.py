"""
Stochastic geodesic ensembles
Walkers follow dX = v+ dt + dxi with the forward drift v+ = V + U taken from
the wavefunction and a normalized noise of selectable law. The module also
estimates the ensemble density, compares it with |psi|^2, selects geodesic
sub-families for measurement and generates single fractal paths.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import distance_transform_edt, gaussian_filter

from utils.errors import (
    AlignmentError,
    ConfigError,
    DecompositionDegenerateError,
    FieldError,
    MeasurementImpossibleError,
    WalkerError,
)
from utils.fields import ComplexField, Grid, PhysicalParams, RealField, resolution_multiple
from utils.hydrodynamics import HydroFields, decompose
from utils.schrodinger import CrankNicolsonSolver, PotentialSpec, Region

logger = logging.getLogger("scalelab.geodesics")

GAUSSIAN = "gaussian"
UNIFORM = "uniform"
RADEMACHER = "rademacher"
NOISE_LAWS = (GAUSSIAN, UNIFORM, RADEMACHER)

try:
    DEFAULT_CHUNK_SIZE = int(os.getenv("SCALELAB_CHUNK_SIZE", "4096"))
except ValueError:
    DEFAULT_CHUNK_SIZE = 4096
    logger.warning("Invalid SCALELAB_CHUNK_SIZE value, using default of 4096")

INITIAL_STREAM = 2 ** 32 - 1


@dataclass(frozen=True)
class NoiseSpec:
    """Noise law with zero mean and unit variance, plus its 64-bit seed"""

    law: str = GAUSSIAN
    seed: int = 0

    def __post_init__(self):
        if self.law not in NOISE_LAWS:
            raise ConfigError([f"unknown noise law '{self.law}' (expected one of {', '.join(NOISE_LAWS)})"])
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError(["seed must be an unsigned 64-bit integer"])

    def generator(self, stream: int, step: Optional[int] = None) -> np.random.Generator:
        """Independent counter-based stream for one walker chunk, optionally at one step"""
        key = (int(stream),) if step is None else (int(stream), int(step))
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.Philox(sequence))

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Normalized amplitudes a with <a> = 0 and <a^2> = 1"""
        if self.law == GAUSSIAN:
            return rng.standard_normal(shape)
        if self.law == UNIFORM:
            return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
        return 2.0 * rng.integers(0, 2, shape) - 1.0


def sample_noise(spec: NoiseSpec, count: int, dt: float, D: float, dimension: int = 1,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Increments dxi = a sqrt(2 D dt), shape (count, dimension)"""
    if not dt > 0:
        raise ConfigError(["noise time step must be positive"])
    rng = rng or spec.generator(0)
    return spec.draw(rng, (count, dimension)) * np.sqrt(2.0 * D * dt)


@dataclass(frozen=True)
class DriftField:
    """Drift velocity sampled on a grid, component axis first"""

    grid: Grid
    values: np.ndarray

    @classmethod
    def from_function(cls, grid: Grid, function: Callable[..., np.ndarray]) -> "DriftField":
        """Drift from a function of the coordinate arrays returning (dimension, *shape)"""
        values = np.asarray(function(*grid.mesh()), dtype=float).reshape((grid.dimension,) + grid.shape)
        return cls(grid, values)

    def at(self, positions: np.ndarray) -> np.ndarray:
        """Linear interpolation at (N, d) positions, clamped to the grid"""
        points = self.grid.clip(positions)
        if self.grid.dimension == 1:
            return np.interp(points[:, 0], self.grid.axes[0], self.values[0])[:, None]
        result = np.empty_like(points)
        for axis in range(self.grid.dimension):
            interpolator = RegularGridInterpolator(self.grid.axes, self.values[axis], method="linear")
            result[:, axis] = interpolator(points)
        return result


def drift_fields(hydro: HydroFields) -> Tuple[DriftField, DriftField]:
    """
    Forward and backward drifts v+- = V +- U

    Masked nodes take the value of the nearest valid node so the singular
    osmotic term in the density tails never ejects walkers.
    """
    if not hydro.valid.any():
        raise DecompositionDegenerateError("Cannot build drifts from a fully masked decomposition")
    _, nearest = distance_transform_edt(~hydro.valid, return_indices=True)
    nearest = tuple(nearest)
    forward = (hydro.V + hydro.U)[(slice(None),) + nearest]
    backward = (hydro.V - hydro.U)[(slice(None),) + nearest]
    return DriftField(hydro.grid, forward), DriftField(hydro.grid, backward)


@dataclass(frozen=True)
class WalkerEnsemble:
    """
    Positions of N walkers with their original indices

    Noise for walker i at step k is drawn from the stream keyed by
    (i // chunk_size, k), so trajectories do not depend on how chunks are
    scheduled across threads or on which walkers were removed, and stepping
    the same ensemble twice gives the same result.
    """

    positions: np.ndarray
    ids: np.ndarray
    t: float
    noise: NoiseSpec
    params: PhysicalParams
    grid: Grid
    step: int = 0
    population: int = 0
    chunk_size: int = DEFAULT_CHUNK_SIZE

    @property
    def count(self) -> int:
        return int(self.positions.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.positions.shape[1])

    @property
    def chunks(self) -> np.ndarray:
        """Chunks holding at least one remaining walker"""
        return np.unique(self.ids // self.chunk_size)


def create_ensemble(positions: np.ndarray, grid: Grid, noise: NoiseSpec, params: PhysicalParams,
                    t: float = 0.0, chunk_size: int = DEFAULT_CHUNK_SIZE) -> WalkerEnsemble:
    positions = np.array(positions, dtype=float).reshape(-1, grid.dimension)
    if positions.shape[0] < 1:
        raise ConfigError(["walker ensemble needs at least one walker"])
    if not np.all(np.isfinite(positions)):
        raise WalkerError("Initial positions must be finite", int(np.argmin(np.isfinite(positions).all(axis=1))))
    if chunk_size < 1:
        raise ConfigError(["walker chunk size must be positive"])
    return WalkerEnsemble(positions, np.arange(positions.shape[0]), float(t), noise, params, grid,
                          0, positions.shape[0], chunk_size)


def sample_initial_positions(psi: ComplexField, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw (count, d) positions distributed as |psi|^2 (inverse CDF in 1-D)"""
    grid = psi.grid
    weights = grid.quadrature_weights() * psi.density()
    if grid.dimension == 1:
        x = grid.axes[0]
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (psi.density()[1:] + psi.density()[:-1]) * np.diff(x))])
        cdf /= cdf[-1]
        return np.interp(rng.random(count), cdf, x)[:, None]
    flat = weights.ravel() / weights.sum()
    picks = rng.choice(flat.size, size=count, p=flat)
    index = np.unravel_index(picks, grid.shape)
    jitter = rng.uniform(-0.5, 0.5, (count, grid.dimension)) * np.asarray(grid.spacing)
    points = np.stack([grid.axes[axis][index[axis]] for axis in range(grid.dimension)], axis=1) + jitter
    return grid.clip(points)


def _apply_boundary(positions: np.ndarray, grid: Grid) -> np.ndarray:
    lower = np.asarray(grid.lower)
    if grid.is_periodic:
        period = np.asarray(grid.extent)
        return lower + np.mod(positions - lower, period)
    upper = np.asarray(grid.upper)
    span = upper - lower
    folded = np.mod(positions - lower, 2 * span)
    return lower + np.where(folded > span, 2 * span - folded, folded)


def _chunk_noise(ensemble: WalkerEnsemble, chunk: int, dt: float) -> np.ndarray:
    start = chunk * ensemble.chunk_size
    size = min(ensemble.chunk_size, ensemble.population - start)
    rng = ensemble.noise.generator(chunk, ensemble.step)
    amplitude = ensemble.noise.draw(rng, (size, ensemble.dimension))
    return amplitude * np.sqrt(2.0 * ensemble.params.D * dt)


def step_ensemble(ensemble: WalkerEnsemble, drift: DriftField, dt: float, threads: int = 1) -> WalkerEnsemble:
    """
    One forward Euler-Maruyama step dX = v+(X) dt + dxi

    Walkers leaving the domain are reflected (dirichlet) or wrapped (periodic).
    """
    if not dt > 0:
        raise ConfigError(["walker time step must be positive"])
    chunks = ensemble.chunks
    if threads > 1 and len(chunks) > 1:
        pieces = Parallel(n_jobs=threads, prefer="threads")(
            delayed(_chunk_noise)(ensemble, chunk, dt) for chunk in chunks)
    else:
        pieces = [_chunk_noise(ensemble, chunk, dt) for chunk in chunks]
    drawn = np.zeros((ensemble.population, ensemble.dimension))
    for chunk, piece in zip(chunks, pieces):
        start = chunk * ensemble.chunk_size
        drawn[start:start + piece.shape[0]] = piece
    noise = drawn[ensemble.ids]

    moved = ensemble.positions + drift.at(ensemble.positions) * dt + noise
    bad = ~np.all(np.isfinite(moved), axis=1)
    if bad.any():
        walker = int(ensemble.ids[np.argmax(bad)])
        logger.error(f"Walker {walker} reached a non-finite position at t={ensemble.t + dt:.6g}")
        raise WalkerError("Walker position became non-finite", walker)
    return replace(ensemble, positions=_apply_boundary(moved, ensemble.grid), t=ensemble.t + dt,
                   step=ensemble.step + 1)


def select_geodesics(ensemble: WalkerEnsemble, region: Region) -> WalkerEnsemble:
    """Keep the walkers inside the region; each keeps its id and so its noise"""
    inside = region.contains(ensemble.positions)
    if not inside.any():
        raise MeasurementImpossibleError("No walker lies inside the selected region")
    if inside.all():
        return ensemble
    logger.info(f"Selected {int(inside.sum())} of {ensemble.count} walkers")
    return replace(ensemble, positions=ensemble.positions[inside], ids=ensemble.ids[inside])


def density_estimate(ensemble: WalkerEnsemble, grid: Grid, bandwidth: Optional[float] = None) -> RealField:
    """
    Histogram density with one bin per grid node

    Bins extend half a spacing either side of each node (clipped at dirichlet
    edges), so each bin width is the node's quadrature weight and the estimate
    integrates to one under the grid quadrature. An optional Gaussian
    smoothing bandwidth is given in length units.
    """
    edges = []
    for axis, (lower, upper, h) in enumerate(zip(grid.lower, grid.upper, grid.spacing)):
        axis_edges = lower - h / 2 + h * np.arange(grid.n[axis] + 1)
        if not grid.is_periodic:
            axis_edges[0], axis_edges[-1] = lower, upper
        edges.append(axis_edges)
    if grid.is_periodic:
        lower = np.asarray(grid.lower)
        period = np.asarray(grid.extent)
        points = lower + np.mod(ensemble.positions - lower, period)
        points = np.where(points >= lower + period - np.asarray(grid.spacing) / 2, points - period, points)
    else:
        points = grid.clip(ensemble.positions)
    counts, _ = np.histogramdd(points, bins=edges)
    density = counts / (ensemble.count * grid.quadrature_weights())
    if bandwidth:
        sigma = [bandwidth / h for h in grid.spacing]
        density = gaussian_filter(density, sigma, mode="wrap" if grid.is_periodic else "nearest")
        density /= grid.integrate(density)
        logger.info(f"Density smoothed with bandwidth {bandwidth}")
    return RealField(grid, density, ensemble.t)


def compare_density(estimate: RealField, reference: RealField) -> Dict[str, float]:
    """L1 distance and Kolmogorov-Smirnov gap (1-D) or maximum cell-CDF gap (2-D)"""
    if estimate.grid != reference.grid:
        raise FieldError("Density comparison needs both fields on the same grid")
    grid = estimate.grid
    difference = estimate.values - reference.values
    l1 = float(grid.integrate(np.abs(difference)))
    cumulative = grid.quadrature_weights() * difference
    for axis in range(grid.dimension):
        cumulative = np.cumsum(cumulative, axis=axis)
    return {"L1": l1, "KS": float(np.max(np.abs(cumulative)))}


@dataclass(frozen=True)
class ScreenHits:
    """Walker ids and transverse coordinates at their first forward crossing of a screen line"""

    ids: np.ndarray
    positions: np.ndarray

    def merged(self, other: "ScreenHits") -> "ScreenHits":
        fresh = ~np.isin(other.ids, self.ids)
        return ScreenHits(np.concatenate([self.ids, other.ids[fresh]]),
                          np.concatenate([self.positions, other.positions[fresh]]))

    @classmethod
    def empty(cls) -> "ScreenHits":
        return cls(np.zeros(0, dtype=int), np.zeros(0))


def screen_hits(previous: WalkerEnsemble, current: WalkerEnsemble, screen: float, axis: int = 0) -> ScreenHits:
    """
    Walkers whose coordinate along `axis` passed `screen` in the forward direction

    Both ensembles must hold the same walkers in the same order; the crossing
    point is linearly interpolated along the step.
    """
    if previous.count != current.count or not np.array_equal(previous.ids, current.ids):
        raise WalkerError("Screen detection needs the same walkers before and after the step")
    before = previous.positions[:, axis]
    after = current.positions[:, axis]
    crossed = (before < screen) & (after >= screen)
    if not crossed.any():
        return ScreenHits.empty()
    fraction = (screen - before[crossed]) / (after[crossed] - before[crossed])
    transverse = 1 - axis if current.dimension == 2 else axis
    start = previous.positions[crossed, transverse]
    end = current.positions[crossed, transverse]
    return ScreenHits(current.ids[crossed], start + fraction * (end - start))


def screen_histogram(hits: ScreenHits, axis_nodes: np.ndarray) -> np.ndarray:
    """Normalized density of screen hits with one bin per node of a 1-D axis"""
    h = axis_nodes[1] - axis_nodes[0]
    edges = np.concatenate([[axis_nodes[0] - h / 2], axis_nodes + h / 2])
    counts, _ = np.histogram(hits.positions, bins=edges)
    total = counts.sum()
    if total == 0:
        raise MeasurementImpossibleError("No walker reached the screen")
    return counts / (total * h)


def density_on(grid: Grid, psi: ComplexField) -> RealField:
    """|psi|^2 linearly interpolated onto another grid and renormalized"""
    if grid.dimension == 1:
        values = np.interp(grid.axes[0], psi.grid.axes[0], psi.density())
    else:
        interpolator = RegularGridInterpolator(psi.grid.axes, psi.density(), method="linear")
        values = interpolator(np.stack([c.ravel() for c in grid.mesh()], axis=1)).reshape(grid.shape)
    return RealField(grid, values / grid.integrate(values), psi.t)


@dataclass(frozen=True)
class FractalPath:
    """One trajectory sampled at base step delta from t = 0 to T"""

    samples: np.ndarray
    base_step: float
    params: PhysicalParams

    @property
    def duration(self) -> float:
        return self.base_step * (self.samples.shape[0] - 1)

    def resample(self, dt: float) -> np.ndarray:
        if dt > self.duration * (1 + 1e-12):
            raise AlignmentError(f"Resolution {dt} exceeds path duration {self.duration}")
        return self.samples[::resolution_multiple(self.base_step, dt)]


DriftSpec = Union[float, Callable[[np.ndarray, float], np.ndarray]]


def generate_fractal_paths(count: int, drift: DriftSpec, params: PhysicalParams, delta: float, T: float,
                           noise: NoiseSpec, start: float = 0.0) -> List[FractalPath]:
    """
    Ensemble of 1-D paths dX = v dt + dxi at base step delta

    `drift` is a constant velocity or a function v(x, t) of the position array.
    Path p uses noise stream p, so each path is reproducible on its own.
    """
    steps = int(round(T / delta))
    if steps < 1:
        raise ConfigError(["path duration must cover at least one base step"])
    kicks = np.stack([noise.draw(noise.generator(p), steps) for p in range(count)]) * np.sqrt(2 * params.D * delta)
    samples = np.empty((count, steps + 1))
    samples[:, 0] = start
    if callable(drift):
        for i in range(steps):
            samples[:, i + 1] = samples[:, i] + drift(samples[:, i], i * delta) * delta + kicks[:, i]
    else:
        samples[:, 1:] = start + np.cumsum(kicks + drift * delta, axis=1)
    return [FractalPath(samples[p], delta, params) for p in range(count)]


def generate_fractal_path(drift: DriftSpec, params: PhysicalParams, delta: float, T: float,
                          noise: NoiseSpec) -> FractalPath:
    return generate_fractal_paths(1, drift, params, delta, T, noise)[0]


def law_seed(seed: int, index: int) -> int:
    """Distinct 64-bit seed per noise law of one run"""
    state = np.random.SeedSequence(int(seed), spawn_key=(INITIAL_STREAM, int(index))).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass
class BornEmergenceReport:
    """Final ensemble densities against |psi|^2 for each noise law"""

    walkers: int
    laws: List[str]
    l1: Dict[str, float]
    ks: Dict[str, float]
    pairwise_l1: Dict[str, float]
    noise_floor: Optional[float]
    threshold: float
    drift_every: int
    walker_dt: float
    bins: int
    t: float
    under_sampled: bool
    reference: RealField = field(repr=False)
    densities: Dict[str, RealField] = field(repr=False)
    ensembles: Dict[str, WalkerEnsemble] = field(repr=False)
    final: Optional[ComplexField] = field(default=None, repr=False)

    @property
    def max_pairwise_l1(self) -> float:
        return max(self.pairwise_l1.values()) if self.pairwise_l1 else 0.0

    @property
    def law_invariant(self) -> Optional[bool]:
        if self.noise_floor is None or not self.pairwise_l1:
            return None
        return self.max_pairwise_l1 < 2.0 * self.noise_floor

    @property
    def passed(self) -> bool:
        return not self.under_sampled and self.law_invariant is not False

    def to_dict(self) -> dict:
        return {
            "walkers": self.walkers,
            "laws": self.laws,
            "t": self.t,
            "L1": self.l1,
            "KS": self.ks,
            "pairwise_L1": self.pairwise_l1,
            "noise_floor_L1": self.noise_floor,
            "law_invariant": self.law_invariant,
            "threshold": self.threshold,
            "drift_every": self.drift_every,
            "walker_dt": self.walker_dt,
            "bins": self.bins,
            "under_sampled": self.under_sampled,
            "passed": self.passed,
        }


def born_emergence_run(psi0: ComplexField, pot: PotentialSpec, params: PhysicalParams, dt: float, steps: int,
                       walkers: int, laws: Sequence[str], seed: int, threshold: float,
                       drift_every: int = 10, bins: int = 128, replicate: bool = False,
                       threads: int = 1, eps_node: Optional[float] = None) -> BornEmergenceReport:
    """
    Co-evolve walker ensembles with the wavefunction

    Walkers start Born-distributed and take one Euler-Maruyama step per drift
    refresh, i.e. every `drift_every` solver steps. With `replicate` a second
    Gaussian ensemble with another seed measures the Monte-Carlo noise floor.
    """
    solver = CrankNicolsonSolver(psi0.grid, pot, params, dt)
    runs = [(law, law) for law in laws]
    if replicate:
        runs.append(("gaussian-replica", GAUSSIAN))

    ensembles = {}
    for index, (name, law) in enumerate(runs):
        noise = NoiseSpec(law, law_seed(seed, index))
        start = sample_initial_positions(psi0, walkers, noise.generator(INITIAL_STREAM))
        ensembles[name] = create_ensemble(start, psi0.grid, noise, params, psi0.t)
    logger.info(f"Born emergence: {walkers} walkers x {len(runs)} ensembles, {steps} solver steps, "
                f"drift refreshed every {drift_every}")

    drift, _ = drift_fields(decompose(psi0, params, eps_node))
    psi = psi0
    for psi in solver.iterate(psi0, steps, drift_every):
        for name in ensembles:
            ensembles[name] = step_ensemble(ensembles[name], drift, psi.t - ensembles[name].t, threads)
        drift, _ = drift_fields(decompose(psi, params, eps_node))

    analysis = psi0.grid.coarsened(bins)
    reference = density_on(analysis, psi)
    densities = {name: density_estimate(ensemble, analysis) for name, ensemble in ensembles.items()}
    metrics = {name: compare_density(densities[name], reference) for name in densities}

    names = [name for name, _ in runs if name != "gaussian-replica"]
    pairwise = {}
    for i, first in enumerate(names):
        for second in names[i + 1:]:
            pairwise[f"{first}/{second}"] = float(analysis.integrate(
                np.abs(densities[first].values - densities[second].values)))
    floor = None
    if replicate:
        floor = float(analysis.integrate(np.abs(densities["gaussian-replica"].values - densities[GAUSSIAN].values))) \
            if GAUSSIAN in densities else None

    l1 = {name: metrics[name]["L1"] for name in names}
    under_sampled = walkers < 1000 or any(value > threshold for value in l1.values())
    if under_sampled:
        logger.warning(f"Ensemble under-sampled: L1 {l1} against threshold {threshold} with {walkers} walkers")
    return BornEmergenceReport(
        walkers=walkers,
        laws=names,
        l1=l1,
        ks={name: metrics[name]["KS"] for name in names},
        pairwise_l1=pairwise,
        noise_floor=floor,
        threshold=threshold,
        drift_every=drift_every,
        walker_dt=drift_every * dt,
        bins=bins,
        t=psi.t,
        under_sampled=under_sampled,
        reference=reference,
        densities=densities,
        ensembles=ensembles,
        final=psi,
    )
