"""
Scale-law analysis of stored paths
Length divergence under resolution refinement, fractal dimension fits, the
v/w scale decomposition around the transition scale tau = hbar/(m v^2) and
the mean-square velocity law 2D/dt
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.stats import linregress

from utils.errors import LadderError, ScaleScanError
from utils.fields import PhysicalParams, two_sided_derivative
from utils.geodesics import FractalPath

logger = logging.getLogger("scalelab.fractal")

MIN_FIT_POINTS = 5
DEFAULT_OCTAVES = 8
DEFAULT_RATIO = 2.0


@dataclass(frozen=True)
class ScaleScan:
    """Quantity measured on a strictly increasing ladder of resolutions"""

    quantity: str
    resolutions: np.ndarray
    values: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        for name in ("resolutions", "values", "stderr"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.resolutions.shape == self.values.shape == self.stderr.shape):
            raise ScaleScanError("Scan arrays must have equal lengths")
        if np.any(np.diff(self.resolutions) <= 0):
            raise ScaleScanError("Resolution ladder must be strictly increasing")

    def window(self, lower: float = 0.0, upper: float = math.inf) -> "ScaleScan":
        keep = (self.resolutions >= lower) & (self.resolutions <= upper)
        return ScaleScan(self.quantity, self.resolutions[keep], self.values[keep], self.stderr[keep])

    def rows(self) -> List[dict]:
        return [{"dt": float(r), self.quantity: float(v), "stderr": float(s)}
                for r, v, s in zip(self.resolutions, self.values, self.stderr)]


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    slope_stderr: float
    points: int


@dataclass(frozen=True)
class FractalDimensionFit:
    """
    Fractal dimension from a time-resolution ladder

    With s the slope of log L against log dt, D_F = 1/(1 + s); lengths
    scale as dx^(1 - D_F) in space and dx ~ dt^(1/D_F).
    """

    slope: float
    intercept: float
    slope_stderr: float
    dimension: float
    stderr: float
    points: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "D_F": self.dimension,
                "stderr": self.stderr, "slope_stderr": self.slope_stderr, "points": self.points}


def geometric_ladder(base_step: float, octaves: int = DEFAULT_OCTAVES, ratio: float = DEFAULT_RATIO,
                     start_multiple: int = 1) -> np.ndarray:
    """Resolutions base_step * start_multiple * ratio^j for j = 0..octaves"""
    return base_step * start_multiple * ratio ** np.arange(octaves + 1)


def path_length(path: FractalPath, dt: float) -> float:
    """Sum of |dX| over the path resampled at dt"""
    return float(np.sum(np.abs(np.diff(path.resample(dt)))))


def _ensemble_scan(quantity: str, per_path: np.ndarray, ladder: Sequence[float]) -> ScaleScan:
    count = per_path.shape[0]
    spread = per_path.std(axis=0, ddof=1) / np.sqrt(count) if count > 1 else np.zeros(per_path.shape[1])
    return ScaleScan(quantity, np.asarray(ladder), per_path.mean(axis=0), spread)


def scan_path_length(paths: Sequence[FractalPath], ladder: Sequence[float]) -> ScaleScan:
    """Ensemble-mean path length per resolution"""
    lengths = np.array([[path_length(path, dt) for dt in ladder] for path in paths])
    return _ensemble_scan("length", lengths, ladder)


def fit_power_law(scan: ScaleScan) -> PowerLawFit:
    """Ordinary least squares of log value against log resolution"""
    if scan.resolutions.size < MIN_FIT_POINTS:
        raise ScaleScanError(f"Fit needs at least {MIN_FIT_POINTS} points, got {scan.resolutions.size}")
    if np.any(scan.values <= 0):
        raise ScaleScanError("Power-law fit needs positive values")
    result = linregress(np.log(scan.resolutions), np.log(scan.values))
    return PowerLawFit(float(result.slope), float(result.intercept), float(result.stderr), int(scan.resolutions.size))


def fit_fractal_dimension(scan: ScaleScan) -> FractalDimensionFit:
    fit = fit_power_law(scan)
    denominator = 1.0 + fit.slope
    if denominator <= 0:
        raise ScaleScanError(f"Length slope {fit.slope:.3f} does not correspond to a finite dimension")
    dimension = 1.0 / denominator
    logger.info(f"Fractal dimension {dimension:.4f} from slope {fit.slope:.4f} over {fit.points} resolutions")
    return FractalDimensionFit(fit.slope, fit.intercept, fit.slope_stderr, dimension,
                               fit.slope_stderr / denominator ** 2, fit.points)


def transition_scale(params: PhysicalParams, v: float) -> float:
    """tau = hbar/(m v^2); infinite for v = 0"""
    if v == 0:
        logger.warning("Zero velocity gives an infinite transition scale")
        return math.inf
    return params.hbar / (params.m * v ** 2)


def exclude_transition(scan: ScaleScan, tau: float) -> ScaleScan:
    """Drop the octave centred on tau, where neither power law holds"""
    keep = (scan.resolutions < tau / math.sqrt(2)) | (scan.resolutions > tau * math.sqrt(2))
    return ScaleScan(scan.quantity, scan.resolutions[keep], scan.values[keep], scan.stderr[keep])


@dataclass(frozen=True)
class VelocityDecomposition:
    """Large-scale velocity v and fluctuation amplitude w(dt)"""

    v: float
    tau: float
    resolutions: np.ndarray
    w: np.ndarray

    def scan(self) -> ScaleScan:
        return ScaleScan("w", self.resolutions, self.w, np.zeros_like(self.w))

    def to_dict(self) -> dict:
        return {"v": self.v, "tau": self.tau, "dt": self.resolutions.tolist(), "w": self.w.tolist()}


def velocity_scale_decomposition(paths: Sequence[FractalPath], tau: float,
                                 ladder: Sequence[float]) -> VelocityDecomposition:
    """
    Split the two-sided derivative into v + w

    v is the ensemble mean forward derivative at the largest resolution and
    w(dt) the rms deviation of the forward derivative from v at each dt.
    """
    ladder = np.asarray(ladder, dtype=float)
    if not (ladder.min() < tau < ladder.max()):
        raise LadderError(f"Ladder {ladder.min():.3g}..{ladder.max():.3g} does not bracket tau={tau:.3g}")
    forward = {dt: np.concatenate([two_sided_derivative(p.samples, p.base_step, dt).forward for p in paths])
               for dt in ladder}
    v = float(forward[ladder[-1]].mean())
    w = np.array([np.sqrt(np.mean((forward[dt] - v) ** 2)) for dt in ladder])
    return VelocityDecomposition(v=v, tau=tau, resolutions=ladder, w=w)


def mean_square_velocity(paths: Sequence[FractalPath], dt: float) -> float:
    """<(dX/dt)^2> over all non-overlapping increments of the ensemble"""
    increments = np.concatenate([np.diff(path.resample(dt)) for path in paths])
    return float(np.mean((increments / dt) ** 2))


def mean_square_velocity_scan(paths: Sequence[FractalPath], ladder: Sequence[float]) -> ScaleScan:
    per_path = np.array([[mean_square_velocity([path], dt) for dt in ladder] for path in paths])
    return _ensemble_scan("mean_square_velocity", per_path, ladder)
