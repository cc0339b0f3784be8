"""
Scenario configuration for scalelab runs
Flat key=value files parsed with python-dotenv, typed and validated in one
pass, with per-scenario desk-scale defaults and CLI overrides
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from dotenv import dotenv_values

from utils.errors import ConfigError, ScaleLabError
from utils.fields import BOUNDARIES, DIRICHLET, PERIODIC, ComplexField, Grid, PhysicalParams
from utils.geodesics import GAUSSIAN, NOISE_LAWS, NoiseSpec
from utils.schrodinger import (
    DOUBLE_SLIT,
    FREE,
    GAUSSIAN_PACKET,
    HARMONIC,
    PLANE_WAVE,
    POTENTIAL_KINDS,
    SHO_EIGENSTATE,
    SLIT_CHOICES,
    TABULATED,
    AnalyticState,
    PotentialSpec,
    Region,
    discrete_eigenstates,
    normalized,
)

logger = logging.getLogger("scalelab.config")

SCENARIOS = (
    "free-packet",
    "plane-wave",
    "sho",
    "double-slit",
    "born-emergence",
    "measurement-repeat",
    "fractal-scan",
    "verify-all",
)
DISCRETE_EIGENSTATE = "discrete-eigenstate"
STATES = (PLANE_WAVE, GAUSSIAN_PACKET, SHO_EIGENSTATE, DISCRETE_EIGENSTATE)
WHICH_WAY = ("none", "upper", "lower")
IDENTITY_TARGETS = ("sho", "free-packet", "plane-wave", "verify-all")


def env_int(name: str, default: int) -> int:
    """Integer environment setting; malformed values fall back to the default"""
    try:
        return int(os.getenv(name, str(default)))
    except ValueError:
        logger.warning(f"{name} is not a valid integer, defaulting to {default}")
        return default


def default_out_dir() -> str:
    return os.getenv("SCALELAB_OUT_DIR", "data/runs")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything one scenario run needs

    Grid bounds, wavevectors and centres are per-axis tuples; a single value
    is repeated on every axis. For periodic grids `upper - lower` is the period.
    """

    scenario: str
    seed: int
    dimension: int = 1
    lower: Tuple[float, ...] = (-10.0,)
    upper: Tuple[float, ...] = (10.0,)
    n: int = 512
    boundary: str = DIRICHLET
    m: float = 1.0
    D: float = 0.5
    c: float = 1.0
    potential: str = FREE
    omega: float = 1.0
    slit_width: float = 1.0
    slit_separation: float = 4.0
    barrier_height: float = 400.0
    barrier_width: float = 0.25
    barrier_position: float = 0.0
    slits: str = "both"
    state: str = GAUSSIAN_PACKET
    k: Tuple[float, ...] = (1.0,)
    x0: Tuple[float, ...] = (0.0,)
    sigma0: Tuple[float, ...] = (1.0,)
    k0: Tuple[float, ...] = (0.0,)
    level: int = 0
    dt: float = 1e-3
    duration: float = 1.0
    cadence: int = 100
    walkers: int = 100_000
    noise: Tuple[str, ...] = (GAUSSIAN,)
    drift_every: int = 10
    bins: int = 128
    replicate: bool = False
    threshold: float = 0.08
    region_lower: Tuple[float, ...] = (0.0,)
    region_upper: Tuple[float, ...] = (math.inf,)
    paths: int = 100
    delta: float = 1e-5
    path_duration: float = 1.0
    octaves: int = 8
    drift_velocity: float = 0.0
    screen: float = 10.0
    which_way: str = "upper"
    which_way_time: float = 0.45
    identity_target: str = "sho"
    out_dir: str = "data/runs"
    threads: int = 1

    @property
    def steps(self) -> int:
        return max(1, int(round(self.duration / self.dt)))

    def physical_params(self) -> PhysicalParams:
        return PhysicalParams(m=self.m, D=self.D, c=self.c)

    def grid(self) -> Grid:
        lower = _repeat(self.lower, self.dimension)
        upper = _repeat(self.upper, self.dimension)
        n = (self.n,) * self.dimension
        if self.boundary == PERIODIC:
            period = tuple(u - l for l, u in zip(lower, upper))
            upper = tuple(l + p * (self.n - 1) / self.n for l, p in zip(lower, period))
        return Grid(lower, upper, n, self.boundary)

    def potential_spec(self, slits: Optional[str] = None) -> PotentialSpec:
        return PotentialSpec(
            kind=self.potential,
            omega=self.omega,
            slit_width=self.slit_width,
            slit_separation=self.slit_separation,
            barrier_height=self.barrier_height,
            barrier_width=self.barrier_width,
            barrier_position=self.barrier_position,
            slits=slits or self.slits,
        )

    def initial_state(self) -> ComplexField:
        """Initial wavefunction, normalized on the scenario grid"""
        grid, params = self.grid(), self.physical_params()
        if self.state == DISCRETE_EIGENSTATE:
            _, states = discrete_eigenstates(grid, self.potential_spec(), params, self.level + 1)
            return states[self.level]
        analytic = AnalyticState(self.state, k=self.k, x0=self.x0, sigma0=self.sigma0, k0=self.k0,
                                 n=self.level, omega=self.omega)
        psi = analytic.evaluate(grid, params)
        norm = psi.norm()
        if abs(norm - 1.0) > 1e-6:
            logger.info(f"Renormalizing initial {self.state} from norm {norm:.8f} on the truncated grid")
        return normalized(psi)

    def noise_specs(self) -> List[NoiseSpec]:
        return [NoiseSpec(law, self.seed) for law in self.noise]

    def region(self) -> Region:
        return Region(_repeat(self.region_lower, self.dimension), _repeat(self.region_upper, self.dimension))

    def to_dict(self) -> Dict[str, Any]:
        """Echo of every key, JSON-ready"""
        echo = {}
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = [None if isinstance(v, float) and math.isinf(v) else v for v in value]
            echo[key] = value
        return echo

    def problems(self) -> List[str]:
        """Semantic checks; an empty list means the config is runnable"""
        problems = []
        if self.scenario not in SCENARIOS:
            problems.append(f"scenario must be one of {', '.join(SCENARIOS)}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            problems.append("seed must be an unsigned 64-bit integer")
        if self.dimension not in (1, 2):
            problems.append("dimension must be 1 or 2")
        if self.boundary not in BOUNDARIES:
            problems.append(f"boundary must be one of {BOUNDARIES}")
        if self.potential not in POTENTIAL_KINDS:
            problems.append(f"potential must be one of {POTENTIAL_KINDS}")
        if self.state not in STATES:
            problems.append(f"state must be one of {STATES}")
        if self.slits not in SLIT_CHOICES:
            problems.append(f"slits must be one of {SLIT_CHOICES}")
        if self.which_way not in WHICH_WAY:
            problems.append(f"which_way must be one of {WHICH_WAY}")
        if self.identity_target not in IDENTITY_TARGETS:
            problems.append(f"identity_target must be one of {IDENTITY_TARGETS}")
        for law in self.noise:
            if law not in NOISE_LAWS:
                problems.append(f"noise law '{law}' is not one of {NOISE_LAWS}")
        for key in ("m", "D", "c", "dt", "duration", "delta", "path_duration", "omega"):
            if not getattr(self, key) > 0:
                problems.append(f"{key} must be positive")
        for key in ("n", "cadence", "walkers", "drift_every", "bins", "paths", "octaves", "threads"):
            if getattr(self, key) < 1:
                problems.append(f"{key} must be at least 1")
        if self.n < 8:
            problems.append("n must be at least 8")
        if not 0 < self.threshold < 2:
            problems.append("threshold must lie in (0, 2)")
        if self.level < 0:
            problems.append("level must be >= 0")
        for key in ("lower", "upper", "k", "x0", "sigma0", "k0", "region_lower", "region_upper"):
            if len(getattr(self, key)) not in (1, self.dimension):
                problems.append(f"{key} needs 1 or {self.dimension} components")
        if not problems:
            problems.extend(self._build_problems())
        return problems

    def _build_problems(self) -> List[str]:
        # Construct the domain objects so their own preconditions are checked before any compute
        problems = []
        try:
            grid = self.grid()
            self.physical_params()
            pot = self.potential_spec()
            pot.check_geometry(grid)
            if self.potential == DOUBLE_SLIT and self.dimension != 2:
                problems.append("double-slit scenario needs dimension 2")
            if self.scenario == "double-slit" and not grid.lower[0] < self.screen < grid.upper[0]:
                problems.append(f"screen {self.screen} lies outside the x range")
            if self.potential == TABULATED:
                problems.append(f"potential '{self.potential}' cannot be built from a scenario file")
            self.region()
            maximum = max(abs(v) for v in pot.evaluate(grid, self.physical_params()).ravel())
            if self.dt * maximum / self.physical_params().hbar >= 1:
                problems.append(f"dt*max|Phi|/hbar = {self.dt * maximum:.3g} must stay below 1")
        except ConfigError as e:
            problems.extend(e.problems)
        except ScaleLabError as e:
            problems.append(str(e))
        return problems


def _repeat(values: Tuple[float, ...], dimension: int) -> Tuple[float, ...]:
    return tuple(values) * dimension if len(values) == 1 else tuple(values)


SCENARIO_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "free-packet": {"state": GAUSSIAN_PACKET, "x0": (-2.0,), "k0": (1.0,), "duration": 1.0, "threshold": 0.08},
    "plane-wave": {"boundary": PERIODIC, "lower": (0.0,), "upper": (2 * math.pi,), "n": 64,
                   "state": PLANE_WAVE, "k": (1.0,), "duration": 1.0},
    "sho": {"potential": HARMONIC, "state": DISCRETE_EIGENSTATE, "duration": 10.0, "threshold": 0.05},
    "born-emergence": {"potential": HARMONIC, "state": DISCRETE_EIGENSTATE, "duration": 10.0,
                       "threshold": 0.05, "noise": NOISE_LAWS, "replicate": True},
    "measurement-repeat": {"potential": HARMONIC, "state": DISCRETE_EIGENSTATE, "duration": 1.0},
    "double-slit": {"dimension": 2, "lower": (-4.0, -8.5), "upper": (13.0, 8.5), "n": 256,
                    "potential": DOUBLE_SLIT, "state": GAUSSIAN_PACKET, "x0": (-2.0, 0.0),
                    "sigma0": (0.5, 2.5), "k0": (10.0, 0.0), "duration": 1.65, "drift_every": 1,
                    "bins": 64, "screen": 10.0},
    "fractal-scan": {"delta": 1e-5, "path_duration": 1.0, "paths": 100, "octaves": 8, "drift_velocity": 10.0},
    "verify-all": {"potential": HARMONIC, "identity_target": "verify-all"},
}

FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _parse(key: str, raw: Any) -> Any:
    kind = FIELD_TYPES[key]
    if raw is None:
        raise ValueError("has no value")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    if kind in (bool, "bool"):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"'{raw}' is not a boolean")
    if kind in (str, "str"):
        return str(raw).strip()
    items = raw if isinstance(raw, (list, tuple)) else [p for p in str(raw).split(",") if p.strip()]
    if "str" in str(kind):
        return tuple(str(p).strip() for p in items)
    return tuple(float(p) for p in items)


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """
    Build a ScenarioConfig from a key=value file and CLI overrides

    Args:
        path: Scenario file (optional when the overrides name the scenario)
        overrides: Values from the command line; None entries are ignored

    Returns:
        A validated ScenarioConfig

    Raises:
        ConfigError listing every problem found
    """
    raw: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError([f"config file not found: {path}"])
        raw.update(dotenv_values(path))
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})

    problems = []
    parsed: Dict[str, Any] = {}
    for key, value in raw.items():
        if key not in FIELD_TYPES:
            problems.append(f"unknown key '{key}'")
            continue
        try:
            parsed[key] = _parse(key, value)
        except (TypeError, ValueError) as e:
            problems.append(f"{key}: {e}")

    scenario = parsed.get("scenario")
    if scenario is None:
        problems.append("scenario is required")
    elif scenario not in SCENARIOS:
        problems.append(f"scenario must be one of {', '.join(SCENARIOS)}")
    if "seed" not in parsed:
        problems.append("seed is mandatory (config key or --seed)")
    if problems:
        raise ConfigError(problems)

    values = dict(SCENARIO_DEFAULTS.get(scenario, {}))
    values.setdefault("out_dir", default_out_dir())
    values.setdefault("threads", env_int("SCALELAB_THREADS", 1))
    values.update(parsed)
    config = ScenarioConfig(**values)

    problems = config.problems()
    if problems:
        raise ConfigError(problems)
    logger.info(f"Loaded scenario '{config.scenario}' (seed {config.seed}) from {path or 'command line'}")
    return config


def with_overrides(config: ScenarioConfig, **overrides: Any) -> ScenarioConfig:
    """Copy with typed overrides, revalidated"""
    updated = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    problems = updated.problems()
    if problems:
        raise ConfigError(problems)
    return updated
