"""
Scenario runner for scalelab
Runs one configured scenario, writes its artifacts and manifest, and turns
completed run directories into gnuplot bundles
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import find_peaks

from lab import __version__
from utils.errors import ConfigError, IncompleteRunError, MeasurementImpossibleError
from utils.fields import ComplexField, write_field_binary
from utils.fractal import (
    FractalPath,
    exclude_transition,
    fit_fractal_dimension,
    fit_power_law,
    geometric_ladder,
    mean_square_velocity_scan,
    scan_path_length,
    transition_scale,
    velocity_scale_decomposition,
)
from utils.geodesics import (
    INITIAL_STREAM,
    BornEmergenceReport,
    NoiseSpec,
    ScreenHits,
    WalkerEnsemble,
    born_emergence_run,
    create_ensemble,
    drift_fields,
    generate_fractal_paths,
    sample_initial_positions,
    screen_histogram,
    screen_hits,
    select_geodesics,
    step_ensemble,
)
from utils.hydrodynamics import decompose, screen_flux
from utils.report_generator import ReportGenerator
from utils.run_manager import RunManager, RunManifest, append_files, load_manifest, verify_manifest
from utils.scenario_config import ScenarioConfig
from utils.schrodinger import (
    CrankNicolsonSolver,
    Region,
    expectation,
    measurement_probability,
    project_measurement,
    uncertainty_product,
)
from utils.verify import run_identity_suite

logger = logging.getLogger("scalelab.scenarios")

NORM_DRIFT_LIMIT = 1e-8
ENERGY_DRIFT_LIMIT = 1e-4
UNCERTAINTY_SLACK = 1e-3
REPEAT_TOLERANCE = 1e-10
FRINGE_TOLERANCE = 0.05
NON_ADDITIVE_FACTOR = 5.0
WHICH_WAY_LIMIT = 0.08
BROWNIAN_DIMENSION = (1.9, 2.1)
STRAIGHT_DIMENSION = (0.95, 1.05)
MSV_SLOPE = (-1.0, 0.05)
W_SLOPE = (-0.5, 0.1)


class ScenarioRunner:
    """
    Runs scenarios and owns their output directories

    Each scenario handler receives the config, the RunManager and a
    ReportGenerator bound to the run directory, and returns whether the
    run's acceptance criteria passed.
    """

    def __init__(self):
        self._handlers: Dict[str, Callable[[ScenarioConfig, RunManager, ReportGenerator], bool]] = {
            "free-packet": self._solve,
            "plane-wave": self._solve,
            "sho": self._solve,
            "born-emergence": self._born_emergence,
            "measurement-repeat": self._measurement_repeat,
            "fractal-scan": self._fractal_scan,
            "verify-all": self._verify_all,
            "double-slit": self._double_slit,
        }

    def run(self, config: ScenarioConfig) -> RunManifest:
        """
        Execute one scenario

        Args:
            config: Scenario configuration; validated again before any compute

        Returns:
            The written manifest

        Raises:
            ConfigError before anything is written; any failure after the run
            directory exists propagates once the manifest is flagged incomplete
        """
        problems = config.problems()
        if problems:
            raise ConfigError(problems)
        with RunManager(config.out_dir, config.scenario, config.seed, config.to_dict(),
                        __version__, config.threads) as run:
            reports = ReportGenerator(run.run_dir, run.register)
            passed = self._handlers[config.scenario](config, run, reports)
            return run.finish(passed=passed)

    def _solve(self, config: ScenarioConfig, run: RunManager, reports: ReportGenerator) -> bool:
        grid, params, pot = config.grid(), config.physical_params(), config.potential_spec()
        psi0 = config.initial_state()
        solver = CrankNicolsonSolver(grid, pot, params, config.dt)
        energy0 = expectation(psi0, "hamiltonian", params, pot).real

        rows = [self._diagnostics(psi0, 0, pot, params, grid.is_periodic)]
        run.register(write_field_binary(psi0, run.path("snapshots/psi_00000.bin")))
        psi = psi0
        for psi in solver.iterate(psi0, config.steps, config.cadence):
            step = int(round((psi.t - psi0.t) / config.dt))
            rows.append(self._diagnostics(psi, step, pot, params, grid.is_periodic))
            run.register(write_field_binary(psi, run.path(f"snapshots/psi_{step:05d}.bin")))
            logger.info(f"{config.scenario}: step {step}/{config.steps}, t={psi.t:.4f}, "
                        f"norm-1={rows[-1]['norm'] - 1:.2e}")
        reports.export_to_csv(rows, "diagnostics.csv")
        reports.hydro_csv(decompose(psi0, params), "hydro_initial.csv")
        reports.hydro_csv(decompose(psi, params), "hydro_final.csv")

        norm_drift = max(abs(row["norm"] - 1.0) for row in rows)
        energy_drift = max(abs(row["energy"] - energy0) for row in rows) / max(abs(energy0), 1e-300)
        run.record(norm_drift=norm_drift, energy_drift=energy_drift, steps=config.steps)
        passed = norm_drift < NORM_DRIFT_LIMIT and energy_drift < ENERGY_DRIFT_LIMIT
        if not grid.is_periodic:
            bound = params.hbar / 2 * (1 - UNCERTAINTY_SLACK)
            smallest = min(row["delta_x"] * row["delta_p"] for row in rows)
            run.record(min_uncertainty_product=smallest)
            passed = passed and smallest >= bound

        if config.scenario in ("sho", "free-packet"):
            born = self._walkers(config, psi0, reports, list(config.noise), replicate=False)
            run.record(born=born.to_dict())
            passed = passed and born.passed
        if not passed:
            logger.warning(f"{config.scenario} failed: norm drift {norm_drift:.2e}, energy drift {energy_drift:.2e}")
        return passed

    @staticmethod
    def _diagnostics(psi: ComplexField, step: int, pot, params, periodic: bool) -> dict:
        row = {"step": step, "t": psi.t, "norm": psi.norm(),
               "energy": expectation(psi, "hamiltonian", params, pot).real}
        if not periodic:
            spread = uncertainty_product(psi, params)
            row.update(delta_x=spread.delta_x, delta_p=spread.delta_p)
        return row

    def _walkers(self, config: ScenarioConfig, psi0: ComplexField, reports: ReportGenerator,
                 laws: List[str], replicate: bool) -> BornEmergenceReport:
        """Co-evolve walker ensembles and write their snapshots and density overlay"""
        born = born_emergence_run(
            psi0, config.potential_spec(), config.physical_params(), config.dt, config.steps,
            config.walkers, laws, config.seed, config.threshold, drift_every=config.drift_every,
            bins=config.bins, replicate=replicate, threads=config.threads)
        for name, ensemble in born.ensembles.items():
            reports.ensemble_binary(ensemble, f"walkers_{name}.bin")
        if psi0.grid.dimension == 1:
            columns = {"x": born.reference.grid.axes[0], "reference": born.reference.values}
            columns.update({name: density.values for name, density in born.densities.items()})
            reports.columns_csv(columns, "density_overlay.csv")
        reports.export_json(born.to_dict(), "born_report.json")
        return born

    def _born_emergence(self, config: ScenarioConfig, run: RunManager, reports: ReportGenerator) -> bool:
        born = self._walkers(config, config.initial_state(), reports, list(config.noise), config.replicate)
        run.record(born=born.to_dict(), under_sampled=born.under_sampled)
        return born.passed

    def _measurement_repeat(self, config: ScenarioConfig, run: RunManager, reports: ReportGenerator) -> bool:
        born = self._walkers(config, config.initial_state(), reports, [config.noise[0]], replicate=False)
        ensemble = born.ensembles[config.noise[0]]
        psi = born.final
        region = config.region()

        probability = measurement_probability(psi, region)
        projected = project_measurement(psi, region)
        selected = select_geodesics(ensemble, region)
        repeated = measurement_probability(projected, region)
        reselected = select_geodesics(selected, region)
        identical = bool(np.array_equal(reselected.ids, selected.ids)
                         and np.array_equal(reselected.positions, selected.positions))
        fraction = selected.count / ensemble.count

        reports.ensemble_binary(selected, "walkers_selected.bin")
        reports.ensemble_binary(reselected, "walkers_reselected.bin")
        summary = {
            "probability": probability,
            "walker_fraction": fraction,
            "repeat_probability": repeated,
            "identical_ensemble": identical,
            "selected": selected.count,
        }
        reports.export_json(summary, "measurement.json")
        run.record(**summary)
        logger.info(f"Measurement: P={probability:.6f}, walker fraction {fraction:.6f}, repeat {repeated:.15f}")
        return abs(repeated - 1.0) < REPEAT_TOLERANCE and identical

    def _fractal_scan(self, config: ScenarioConfig, run: RunManager, reports: ReportGenerator) -> bool:
        params = config.physical_params()
        noise = NoiseSpec(config.noise[0], config.seed)
        ladder = geometric_ladder(config.delta, config.octaves)

        brownian = generate_fractal_paths(config.paths, 0.0, params, config.delta, config.path_duration, noise)
        lengths = scan_path_length(brownian, ladder)
        brownian_fit = fit_fractal_dimension(lengths)
        steps = int(round(config.path_duration / config.delta))
        line = FractalPath(np.linspace(0.0, config.path_duration, steps + 1), config.delta, params)
        straight = scan_path_length([line], ladder)
        straight_fit = fit_fractal_dimension(straight)
        msv = mean_square_velocity_scan(brownian, ladder)
        msv_fit = fit_power_law(msv)
        del brownian

        reports.scan_csv(lengths, "length_brownian.csv")
        reports.scan_csv(straight, "length_control.csv")
        reports.scan_csv(msv, "msv.csv")
        fits = {
            "brownian": brownian_fit.to_dict(),
            "straight": straight_fit.to_dict(),
            "mean_square_velocity": {"slope": msv_fit.slope, "intercept": msv_fit.intercept,
                                     "stderr": msv_fit.slope_stderr},
        }
        passed = (BROWNIAN_DIMENSION[0] <= brownian_fit.dimension <= BROWNIAN_DIMENSION[1]
                  and STRAIGHT_DIMENSION[0] <= straight_fit.dimension <= STRAIGHT_DIMENSION[1]
                  and abs(msv_fit.slope - MSV_SLOPE[0]) <= MSV_SLOPE[1])

        tau = transition_scale(params, config.drift_velocity)
        if math.isinf(tau):
            fits["velocity_decomposition"] = None
        else:
            octaves = max(config.octaves, int(math.ceil(math.log2(4 * tau / config.delta))))
            octaves = min(octaves, int(math.floor(math.log2(config.path_duration / (2 * config.delta)))))
            wide = geometric_ladder(config.delta, octaves)
            drifting = generate_fractal_paths(config.paths, config.drift_velocity, params, config.delta,
                                              config.path_duration, NoiseSpec(config.noise[0], config.seed + 1))
            decomposition = velocity_scale_decomposition(drifting, tau, wide)
            w_scan = decomposition.scan()
            reports.scan_csv(w_scan, "w.csv")
            fluctuating = exclude_transition(w_scan.window(upper=tau), tau)
            w_fit = fit_power_law(fluctuating)
            fits["velocity_decomposition"] = dict(decomposition.to_dict(), slope=w_fit.slope,
                                                  intercept=w_fit.intercept, stderr=w_fit.slope_stderr)
            passed = passed and abs(w_fit.slope - W_SLOPE[0]) <= W_SLOPE[1]
            logger.info(f"Velocity decomposition: v={decomposition.v:.4f}, tau={tau:.4g}, w slope {w_fit.slope:.3f}")

        reports.export_json(fits, "fits.json")
        run.record(D_F=brownian_fit.dimension, D_F_control=straight_fit.dimension, msv_slope=msv_fit.slope)
        return passed

    def _verify_all(self, config: ScenarioConfig, run: RunManager, reports: ReportGenerator) -> bool:
        identities = run_identity_suite(config.identity_target, config.physical_params(), n=config.n,
                                        bound=max(abs(config.lower[0]), abs(config.upper[0])), dt=config.dt,
                                        omega=config.omega, threads=config.threads)
        reports.identity_json(identities)
        failed = [report.name for report in identities if not report.passed]
        run.record(identities=len(identities), failed=failed)
        return not failed

    def _double_slit(self, config: ScenarioConfig, run: RunManager, reports: ReportGenerator) -> bool:
        report = double_slit(config)
        y = report.screen_axis
        reports.columns_csv({"y": y, "both": report.both, "upper": report.upper, "lower": report.lower,
                             "sum_of_singles": report.sum_of_singles}, "profiles.csv")
        columns = {"y": report.bins_axis, "both": report.both_binned, "walker_both": report.walker_both}
        if report.walker_which_way is not None:
            columns.update(which_way_reference=report.which_way_reference,
                           walker_which_way=report.walker_which_way)
        reports.columns_csv(columns, "walker_profiles.csv")
        reports.ensemble_binary(report.ensembles["both"], "walkers_both.bin")
        if "which_way" in report.ensembles:
            reports.ensemble_binary(report.ensembles["which_way"], "walkers_which_way.bin")
        run.register(write_field_binary(report.final, run.path("psi_final.bin")))
        reports.export_json(report.to_dict(), "double_slit.json")
        run.record(**report.to_dict())
        return report.passed


@dataclass
class DoubleSlitReport:
    """
    Screen profiles of a two-slit run

    Solver profiles are time-integrated forward flux on the grid's y nodes;
    binned profiles and walker histograms share the `bins` axis.
    """

    screen_axis: np.ndarray
    both: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    bins_axis: np.ndarray
    both_binned: np.ndarray
    walker_both: np.ndarray
    hits: int
    fringe_spacing: float
    expected_spacing: float
    non_additivity: float
    noise_floor: float
    born_l1: float
    which_way: str
    which_way_reference: Optional[np.ndarray] = None
    walker_which_way: Optional[np.ndarray] = None
    which_way_l1: Optional[float] = None
    which_way_hits: int = 0
    final: Optional[ComplexField] = field(default=None, repr=False)
    ensembles: Dict[str, WalkerEnsemble] = field(default_factory=dict, repr=False)

    @property
    def sum_of_singles(self) -> np.ndarray:
        return _unit_area(self.upper + self.lower, self.screen_axis)

    @property
    def fringe_ok(self) -> bool:
        return abs(self.fringe_spacing / self.expected_spacing - 1.0) <= FRINGE_TOLERANCE

    @property
    def non_additive(self) -> bool:
        return self.non_additivity > NON_ADDITIVE_FACTOR * self.noise_floor

    @property
    def which_way_ok(self) -> Optional[bool]:
        return None if self.which_way_l1 is None else self.which_way_l1 < WHICH_WAY_LIMIT

    @property
    def passed(self) -> bool:
        return self.fringe_ok and self.non_additive and self.which_way_ok is not False

    def to_dict(self) -> dict:
        return {
            "fringe_spacing": self.fringe_spacing,
            "expected_spacing": self.expected_spacing,
            "fringe_ok": self.fringe_ok,
            "non_additivity_L1": self.non_additivity,
            "noise_floor_L1": self.noise_floor,
            "non_additive": self.non_additive,
            "walker_L1": self.born_l1,
            "hits": self.hits,
            "which_way": self.which_way,
            "which_way_L1": self.which_way_l1,
            "which_way_hits": self.which_way_hits,
            "which_way_ok": self.which_way_ok,
            "passed": self.passed,
        }


@dataclass
class _Transport:
    flux: np.ndarray
    hits: ScreenHits
    psi: ComplexField
    ensemble: Optional[WalkerEnsemble]
    captured: Optional[tuple] = None


def _unit_area(profile: np.ndarray, axis: np.ndarray) -> np.ndarray:
    area = float(np.sum(profile) * (axis[1] - axis[0]))
    if area <= 0:
        raise MeasurementImpossibleError("No forward flux reached the screen")
    return profile / area


def _binned(axis: np.ndarray, profile: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Average of a fine profile over bins centred on `nodes`, as a unit-area density"""
    h = nodes[1] - nodes[0]
    edges = np.concatenate([[nodes[0] - h / 2], nodes + h / 2])
    cdf = cumulative_trapezoid(profile, axis, initial=0.0)
    mass = np.diff(np.interp(edges, axis, cdf))
    return mass / (mass.sum() * h)


def _l1(first: np.ndarray, second: np.ndarray, axis: np.ndarray) -> float:
    return float(np.sum(np.abs(first - second)) * (axis[1] - axis[0]))


def fringe_spacing(axis: np.ndarray, profile: np.ndarray, expected: float) -> float:
    """
    Mean distance between the interference maxima within 1.5 expected spacings of the centre

    Peak positions are refined with a three-point parabola. Returns nan when
    fewer than two maxima are found.
    """
    peaks, _ = find_peaks(profile, prominence=0.05 * float(profile.max()))
    h = axis[1] - axis[0]
    positions = []
    for index in peaks:
        if not 0 < index < axis.size - 1:
            continue
        left, mid, right = profile[index - 1:index + 2]
        curvature = left - 2 * mid + right
        offset = 0.5 * (left - right) / curvature if curvature != 0 else 0.0
        positions.append(axis[index] + offset * h)
    central = sorted(p for p in positions if abs(p) <= 1.5 * expected)
    if len(central) < 2:
        logger.warning(f"Found {len(central)} central fringe maxima; spacing undefined")
        return math.nan
    return (central[-1] - central[0]) / (len(central) - 1)


def monte_carlo_floor(density: np.ndarray, axis: np.ndarray, count: int) -> float:
    """Expected L1 between a histogram of `count` samples and its exact density"""
    width = axis[1] - axis[0]
    return float(np.sum(np.sqrt(2.0 * np.clip(density, 0.0, None) * width / (math.pi * count))))


def _transport(solver: CrankNicolsonSolver, psi0: ComplexField, ensemble: Optional[WalkerEnsemble],
               steps: int, every: int, config: ScenarioConfig, capture_at: Optional[float] = None) -> _Transport:
    """Evolve psi (and walkers) while integrating screen flux and recording screen crossings"""
    params = config.physical_params()
    flux = np.zeros(psi0.grid.n[1])
    hits = ScreenHits.empty()
    drift = drift_fields(decompose(psi0, params))[0] if ensemble is not None else None
    captured = None
    previous_t, psi = psi0.t, psi0
    for count, psi in enumerate(solver.iterate(psi0, steps, every), start=1):
        flux += screen_flux(psi, params, config.screen) * (psi.t - previous_t)
        previous_t = psi.t
        if ensemble is not None:
            before = ensemble
            ensemble = step_ensemble(ensemble, drift, psi.t - ensemble.t, config.threads)
            hits = hits.merged(screen_hits(before, ensemble, config.screen))
            drift = drift_fields(decompose(psi, params))[0]
            if capture_at is not None and captured is None and psi.t >= capture_at - 1e-12:
                captured = (psi, ensemble)
        if count % config.cadence == 0:
            logger.info(f"Two-slit transport t={psi.t:.3f}, {hits.ids.size} walkers on screen")
    return _Transport(flux, hits, psi, ensemble, captured)


def _selection_region(config: ScenarioConfig) -> Region:
    behind = config.barrier_position + config.barrier_width / 2
    if config.which_way == "upper":
        return Region((behind, 0.0), (math.inf, math.inf))
    return Region((behind, -math.inf), (math.inf, 0.0))


def double_slit(config: ScenarioConfig) -> DoubleSlitReport:
    """
    Two-slit experiment with walkers, single-slit controls and optional which-way selection

    Args:
        config: 2-D double-slit scenario

    Returns:
        DoubleSlitReport with solver and walker screen profiles
    """
    grid, params = config.grid(), config.physical_params()
    if grid.dimension != 2:
        raise ConfigError(["double-slit scenario needs dimension 2"])
    pot = config.potential_spec("both")
    pot.check_geometry(grid)
    psi0 = config.initial_state()
    every = config.drift_every

    noise = NoiseSpec(config.noise[0], config.seed)
    start = sample_initial_positions(psi0, config.walkers, noise.generator(INITIAL_STREAM))
    ensemble = create_ensemble(start, grid, noise, params, psi0.t)
    solver = CrankNicolsonSolver(grid, pot, params, config.dt)
    capture_at = config.which_way_time if config.which_way != "none" else None
    logger.info(f"Two-slit run: {config.walkers} walkers, {config.steps} steps, screen at x={config.screen}")
    both = _transport(solver, psi0, ensemble, config.steps, every, config, capture_at)

    singles = {}
    for slit in ("upper", "lower"):
        control = CrankNicolsonSolver(grid, pot.with_slits(slit), params, config.dt)
        singles[slit] = _transport(control, psi0, None, config.steps, every, config).flux
        logger.info(f"Single-slit control '{slit}' done")

    y = grid.axes[1]
    profiles = {"both": _unit_area(both.flux, y)}
    profiles.update({slit: _unit_area(flux, y) for slit, flux in singles.items()})
    nodes = np.linspace(grid.lower[1], grid.upper[1], config.bins)
    both_binned = _binned(y, profiles["both"], nodes)
    walker_both = screen_histogram(both.hits, nodes)
    hits = int(both.hits.ids.size)

    wavelength = 2 * math.pi / config.k0[0]
    expected = wavelength * (config.screen - config.barrier_position) / config.slit_separation
    additive = _unit_area(singles["upper"] + singles["lower"], y)
    report = DoubleSlitReport(
        screen_axis=y,
        both=profiles["both"],
        upper=profiles["upper"],
        lower=profiles["lower"],
        bins_axis=nodes,
        both_binned=both_binned,
        walker_both=walker_both,
        hits=hits,
        fringe_spacing=fringe_spacing(y, profiles["both"], expected),
        expected_spacing=expected,
        non_additivity=_l1(_binned(y, additive, nodes), both_binned, nodes),
        noise_floor=monte_carlo_floor(both_binned, nodes, hits),
        born_l1=_l1(walker_both, both_binned, nodes),
        which_way=config.which_way,
        final=both.psi,
        ensembles={"both": both.ensemble},
    )

    if both.captured is not None:
        psi, captured = both.captured
        region = _selection_region(config)
        collapsed = project_measurement(psi, region)
        selected = select_geodesics(captured, region)
        remaining = config.steps - int(round((psi.t - psi0.t) / config.dt))
        logger.info(f"Which-way selection '{config.which_way}' at t={psi.t:.3f}: {selected.count} walkers kept")
        branch = _transport(solver, collapsed, selected, remaining, every, config)
        reference = _binned(y, profiles[config.which_way], nodes)
        walker_which_way = screen_histogram(branch.hits, nodes)
        report.which_way_reference = reference
        report.walker_which_way = walker_which_way
        report.which_way_l1 = _l1(walker_which_way, reference, nodes)
        report.which_way_hits = int(branch.hits.ids.size)
        report.ensembles["which_way"] = branch.ensemble

    logger.info(f"Fringe spacing {report.fringe_spacing:.4f} (expected {expected:.4f}), "
                f"non-additivity {report.non_additivity:.4f} vs floor {report.noise_floor:.4f}, "
                f"which-way L1 {report.which_way_l1}")
    return report


PLOTS_DIR = "plots"


def emit_plots(run_dir: str) -> List[str]:
    """
    Write gnuplot scripts for a completed run into <run_dir>/plots

    Args:
        run_dir: Directory of a finished run

    Returns:
        Paths of the written scripts, which are added to the manifest

    Raises:
        IncompleteRunError when the run did not complete or files are missing
    """
    manifest = load_manifest(run_dir)
    listed = [entry["path"] for entry in manifest["files"]]
    if not manifest.get("complete"):
        raise IncompleteRunError(f"Run {run_dir} is incomplete; refusing to plot", listed)
    check = verify_manifest(run_dir)
    if check.missing or check.mismatched:
        raise IncompleteRunError(f"Run {run_dir} has missing or altered files", check.missing + check.mismatched)

    reports = ReportGenerator(os.path.join(run_dir, PLOTS_DIR))
    scripts = []
    if "density_overlay.csv" in listed:
        with open(os.path.join(run_dir, "density_overlay.csv")) as f:
            header = f.readline().strip().split(",")
        series = [(1, column, name) for column, name in enumerate(header[1:], start=2)]
        scripts.append(reports.gnuplot_script("density_overlay.gp", "Walker density against |psi|^2",
                                              "../density_overlay.csv", series, ylabel="density"))
    if "length_brownian.csv" in listed:
        fits = _read_json(run_dir, "fits.json")
        scripts.append(reports.gnuplot_script("length_scan.gp", "Path length against resolution",
                                              "../length_brownian.csv", [(1, 2, "brownian")], xlabel="dt",
                                              ylabel="length", logscale="xy", fit=fits["brownian"]))
        scripts.append(reports.gnuplot_script("msv_scan.gp", "Mean-square velocity against resolution",
                                              "../msv.csv", [(1, 2, "<(dX/dt)^2>")], xlabel="dt",
                                              logscale="xy", fit=fits["mean_square_velocity"]))
        if "w.csv" in listed:
            scripts.append(reports.gnuplot_script("w_scan.gp", "Fluctuation amplitude against resolution",
                                                  "../w.csv", [(1, 2, "w")], xlabel="dt", logscale="xy",
                                                  fit=fits["velocity_decomposition"]))
    if "profiles.csv" in listed:
        scripts.append(reports.gnuplot_script("fringes.gp", "Screen flux profiles", "../profiles.csv",
                                              [(1, 2, "both"), (1, 3, "upper"), (1, 4, "lower"),
                                               (1, 5, "sum of singles")], xlabel="y", ylabel="density"))
        with open(os.path.join(run_dir, "walker_profiles.csv")) as f:
            width = len(f.readline().split(","))
        series = [(1, column, name) for column, name in
                  zip(range(2, width + 1), ["both", "walkers", "which-way reference", "which-way walkers"])]
        scripts.append(reports.gnuplot_script("walker_fringes.gp", "Walker screen histograms",
                                              "../walker_profiles.csv", series, xlabel="y", ylabel="density"))
    if "identities.json" in listed:
        identities = _read_json(run_dir, "identities.json")
        rows = [{"index": i, "norm_max": max(r["norm_max"], 1e-300), "name": r["name"]}
                for i, r in enumerate(identities)]
        reports.export_to_csv(rows, "identities.csv")
        scripts.append(reports.gnuplot_script("identities.gp", "Identity residuals", "identities.csv",
                                              [(1, 2, "max residual")], xlabel="check", ylabel="norm_max",
                                              logscale="y"))
    if "hydro_final.csv" in listed and not scripts:
        scripts.append(reports.gnuplot_script("hydro_final.gp", "Final density", "../hydro_final.csv",
                                              [(1, 2, "P")], ylabel="P"))

    written = sorted(os.path.join(root, name) for root, _, names in os.walk(reports.out_dir) for name in names)
    append_files(run_dir, written)
    logger.info(f"Emitted {len(scripts)} plot scripts for {run_dir}")
    return scripts


def _read_json(run_dir: str, name: str):
    with open(os.path.join(run_dir, name)) as f:
        return json.load(f)
