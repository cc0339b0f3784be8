"""
Integration tests for scenario runs, run directories and plot bundles
"""

import glob
import json
import os
import sys

import numpy as np
import pytest

# Add the project root to the path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from lab import main
from utils.errors import IncompleteRunError
from utils.report_generator import read_ensemble_binary
from utils.run_manager import RunManager, load_manifest, verify_manifest
from utils.scenario_config import load_config
from utils.scenarios import ScenarioRunner, emit_plots
from tests.test_config import BROWNIAN_DIMENSION, NORM_DRIFT, REPEAT_PROBABILITY, STRAIGHT_DIMENSION

WALKER_RUN = {"duration": 1.0, "walkers": 20000, "bins": 64, "threshold": 0.08}


@pytest.fixture
def runner():
    """
    Create a scenario runner

    Returns:
        ScenarioRunner: A fresh runner
    """
    return ScenarioRunner()


@pytest.fixture
def scenario(output_dir):
    """
    Build configs writing into the test output directory

    Returns:
        function: scenario name, seed and overrides to ScenarioConfig
    """
    def build(name, seed=42, **overrides):
        values = {"scenario": name, "seed": seed, "out_dir": output_dir}
        values.update(overrides)
        return load_config(None, values)
    return build


def listed_files(manifest):
    return {entry["path"] for entry in manifest["files"]}


class TestSolveScenarios:
    """Test the wavefunction scenarios end to end"""

    def test_plane_wave(self, runner, scenario):
        """Test a periodic plane wave keeps norm and energy"""
        manifest = runner.run(scenario("plane-wave"))

        # Verify
        assert manifest.complete
        assert manifest.passed
        assert manifest.summary["norm_drift"] < NORM_DRIFT
        assert "min_uncertainty_product" not in manifest.summary
        assert verify_manifest(manifest.run_dir).ok
        files = listed_files(load_manifest(manifest.run_dir))
        assert {"diagnostics.csv", "hydro_initial.csv", "hydro_final.csv", "snapshots/psi_00000.bin"} <= files

    def test_free_packet_with_walkers(self, runner, scenario):
        """Test a moving packet and its walker ensemble"""
        manifest = runner.run(scenario("free-packet", **WALKER_RUN))

        # Verify
        assert manifest.passed
        assert manifest.summary["min_uncertainty_product"] >= 0.5 * (1 - 1e-3)
        assert not manifest.summary["born"]["under_sampled"]
        assert os.path.exists(os.path.join(manifest.run_dir, "walkers_gaussian.bin"))

    def test_sho_snapshots_follow_cadence(self, runner, scenario):
        """Test that the oscillator run writes one snapshot per cadence step"""
        manifest = runner.run(scenario("sho", cadence=250, **WALKER_RUN))

        # Verify
        assert manifest.passed
        snapshots = sorted(os.listdir(os.path.join(manifest.run_dir, "snapshots")))
        assert snapshots == [f"psi_{step:05d}.bin" for step in (0, 250, 500, 750, 1000)]
        with open(os.path.join(manifest.run_dir, "density_overlay.csv")) as f:
            assert f.readline().strip() == "x,reference,gaussian"


class TestWalkerScenarios:
    """Test the walker scenarios end to end"""

    def test_born_emergence_every_law(self, runner, scenario):
        """Test that every noise law reproduces |psi|^2"""
        manifest = runner.run(scenario("born-emergence", **WALKER_RUN))
        born = manifest.summary["born"]

        # Verify
        assert manifest.passed
        assert set(born["L1"]) == {"gaussian", "uniform", "rademacher"}
        assert all(value < 0.08 for value in born["L1"].values())
        assert born["noise_floor_L1"] is not None
        assert born["law_invariant"]
        for name in ("gaussian", "uniform", "rademacher", "gaussian-replica"):
            positions, t, _ = read_ensemble_binary(os.path.join(manifest.run_dir, f"walkers_{name}.bin"))
            assert positions.shape == (20000, 1)
            assert t == pytest.approx(1.0)

    def test_measurement_repeat(self, runner, scenario):
        """Test that a repeated measurement is certain and keeps the same walkers"""
        manifest = runner.run(scenario("measurement-repeat", walkers=10000, bins=64))
        summary = manifest.summary

        # Verify
        assert manifest.passed
        assert abs(summary["repeat_probability"] - 1.0) < REPEAT_PROBABILITY
        assert summary["identical_ensemble"]
        assert summary["walker_fraction"] == pytest.approx(summary["probability"], abs=0.03)
        selected, _, _ = read_ensemble_binary(os.path.join(manifest.run_dir, "walkers_selected.bin"))
        assert np.all(selected[:, 0] >= 0.0)
        assert selected.shape[0] == summary["selected"]

    def test_same_seed_gives_identical_snapshots(self, runner, scenario, tmp_path):
        """Test that walker snapshots are byte-identical for a seed, whatever the thread count"""
        first = runner.run(scenario("measurement-repeat", seed=9, walkers=10000, threads=1,
                                    out_dir=str(tmp_path / "one")))
        second = runner.run(scenario("measurement-repeat", seed=9, walkers=10000, threads=2,
                                     out_dir=str(tmp_path / "two")))
        other = runner.run(scenario("measurement-repeat", seed=10, walkers=10000,
                                    out_dir=str(tmp_path / "three")))

        def snapshot(manifest):
            with open(os.path.join(manifest.run_dir, "walkers_gaussian.bin"), "rb") as f:
                return f.read()

        # Verify
        assert snapshot(first) == snapshot(second)
        assert snapshot(first) != snapshot(other)


class TestAnalysisScenarios:
    """Test the fractal scan and identity scenarios"""

    def test_fractal_scan(self, runner, scenario):
        """Test the Brownian, straight-line and drifting scans"""
        manifest = runner.run(scenario("fractal-scan", paths=32, delta=1e-4))

        # Verify
        assert manifest.passed
        assert BROWNIAN_DIMENSION[0] <= manifest.summary["D_F"] <= BROWNIAN_DIMENSION[1]
        assert STRAIGHT_DIMENSION[0] <= manifest.summary["D_F_control"] <= STRAIGHT_DIMENSION[1]
        with open(os.path.join(manifest.run_dir, "fits.json")) as f:
            fits = json.load(f)
        assert fits["velocity_decomposition"]["v"] == pytest.approx(10.0, abs=1.0)
        assert {"length_brownian.csv", "length_control.csv", "msv.csv", "w.csv"} <= \
            listed_files(load_manifest(manifest.run_dir))

    def test_fractal_scan_without_drift(self, runner, scenario):
        """Test that zero drift skips the velocity decomposition"""
        manifest = runner.run(scenario("fractal-scan", paths=16, delta=1e-4, drift_velocity=0.0))

        # Verify
        with open(os.path.join(manifest.run_dir, "fits.json")) as f:
            assert json.load(f)["velocity_decomposition"] is None
        assert "w.csv" not in listed_files(load_manifest(manifest.run_dir))

    def test_verify_all(self, runner, scenario):
        """Test that the identity report lists every check"""
        manifest = runner.run(scenario("verify-all", n=256))

        # Verify
        with open(os.path.join(manifest.run_dir, "identities.json")) as f:
            identities = json.load(f)
        assert len(identities) == manifest.summary["identities"]
        assert manifest.summary["failed"] == [r["name"] for r in identities if not r["passed"]]
        assert manifest.passed == (not manifest.summary["failed"])
        assert all({"name", "norm_l2", "norm_max", "passed"} <= set(r) for r in identities)


class TestPlotBundles:
    """Test gnuplot bundles for finished runs"""

    def test_walker_run_gets_density_overlay(self, runner, scenario):
        """Test the density overlay script and the extended manifest"""
        manifest = runner.run(scenario("sho", **WALKER_RUN))
        scripts = emit_plots(manifest.run_dir)

        # Verify
        assert [os.path.basename(path) for path in scripts] == ["density_overlay.gp"]
        with open(scripts[0]) as f:
            content = f.read()
        assert "'../density_overlay.csv' using 1:2" in content
        assert "using 1:3" in content
        assert "plots/density_overlay.gp" in listed_files(load_manifest(manifest.run_dir))
        assert verify_manifest(manifest.run_dir).ok

    def test_fallback_density_script(self, runner, scenario):
        """Test that a run without walkers still gets a density plot"""
        manifest = runner.run(scenario("plane-wave"))
        scripts = emit_plots(manifest.run_dir)

        # Verify
        assert [os.path.basename(path) for path in scripts] == ["hydro_final.gp"]

    def test_identity_residuals(self, runner, scenario):
        """Test the identity residual table and script"""
        manifest = runner.run(scenario("verify-all", identity_target="plane-wave"))
        scripts = emit_plots(manifest.run_dir)

        # Verify
        assert [os.path.basename(path) for path in scripts] == ["identities.gp"]
        assert os.path.exists(os.path.join(manifest.run_dir, "plots", "identities.csv"))
        assert verify_manifest(manifest.run_dir).ok

    def test_refuses_incomplete_run(self, output_dir):
        """Test that a run interrupted by an error is not plotted"""
        with pytest.raises(RuntimeError):
            with RunManager(output_dir, "sho", 1, {}, "test") as run:
                raise RuntimeError("interrupted")

        # Verify
        with pytest.raises(IncompleteRunError) as excinfo:
            emit_plots(run.run_dir)
        assert "incomplete" in str(excinfo.value)
        assert not os.path.exists(os.path.join(run.run_dir, "plots"))

    def test_refuses_altered_run(self, runner, scenario):
        """Test that a tampered file blocks plotting"""
        manifest = runner.run(scenario("plane-wave"))
        with open(os.path.join(manifest.run_dir, "hydro_final.csv"), "a") as f:
            f.write("0,0,0,0,0,0,0\n")

        # Verify
        with pytest.raises(IncompleteRunError) as excinfo:
            emit_plots(manifest.run_dir)
        assert excinfo.value.files == ["hydro_final.csv"]


class TestCommandLine:
    """Test the command line against real scenario runs"""

    async def test_solve_then_plots(self, output_dir, tmp_path, capsys):
        """Test a config-file run followed by its plot bundle"""
        config = tmp_path / "plane.env"
        config.write_text(f"scenario=plane-wave\nseed=5\nout_dir={output_dir}\nduration=0.5\n")

        code = await main.main(["solve", "--config", str(config)], main.Lab())
        out = capsys.readouterr().out
        run_dir = out.splitlines()[0].split(" -> ")[1]

        # Verify
        assert code == 0
        assert out.startswith("PASS plane-wave seed=5")
        assert os.path.basename(run_dir).startswith("plane-wave_5_")

        code = await main.main(["plots", run_dir], main.Lab())
        assert code == 0
        assert capsys.readouterr().out.strip().endswith("hydro_final.gp")


SCENARIO_FILES = sorted(glob.glob(os.path.join(os.path.dirname(__file__), '..', '..', 'scenarios', '*.env')))


@pytest.mark.parametrize("path", SCENARIO_FILES, ids=os.path.basename)
def test_shipped_scenario_files_load(path):
    """Test that every shipped scenario file is valid"""
    config = load_config(path)

    # Verify
    assert config.seed == 42
    assert os.path.basename(path).startswith(config.scenario.replace("-", "_"))
