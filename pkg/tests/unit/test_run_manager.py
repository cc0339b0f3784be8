"""
Unit tests for run directories and manifests
"""

import hashlib
import json
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from utils.errors import IncompleteRunError
from utils.run_manager import (
    MANIFEST_NAME,
    RunManager,
    append_files,
    file_checksum,
    load_manifest,
    sanitized,
    verify_manifest,
)


@pytest.fixture
def run_manager(output_dir):
    """
    Run manager for a test scenario

    Returns:
        RunManager writing below the temporary output directory
    """
    return RunManager(output_dir, "sho", 42, {"scenario": "sho", "seed": 42}, "0.1.0")


class TestChecksums:
    """Test file checksums and JSON sanitizing"""

    def test_checksum_matches_hashlib(self, tmp_path):
        """Test block-wise hashing of a file larger than one block"""
        path = tmp_path / "data.bin"
        content = bytes(range(256)) * 40
        path.write_bytes(content)
        assert file_checksum(str(path)) == hashlib.sha256(content).hexdigest()

    def test_sanitized(self):
        """Test that numpy values become plain JSON values"""
        value = {"a": np.float64(np.inf), "b": np.arange(3), "c": (np.bool_(True), np.int64(4))}
        assert sanitized(value) == {"a": None, "b": [0, 1, 2], "c": [True, 4]}


class TestRunManager:
    """Test the run directory lifecycle"""

    def test_run_directory_name(self, run_manager, output_dir):
        """Test that the run directory is named by scenario and seed"""
        assert os.path.dirname(run_manager.run_dir) == output_dir
        assert os.path.basename(run_manager.run_dir).startswith("sho_42_")

    def test_finish_writes_manifest(self, run_manager):
        """Test the manifest fields after a passing run"""
        run_manager.write_json("report.json", {"value": 1.5})
        run_manager.record(norm_drift=1e-12)
        manifest = run_manager.finish(passed=True)

        # Verify the manifest on disk
        data = load_manifest(run_manager.run_dir)
        assert manifest.complete
        assert data["passed"] is True
        assert data["version"] == "0.1.0"
        assert data["summary"] == {"norm_drift": 1e-12}
        assert [entry["path"] for entry in data["files"]] == ["report.json"]
        assert data["host"]["cpu_count"] >= 1
        assert verify_manifest(run_manager.run_dir).ok

    def test_failure_marks_incomplete(self, output_dir):
        """Test that an exception leaves an incomplete manifest behind"""
        with pytest.raises(RuntimeError):
            with RunManager(output_dir, "sho", 1, {}, "0.1.0") as run:
                raise RuntimeError("solver exploded")
        data = load_manifest(run.run_dir)
        assert data["complete"] is False
        assert data["passed"] is False
        assert "solver exploded" in data["error"]

    def test_nested_paths(self, run_manager):
        """Test that sub-directories are created on demand"""
        path = run_manager.path("snapshots/psi_00000.bin")
        assert os.path.isdir(os.path.dirname(path))


class TestVerifyManifest:
    """Test checksum verification of finished runs"""

    def test_missing_manifest(self, tmp_path):
        """Test that a directory without a manifest is incomplete"""
        with pytest.raises(IncompleteRunError) as excinfo:
            verify_manifest(str(tmp_path))
        assert excinfo.value.files == [MANIFEST_NAME]

    def test_tampered_file(self, run_manager):
        """Test that a modified file is reported"""
        path = run_manager.write_json("report.json", {"value": 1})
        run_manager.finish(passed=True)
        with open(path, "w") as f:
            json.dump({"value": 2}, f)
        assert verify_manifest(run_manager.run_dir).mismatched == ["report.json"]

    def test_missing_and_unlisted(self, run_manager):
        """Test that deleted and extra files are both reported"""
        path = run_manager.write_json("report.json", {"value": 1})
        run_manager.finish(passed=True)
        os.remove(path)
        with open(os.path.join(run_manager.run_dir, "extra.txt"), "w") as f:
            f.write("x")
        check = verify_manifest(run_manager.run_dir)
        assert check.missing == ["report.json"]
        assert check.unlisted == ["extra.txt"]
        assert not check.ok

    def test_append_files(self, run_manager):
        """Test that files written after the run can join the manifest"""
        run_manager.finish(passed=True)
        extra = run_manager.path("plots/a.gp")
        with open(extra, "w") as f:
            f.write("plot x\n")
        append_files(run_manager.run_dir, [extra])
        assert verify_manifest(run_manager.run_dir).ok
