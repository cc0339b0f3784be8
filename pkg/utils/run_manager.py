"""
Run directories and manifests
Every file a scenario emits is registered with its SHA-256 checksum; the
manifest is written even when a run fails, flagged incomplete
"""

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import psutil

from utils.errors import IncompleteRunError

logger = logging.getLogger("scalelab.run_manager")

MANIFEST_NAME = "manifest.json"
BLOCK_SIZE = 4096


def file_checksum(path: str) -> str:
    """SHA-256 of a file read in 4 KiB blocks"""
    sha256_hash = hashlib.sha256()
    with open(path, "rb") as f:
        for byte_block in iter(lambda: f.read(BLOCK_SIZE), b""):
            sha256_hash.update(byte_block)
    return sha256_hash.hexdigest()


def host_info() -> Dict[str, Any]:
    process = psutil.Process()
    return {
        "cpu_count": psutil.cpu_count(logical=True),
        "memory_total": psutil.virtual_memory().total,
        "rss_bytes": process.memory_info().rss,
    }


def sanitized(value: Any) -> Any:
    """Replace non-finite floats with None so the output stays strict JSON"""
    if isinstance(value, dict):
        return {key: sanitized(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitized(item) for item in value]
    if isinstance(value, np.ndarray):
        return sanitized(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


def json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


@dataclass
class RunManifest:
    """Config echo, code version, timing, host facts and emitted files"""

    run_dir: str
    scenario: str
    seed: int
    version: str
    config: Dict[str, Any]
    started: str
    finished: Optional[str] = None
    duration_s: Optional[float] = None
    threads: int = 1
    host: Dict[str, Any] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    passed: Optional[bool] = None
    complete: bool = False
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "duration_s": self.duration_s,
            "threads": self.threads,
            "host": self.host,
            "complete": self.complete,
            "passed": self.passed,
            "error": self.error,
            "summary": self.summary,
            "config": self.config,
            "files": [{"path": path, "sha256": checksum} for path, checksum in sorted(self.files.items())],
        }

    @property
    def path(self) -> str:
        return os.path.join(self.run_dir, MANIFEST_NAME)


class RunManager:
    """
    Owns one run directory

    Use as a context manager: the manifest is written on exit whatever
    happens, with `complete` true only when the block finished normally.
    """

    def __init__(self, out_dir: str, scenario: str, seed: int, config: Dict[str, Any],
                 version: str, threads: int = 1):
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
        self.run_dir = os.path.join(out_dir, f"{scenario}_{seed}_{timestamp}")
        os.makedirs(self.run_dir, exist_ok=True)
        self.manifest = RunManifest(
            run_dir=self.run_dir,
            scenario=scenario,
            seed=seed,
            version=version,
            config=config,
            started=datetime.now().isoformat(),
            threads=threads,
        )
        self._clock = time.perf_counter()
        logger.info(f"Run directory created at {self.run_dir}")

    def path(self, name: str) -> str:
        full = os.path.join(self.run_dir, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def register(self, path: str) -> str:
        """Add an emitted file to the manifest; returns the path"""
        relative = os.path.relpath(path, self.run_dir)
        self.manifest.files[relative] = file_checksum(path)
        logger.debug(f"Registered {relative}")
        return path

    def write_json(self, name: str, data: Any) -> str:
        path = self.path(name)
        with open(path, "w") as f:
            json.dump(sanitized(data), f, indent=2, default=json_default)
        return self.register(path)

    def record(self, **summary: Any) -> None:
        self.manifest.summary.update(summary)

    def finish(self, passed: Optional[bool] = None, error: Optional[str] = None) -> RunManifest:
        manifest = self.manifest
        manifest.finished = datetime.now().isoformat()
        manifest.duration_s = time.perf_counter() - self._clock
        manifest.host = host_info()
        manifest.passed = passed if error is None else False
        manifest.complete = error is None
        manifest.error = error
        with open(manifest.path, "w") as f:
            json.dump(sanitized(manifest.to_dict()), f, indent=2, default=json_default)
        if manifest.complete:
            logger.info(f"Run complete: {len(manifest.files)} files, {manifest.duration_s:.1f}s")
        else:
            logger.error(f"Run incomplete after {manifest.duration_s:.1f}s: {error}")
        return manifest

    def __enter__(self) -> "RunManager":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is not None:
            self.finish(error=f"{exc_type.__name__}: {exc}")
        elif not self.manifest.finished:
            self.finish(passed=self.manifest.passed)
        return False


def load_manifest(run_dir: str) -> Dict[str, Any]:
    path = os.path.join(run_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise IncompleteRunError(f"No manifest in {run_dir}", [MANIFEST_NAME])
    with open(path, "r") as f:
        return json.load(f)


@dataclass
class ManifestCheck:
    mismatched: List[str]
    missing: List[str]
    unlisted: List[str]

    @property
    def ok(self) -> bool:
        return not (self.mismatched or self.missing or self.unlisted)


def verify_manifest(run_dir: str) -> ManifestCheck:
    """
    Recompute every checksum listed in a run manifest

    Args:
        run_dir: Run directory holding manifest.json

    Returns:
        Files whose checksum differs, listed files that are gone, and files
        present in the directory but absent from the manifest
    """
    manifest = load_manifest(run_dir)
    listed = {entry["path"]: entry["sha256"] for entry in manifest["files"]}
    mismatched, missing = [], []
    for relative, checksum in listed.items():
        full = os.path.join(run_dir, relative)
        if not os.path.exists(full):
            missing.append(relative)
        elif file_checksum(full) != checksum:
            logger.error(f"Checksum mismatch for {relative}")
            mismatched.append(relative)

    present = []
    for root, _, names in os.walk(run_dir):
        for name in names:
            relative = os.path.relpath(os.path.join(root, name), run_dir)
            if relative != MANIFEST_NAME:
                present.append(relative)
    unlisted = sorted(set(present) - set(listed))
    check = ManifestCheck(mismatched, missing, unlisted)
    if check.ok:
        logger.info(f"Manifest verified: {len(listed)} files in {run_dir}")
    return check


def append_files(run_dir: str, paths: List[str]) -> Dict[str, Any]:
    """Add files written after a run finished (plot bundles) to its manifest"""
    manifest = load_manifest(run_dir)
    listed = {entry["path"]: entry["sha256"] for entry in manifest["files"]}
    for path in paths:
        listed[os.path.relpath(path, run_dir)] = file_checksum(path)
    manifest["files"] = [{"path": path, "sha256": checksum} for path, checksum in sorted(listed.items())]
    with open(os.path.join(run_dir, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2)
    logger.info(f"Added {len(paths)} files to the manifest of {run_dir}")
    return manifest
