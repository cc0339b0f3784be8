"""
Report writers for scalelab runs
CSV tables, JSON reports, walker snapshots and gnuplot command files
"""

import csv
import json
import logging
import os
import struct
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import FieldError
from utils.fractal import ScaleScan
from utils.geodesics import WalkerEnsemble
from utils.hydrodynamics import HydroFields
from utils.run_manager import json_default, sanitized

logger = logging.getLogger("scalelab.report_generator")

ENSEMBLE_MAGIC = b"SLWK"
ENSEMBLE_HEADER = "<4sqqdQ"


def read_ensemble_binary(path: str) -> Tuple[np.ndarray, float, int]:
    """Positions (N, d), time and seed from a walker snapshot"""
    with open(path, "rb") as f:
        data = f.read()
    magic, count, dimension, t, seed = struct.unpack_from(ENSEMBLE_HEADER, data, 0)
    if magic != ENSEMBLE_MAGIC:
        raise FieldError(f"{path} is not a walker snapshot")
    positions = np.frombuffer(data, dtype="<f8", offset=struct.calcsize(ENSEMBLE_HEADER))
    return positions.reshape(count, dimension).copy(), t, seed


class ReportGenerator:
    """
    Writes run artifacts into one directory

    Every written path is passed to `register` (normally RunManager.register)
    so it ends up in the run manifest.
    """

    def __init__(self, out_dir: str, register: Optional[Callable[[str], str]] = None):
        self.out_dir = out_dir
        self.register = register or (lambda path: path)
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        path = os.path.join(self.out_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def export_to_csv(self, rows: List[Dict[str, Any]], name: str) -> str:
        """
        Write a list of dictionaries as CSV

        Args:
            rows: Records sharing the keys of the first record
            name: File name relative to the output directory

        Returns:
            Path of the written file
        """
        path = self._path(name)
        if not rows:
            logger.warning(f"No rows to export for {name}")
        with open(path, "w", newline="") as csvfile:
            fieldnames = list(rows[0].keys()) if rows else []
            writer = csv.DictWriter(csvfile, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                writer.writerow({key: _cell(value) for key, value in row.items()})
        return self.register(path)

    def export_json(self, data: Any, name: str) -> str:
        path = self._path(name)
        with open(path, "w") as f:
            json.dump(sanitized(data), f, indent=2, default=json_default)
        return self.register(path)

    def hydro_csv(self, hydro: HydroFields, name: str) -> str:
        """Columns x[, y], P, theta, V*, U*, Q, valid with one row per node"""
        grid = hydro.grid
        coords = [c.ravel() for c in grid.mesh()]
        labels = ["x", "y"][:grid.dimension]
        columns: Dict[str, np.ndarray] = dict(zip(labels, coords))
        columns["P"] = hydro.P.ravel()
        columns["theta"] = hydro.theta.ravel()
        for axis, label in enumerate(labels):
            suffix = "" if grid.dimension == 1 else f"_{label}"
            columns[f"V{suffix}"] = hydro.V[axis].ravel()
            columns[f"U{suffix}"] = hydro.U[axis].ravel()
        columns["Q"] = hydro.Q.ravel()
        columns["valid"] = hydro.valid.ravel().astype(int)
        return self.columns_csv(columns, name)

    def columns_csv(self, columns: Dict[str, np.ndarray], name: str) -> str:
        """Equal-length named columns as CSV"""
        lengths = {len(np.ravel(values)) for values in columns.values()}
        if len(lengths) != 1:
            raise FieldError(f"Columns of {name} have different lengths {sorted(lengths)}")
        path = self._path(name)
        with open(path, "w", newline="") as csvfile:
            writer = csv.writer(csvfile)
            writer.writerow(list(columns))
            for row in zip(*(np.ravel(values) for values in columns.values())):
                writer.writerow([_cell(value) for value in row])
        return self.register(path)

    def identity_json(self, reports: Sequence[Any], name: str = "identities.json") -> str:
        """JSON array of {name, norm_l2, norm_max, h, dt, ...} records"""
        return self.export_json([report.to_dict() for report in reports], name)

    def scan_csv(self, scan: ScaleScan, name: str) -> str:
        return self.export_to_csv(scan.rows(), name)

    def ensemble_binary(self, ensemble: WalkerEnsemble, name: str) -> str:
        """
        Walker snapshot: header (magic, N, d, t, seed) then little-endian f64 positions

        Walkers are written in id order so snapshots compare byte for byte.
        """
        path = self._path(name)
        order = np.argsort(ensemble.ids, kind="stable")
        header = struct.pack(ENSEMBLE_HEADER, ENSEMBLE_MAGIC, ensemble.count, ensemble.dimension,
                             ensemble.t, int(ensemble.noise.seed))
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(ensemble.positions[order], dtype="<f8").tobytes())
        return self.register(path)

    def gnuplot_script(self, name: str, title: str, data: str, series: Sequence[Tuple[int, int, str]],
                       xlabel: str = "x", ylabel: str = "", logscale: str = "",
                       fit: Optional[Dict[str, float]] = None) -> str:
        """
        gnuplot commands plotting columns of a CSV data file

        Args:
            name: Script file name
            title: Plot title
            data: Data file name relative to the script
            series: (x column, y column, legend) triples, 1-based columns
            logscale: Axes drawn logarithmic, e.g. "xy" or "y"
            fit: Optional {slope, intercept} drawn as exp(intercept) * x**slope
        """
        stem = os.path.splitext(os.path.basename(name))[0]
        lines = [
            "set datafile separator ','",
            "set key autotitle columnhead",
            "set terminal pngcairo size 900,600",
            f"set output '{stem}.png'",
            f"set title '{title}'",
            f"set xlabel '{xlabel}'",
            f"set ylabel '{ylabel}'",
        ]
        if logscale:
            lines.append(f"set logscale {logscale}")
        plots = [f"'{data}' using {x}:{y} with linespoints title '{legend}'" for x, y, legend in series]
        if fit is not None:
            lines.append(f"f(x) = exp({fit['intercept']!r}) * x**({fit['slope']!r})")
            plots.append(f"f(x) with lines title 'fit slope {fit['slope']:.3f}'")
        lines.append("plot " + ", \\\n     ".join(plots))
        path = self._path(name)
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
        logger.info(f"Wrote gnuplot script {path}")
        return self.register(path)


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return int(value)
    return value
