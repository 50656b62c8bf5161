"""Artifact writer - CSV tables and JSON documents, each written atomically."""

import csv
import io
import json
import logging
import os
import tempfile
from enum import Enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import OutputConfig
from vlasovkit.density import ParticleEnsemble
from vlasovkit.observables import MomentGrid
from vlasovkit.trajectories import Leaf, Prolongation
from vlasovkit.vlasov import KinematicIndicator

logger = logging.getLogger(__name__)

Table = Tuple[List[str], List[List[Any]]]


def to_plain(value: Any) -> Any:
    """JSON-safe copy: arrays to lists, numpy scalars to Python, enums to values."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def atomic_write_text(path: Path, text: str) -> Path:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_cell(value: Any, float_format: str) -> str:
    if isinstance(value, (float, np.floating)):
        return float_format % float(value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]], float_format: str = "%.17g") -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v, float_format) for v in row])
    return buffer.getvalue()


def json_text(data: Dict[str, Any]) -> str:
    return json.dumps(to_plain(data), indent=2, sort_keys=True) + "\n"


def trajectory_table(prols: Sequence[Prolongation], F_H: Optional[KinematicIndicator],
                     labtime: Optional[KinematicIndicator]) -> Table:
    """Long format: one row per node with t, x, v, F_H and the lab-time rate."""
    n = prols[0].dim if prols else 0
    header = ["trajectory", "t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] \
        + ["F_H", "F_labtime"]
    rows = []
    for index, prol in enumerate(prols):
        for i, u in enumerate(prol.points):
            f_h = F_H(u) if F_H is not None else float("nan")
            f_lab = labtime(u) if labtime is not None else float("nan")
            rows.append([index, float(prol.params[i])] + [float(c) for c in u.x] + [float(c) for c in u.v]
                        + [float(f_h), float(f_lab)])
    return header, rows


def leaf_table(leaf: Leaf) -> Table:
    n = leaf.positions.shape[-1]
    header = ["t", "lambda"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)]
    rows = []
    for i, t in enumerate(leaf.t_grid):
        for j, lam in enumerate(leaf.lam_grid):
            rows.append([float(t), float(lam)] + [float(c) for c in leaf.positions[i, j]]
                        + [float(c) for c in leaf.velocities[i, j]])
    return header, rows


def ensemble_table(ens: ParticleEnsemble) -> Table:
    n = ens.positions.shape[1]
    header = ["weight"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] + ["tag"]
    rows = [[float(w)] + [float(c) for c in x] + [float(c) for c in v] + [ens.tag.label]
            for w, x, v in zip(ens.weights, ens.positions, ens.velocities)]
    return header, rows


@dataclass
class WrittenFile:
    path: Path
    kind: str
    rows: Optional[int] = None


@dataclass
class ArtifactWriter:
    """Writes one run's artifacts under ``run_dir`` and remembers what it wrote."""
    run_dir: Path
    float_format: str = "%.17g"
    written: List[WrittenFile] = field(default_factory=list)

    @classmethod
    def for_run(cls, run_name: str, output_root: Optional[str] = None) -> "ArtifactWriter":
        config = OutputConfig.from_env()
        root = Path(output_root) if output_root else config.output_root
        return cls(root / run_name, config.float_format)

    def write_table(self, name: str, table: Table) -> Path:
        header, rows = table
        path = atomic_write_text(self.run_dir / f"{name}.csv", csv_text(header, rows, self.float_format))
        self.written.append(WrittenFile(path, "csv", len(rows)))
        logger.debug(f"Wrote {len(rows)} rows to {path}")
        return path

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        path = atomic_write_text(self.run_dir / f"{name}.json", json_text(data))
        self.written.append(WrittenFile(path, "json"))
        return path

    def write_ensemble(self, name: str, ens: ParticleEnsemble, header: Dict[str, Any]) -> Tuple[Path, Path]:
        csv_path = self.write_table(name, ensemble_table(ens))
        meta = dict(header, samples=len(ens), total_weight=ens.total_weight, tag=ens.tag.label, seed=ens.seed)
        return csv_path, self.write_json(f"{name}.header", meta)

    def write_moment_grid(self, name: str, grid: MomentGrid, metadata: Dict[str, Any]) -> Tuple[Path, Path]:
        csv_path = self.write_table(name, grid.rows())
        spec = grid.spec
        meta = dict(grid.metadata, **metadata,
                    grid={"lower": spec.lower, "upper": spec.upper, "shape": list(spec.shape)})
        return csv_path, self.write_json(f"{name}.meta", meta)

    def manifest(self) -> List[Dict[str, Any]]:
        return [{"file": w.path.name, "kind": w.kind, "rows": w.rows} for w in self.written]


# stem -> panels of (panel, series column, x column, y column)
PLOT_PANELS: Dict[str, List[Tuple[str, Optional[str], str, str]]] = {
    "trajectories": [("worldline", "trajectory", "x1", "x0"), ("mass_shell", "trajectory", "t", "F_H"),
                     ("labtime_rate", "trajectory", "t", "F_labtime")],
    "drift": [("indicator", "trajectory", "t", "F_H"), ("rate_vs_nonmetricity", "trajectory", "Q", "rate")],
    "leaf": [("leaf_worldlines", "lambda", "x1", "x0"), ("leaf_fiber", "lambda", "t", "v0")],
    "transform": [("transform_checks", "check", "sample", "value")],
    "moment_grid": [("density_profile", "x0", "x1", "J0")],
    "ensemble_initial": [("phase_portrait", None, "x1", "v1")],
    "ensemble_final": [("phase_portrait", None, "x1", "v1")],
}


def read_table(path: Path) -> Table:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, [])
        return header, [row for row in reader]


def emit_plot_tables(run_dir: Path, float_format: str = "%.17g") -> List[Path]:
    """Rewrite a run's CSV tables as plot-ready (panel, series, x, y) tables under ``plots/``."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    written = []
    for stem, panels in PLOT_PANELS.items():
        source = run_dir / f"{stem}.csv"
        if not source.is_file():
            continue
        header, rows = read_table(source)
        columns = {name: i for i, name in enumerate(header)}
        out_rows = []
        for panel, series, x_col, y_col in panels:
            if x_col not in columns or y_col not in columns or (series and series not in columns):
                logger.warning(f"{source.name}: panel '{panel}' needs columns {x_col}, {y_col}; skipped")
                continue
            for row in rows:
                label = row[columns[series]] if series else "all"
                out_rows.append([panel, label, row[columns[x_col]], row[columns[y_col]]])
        path = atomic_write_text(run_dir / "plots" / f"{stem}.csv",
                                 csv_text(["panel", "series", "x", "y"], out_rows, float_format))
        written.append(path)
        logger.info(f"Plot table {path} ({len(out_rows)} rows)")
    return written
