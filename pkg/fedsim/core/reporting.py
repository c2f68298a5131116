"""
CSV artifacts and impact tables.

Every float is written as its shortest round-trip decimal (Python repr), so
rerunning an experiment with the same config reproduces the files byte for
byte. Run directories hold config.yaml, rounds.csv and summary.csv; sweep
directories hold impact.csv and sweep.json plus one subdirectory per child
run.
"""

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from fedsim.core.errors import ComparisonError, IngestionError
from fedsim.models.validation import ExperimentConfig, load_config

ROUNDS_COLUMNS = ["round", "accuracy", "participants", "retained", "mean_mu"]
SUMMARY_COLUMNS = ["digest", "A", "seconds"]
IMPACT_COLUMNS = ["axis", "value", "A", "Astar", "I"]
MISSING_CELL = "-"

PathLike = Union[str, Path]


def record_wall_time() -> bool:
    """FEDSIM_WALL_TIME=0 writes 0.0 seconds so summary.csv is reproducible too"""
    return os.getenv("FEDSIM_WALL_TIME", "1") != "0"


def format_float(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _write(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_rounds(path: PathLike, records) -> Path:
    rows = [
        {
            "round": str(r.round),
            "accuracy": format_float(r.accuracy),
            "participants": ";".join(str(c) for c in r.participants),
            "retained": str(r.retained),
            "mean_mu": format_float(r.mean_mu),
        }
        for r in records
    ]
    return _write(pd.DataFrame(rows, columns=ROUNDS_COLUMNS), path)


def write_summary(path: PathLike, result) -> Path:
    seconds = result.seconds if record_wall_time() else 0.0
    row = {"digest": result.digest, "A": format_float(result.accuracy), "seconds": format_float(seconds)}
    return _write(pd.DataFrame([row], columns=SUMMARY_COLUMNS), path)


def write_run(out_dir: PathLike, cfg: ExperimentConfig, result) -> Path:
    """config.yaml + rounds.csv + summary.csv"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
    write_rounds(out / "rounds.csv", result.records)
    write_summary(out / "summary.csv", result)
    return out


def _read_csv(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != list(columns):
        raise IngestionError(f"{path}: header {list(frame.columns)} does not match {list(columns)}")
    return frame


def read_summary(path: PathLike) -> Dict[str, object]:
    frame = _read_csv(Path(path), SUMMARY_COLUMNS)
    if len(frame) != 1:
        raise IngestionError(f"{path}: expected exactly one summary row, found {len(frame)}")
    row = frame.iloc[0]
    return {"digest": row["digest"], "A": float(row["A"]), "seconds": float(row["seconds"] or 0.0)}


@dataclass
class ImpactRow:
    axis: str
    value: float
    A: Optional[float] = None
    Astar: Optional[float] = None
    I: Optional[float] = None
    digest: str = ""
    baseline_digest: str = ""
    error: str = ""


def write_impact(path: PathLike, rows: Sequence[ImpactRow]) -> Path:
    data = [
        {
            "axis": row.axis,
            "value": format_float(row.value),
            "A": format_float(row.A),
            "Astar": format_float(row.Astar),
            "I": format_float(row.I),
        }
        for row in rows
    ]
    return _write(pd.DataFrame(data, columns=IMPACT_COLUMNS), path)


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def read_impact(path: PathLike) -> List[ImpactRow]:
    frame = _read_csv(Path(path), IMPACT_COLUMNS)
    return [
        ImpactRow(
            axis=row["axis"],
            value=float(row["value"]),
            A=_optional_float(row["A"]),
            Astar=_optional_float(row["Astar"]),
            I=_optional_float(row["I"]),
        )
        for _, row in frame.iterrows()
    ]


def write_sweep_manifest(path: PathLike, aggregator: str, attack: str, axis: str,
                         rows: Sequence[ImpactRow]) -> Path:
    path = Path(path)
    payload = {
        "aggregator": aggregator,
        "attack": attack,
        "axis": axis,
        "rows": [
            {"value": r.value, "digest": r.digest, "baseline_digest": r.baseline_digest, "error": r.error}
            for r in rows
        ],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def format_value(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


# -- report -----------------------------------------------------------------

Cell = Tuple[str, str]


def _add_cell(cells: Dict[Cell, float], sources: Dict[Cell, Path], key: Cell, impact: Optional[float],
              source: Path) -> None:
    if key in cells:
        raise ComparisonError(f"{source}: duplicate cell {key} (already provided by {sources[key]})")
    cells[key] = impact
    sources[key] = source


def _collect_sweep(directory: Path, cells, sources) -> None:
    manifest_path = directory / "sweep.json"
    if not manifest_path.exists():
        raise IngestionError(f"{manifest_path}: file not found")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    rows = read_impact(directory / "impact.csv")
    if len(rows) != len(manifest.get("rows", [])):
        raise ComparisonError(f"{directory / 'impact.csv'}: row count disagrees with sweep.json")

    for row, meta in zip(rows, manifest["rows"]):
        if row.A is not None and row.Astar is not None and row.I is not None:
            if abs((row.A - row.Astar) - row.I) > 1e-9:
                raise ComparisonError(f"{directory / 'impact.csv'}: I != A - Astar at value {row.value}")
        if meta.get("digest") and meta.get("baseline_digest") and not meta.get("error"):
            child = directory / "runs" / f"value-{format_value(row.value)}" / "attacked" / "summary.csv"
            if child.exists() and read_summary(child)["digest"] != meta["digest"]:
                raise ComparisonError(f"{child}: digest does not match sweep.json")

    label = manifest["attack"]
    for row in rows:
        column = label if len(rows) == 1 else f"{label} ({manifest['axis']}={format_value(row.value)})"
        _add_cell(cells, sources, (manifest["aggregator"], column), row.I, directory / "impact.csv")


def _collect_runs(run_dirs: List[Path], cells, sources) -> None:
    runs = []
    for directory in run_dirs:
        cfg = load_config(directory / "config.yaml")
        summary = read_summary(directory / "summary.csv")
        if summary["digest"] != cfg.digest():
            raise ComparisonError(f"{directory / 'summary.csv'}: digest does not match config.yaml")
        runs.append((directory, cfg, summary))

    baselines = {}
    for directory, cfg, summary in runs:
        if cfg.attack.kind == "none":
            baselines[cfg.baseline_digest()] = summary["A"]
    for directory, cfg, summary in runs:
        if cfg.attack.kind == "none":
            continue
        a_clean = baselines.get(cfg.baseline_digest())
        impact = None if a_clean is None else a_clean - summary["A"]
        _add_cell(cells, sources, (cfg.aggregator.kind, cfg.attack.kind), impact, directory / "summary.csv")


def collect_impacts(directories: Sequence[PathLike]) -> Dict[Cell, Optional[float]]:
    """(aggregator, column label) -> I, from sweep and run directories"""
    cells: Dict[Cell, Optional[float]] = {}
    sources: Dict[Cell, Path] = {}
    run_dirs: List[Path] = []
    for entry in directories:
        directory = Path(entry)
        if (directory / "impact.csv").exists():
            _collect_sweep(directory, cells, sources)
        elif (directory / "summary.csv").exists():
            run_dirs.append(directory)
        else:
            raise IngestionError(f"{directory}: neither impact.csv nor summary.csv found")
    _collect_runs(run_dirs, cells, sources)
    return cells


def impact_table(cells: Dict[Cell, Optional[float]]) -> pd.DataFrame:
    """
    Aggregators as rows, attacks as columns, I in accuracy points with two
    decimals; missing cells show "-".
    """
    aggregators = list(dict.fromkeys(agg for agg, _ in cells))
    columns = list(dict.fromkeys(col for _, col in cells))
    rows = []
    for agg in aggregators:
        row = {"aggregator": agg}
        for col in columns:
            impact = cells.get((agg, col))
            row[col] = MISSING_CELL if impact is None else f"{impact * 100:.2f}"
        rows.append(row)
    return pd.DataFrame(rows, columns=["aggregator", *columns])


def write_table(path: PathLike, table: pd.DataFrame) -> Path:
    return _write(table, path)


__all__ = [
    "ROUNDS_COLUMNS",
    "SUMMARY_COLUMNS",
    "IMPACT_COLUMNS",
    "ImpactRow",
    "format_float",
    "format_value",
    "record_wall_time",
    "write_rounds",
    "write_summary",
    "write_run",
    "read_summary",
    "write_impact",
    "read_impact",
    "write_sweep_manifest",
    "collect_impacts",
    "impact_table",
    "write_table",
]
