"""
Escritura de artefactos: CSV (pandas), JSON y JSON-lines.
Mismos datos y semilla => mismos bytes.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable

import pandas as pd

from .hjb_solver import BarrierPolicy, HowardResult, check_properties, value_at
from .schemas import TABLE_STATES, ModelParams

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


def write_csv(df: pd.DataFrame, out_dir: Path, name: str) -> Path:
    path = Path(out_dir) / name
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("Escrito %s (%d filas)", path, len(df))
    return path


def write_json(data: Dict[str, Any], out_dir: Path, name: str) -> Path:
    path = Path(out_dir) / name
    path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("Escrito %s", path)
    return path


def write_jsonl(rows: Iterable[Dict[str, Any]], out_dir: Path, name: str) -> Path:
    path = Path(out_dir) / name
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    logger.info("Escrito %s", path)
    return path


def solve_summary(result: HowardResult, p: ModelParams, states=TABLE_STATES) -> Dict[str, Any]:
    g = result.grid
    return {
        "values": [
            {"x": x, "y": y, "V": float(value_at(result.value, x, y))} for x, y in states
        ],
        "outer_iterations": result.outer_iterations,
        "history": result.history,
        "grid": {"dx": g.dx, "dy": g.dy, "n_x": g.n_x, "n_y": g.n_y, "i0": g.i0,
                 "x_min": float(g.xs[0]), "x_max": float(g.xs[-1]), "y_max": float(g.ys[-1])},
        "properties": check_properties(g, p, result),
    }


def write_solution(result: HowardResult, barriers: BarrierPolicy, p: ModelParams, out_dir: Path) -> Dict[str, Path]:
    """value_grid.csv, regime_map.csv, barriers.csv y solve_summary.json."""
    paths = {
        "value_grid": write_csv(result.value.to_frame(), out_dir, "value_grid.csv"),
        "regime_map": write_csv(result.policy.to_frame(), out_dir, "regime_map.csv"),
        "barriers": write_csv(barriers.to_frame(), out_dir, "barriers.csv"),
    }
    summary = solve_summary(result, p)
    summary["inner_dividend_zones"] = {f"{y:.4f}": z for y, z in barriers.inner_zones.items()}
    paths["summary"] = write_json(summary, out_dir, "solve_summary.json")
    return paths
