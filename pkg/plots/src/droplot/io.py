"""Readers for the training-log and ablation-summary CSV schemas.

Both schemas are produced by the drotrain CLI; validation is strict so a
schema drift fails loudly with the missing column named.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List

RUN_LOG_COLUMNS = [
    "step",
    "lambda",
    "agg_loss",
    "utility_loss",
    "p50",
    "p90",
    "max",
    "weights_entropy",
]

ABLATION_COLUMNS = [
    "parameter",
    "value",
    "seed",
    "final_p90_adv_loss",
    "final_mean_adv_loss",
    "final_utility_loss",
    "status",
]


class SchemaError(ValueError):
    """Input CSV does not match the documented schema."""


def _parse_float(text: str) -> float:
    # the trainer writes an empty field when utility is disabled
    if text == "":
        return math.nan
    return float(text)


def _read_rows(path: Path, required: List[str]) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: zero data rows")
    return rows


def read_run_log(path: Path) -> Dict[str, "list[float]"]:
    """Columns of one training log, keyed by column name."""
    rows = _read_rows(path, RUN_LOG_COLUMNS)
    out: Dict[str, List[float]] = {c: [] for c in RUN_LOG_COLUMNS}
    for row in rows:
        for c in RUN_LOG_COLUMNS:
            out[c].append(_parse_float(row[c]))
    return out


def read_ablation_summary(path: Path) -> List[Dict[str, object]]:
    """Rows of an ablation summary with numeric fields parsed."""
    rows = _read_rows(path, ABLATION_COLUMNS)
    parsed: List[Dict[str, object]] = []
    for row in rows:
        parsed.append(
            {
                "parameter": row["parameter"],
                "value": row["value"],
                "seed": int(row["seed"]),
                "final_p90_adv_loss": _parse_float(row["final_p90_adv_loss"]),
                "final_mean_adv_loss": _parse_float(row["final_mean_adv_loss"]),
                "final_utility_loss": _parse_float(row["final_utility_loss"]),
                "status": row["status"],
            }
        )
    return parsed
