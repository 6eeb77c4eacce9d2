"""Check reports and deterministic serialization.

Every floating-point number is written with 17 significant digits so that
golden files compare exactly and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["CheckReport", "dumps", "write_json", "write_csv", "format_float"]


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and dataclass-like objects to JSON types."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k, ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj)!r}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats and stable key order."""
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def write_csv(path: str | Path, rows: list[dict], columns: list[str] | None = None) -> None:
    """Write a list of flat dicts as CSV; floats use 17 significant digits."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for row in rows:
            for k in row:
                if k not in columns:
                    columns.append(k)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row.get(c, "")
            if isinstance(v, (float, np.floating)):
                v = format_float(v)
            elif isinstance(v, (bool, np.bool_)):
                v = "true" if v else "false"
            out.append(v)
        writer.writerow(out)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


@dataclass
class CheckReport:
    """Outcome of one numerical certificate.

    Attributes
    ----------
    name : str
        Identifier of the check, e.g. ``"ellipticity[heat]"``.
    passed : bool
        Overall verdict.
    quantities : dict
        Named measured values.
    bounds, tolerances : dict
        Thresholds the quantities were compared against.
    refinement : dict
        Values on the refined grid / doubled ensemble and the resulting drift.
    notes : list of str
        Caveats (truncation, skipped sub-checks, non-reproducible constants).
    tables : dict
        Optional row tables, written as CSV by the command line driver.
    """

    name: str
    passed: bool
    quantities: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    refinement: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def to_dict(self, with_tables: bool = False) -> dict:
        out = {
            "name": self.name,
            "passed": bool(self.passed),
            "quantities": self.quantities,
            "bounds": self.bounds,
            "tolerances": self.tolerances,
            "refinement": self.refinement,
            "notes": list(self.notes),
        }
        if with_tables:
            out["tables"] = self.tables
        return _plain(out)

    def summary_line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"
