"""CSV ingestion and JSON/CSV output with 17 significant digits."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError
from .patterns import Dataset


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def load_csv(path, response_col: str = "y", sigma2: float = 1.0) -> Dataset:
    """Read a header-first UTF-8 CSV; every column except the response is a feature."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if response_col not in header:
        raise InputError(
            f"response column {response_col!r} not found; available columns: {', '.join(header)}"
        )
    ycol = header.index(response_col)
    fcols = [i for i in range(len(header)) if i != ycol]
    Z, y = [], []
    for r, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InputError(f"row {r}: expected {len(header)} cells, got {len(row)}")
        vals = []
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"row {r}, column {c + 1} ({header[c]}): non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"row {r}, column {c + 1} ({header[c]}): non-finite value {cell!r}")
            if c != ycol and not 0.0 <= v <= 1.0:
                raise InputError(f"row {r}, column {c + 1} ({header[c]}): value {cell} outside [0, 1]")
            vals.append(v)
        Z.append([vals[i] for i in fcols])
        y.append(vals[ycol])
    if not Z:
        raise InputError(f"{path} has no data rows")
    return Dataset(np.array(Z), np.array(y), sigma2, tuple(header[i] for i in fcols))


def dump_csv(data: Dataset, path, response_col: str = "y") -> None:
    names = data.names or tuple(f"z{j}" for j in range(1, data.m + 1))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, response_col])
        for zi, yi in zip(data.Z, data.y):
            w.writerow([*(fmt_float(v) for v in zi), fmt_float(yi)])


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items())
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = (f"{pad}{_encode(v, indent, level + 1)}" for v in obj)
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 1) -> str:
    """JSON text with every float at 17 significant digits and non-finite floats as null."""
    return _encode(obj, indent, 0) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def write_rows_csv(rows: list[dict], path, columns: list[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([
                fmt_float(v) if isinstance(v, (float, np.floating)) and math.isfinite(v)
                else "" if isinstance(v, (float, np.floating)) or v is None else v
                for v in (row.get(c) for c in columns)
            ])
