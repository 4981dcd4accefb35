"""CSV readers and atomic writers.

Readers skip blank lines and lines starting with ``#``. A first row with
any non-numeric cell is taken as a header. Errors name the offending line
(1-based, counting every physical line).
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import PolyhedralSet


def _rows(path):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        yield lineno, [c.strip() for c in row]


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _float(cell, path, lineno, col):
    try:
        v = float(cell)
    except ValueError:
        raise ValidationError(f"{path}:{lineno}: column {col + 1}: not a number: {cell!r}") from None
    if not np.isfinite(v):
        raise ValidationError(f"{path}:{lineno}: column {col + 1}: value must be finite")
    return v


def read_table(path):
    """Read a rectangular numeric CSV.

    Returns ``(values, header)`` where ``header`` is a list of column names
    or ``None``.
    """
    header = None
    data = []
    width = None
    for i, (lineno, row) in enumerate(_rows(path)):
        if i == 0 and not all(_is_number(c) for c in row):
            header = row
            width = len(row)
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValidationError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
        data.append([_float(c, path, lineno, j) for j, c in enumerate(row)])
    if not data:
        raise ValidationError(f"{path}: no data rows")
    return np.array(data, dtype=float), header


def load_points_csv(path) -> np.ndarray:
    """``(N, d)`` array of points."""
    return read_table(path)[0]


def load_constraints_csv(path, d: int | None = None) -> PolyhedralSet:
    """Constraint file with rows ``A_i1, ..., A_id, b_i`` meaning ``A_i x >= b_i``."""
    arr, _ = read_table(path)
    if arr.shape[1] < 2:
        raise ValidationError(f"{path}: need at least two columns (A | b)")
    if d is not None and arr.shape[1] != d + 1:
        raise ValidationError(f"{path}: expected {d + 1} columns for dimension {d}, "
                              f"found {arr.shape[1]}")
    zero = np.flatnonzero(~np.any(arr[:, :-1] != 0, axis=1))
    if zero.size:
        raise ValidationError(f"{path}: constraint rows {(zero + 1).tolist()} have zero normals")
    return PolyhedralSet(arr[:, :-1], arr[:, -1])


def load_samples_long_csv(path):
    """Long-format samples ``group_id,value``.

    Returns ``(group_ids, samples)`` in order of first appearance.
    """
    groups: dict[str, list[float]] = {}
    for i, (lineno, row) in enumerate(_rows(path)):
        if i == 0 and len(row) >= 2 and not _is_number(row[1]):
            continue
        if len(row) != 2:
            raise ValidationError(f"{path}:{lineno}: expected group_id,value")
        if not row[0]:
            raise ValidationError(f"{path}:{lineno}: empty group id")
        groups.setdefault(row[0], []).append(_float(row[1], path, lineno, 1))
    if not groups:
        raise ValidationError(f"{path}: no samples")
    return list(groups), [np.array(v) for v in groups.values()]


def load_caps_long_csv(path):
    """Long-format capitalisations ``date,asset,cap``.

    Returns ``(dates, assets, caps)`` with ``caps`` of shape
    ``(len(dates), len(assets))``, both labels in order of first
    appearance. Every (date, asset) pair must occur exactly once.
    """
    dates: dict[str, int] = {}
    assets: dict[str, int] = {}
    entries = []
    for i, (lineno, row) in enumerate(_rows(path)):
        if i == 0 and len(row) >= 3 and not _is_number(row[2]):
            continue
        if len(row) != 3:
            raise ValidationError(f"{path}:{lineno}: expected date,asset,cap")
        di = dates.setdefault(row[0], len(dates))
        ai = assets.setdefault(row[1], len(assets))
        entries.append((lineno, di, ai, _float(row[2], path, lineno, 2)))
    if not entries:
        raise ValidationError(f"{path}: no data rows")
    caps = np.full((len(dates), len(assets)), np.nan)
    for lineno, di, ai, v in entries:
        if not np.isnan(caps[di, ai]):
            raise ValidationError(f"{path}:{lineno}: duplicate (date, asset) entry")
        caps[di, ai] = v
    missing = np.argwhere(np.isnan(caps))
    if missing.size:
        di, ai = missing[0]
        raise ValidationError(f"{path}: no cap for date {list(dates)[di]!r}, "
                              f"asset {list(assets)[ai]!r}")
    return list(dates), list(assets), caps


# ---------------------------------------------------------------------------
# writers


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x) -> str:
    # shortest repr that round-trips exactly
    return repr(float(x))


def csv_text(header, rows, comments=()) -> str:
    """Render rows as CSV. Floats are written so they parse back bitwise."""
    out = io.StringIO()
    for c in comments:
        out.write(f"# {c}\n")
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v)
                           for v in row) + "\n")
    return out.getvalue()


def write_matrix(path, matrix, prefix="x", comments=()):
    matrix = np.asarray(matrix, dtype=float)
    matrix = matrix.reshape(matrix.shape[0], -1)
    header = [f"{prefix}{j + 1}" for j in range(matrix.shape[1])]
    atomic_write(path, csv_text(header, (list(map(float, r)) for r in matrix), comments))


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")
