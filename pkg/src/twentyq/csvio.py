"""Deterministic CSV output.

Floats use Python's shortest round-trip ``repr``, booleans are ``0``/``1``,
and every file ends with a ``#`` metadata block (config hash and package
versions, no timestamps) so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
import os
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    return str(v)


def metadata(config_hash: str | None = None, **extra) -> dict[str, str]:
    meta = {}
    if config_hash is not None:
        meta["config_sha256"] = config_hash
    meta.update({k: format_value(v) for k, v in extra.items()})
    meta["twentyq"] = __version__
    meta["numpy"] = np.__version__
    meta["scipy"] = scipy.__version__
    meta["python"] = platform.python_version()
    return meta


def render_csv(header, rows, meta: dict[str, str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if isinstance(row, dict):
            row = [row[h] for h in header]
        w.writerow([format_value(v) for v in row])
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    return buf.getvalue()


def write_csv(path: str | Path, header, rows, meta: dict[str, str] | None = None) -> Path:
    """Write atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        fh.write(render_csv(header, rows, meta))
    os.replace(tmp, path)
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[dict[str, str]], dict[str, str]]:
    """Inverse of :func:`write_csv`: ``(header, rows, metadata)`` with raw string cells."""
    data, meta = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition(": ")
                meta[k] = v
            else:
                data.append(line)
    reader = csv.reader(data)
    header = next(reader)
    rows = [dict(zip(header, r)) for r in reader]
    return header, rows, meta
