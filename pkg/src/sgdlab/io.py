"""CSV / JSON emission, manifests with content hashes, gnuplot scripts."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path as FsPath

import numpy as np

from .errors import SgdLabError


class ArtifactIOError(SgdLabError, OSError):
    """Filesystem failure while writing or reading an artifact."""


def format_float(x) -> str:
    """Shortest round-trip decimal; integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    v = float(x)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _open_for_write(path):
    path = FsPath(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def write_csv(path, header, rows) -> FsPath:
    """Header row, '.' decimal, '\\n' line endings."""
    path = FsPath(path)
    try:
        with _open_for_write(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else format_float(v) for v in row])
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    with FsPath(path).open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r]
    return header, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; store them as strings
        return v if math.isfinite(v) else format_float(v)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> FsPath:
    path = FsPath(path)
    try:
        with _open_for_write(path) as fh:
            fh.write(dumps_json(obj))
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    return path


def load_json(path):
    try:
        with FsPath(path).open(encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with FsPath(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files) -> dict:
    """manifest.json listing every file (relative path) with its sha256."""
    out_dir = FsPath(out_dir)
    entries = {}
    for f in sorted(set(FsPath(f) for f in files)):
        entries[f.relative_to(out_dir).as_posix()] = file_sha256(f)
    write_json(out_dir / "manifest.json", {"files": entries})
    return entries


def gnuplot_script(csv_path, x_col: str, y_cols, title: str = "", style: str = "lines") -> str:
    """A standalone gnuplot script plotting y_cols against x_col (columns by name)."""
    csv_path = FsPath(csv_path)
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'" if title else "unset title",
        f"set terminal pngcairo size 800,600",
        f"set output '{csv_path.stem}.png'",
    ]
    plots = [f"'{csv_path.name}' using '{x_col}':'{y}' with {style} title '{y}'" for y in y_cols]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def write_gnuplot(csv_path, x_col, y_cols, title="", style="lines") -> FsPath:
    csv_path = FsPath(csv_path)
    gp = csv_path.with_suffix(".gp")
    try:
        with _open_for_write(gp) as fh:
            fh.write(gnuplot_script(csv_path, x_col, y_cols, title, style))
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {gp}: {exc}") from exc
    return gp
