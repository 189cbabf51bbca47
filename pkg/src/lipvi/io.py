"""File formats: dataset CSV, report JSON, feature tables, point lists.

Reals are serialized with 17 significant digits so a write/read round trip
reproduces every 64-bit value exactly; all writes go through a temp file and
an atomic rename.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyInput
from .lvi import BoundsReport
from .mdp import TransitionDataset


def format_real(x: float) -> str:
    return f"{float(x):.17g}"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_header(state_dim: int, action_dim: int) -> list[str]:
    return (["ep", "t"]
            + [f"s{i}" for i in range(state_dim)]
            + [f"a{i}" for i in range(action_dim)]
            + ["r"]
            + [f"sp{i}" for i in range(state_dim)])


def dataset_to_csv(dataset: TransitionDataset) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(dataset_header(dataset.state_dim, dataset.action_dim))
    ep = dataset.episode if dataset.episode is not None else np.zeros(dataset.n, dtype=int)
    t = dataset.t if dataset.t is not None else np.arange(dataset.n)
    for i in range(dataset.n):
        row = [str(int(ep[i])), str(int(t[i]))]
        row += [format_real(v) for v in dataset.s[i]]
        row += [format_real(v) for v in dataset.a[i]]
        row.append(format_real(dataset.r[i]))
        row += [format_real(v) for v in dataset.s_next[i]]
        writer.writerow(row)
    return buf.getvalue()


def write_dataset(dataset: TransitionDataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(dataset))


def read_dataset(path) -> TransitionDataset:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise EmptyInput(f"{path}: empty dataset file")
        state_dim = sum(1 for h in header if h.startswith("s") and not h.startswith("sp"))
        action_dim = sum(1 for h in header if h.startswith("a"))
        expected = dataset_header(state_dim, action_dim)
        if header != expected:
            raise DimensionMismatch(f"{path}: unexpected header {header}")
        eps, ts, s, a, r, sn = [], [], [], [], [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DimensionMismatch(f"{path}: row with {len(row)} fields, expected {len(header)}")
            vals = [float(v) for v in row[2:]]
            eps.append(int(row[0]))
            ts.append(int(row[1]))
            s.append(vals[:state_dim])
            a.append(vals[state_dim:state_dim + action_dim])
            r.append(vals[state_dim + action_dim])
            sn.append(vals[state_dim + action_dim + 1:])
    if not s:
        raise EmptyInput(f"{path}: dataset has no rows")
    return TransitionDataset(np.asarray(s), np.asarray(a), np.asarray(r),
                             np.asarray(sn), np.asarray(eps), np.asarray(ts))


def report_to_json(report: BoundsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def write_report(report: BoundsReport, path) -> None:
    atomic_write_text(path, report_to_json(report))


def write_points(points: np.ndarray, path) -> None:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{i}" for i in range(points.shape[1])])
    for row in points:
        writer.writerow([format_real(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_points(path) -> np.ndarray:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise EmptyInput(f"{path}: empty points file")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise EmptyInput(f"{path}: no points")
    return np.asarray(rows)


def read_feature_table(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with header row,f0,...: maps dataset row indices to feature vectors."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "row":
            raise DimensionMismatch(f"{path}: feature table must start with a 'row' column")
        rows, feats = [], []
        for row in reader:
            if not row:
                continue
            rows.append(int(row[0]))
            feats.append([float(v) for v in row[1:]])
    if not rows:
        raise EmptyInput(f"{path}: feature table has no rows")
    return np.asarray(rows, dtype=int), np.asarray(feats)


def read_config_file(path) -> dict[str, str]:
    """Flat key=value lines; blank lines and #-comments are skipped."""
    out: dict[str, str] = {}
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DimensionMismatch(f"{path}: malformed config line {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
