"""Delimited file formats and the structured-text report.

All tabular files are comma-delimited with a header row:

    feature file    sample_id,plant_id[,label],f0..f{d-1}
    pose file       sample_id,x_m,y_m
    label file      sample_id,label
    assignment file sample_id,cluster_id
    region file     image_id,region_id,x0,y0,x1,y1,area_px

Floats are written with ``repr`` (shortest round-trip), so outputs are
byte-stable across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from fieldclust.clustering import Sample


class InputError(Exception):
    """A named input file failed to parse or is inconsistent."""


@dataclass
class FeatureTable:
    """Parsed feature file: row order preserved."""

    ids: list[int]
    plant_groups: dict[int, int]
    labels: dict[int, int] | None
    vectors: dict[int, np.ndarray]

    @property
    def dim(self) -> int:
        return len(next(iter(self.vectors.values())))


def _fail(path, line_no, msg) -> "InputError":
    return InputError(f"{path}:{line_no}: {msg}")


def _read_rows(path: Path):
    try:
        with open(path, newline="") as fh:
            yield from enumerate(csv.reader(fh), start=1)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def read_feature_file(path: str | Path) -> FeatureTable:
    path = Path(path)
    rows = _read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise _fail(path, 1, "empty file") from None
    if header[:2] != ["sample_id", "plant_id"]:
        raise _fail(path, 1, "expected columns sample_id,plant_id[,label],f0..")
    has_label = len(header) > 2 and header[2] == "label"
    f_start = 3 if has_label else 2
    dim = len(header) - f_start
    if dim < 1:
        raise _fail(path, 1, "no feature columns")
    ids: list[int] = []
    plant_groups: dict[int, int] = {}
    labels: dict[int, int] = {}
    vectors: dict[int, np.ndarray] = {}
    for line_no, row in rows:
        if not row:
            continue
        if len(row) != len(header):
            raise _fail(path, line_no, f"expected {len(header)} columns, got {len(row)}")
        try:
            sid = int(row[0])
            pid = int(row[1])
            if has_label:
                labels[sid] = int(row[2])
            vec = np.array([float(v) for v in row[f_start:]])
        except ValueError as exc:
            raise _fail(path, line_no, str(exc)) from None
        if sid in vectors:
            raise _fail(path, line_no, f"duplicate sample_id {sid}")
        if not np.all(np.isfinite(vec)):
            raise _fail(path, line_no, "non-finite feature value")
        ids.append(sid)
        plant_groups[sid] = pid
        vectors[sid] = vec
    if not ids:
        raise _fail(path, 2, "no data rows")
    return FeatureTable(ids=ids, plant_groups=plant_groups,
                        labels=labels if has_label else None, vectors=vectors)


def write_feature_file(path: str | Path, samples: Sequence[Sample],
                       with_labels: bool | None = None) -> None:
    if with_labels is None:
        with_labels = all(s.label is not None for s in samples)
    dim = samples[0].features.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["sample_id", "plant_id"]
        if with_labels:
            header.append("label")
        w.writerow(header + [f"f{i}" for i in range(dim)])
        for s in samples:
            row = [s.id, s.plant_group]
            if with_labels:
                row.append(s.label)
            w.writerow(row + [repr(float(v)) for v in s.features])


def read_pose_file(path: str | Path) -> dict[int, tuple[float, float]]:
    path = Path(path)
    rows = _read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise _fail(path, 1, "empty file") from None
    if header != ["sample_id", "x_m", "y_m"]:
        raise _fail(path, 1, "expected columns sample_id,x_m,y_m")
    poses: dict[int, tuple[float, float]] = {}
    for line_no, row in rows:
        if not row:
            continue
        try:
            poses[int(row[0])] = (float(row[1]), float(row[2]))
        except (ValueError, IndexError) as exc:
            raise _fail(path, line_no, str(exc)) from None
    return poses


def write_pose_file(path: str | Path, samples: Sequence[Sample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "x_m", "y_m"])
        for s in samples:
            if s.pose is not None:
                w.writerow([s.id, repr(float(s.pose[0])), repr(float(s.pose[1]))])


def read_label_file(path: str | Path) -> dict[int, int]:
    path = Path(path)
    rows = _read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise _fail(path, 1, "empty file") from None
    if header != ["sample_id", "label"]:
        raise _fail(path, 1, "expected columns sample_id,label")
    labels: dict[int, int] = {}
    for line_no, row in rows:
        if not row:
            continue
        try:
            labels[int(row[0])] = int(row[1])
        except (ValueError, IndexError) as exc:
            raise _fail(path, line_no, str(exc)) from None
    return labels


def write_label_file(path: str | Path, labels: Mapping[int, int],
                     ids: Sequence[int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label"])
        for sid in ids:
            w.writerow([sid, labels[sid]])


def read_assignment_file(path: str | Path) -> dict[int, int]:
    path = Path(path)
    rows = _read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise _fail(path, 1, "empty file") from None
    if header != ["sample_id", "cluster_id"]:
        raise _fail(path, 1, "expected columns sample_id,cluster_id")
    out: dict[int, int] = {}
    for line_no, row in rows:
        if not row:
            continue
        try:
            out[int(row[0])] = int(row[1])
        except (ValueError, IndexError) as exc:
            raise _fail(path, line_no, str(exc)) from None
    return out


def write_assignment_file(path: str | Path, assignment: Mapping[int, int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "cluster_id"])
        for sid in sorted(assignment):
            w.writerow([sid, assignment[sid]])


def write_region_file(path: str | Path, records: Sequence[tuple]) -> None:
    """records: (image_id, region_id, x0, y0, x1, y1, area_px)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "region_id", "x0", "y0", "x1", "y1", "area_px"])
        for rec in records:
            w.writerow(list(rec))


def _fmt_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_block(lines: list[str], data: Mapping, indent: int) -> None:
    pad = "  " * indent
    for key, value in data.items():
        if isinstance(value, Mapping):
            lines.append(f"{pad}{key}:")
            _write_block(lines, value, indent + 1)
        else:
            lines.append(f"{pad}{key}: {_fmt_scalar(value)}")


def render_report(data: Mapping) -> str:
    """Nested key/value report text; insertion order is kept."""
    lines: list[str] = []
    _write_block(lines, data, 0)
    return "\n".join(lines) + "\n"


def write_report(path: str | Path, data: Mapping) -> None:
    Path(path).write_text(render_report(data))
