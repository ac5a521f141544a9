"""Trajectory file formats.

canonical
    Plain text, one point per line as ``traj_id,lon,lat``. The points of a
    trajectory are contiguous and in order. Blank lines and lines starting
    with ``#`` are ignored, as is an optional ``traj_id,lon,lat`` header.
porto
    The ECML/PKDD 2015 Porto taxi CSV: a header row with ``TRIP_ID`` and
    ``POLYLINE`` columns, the polyline being a JSON list of ``[lon, lat]``.

Geolife PLT files convert to canonical with one line of awk per file::

    tail -n +7 f.plt | awk -F, -v id=f '{print id "," $2 "," $1}'
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .geo import STOP, BoundingBox, GeoPoint, RawTrajectory

log = logging.getLogger(__name__)

FORMATS = ("canonical", "porto")


class DatasetError(ValueError):
    pass


@dataclass
class LoadResult:
    trajectories: list[RawTrajectory]
    rejected_outside: int = 0
    skipped_malformed: int = 0


def _admit(traj: RawTrajectory, bbox: BoundingBox | None, result: LoadResult,
           on_outside: str) -> None:
    if bbox is not None and not all(bbox.contains(p) for p in traj.points):
        if on_outside == "abort":
            raise DatasetError(f"trajectory {traj.id!r} leaves the bounding box")
        result.rejected_outside += 1
        return
    result.trajectories.append(traj)


def _read_canonical(fh: TextIO, bbox, result, on_outside):
    current: str | None = None
    points: list[GeoPoint] = []
    seen: set[str] = set()
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and parts == ["traj_id", "lon", "lat"]:
            continue
        if len(parts) != 3:
            raise DatasetError(f"line {lineno}: expected traj_id,lon,lat, got {line!r}")
        tid = parts[0]
        try:
            point = GeoPoint(float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        if tid != current:
            if current is not None:
                _admit(RawTrajectory(current, tuple(points)), bbox, result, on_outside)
            if tid in seen:
                raise DatasetError(f"line {lineno}: trajectory {tid!r} is not contiguous")
            seen.add(tid)
            current, points = tid, []
        points.append(point)
    if current is not None:
        _admit(RawTrajectory(current, tuple(points)), bbox, result, on_outside)


def _read_porto(fh: TextIO, bbox, result, on_outside):
    csv.field_size_limit(sys.maxsize)
    reader = csv.DictReader(fh)
    if not reader.fieldnames or "POLYLINE" not in reader.fieldnames:
        raise DatasetError("line 1: porto format needs a POLYLINE column")
    for row in reader:
        lineno = reader.line_num
        tid = row.get("TRIP_ID") or f"row{lineno}"
        try:
            coords = json.loads(row["POLYLINE"])
            points = tuple(GeoPoint(float(lon), float(lat)) for lon, lat in coords)
        except (TypeError, ValueError):
            result.skipped_malformed += 1
            continue
        if not points:
            result.skipped_malformed += 1
            continue
        _admit(RawTrajectory(tid, points), bbox, result, on_outside)


def load_dataset(path: str | Path, fmt: str = "canonical", bbox: BoundingBox | None = None,
                 on_outside: str = "skip") -> LoadResult:
    """Read trajectories, dropping (or aborting on) any that leave ``bbox``.

    Raises:
        DatasetError: on a parse error (with line number), an unknown
            format, or when no trajectory survives.
    """
    if fmt not in FORMATS:
        raise DatasetError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if on_outside not in ("skip", "abort"):
        raise DatasetError(f"on_outside must be 'skip' or 'abort', got {on_outside!r}")
    result = LoadResult([])
    with open(path, newline="") as fh:
        reader = _read_canonical if fmt == "canonical" else _read_porto
        reader(fh, bbox, result, on_outside)
    if result.rejected_outside or result.skipped_malformed:
        log.info("%s: rejected %d outside bbox, skipped %d malformed", path,
                 result.rejected_outside, result.skipped_malformed)
    if not result.trajectories:
        raise DatasetError(f"{path}: no usable trajectories")
    return result


def write_canonical(trajectories: Iterable[RawTrajectory], fh: TextIO) -> None:
    fh.write("traj_id,lon,lat\n")
    for t in trajectories:
        for p in t.points:
            fh.write(f"{t.id},{p.lon!r},{p.lat!r}\n")


def write_calibrated(ids: Sequence[str], seqs: Sequence[Sequence[int]], fh: TextIO) -> None:
    """One line per trajectory: ``traj_id,<space-separated symbols>``, STOP as ``#``."""
    for tid, seq in zip(ids, seqs):
        fh.write(tid + "," + " ".join("#" if s == STOP else str(s) for s in seq) + "\n")


def read_calibrated(fh: TextIO) -> list[tuple[str, tuple[int, ...]]]:
    out = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            tid, body = line.split(",", 1)
            seq = tuple(STOP if s == "#" else int(s) for s in body.split())
        except ValueError:
            raise DatasetError(f"line {lineno}: malformed calibrated trajectory") from None
        out.append((tid, seq))
    return out
