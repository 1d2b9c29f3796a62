"""Keypoints and periocular sampling grids."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import FormatError, ParameterError

KEYPOINT_KINDS = ("minutia", "core", "delta", "grid", "other")


@dataclass(frozen=True)
class Keypoint:
    id: str
    x: float
    y: float
    direction: float | None = None
    kind: str = "other"

    def __post_init__(self):
        if self.kind not in KEYPOINT_KINDS:
            raise ParameterError(f"unknown keypoint kind {self.kind!r}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ParameterError(f"keypoint {self.id!r} has a non-finite position")
        if self.direction is not None and not math.isfinite(self.direction):
            raise ParameterError(f"keypoint {self.id!r} has a non-finite direction")

    def in_bounds(self, width: int, height: int) -> bool:
        return 0 <= self.x <= width - 1 and 0 <= self.y <= height - 1


@dataclass(frozen=True)
class GridSpec:
    center: tuple
    rows: int
    cols: int
    spacing: float

    def __post_init__(self):
        if int(self.rows) != self.rows or self.rows < 1 or int(self.cols) != self.cols or self.cols < 1:
            raise ParameterError(f"grid needs rows, cols >= 1, got {self.rows}x{self.cols}")
        if not self.spacing > 0:
            raise ParameterError(f"grid spacing must be positive, got {self.spacing}")


def grid_points(g: GridSpec) -> list:
    """``rows x cols`` keypoints centred on ``g.center``, row-major, ids ``r<i>c<j>``."""
    cx, cy = map(float, g.center)
    oy = (g.rows - 1) / 2.0
    ox = (g.cols - 1) / 2.0
    out = []
    for i in range(g.rows):
        for j in range(g.cols):
            out.append(Keypoint(f"r{i}c{j}", cx + (j - ox) * g.spacing, cy + (i - oy) * g.spacing, None, "grid"))
    return out


def periocular_grid(center, iris_radius: float, rows: int = 7, cols: int = 9, spacing_factor: float = 0.5) -> GridSpec:
    """Grid about the eye centre with spacing ``spacing_factor * iris_radius``.

    The defaults are arbitrary but fixed; every value is configurable.
    """
    if not iris_radius > 0:
        raise ParameterError(f"iris radius must be positive, got {iris_radius}")
    return GridSpec(tuple(center), rows, cols, spacing_factor * iris_radius)


def _parse_row(rec, lineno, path):
    where = f"{path}:{lineno}"
    if len(rec) < 3 or len(rec) > 5:
        raise FormatError(f"{where}: expected id,x,y[,direction[,kind]], got {len(rec)} fields")
    kid = rec[0].strip()
    if not kid:
        raise FormatError(f"{where}: empty keypoint id")
    try:
        x, y = float(rec[1]), float(rec[2])
    except ValueError:
        raise FormatError(f"{where}: x and y must be numbers") from None
    direction = None
    if len(rec) >= 4 and rec[3].strip():
        try:
            direction = float(rec[3])
        except ValueError:
            raise FormatError(f"{where}: direction must be a number") from None
    kind = rec[4].strip() if len(rec) == 5 and rec[4].strip() else "other"
    try:
        return Keypoint(kid, x, y, direction, kind)
    except ParameterError as exc:
        raise FormatError(f"{where}: {exc}") from None


def read_keypoints(path) -> list:
    """Read ``id,x,y[,direction[,kind]]`` rows; ``#`` starts a comment line."""
    out = []
    seen = set()
    first = True
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            rec = next(csv.reader([s]))
            if first and [v.strip() for v in rec[:3]] == ["id", "x", "y"]:
                first = False
                continue
            first = False
            kp = _parse_row(rec, lineno, path)
            if kp.id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate keypoint id {kp.id!r}")
            seen.add(kp.id)
            out.append(kp)
    return out


def write_keypoints(keypoints, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for kp in keypoints:
            d = "" if kp.direction is None else repr(float(kp.direction))
            w.writerow([kp.id, repr(float(kp.x)), repr(float(kp.y)), d, kp.kind])
