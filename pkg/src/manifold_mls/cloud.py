"""Point-cloud container and plain-text I/O.

File format: one point per line, coordinates separated by whitespace or
commas, ``#`` lines are comments.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .errors import ValidationError


@dataclass
class PointCloud:
    """Ordered points in R^D with optional per-point provenance.

    ``source_index`` and ``grid_index`` are filled in by resampling: output
    point ``l`` came from grid node ``grid_index[l]`` of input sample
    ``source_index[l]``.
    """

    points: np.ndarray
    source_index: np.ndarray | None = None
    grid_index: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.points = as_points(self.points)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


def as_points(data, dim: int | None = None) -> np.ndarray:
    """Coerce ``data`` (PointCloud, array-like) to a float (n, D) array."""
    if isinstance(data, PointCloud):
        pts = data.points
    else:
        pts = np.asarray(data, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValidationError(f"expected an (n, D) array of points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("point cloud contains non-finite coordinates")
    if dim is not None and pts.shape[1] != dim:
        raise ValidationError(f"expected points in R^{dim}, got R^{pts.shape[1]}")
    return pts


def as_point(p, dim: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if dim is not None and p.shape[0] != dim:
        raise ValidationError(f"expected a point in R^{dim}, got R^{p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("point has non-finite coordinates")
    return p


def read_points(path: str | os.PathLike | io.TextIOBase) -> np.ndarray:
    if isinstance(path, (str, os.PathLike)):
        with open(path) as fh:
            return read_points(fh)
    rows = []
    for lineno, line in enumerate(path, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ValidationError("no points in input")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ValidationError(f"ragged point file: row widths {sorted(width)}")
    return as_points(np.array(rows))


def write_points(path, points, header: Iterable[str] = ()) -> None:
    pts = as_points(points)
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        np.savetxt(fh, pts, fmt="%.17g")
