"""Spherical distances, a local equirectangular projection and square grids.

All planar coordinates are metres east/north of a projection anchor. The
projection is only meant for city-scale extents, where its distortion stays
well under one percent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigError, DataError

EARTH_RADIUS_M = 6_371_000.0


class PlanarPoint(NamedTuple):
    x: float
    y: float


class Anchor(NamedTuple):
    lon: float
    lat: float


def haversine_m(a, b) -> float | np.ndarray:
    """Great-circle distance in metres between ``(lon, lat)`` pairs in degrees.

    Either argument may be an ``(n, 2)`` array, in which case distances are
    broadcast.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lon1, lat1 = np.radians(a[..., 0]), np.radians(a[..., 1])
    lon2, lat2 = np.radians(b[..., 0]), np.radians(b[..., 1])
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    d = 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    return float(d) if d.ndim == 0 else d


def project(points, anchor: Anchor | None = None) -> tuple[np.ndarray, Anchor]:
    """Project lon/lat degrees to local metres.

    Returns an ``(n, 2)`` array of ``(x, y)`` and the anchor used. By default
    the anchor is the coordinate mean of ``points``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise DataError("cannot project an empty point list")
    if anchor is None:
        anchor = Anchor(float(pts[:, 0].mean()), float(pts[:, 1].mean()))
    lam0, phi0 = math.radians(anchor.lon), math.radians(anchor.lat)
    x = EARTH_RADIUS_M * (np.radians(pts[:, 0]) - lam0) * math.cos(phi0)
    y = EARTH_RADIUS_M * (np.radians(pts[:, 1]) - phi0)
    return np.column_stack([x, y]), anchor


def unproject(xy, anchor: Anchor) -> np.ndarray:
    """Inverse of :func:`project` for a known anchor; returns ``(n, 2)`` lon/lat."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    lam0, phi0 = math.radians(anchor.lon), math.radians(anchor.lat)
    lon = np.degrees(lam0 + xy[:, 0] / (EARTH_RADIUS_M * math.cos(phi0)))
    lat = np.degrees(phi0 + xy[:, 1] / EARTH_RADIUS_M)
    return np.column_stack([lon, lat])


@dataclass(frozen=True)
class GridSpec:
    """Square-cell lattice; cell ``(col, row)`` spans
    ``[origin.x + col*cell_size, origin.x + (col+1)*cell_size)`` and likewise in y.
    Cell ids are row-major from the south-west corner: ``id = row*n_cols + col``."""

    origin: PlanarPoint
    cell_size: float
    n_cols: int
    n_rows: int

    def __post_init__(self):
        if not self.cell_size > 0 or not math.isfinite(self.cell_size):
            raise ConfigError("cell_size must be a positive finite number")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ConfigError("grid needs at least one row and one column")
        object.__setattr__(self, "origin", PlanarPoint(float(self.origin[0]), float(self.origin[1])))

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def x_max(self) -> float:
        return self.origin.x + self.n_cols * self.cell_size

    @property
    def y_max(self) -> float:
        return self.origin.y + self.n_rows * self.cell_size

    def col_row(self, cell_id) -> tuple[np.ndarray, np.ndarray]:
        cell_id = np.asarray(cell_id)
        return cell_id % self.n_cols, cell_id // self.n_cols

    def centers(self) -> np.ndarray:
        """``(n_cells, 2)`` planar cell centres in cell-id order."""
        col, row = self.col_row(np.arange(self.n_cells))
        return np.column_stack(
            [self.origin.x + (col + 0.5) * self.cell_size, self.origin.y + (row + 0.5) * self.cell_size]
        )

    def cell_polygon(self, cell_id: int) -> np.ndarray:
        """Closed 5-vertex ring (planar) for one cell, counter-clockwise."""
        col, row = self.col_row(cell_id)
        x0 = self.origin.x + col * self.cell_size
        y0 = self.origin.y + row * self.cell_size
        s = self.cell_size
        return np.array([[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s], [x0, y0]])


def build_grid(points, cell_size: float) -> GridSpec:
    """Smallest grid with origin snapped to multiples of ``cell_size`` covering ``points``."""
    if not (isinstance(cell_size, (int, float)) and cell_size > 0 and math.isfinite(cell_size)):
        raise ConfigError("cell_size must be a positive finite number")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise DataError("cannot build a grid around zero points")
    ox = math.floor(pts[:, 0].min() / cell_size) * cell_size
    oy = math.floor(pts[:, 1].min() / cell_size) * cell_size
    n_cols = max(1, math.ceil((pts[:, 0].max() - ox) / cell_size))
    n_rows = max(1, math.ceil((pts[:, 1].max() - oy) / cell_size))
    return GridSpec(PlanarPoint(ox, oy), float(cell_size), n_cols, n_rows)


def cells_of(points, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`cell_of`; returns ``(cols, rows)`` integer arrays."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    fx = (pts[:, 0] - grid.origin.x) / grid.cell_size
    fy = (pts[:, 1] - grid.origin.y) / grid.cell_size
    outside = (fx < 0) | (fy < 0) | (fx > grid.n_cols) | (fy > grid.n_rows) | ~np.isfinite(fx) | ~np.isfinite(fy)
    if np.any(outside):
        bad = int(np.flatnonzero(outside)[0])
        raise DataError(f"point {tuple(pts[bad])} lies outside the grid extent")
    cols = np.minimum(np.floor(fx).astype(np.int64), grid.n_cols - 1)
    rows = np.minimum(np.floor(fy).astype(np.int64), grid.n_rows - 1)
    return cols, rows


def cell_of(p: Sequence[float], grid: GridSpec) -> tuple[int, int]:
    """``(col, row)`` of the cell containing ``p``.

    Cells are half-open, except that the top and right edges of the grid
    belong to the last row/column.
    """
    cols, rows = cells_of([p], grid)
    return int(cols[0]), int(rows[0])
