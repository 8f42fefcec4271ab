"""Inverse distance weighting onto a raster, and ESRI ASCII grid I/O."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .exceptions import ConfigError, DataError
from .geo import EARTH_RADIUS_M, Anchor, GridSpec, PlanarPoint

NODATA = -9999.0
# relative slack when deciding whether a sample ties the m-th nearest distance
TIE_RTOL = 1e-9
_CHUNK = 1024


@dataclass(frozen=True)
class IdwParams:
    power: float = 2.0
    neighbors: int = 12
    max_search_radius: float = math.inf

    def __post_init__(self):
        if not (self.power > 0 and math.isfinite(self.power)):
            raise ConfigError("IDW power must be a positive finite number")
        if int(self.neighbors) != self.neighbors or self.neighbors < 1:
            raise ConfigError("IDW neighbour count must be a positive integer")
        if not self.max_search_radius > 0:
            raise ConfigError("IDW search radius must be positive")


def _idw_block(targets: np.ndarray, xy: np.ndarray, values: np.ndarray, params: IdwParams) -> np.ndarray:
    """IDW estimates for a block of targets; NaN where no sample is in range."""
    d = np.hypot(targets[:, None, 0] - xy[None, :, 0], targets[:, None, 1] - xy[None, :, 1])
    in_range = d <= params.max_search_radius
    d_masked = np.where(in_range, d, np.inf)
    n = xy.shape[0]
    m = min(int(params.neighbors), n)
    dm = np.partition(d_masked, m - 1, axis=1)[:, m - 1]
    # every sample tied with the m-th distance is included
    use = in_range & (d_masked <= dm[:, None] * (1 + TIE_RTOL))
    dmin = d_masked.min(axis=1)
    out = np.full(len(targets), np.nan)

    exact = dmin == 0
    if exact.any():
        first = np.argmax(d[exact] == 0, axis=1)
        out[exact] = values[first]

    rest = ~exact & np.isfinite(dmin)
    if rest.any():
        # weights relative to the nearest distance keep large powers finite
        with np.errstate(divide="ignore"):
            w = np.where(use[rest], (dmin[rest, None] / d_masked[rest]) ** params.power, 0.0)
        est = (w * values[None, :]).sum(axis=1) / w.sum(axis=1)
        vals = np.where(use[rest], values[None, :], np.nan)
        out[rest] = np.clip(est, np.nanmin(vals, axis=1), np.nanmax(vals, axis=1))
    return out


def _as_samples(sample_xy, values):
    xy = np.asarray(sample_xy, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float).ravel()
    if len(xy) != len(values):
        raise ValueError("sample coordinates and values differ in length")
    if len(xy) == 0:
        raise DataError("IDW needs at least one sample")
    return xy, values


def idw_at(s0, sample_xy, values, params: IdwParams | None = None) -> float:
    """IDW estimate at planar point ``s0`` from the nearest ``params.neighbors`` samples.

    Returns the sample's own value when ``s0`` coincides with a sample, and
    NaN when no sample lies within ``params.max_search_radius``.
    """
    params = params or IdwParams()
    xy, values = _as_samples(sample_xy, values)
    target = np.asarray(s0, dtype=float).reshape(1, 2)
    return float(_idw_block(target, xy, values, params)[0])


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """Raster values shaped ``(n_rows, n_cols)`` with row 0 along the southern edge."""

    spec: GridSpec
    values: np.ndarray
    nodata: float = NODATA

    @property
    def valid(self) -> np.ndarray:
        return self.values != self.nodata


def raster_spec_for(grid: GridSpec, refine: int = 4) -> GridSpec:
    """Raster geometry covering ``grid`` at ``grid.cell_size / refine`` resolution."""
    if refine < 1:
        raise ConfigError("raster refinement must be >= 1")
    return GridSpec(grid.origin, grid.cell_size / refine, grid.n_cols * refine, grid.n_rows * refine)


def idw_raster(sample_xy, values, raster_spec: GridSpec, params: IdwParams | None = None) -> RasterGrid:
    """Evaluate IDW at every pixel centre of ``raster_spec``."""
    params = params or IdwParams()
    xy, values = _as_samples(sample_xy, values)
    centers = raster_spec.centers()
    out = np.empty(len(centers))
    for start in range(0, len(centers), _CHUNK):
        block = centers[start : start + _CHUNK]
        out[start : start + len(block)] = _idw_block(block, xy, values, params)
    out = np.where(np.isnan(out), NODATA, out)
    return RasterGrid(raster_spec, out.reshape(raster_spec.n_rows, raster_spec.n_cols))


# --------------------------------------------------------------------------
# ESRI ASCII grid


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def anchor_sidecar_path(path: Union[str, os.PathLike]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".anchor.txt")


def write_ascii_grid(path: Union[str, os.PathLike], raster: RasterGrid, anchor: Anchor | None = None) -> None:
    """Write ``raster`` as an ESRI ASCII grid, north row first.

    Coordinates are planar metres of the local projection; when ``anchor`` is
    given it is recorded in a ``<stem>.anchor.txt`` sidecar.
    """
    spec = raster.spec
    lines = [
        f"ncols {spec.n_cols}",
        f"nrows {spec.n_rows}",
        f"xllcorner {_fmt(spec.origin.x)}",
        f"yllcorner {_fmt(spec.origin.y)}",
        f"cellsize {_fmt(spec.cell_size)}",
        f"NODATA_value {_fmt(raster.nodata)}",
    ]
    for row in raster.values[::-1]:
        lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if anchor is not None:
        anchor_sidecar_path(path).write_text(
            "projection equirectangular\n"
            f"anchor_lon {anchor.lon!r}\n"
            f"anchor_lat {anchor.lat!r}\n"
            f"earth_radius_m {EARTH_RADIUS_M!r}\n"
            "units metres\n",
            encoding="utf-8",
        )


def read_ascii_grid(path: Union[str, os.PathLike]) -> RasterGrid:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    header = {}
    for line in text[:6]:
        key, value = line.split()
        header[key.lower()] = value
    spec = GridSpec(
        PlanarPoint(float(header["xllcorner"]), float(header["yllcorner"])),
        float(header["cellsize"]),
        int(header["ncols"]),
        int(header["nrows"]),
    )
    rows = [list(map(float, ln.split())) for ln in text[6:] if ln.strip()]
    values = np.array(rows, dtype=float)[::-1]
    if values.shape != (spec.n_rows, spec.n_cols):
        raise DataError("ASCII grid body does not match its header")
    return RasterGrid(spec, values, float(header.get("nodata_value", NODATA)))
