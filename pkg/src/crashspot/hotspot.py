"""Severity-weighted Getis-Ord Gi* hotspot detection on a square grid.

Each event contributes its severity weight (Low 1, High 2) to the grid cell
containing it. Cells, empty ones included, are the spatial features; two
cells are neighbours when their centres are within a fixed distance band,
and every cell is its own neighbour.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.special import erfc

from .exceptions import ConfigError, DataError
from .geo import Anchor, GridSpec, build_grid, cells_of, project, unproject
from .ingest import EventRecord, Severity

DEFAULT_CELL_SIZE = 500.0
DEFAULT_BAND = 1000.0

Z90, Z95, Z99 = 1.645, 1.960, 2.576


def severity_weight(severity: Severity) -> int:
    return 2 if Severity(severity) is Severity.High else 1


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Per-cell severity-weighted totals ``x`` and event counts, indexed by cell id."""

    spec: GridSpec
    x: np.ndarray
    n_events: np.ndarray

    def as_2d(self, values=None) -> np.ndarray:
        """Reshape a per-cell vector to ``(n_rows, n_cols)`` with row 0 at the south."""
        values = self.x if values is None else np.asarray(values)
        return values.reshape(self.spec.n_rows, self.spec.n_cols)

    @classmethod
    def from_values(cls, spec: GridSpec, x) -> "CellGrid":
        """Grid carrying arbitrary cell values, mainly for tests and simulations."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != spec.n_cells:
            raise ValueError("value count does not match grid size")
        return cls(spec, x, np.zeros(spec.n_cells, dtype=np.int64))


def aggregate(events: Sequence[EventRecord], grid: GridSpec, anchor: Anchor) -> CellGrid:
    """Sum severity weights of ``events`` into the cells of ``grid``.

    ``anchor`` must be the projection anchor the grid was built with. Events
    falling outside the grid raise :class:`DataError`.
    """
    x = np.zeros(grid.n_cells, dtype=float)
    counts = np.zeros(grid.n_cells, dtype=np.int64)
    if not events:
        return CellGrid(grid, x, counts)
    xy, _ = project([(e.lon, e.lat) for e in events], anchor)
    cols, rows = cells_of(xy, grid)
    ids = rows * grid.n_cols + cols
    w = np.array([severity_weight(e.severity) for e in events], dtype=float)
    np.add.at(x, ids, w)
    np.add.at(counts, ids, 1)
    return CellGrid(grid, x, counts)


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Binary distance-band neighbour lists; ``neighbors[i]`` is sorted and contains ``i``."""

    neighbors: tuple
    band_distance: float

    @property
    def n(self) -> int:
        return len(self.neighbors)

    def to_sparse(self) -> sparse.csr_matrix:
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(nb) for nb in self.neighbors])
        indices = np.concatenate(self.neighbors) if self.n else np.zeros(0, dtype=np.int64)
        data = np.ones(len(indices), dtype=float)
        return sparse.csr_matrix((data, indices, indptr), shape=(self.n, self.n))

    def cardinalities(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=np.int64)


def center_distance(grid: GridSpec, i, j):
    """Centre-to-centre distance between cells, computed from integer offsets."""
    ci, ri = grid.col_row(i)
    cj, rj = grid.col_row(j)
    return grid.cell_size * np.hypot(ci - cj, ri - rj)


def build_weights(grid: GridSpec, band: float) -> SpatialWeights:
    """Fixed-band binary weights: w_ij = 1 iff centre distance <= ``band``."""
    if not band > 0 or not math.isfinite(band):
        raise ConfigError("band must be a positive finite distance")
    if band < grid.cell_size:
        warnings.warn(
            f"band {band} m is smaller than the cell size {grid.cell_size} m; cells will only neighbour themselves",
            stacklevel=2,
        )
    col, row = grid.col_row(np.arange(grid.n_cells))
    lattice = np.column_stack([col, row]).astype(float)
    tree = cKDTree(lattice)
    # query slightly wide on the integer lattice, then apply the exact predicate
    radius = band / grid.cell_size * (1 + 1e-9) + 1e-12
    candidates = tree.query_ball_point(lattice, radius)
    neighbors = []
    for i, cand in enumerate(candidates):
        cand = np.asarray(sorted(cand), dtype=np.int64)
        keep = center_distance(grid, i, cand) <= band
        neighbors.append(cand[keep])
    return SpatialWeights(tuple(neighbors), float(band))


def brute_force_neighbors(grid: GridSpec, band: float) -> list[set[int]]:
    """All-pairs neighbour sets, used to check :func:`build_weights`."""
    ids = np.arange(grid.n_cells)
    return [set(np.flatnonzero(center_distance(grid, i, ids) <= band).tolist()) for i in ids]


class HotspotClass(str, Enum):
    Hot99 = "Hot99"
    Hot95 = "Hot95"
    Hot90 = "Hot90"
    NotSignificant = "NotSignificant"
    Cold90 = "Cold90"
    Cold95 = "Cold95"
    Cold99 = "Cold99"

    @property
    def is_hot(self) -> bool:
        return self.value.startswith("Hot")

    @property
    def is_cold(self) -> bool:
        return self.value.startswith("Cold")

    @property
    def confidence(self) -> int | None:
        return None if self is HotspotClass.NotSignificant else int(self.value[-2:])


def classify(z: float) -> HotspotClass:
    """Confidence class from the z-score: |z| >= 2.576 / 1.960 / 1.645 → 99 / 95 / 90 %."""
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    a = abs(z)
    if a >= Z99:
        level = 99
    elif a >= Z95:
        level = 95
    elif a >= Z90:
        level = 90
    else:
        return HotspotClass.NotSignificant
    return HotspotClass(f"{'Hot' if z > 0 else 'Cold'}{level}")


def two_tailed_p(z) -> np.ndarray:
    """2 * (1 - Phi(|z|)) computed as erfc(|z| / sqrt 2) to keep small tails accurate."""
    return erfc(np.abs(np.asarray(z, dtype=float)) / math.sqrt(2.0))


def _bh_cutoff(p: np.ndarray, alpha: float) -> float:
    """Largest p-value accepted by Benjamini-Hochberg at level ``alpha`` (0 if none)."""
    ps = np.sort(p)
    m = len(ps)
    ok = ps <= alpha * np.arange(1, m + 1) / m
    return float(ps[np.flatnonzero(ok)[-1]]) if ok.any() else 0.0


@dataclass(frozen=True, eq=False)
class GiStarResult:
    z: np.ndarray
    p: np.ndarray
    classes: tuple

    def counts(self) -> dict[str, int]:
        tally = {c.value: 0 for c in HotspotClass}
        for c in self.classes:
            tally[c.value] += 1
        return tally

    def hot_mask(self, min_confidence: int = 90) -> np.ndarray:
        return np.array([c.is_hot and c.confidence >= min_confidence for c in self.classes], dtype=bool)


def gi_star_z(x, weights: SpatialWeights) -> np.ndarray:
    """Standardised Gi* for every feature with binary weights.

    Uses centred values, which is algebraically the same statistic but keeps
    the result stable when a large constant is added to every x.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise DataError("Gi* needs at least two spatial features")
    if weights.n != n:
        raise ValueError("weights do not match the number of features")
    z = np.zeros(n)
    if np.ptp(x) == 0:
        return z
    dev = x - x.mean()
    s = math.sqrt(float(np.mean(dev * dev)))
    w = weights.to_sparse()
    lag = w @ dev
    sum_w = weights.cardinalities().astype(float)
    # binary weights: sum of squares equals the sum
    bracket = (n * sum_w - sum_w**2) / (n - 1)
    ok = bracket > 0
    z[ok] = lag[ok] / (s * np.sqrt(bracket[ok]))
    return z


def gi_star(cells: CellGrid, weights: SpatialWeights, fdr: bool = False) -> GiStarResult:
    """Gi* z-scores, two-tailed normal p-values and confidence classes.

    With ``fdr=True`` a cell keeps its confidence level only if its p-value
    also passes a Benjamini-Hochberg cutoff at that level; otherwise it is
    demoted to the next level it does pass.
    """
    z = gi_star_z(cells.x, weights)
    p = two_tailed_p(z)
    classes = [classify(v) for v in z]
    if fdr:
        cutoffs = {lvl: _bh_cutoff(p, 1 - lvl / 100) for lvl in (99, 95, 90)}
        adjusted = []
        for zi, pi, c in zip(z, p, classes):
            level = next((lvl for lvl in (99, 95, 90) if c.confidence and lvl <= c.confidence and pi <= cutoffs[lvl]), None)
            if level is None:
                adjusted.append(HotspotClass.NotSignificant)
            else:
                adjusted.append(HotspotClass(f"{'Hot' if zi > 0 else 'Cold'}{level}"))
        classes = adjusted
    return GiStarResult(z, p, tuple(classes))


@dataclass(frozen=True, eq=False)
class HotspotOutput:
    cells: CellGrid
    weights: SpatialWeights
    result: GiStarResult
    anchor: Anchor

    @property
    def grid(self) -> GridSpec:
        return self.cells.spec

    def center_lonlat(self) -> np.ndarray:
        return unproject(self.grid.centers(), self.anchor)

    def records(self) -> list[dict]:
        """One row per cell: id, col, row, centre lon/lat, x, n_events, z, p, class."""
        ll = self.center_lonlat()
        cols, rows = self.grid.col_row(np.arange(self.grid.n_cells))
        out = []
        for i in range(self.grid.n_cells):
            out.append(
                {
                    "cell_id": i,
                    "col": int(cols[i]),
                    "row": int(rows[i]),
                    "lon": float(ll[i, 0]),
                    "lat": float(ll[i, 1]),
                    "x": float(self.cells.x[i]),
                    "n_events": int(self.cells.n_events[i]),
                    "z": float(self.result.z[i]),
                    "p": float(self.result.p[i]),
                    "class": self.result.classes[i].value,
                }
            )
        return out


def hotspot_pipeline(
    events: Sequence[EventRecord],
    cell_size: float = DEFAULT_CELL_SIZE,
    band: float = DEFAULT_BAND,
    fdr: bool = False,
    anchor: Anchor | None = None,
) -> HotspotOutput:
    """Project, grid, aggregate, weight and score ``events``.

    Deterministic in its inputs. Raises :class:`DataError` unless the events
    occupy at least two distinct cells.
    """
    events = list(events)
    if not events:
        raise DataError("no events to analyse")
    xy, anchor = project([(e.lon, e.lat) for e in events], anchor)
    grid = build_grid(xy, cell_size)
    cells = aggregate(events, grid, anchor)
    if np.count_nonzero(cells.n_events) < 2:
        raise DataError("hotspot analysis needs events in at least two distinct cells")
    weights = build_weights(grid, band)
    return HotspotOutput(cells, weights, gi_star(cells, weights, fdr=fdr), anchor)


def total_weight(severities: Iterable[Severity]) -> int:
    return sum(severity_weight(s) for s in severities)
