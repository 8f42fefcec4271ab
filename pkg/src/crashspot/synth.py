"""Synthetic incident generation with planted structure, plus brute-force oracles.

Random streams
--------------
Every scenario uses NumPy's PCG64 bit generator seeded through
``numpy.random.SeedSequence(seed).spawn(1 + n_clusters)``. Stream 0 drives
the background events and stream ``k`` drives cluster ``k``; each stream is
consumed in the fixed order positions, severities, days, periods, minutes,
categories. Output order is background first, then clusters in order.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from typing import Sequence, Union

import numpy as np

from .exceptions import ConfigError
from .geo import EARTH_RADIUS_M, Anchor, haversine_m
from .hotspot import CellGrid, HotspotOutput, SpatialWeights
from .ingest import Category, EventRecord, Severity, StudyWindow
from .temporal import Period

# collision subcategory frequencies used as the default category mix
DEFAULT_CATEGORY_WEIGHTS = {
    Category.VehicleObject: 17149,
    Category.VehicleVehicle: 6901,
    Category.Motorcycle: 3555,
    Category.Rollover: 2271,
    Category.HitAndRun: 1423,
    Category.Pedestrian: 1367,
    Category.Bicycle: 719,
    Category.Animal: 158,
    Category.SpecialVehicle: 61,
}

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

_PERIOD_START_HOUR = {Period.Night: 0, Period.Morning: 6, Period.Afternoon: 12, Period.Evening: 18}


@dataclass(frozen=True)
class Cluster:
    lon: float
    lat: float
    radius_m: float
    n_events: int
    high_share: float

    def __post_init__(self):
        if not self.radius_m > 0:
            raise ConfigError("cluster radius must be positive")
        if self.n_events < 0:
            raise ConfigError("cluster event count must be non-negative")
        if not 0.0 <= self.high_share <= 1.0:
            raise ConfigError("cluster high_share must lie in [0, 1]")


@dataclass(frozen=True)
class SynthScenario:
    seed: int
    n_background: int
    bbox: tuple  # (lon_min, lat_min, lon_max, lat_max)
    window: StudyWindow
    clusters: tuple = ()
    background_high_share: float = 0.2
    temporal_profile: dict = field(default_factory=lambda: {p.value: 1.0 for p in Period})
    category_weights: dict = field(default_factory=lambda: {c.value: w for c, w in DEFAULT_CATEGORY_WEIGHTS.items()})

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        if self.n_background < 0:
            raise ConfigError("n_background must be non-negative")
        if not 0.0 <= self.background_high_share <= 1.0:
            raise ConfigError("background_high_share must lie in [0, 1]")
        lon0, lat0, lon1, lat1 = self.bbox
        if not (lon0 < lon1 and lat0 < lat1):
            raise ConfigError("bbox must be (lon_min, lat_min, lon_max, lat_max) with min < max")
        profile = {Period(k).value: float(v) for k, v in self.temporal_profile.items()}
        if set(profile) != {p.value for p in Period} or min(profile.values()) < 0 or sum(profile.values()) <= 0:
            raise ConfigError("temporal_profile needs a non-negative weight for each of the four periods")
        object.__setattr__(self, "temporal_profile", profile)
        cats = {Category(k).value: float(v) for k, v in self.category_weights.items()}
        if not cats or min(cats.values()) < 0 or sum(cats.values()) <= 0:
            raise ConfigError("category_weights must be non-negative with a positive total")
        object.__setattr__(self, "category_weights", cats)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_background": self.n_background,
            "bbox": list(self.bbox),
            "window": {
                "start": self.window.start_date.isoformat(),
                "end": self.window.end_date.isoformat(),
                "missing": sorted(d.isoformat() for d in self.window.missing_dates),
            },
            "clusters": [asdict(c) for c in self.clusters],
            "background_high_share": self.background_high_share,
            "temporal_profile": dict(self.temporal_profile),
            "category_weights": dict(self.category_weights),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthScenario":
        try:
            w = d["window"]
            kwargs = dict(
                seed=int(d["seed"]),
                n_background=int(d["n_background"]),
                bbox=tuple(d["bbox"]),
                window=StudyWindow.from_strings(w["start"], w["end"], w.get("missing", ())),
                clusters=tuple(Cluster(**c) for c in d.get("clusters", ())),
                background_high_share=float(d.get("background_high_share", 0.2)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None
        if "temporal_profile" in d:
            kwargs["temporal_profile"] = d["temporal_profile"]
        if "category_weights" in d:
            kwargs["category_weights"] = d["category_weights"]
        return cls(**kwargs)


def load_scenario(path: Union[str, os.PathLike]) -> SynthScenario:
    with open(path, encoding="utf-8") as fh:
        try:
            return SynthScenario.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario file is not valid JSON: {exc}") from None


def save_scenario(path: Union[str, os.PathLike], scenario: SynthScenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _disk_offsets(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """``n`` points uniform in a disk, by rejection from the bounding square."""
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(-radius, radius, size=(2 * (n - len(out)) + 8, 2))
        cand = cand[np.hypot(cand[:, 0], cand[:, 1]) <= radius]
        out = np.vstack([out, cand])
    return out[:n]


def _draw_attributes(rng, n, high_share, scenario, dates):
    severities = rng.random(n) < high_share
    days = rng.integers(0, len(dates), size=n)
    periods = list(scenario.temporal_profile)
    pw = np.array([scenario.temporal_profile[p] for p in periods])
    pidx = rng.choice(len(periods), size=n, p=pw / pw.sum())
    minutes = rng.integers(0, 360, size=n)
    cats = list(scenario.category_weights)
    cw = np.array([scenario.category_weights[c] for c in cats])
    cidx = rng.choice(len(cats), size=n, p=cw / cw.sum())
    for i in range(n):
        start = datetime.combine(dates[days[i]], datetime.min.time())
        hour0 = _PERIOD_START_HOUR[Period(periods[pidx[i]])]
        ts = start + timedelta(hours=hour0, minutes=int(minutes[i]))
        yield ts, Severity.High if severities[i] else Severity.Low, Category(cats[cidx[i]])


def generate(scenario: SynthScenario) -> list[EventRecord]:
    """Events for ``scenario``; a pure function of the scenario (seed included)."""
    streams = np.random.SeedSequence(scenario.seed).spawn(1 + len(scenario.clusters))
    dates = scenario.window.observed_dates()
    events: list[EventRecord] = []

    rng = np.random.Generator(np.random.PCG64(streams[0]))
    lon0, lat0, lon1, lat1 = scenario.bbox
    n = scenario.n_background
    lons = rng.uniform(lon0, lon1, size=n)
    lats = rng.uniform(lat0, lat1, size=n)
    for i, (ts, sev, cat) in enumerate(_draw_attributes(rng, n, scenario.background_high_share, scenario, dates)):
        events.append(EventRecord(f"B{i:06d}", ts, float(lons[i]), float(lats[i]), cat, sev))

    for k, cl in enumerate(scenario.clusters, start=1):
        rng = np.random.Generator(np.random.PCG64(streams[k]))
        off = _disk_offsets(rng, cl.n_events, cl.radius_m)
        phi0 = math.radians(cl.lat)
        lons = cl.lon + np.degrees(off[:, 0] / (EARTH_RADIUS_M * math.cos(phi0)))
        lats = cl.lat + np.degrees(off[:, 1] / EARTH_RADIUS_M)
        for i, (ts, sev, cat) in enumerate(_draw_attributes(rng, cl.n_events, cl.high_share, scenario, dates)):
            events.append(EventRecord(f"C{k}-{i:06d}", ts, float(lons[i]), float(lats[i]), cat, sev))
    return events


# --------------------------------------------------------------------------
# Canonical fixtures

STUDY_WINDOW = StudyWindow.from_strings("2024-11-05", "2025-06-02", ["2024-11-09", "2024-11-10"])
CANONICAL_CENTER = Anchor(55.20, 25.095)


def aligned_bbox(center: Anchor, half_width_m: float) -> tuple:
    """Lon/lat box that projects to exactly ``[-h, h]^2`` metres about ``center``.

    With the projection anchored at ``center`` and ``h`` a multiple of the cell
    size, the analysis grid coincides with the box and has no partly covered
    edge cells. Partial edge cells otherwise read as cold and push interior
    cells towards "hot" under a uniform null.
    """
    dlon = math.degrees(half_width_m / (EARTH_RADIUS_M * math.cos(math.radians(center.lat))))
    dlat = math.degrees(half_width_m / EARTH_RADIUS_M)
    return (center.lon - dlon, center.lat - dlat, center.lon + dlon, center.lat + dlat)


def bbox_center(scenario: SynthScenario) -> Anchor:
    lon0, lat0, lon1, lat1 = scenario.bbox
    return Anchor((lon0 + lon1) / 2, (lat0 + lat1) / 2)


CANONICAL_BBOX = aligned_bbox(CANONICAL_CENTER, 5000.0)


def canonical_cluster_scenario(seed: int = 20241105) -> SynthScenario:
    """10 km x 10 km of uniform background with one dense, all-High cluster."""
    return SynthScenario(
        seed=seed,
        n_background=2000,
        bbox=CANONICAL_BBOX,
        window=STUDY_WINDOW,
        clusters=(Cluster(lon=55.205, lat=25.10, radius_m=750.0, n_events=400, high_share=1.0),),
        background_high_share=0.2,
    )


def null_scenario(seed: int) -> SynthScenario:
    """Spatially uniform events with no planted structure."""
    return SynthScenario(seed=seed, n_background=4000, bbox=CANONICAL_BBOX, window=STUDY_WINDOW)


# --------------------------------------------------------------------------
# Oracles


def oracle_gi_star(cells: CellGrid, weights: SpatialWeights) -> np.ndarray:
    """Gi* written out term by term over a dense all-pairs weight matrix.

    The neighbour relation is rebuilt from the grid geometry and the band
    distance; the neighbour lists inside ``weights`` are ignored.
    """
    x = np.asarray(cells.x, dtype=float)
    N = x.size
    if N < 2:
        raise ValueError("Gi* needs at least two spatial features")
    spec = cells.spec
    ids = np.arange(N)
    col, row = ids % spec.n_cols, ids // spec.n_cols
    dist = spec.cell_size * np.hypot(col[:, None] - col[None, :], row[:, None] - row[None, :])
    W = (dist <= weights.band_distance).astype(float)

    z = np.zeros(N)
    if np.all(x == x[0]):
        return z
    xbar = x.sum() / N
    S = math.sqrt((x**2).sum() / N - xbar**2)
    for i in range(N):
        wi = W[i]
        num = (wi * x).sum() - xbar * wi.sum()
        inner = (N * (wi**2).sum() - wi.sum() ** 2) / (N - 1)
        if inner <= 0:
            continue
        z[i] = num / (S * math.sqrt(inner))
    return z


def chi2_pdf(u, df: int):
    u = np.asarray(u, dtype=float)
    k = df / 2.0
    pos = u > 0
    safe = np.where(pos, u, 1.0)
    logf = (k - 1) * np.log(safe) - safe / 2 - k * math.log(2) - math.lgamma(k)
    return np.where(pos, np.exp(logf), 0.0)


def oracle_chi2_p(x: float, df: int, step: float = 1e-3) -> float:
    """Upper-tail chi-square probability by trapezoid quadrature of the density.

    Integrates over ``[x, x + 60*df]`` in the variable ``t = sqrt(u)`` so the
    integrand stays bounded at ``u = 0`` for ``df = 1``.
    """
    if x < 0:
        raise ValueError("x must be non-negative")
    lo, hi = math.sqrt(x), math.sqrt(x + 60.0 * df)
    n = max(2, int(math.ceil((hi - lo) / step)) + 1)
    t = np.linspace(lo, hi, n)
    if df == 1:
        # 2t * f(t^2) with the t^(-1) factor cancelled analytically
        g = 2.0 * np.exp(-t * t / 2) / (math.sqrt(2.0) * math.gamma(0.5))
    else:
        g = 2.0 * t * chi2_pdf(t * t, df)
    return float(_trapezoid(g, t))


@dataclass(frozen=True)
class RecallReport:
    recall: float
    false_positive_rate: float
    n_cluster_cells: int
    n_other_cells: int


def cluster_cell_mask(scenario: SynthScenario, output: HotspotOutput) -> np.ndarray:
    """Cells whose centre lies inside any planted cluster disk."""
    centers = output.center_lonlat()
    mask = np.zeros(len(centers), dtype=bool)
    for cl in scenario.clusters:
        mask |= haversine_m(centers, np.array([cl.lon, cl.lat])) <= cl.radius_m
    return mask


def recall_report(scenario: SynthScenario, output: HotspotOutput, min_confidence: int = 90) -> RecallReport:
    if not scenario.clusters:
        raise ValueError("recall needs a scenario with at least one cluster")
    inside = cluster_cell_mask(scenario, output)
    hot = output.result.hot_mask(min_confidence)
    n_in, n_out = int(inside.sum()), int((~inside).sum())
    recall = float(hot[inside].mean()) if n_in else math.nan
    fpr = float(hot[~inside].mean()) if n_out else math.nan
    return RecallReport(recall, fpr, n_in, n_out)


def hot_fraction(output: HotspotOutput, min_confidence: int = 90) -> float:
    return float(output.result.hot_mask(min_confidence).mean())


def random_cell_grid(rng: np.random.Generator, max_side: int = 50, cell_size: float = 500.0):
    """Random grid with random non-negative values, for oracle comparisons."""
    from .geo import GridSpec, PlanarPoint

    n_cols = int(rng.integers(2, max_side + 1))
    n_rows = int(rng.integers(1, max_side + 1))
    spec = GridSpec(PlanarPoint(float(rng.uniform(-1e4, 1e4)), float(rng.uniform(-1e4, 1e4))), cell_size, n_cols, n_rows)
    x = rng.poisson(rng.uniform(0.5, 8.0), size=spec.n_cells).astype(float) * rng.choice([1.0, 2.0], size=spec.n_cells)
    return CellGrid.from_values(spec, x)
