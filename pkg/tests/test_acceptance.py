"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary (see ``conftest.py``) and directly when this file is
run as a script.
"""
import os
import time
import warnings
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from crashspot.cli import main
from crashspot.hotspot import CellGrid, build_weights, gi_star, hotspot_pipeline
from crashspot.interp import IdwParams, idw_at, idw_raster
from crashspot.geo import GridSpec, PlanarPoint
from crashspot.ingest import StudyWindow
from crashspot.synth import (
    bbox_center,
    canonical_cluster_scenario,
    generate,
    hot_fraction,
    null_scenario,
    oracle_chi2_p,
    oracle_gi_star,
    random_cell_grid,
    recall_report,
)
from crashspot.temporal import Period, assign_period, chi2_sf, chi_square, cramers_v, daily_mean

RESULTS = []


def record(number, title, ok, detail, elapsed=None, limit=None):
    timing = "" if elapsed is None else f" [{elapsed:.2f}s" + ("" if limit is None else f" / limit {limit:g}s") + "]"
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title}: {detail}{timing}"
    RESULTS.append(line)
    print(line)
    return ok


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# (chi2, N, reference V)
REFERENCE_V = [
    (146.29, 33480, 0.066),
    (13.34, 33480, 0.020),
    (45.89, 33480, 0.037),
    (0.72, 1365, 0.023),
    (5.72, 1365, 0.065),
]
# listed as 0.050; sqrt(2.96 / 1365) is 0.0466
DISCREPANT_V = (2.96, 1365, 0.050)


def test_criterion_1_effect_size_identity():
    errors = [abs(cramers_v(c, n) - v) for c, n, v in REFERENCE_V]
    c, n, listed = DISCREPANT_V
    v6 = cramers_v(c, n)
    # at 3 dp the row reads 0.047 against 0.050
    gap = round(listed - round(v6, 3), 3)
    ok = max(errors) <= 0.001 and round(v6, 3) == 0.047 and abs(gap) <= 0.003
    record(
        1,
        "Cramér's V identity",
        ok,
        f"5 triples max |err| {max(errors):.5f} (tol 0.001); sixth computes to {v6:.4f} vs listed {listed:.3f} "
        f"(gap {gap:+.3f} at 3 dp, {listed - v6:+.4f} unrounded; documented, not forced)",
    )
    assert max(errors) <= 0.001
    assert round(v6, 3) == 0.047 and abs(gap) <= 0.003


def test_criterion_2_daily_mean_identity():
    window = StudyWindow.from_strings("2024-11-05", "2025-06-02", ["2024-11-09", "2024-11-10"])
    span = (window.end_date - window.start_date).days + 1
    all_events, pedestrian = daily_mean(33480, window), daily_mean(1365, window)
    ok = window.observed_days == 208 == span - 2 and abs(all_events - 160.96) <= 0.01 and abs(pedestrian - 6.56) <= 0.01
    record(2, "daily mean", ok, f"{span} - 2 = {window.observed_days} days; means {all_events:.4f}, {pedestrian:.4f}")
    assert window.observed_days == 208 == span - 2
    assert abs(all_events - 160.96) <= 0.01
    assert abs(pedestrian - 6.56) <= 0.01


def test_criterion_3_gi_star_oracle_equivalence():
    rng = np.random.default_rng(20250602)
    worst, largest = 0.0, 0
    with Timer() as t:
        for _ in range(100):
            cells = random_cell_grid(rng, max_side=50)
            band = cells.spec.cell_size * float(rng.uniform(0.9, 6.0))
            with warnings.catch_warnings():
                # bands below one cell are allowed here and only warn
                warnings.simplefilter("ignore", UserWarning)
                w = build_weights(cells.spec, band)
            worst = max(worst, float(np.max(np.abs(gi_star(cells, w).z - oracle_gi_star(cells, w)))))
            largest = max(largest, cells.spec.n_cells)
    ok = worst <= 1e-9 and t.elapsed < 30
    record(3, "Gi* oracle equivalence", ok, f"100 grids (largest {largest} cells), max |dz| {worst:.2e}", t.elapsed, 30)
    assert worst <= 1e-9
    assert t.elapsed < 30


def test_criterion_4_gi_star_invariances():
    rng = np.random.default_rng(4)
    worst = 0.0
    with Timer() as t:
        for _ in range(30):
            cells = random_cell_grid(rng, max_side=30)
            w = build_weights(cells.spec, cells.spec.cell_size * float(rng.uniform(1.0, 4.0)))
            z = gi_star(cells, w).z
            for c in (-1e3, 7.5, 1e4):
                worst = max(worst, float(np.max(np.abs(gi_star(CellGrid.from_values(cells.spec, cells.x + c), w).z - z))))
            for c in (1e-3, 3.0, 1e3):
                worst = max(worst, float(np.max(np.abs(gi_star(CellGrid.from_values(cells.spec, cells.x * c), w).z - z))))
        flat = CellGrid.from_values(cells.spec, np.full(cells.spec.n_cells, 4.2))
        flat_z = gi_star(flat, w).z
    ok = worst <= 1e-9 and np.all(flat_z == 0) and t.elapsed < 5
    record(4, "Gi* invariances", ok, f"max |dz| under shift/scale {worst:.2e}; constant field all-zero: {bool(np.all(flat_z == 0))}", t.elapsed, 5)
    assert worst <= 1e-9
    assert np.all(flat_z == 0)
    assert t.elapsed < 5


def test_criterion_5_chi_square_correctness():
    with Timer() as t:
        rep = chi_square([[20, 30], [30, 20]])
        worst = 0.0
        for df in range(1, 11):
            for x in np.linspace(0.0, 50.0, 101):
                worst = max(worst, abs(chi2_sf(float(x), df) - oracle_chi2_p(float(x), df)))
        q1, q3 = chi2_sf(3.841, 1), chi2_sf(7.815, 3)
    ok = rep.chi2 == 4.0 and rep.df == 1 and worst <= 1e-4 and abs(q1 - 0.05) <= 1e-3 and abs(q3 - 0.05) <= 1e-3 and t.elapsed < 10
    record(
        5,
        "chi-square correctness",
        ok,
        f"chi2 {rep.chi2!r} df {rep.df}; max |sf - oracle| {worst:.2e} over df 1..10, x 0..50; quantiles {q1:.5f}, {q3:.5f}",
        t.elapsed,
        10,
    )
    assert rep.chi2 == 4.0 and rep.df == 1
    assert worst <= 1e-4
    assert abs(q1 - 0.05) <= 1e-3 and abs(q3 - 0.05) <= 1e-3
    assert t.elapsed < 10


def test_criterion_6_idw_properties():
    rng = np.random.default_rng(6)
    spec = GridSpec(PlanarPoint(0.0, 0.0), 25.0, 40, 40)
    checks = {}
    with Timer() as t:
        xy = rng.uniform(0, 1000, size=(60, 2))
        vals = rng.normal(0, 3, size=60)
        params = IdwParams(power=2, neighbors=12)
        checks["exact"] = all(idw_at(p, xy, vals, params) == v for p, v in zip(xy, vals))
        r = idw_raster(xy, vals, spec, params)
        checks["convex"] = bool(np.all((r.values >= vals.min()) & (r.values <= vals.max())))
        mid = idw_at((5.0, 5.0), [(0.0, 0.0), (10.0, 10.0)], [2.0, 9.0])
        checks["two-point mean"] = abs(mid - 5.5) <= 1e-12
        single = idw_raster([(123.0, 456.0)], [3.3], spec)
        checks["single sample"] = bool(np.all(single.values == 3.3))
    ok = all(checks.values()) and t.elapsed < 5
    record(6, "IDW properties", ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()), t.elapsed, 5)
    assert all(checks.values()), checks
    assert t.elapsed < 5


def test_criterion_7_synthetic_detection():
    with Timer() as t:
        sc = canonical_cluster_scenario()
        rep = recall_report(sc, hotspot_pipeline(generate(sc), anchor=bbox_center(sc)))
        hot = total = 0
        per_seed = []
        for seed in range(20):
            null = null_scenario(seed)
            out = hotspot_pipeline(generate(null), anchor=bbox_center(null))
            mask = out.result.hot_mask(90)
            hot += int(mask.sum())
            total += mask.size
            per_seed.append(hot_fraction(out))
    pooled = hot / total
    ok = rep.recall == 1.0 and pooled <= 0.10 and t.elapsed < 60
    record(
        7,
        "synthetic detection",
        ok,
        f"recall {rep.recall:.2f} on {rep.n_cluster_cells} cluster cells; 20-seed hot fraction {pooled:.4f} "
        f"(per-seed max {max(per_seed):.4f})",
        t.elapsed,
        60,
    )
    assert rep.recall == 1.0
    assert pooled <= 0.10
    assert t.elapsed < 60


def test_criterion_8_period_partition():
    base = datetime(2025, 1, 1)
    expected = {Period.Night: range(0, 360), Period.Morning: range(360, 720), Period.Afternoon: range(720, 1080), Period.Evening: range(1080, 1440)}
    bad = []
    counts = {p: 0 for p in Period}
    for minute in range(1440):
        p = assign_period(base + timedelta(minutes=minute))
        counts[p] += 1
        if minute not in expected[p]:
            bad.append(minute)
    ok = not bad and sum(counts.values()) == 1440
    record(8, "period partition", ok, "minutes per period " + ", ".join(f"{p.value} {n}" for p, n in counts.items()))
    assert not bad
    assert all(n == 360 for n in counts.values())


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_pipeline_determinism(tmp_path):
    trees = []
    cwd = os.getcwd()
    with Timer() as t:
        try:
            for name in ("first", "second"):
                work = tmp_path / name
                work.mkdir()
                os.chdir(work)
                assert main(["synth", "--out", "out"]) == 0
                assert main(["run", "--config", "out/run_config.json"]) == 0
                trees.append(_tree(work))
        finally:
            os.chdir(cwd)
    a, b = trees
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = not differing and len(a) > 10 and t.elapsed < 60
    record(9, "pipeline determinism", ok, f"{len(a)} files, {sum(map(len, a.values()))} bytes, differing: {differing or 'none'}", t.elapsed, 60)
    assert not differing
    assert len(a) > 10
    assert t.elapsed < 60


if __name__ == "__main__":
    import tempfile

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                pass
