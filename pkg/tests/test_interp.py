import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashspot.exceptions import ConfigError, DataError
from crashspot.geo import Anchor, GridSpec, PlanarPoint
from crashspot.hotspot import CellGrid, build_weights, gi_star
from crashspot.interp import (
    NODATA,
    IdwParams,
    RasterGrid,
    anchor_sidecar_path,
    idw_at,
    idw_raster,
    raster_spec_for,
    read_ascii_grid,
    write_ascii_grid,
)

coords = st.floats(-1e4, 1e4, allow_nan=False)
# planar metres at centimetre resolution: shifting cannot merge two distinct points
cm = st.integers(-100_000, 100_000).map(lambda v: v / 100)


def test_single_sample_is_constant():
    spec = GridSpec(PlanarPoint(-50.0, -50.0), 10.0, 10, 10)
    r = idw_raster([(3.0, 4.0)], [7.25], spec)
    assert np.all(r.values == 7.25)


def test_exact_at_sample():
    xy = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
    assert idw_at((10.0, 0.0), xy, [1.0, 2.0, 3.0]) == 2.0


def test_midpoint_of_two_samples_is_mean():
    assert idw_at((5.0, 0.0), [(0.0, 0.0), (10.0, 0.0)], [1.0, 4.0]) == pytest.approx(2.5, abs=1e-12)


def test_hand_weights():
    # d = 1 and 3, p = 2: weights 1 and 1/9
    est = idw_at((1.0, 0.0), [(0.0, 0.0), (4.0, 0.0)], [0.0, 10.0])
    assert est == pytest.approx(10 * (1 / 9) / (1 + 1 / 9), abs=1e-12)


def test_neighbour_limit_and_ties():
    xy = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (5.0, 5.0)]
    vals = [1.0, 2.0, 3.0, 4.0, 100.0]
    # m = 1 but four samples tie at distance 1: all four are used
    assert idw_at((0.0, 0.0), xy, vals, IdwParams(neighbors=1)) == pytest.approx(2.5, abs=1e-12)
    assert idw_at((0.0, 0.0), xy, vals, IdwParams(neighbors=4)) == pytest.approx(2.5, abs=1e-12)


def test_large_power_tends_to_nearest():
    xy = [(0.0, 0.0), (10.0, 0.0), (3.0, 7.0)]
    est = idw_at((2.0, 0.5), xy, [1.0, 5.0, 9.0], IdwParams(power=50))
    assert est == pytest.approx(1.0, abs=1e-6)


def test_radius_without_samples_is_nan_and_nodata():
    assert math.isnan(idw_at((0.0, 0.0), [(100.0, 0.0)], [1.0], IdwParams(max_search_radius=50.0)))
    spec = GridSpec(PlanarPoint(0.0, 0.0), 10.0, 20, 1)
    r = idw_raster([(5.0, 5.0)], [3.0], spec, IdwParams(max_search_radius=30.0))
    assert r.values[0, 0] == 3.0 and r.values[0, -1] == NODATA
    # pixel centres 5, 15, 25, 35: the last is exactly on the radius and is kept
    assert r.valid.sum() == 4


def test_bad_params():
    for kw in ({"power": 0}, {"power": math.inf}, {"neighbors": 0}, {"neighbors": 2.5}, {"max_search_radius": 0}):
        with pytest.raises(ConfigError):
            IdwParams(**kw)
    with pytest.raises(DataError):
        idw_at((0, 0), np.zeros((0, 2)), [])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(coords, coords, st.floats(-100, 100)), min_size=1, max_size=25),
    st.tuples(coords, coords),
    st.integers(1, 15),
    st.floats(0.5, 6),
)
def test_estimate_is_convex_combination(samples, target, m, p):
    xy = [(a, b) for a, b, _ in samples]
    vals = [v for *_, v in samples]
    est = idw_at(target, xy, vals, IdwParams(power=p, neighbors=m))
    assert min(vals) - 1e-12 <= est <= max(vals) + 1e-12


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(cm, cm, st.floats(-10, 10)), min_size=2, max_size=20),
    st.tuples(cm, cm),
    st.tuples(cm, cm),
)
def test_translation_invariance(samples, target, shift):
    xy = np.array([(a, b) for a, b, _ in samples])
    vals = [v for *_, v in samples]
    dx, dy = shift
    a = idw_at(target, xy, vals, IdwParams(neighbors=5))
    b = idw_at((target[0] + dx, target[1] + dy), xy + [dx, dy], vals, IdwParams(neighbors=5))
    assert abs(a - b) <= 1e-9 * max(1.0, max(abs(v) for v in vals))


def test_raster_peak_over_planted_cluster():
    g = GridSpec(PlanarPoint(0.0, 0.0), 500.0, 5, 5)
    x = np.ones(25)
    x[12] = 20.0
    res = gi_star(CellGrid.from_values(g, x), build_weights(g, 600.0))
    spec = raster_spec_for(g, 4)
    r = idw_raster(g.centers(), res.z, spec)
    row, col = np.unravel_index(np.argmax(r.values), r.values.shape)
    assert spec.col_row(row * spec.n_cols + col) == (col, row)
    # the peak pixel sits inside the centre cell
    assert 2 * 4 <= col < 3 * 4 and 2 * 4 <= row < 3 * 4
    assert res.z.min() <= r.values.min() and r.values.max() <= res.z.max()


def test_raster_spec_for():
    g = GridSpec(PlanarPoint(100.0, 200.0), 500.0, 3, 2)
    s = raster_spec_for(g, 5)
    assert (s.n_cols, s.n_rows, s.cell_size, s.origin) == (15, 10, 100.0, g.origin)
    with pytest.raises(ConfigError):
        raster_spec_for(g, 0)


def test_ascii_grid_round_trip(tmp_path):
    spec = GridSpec(PlanarPoint(-1250.0, 500.0), 125.0, 4, 3)
    vals = np.arange(12, dtype=float).reshape(3, 4) / 7
    vals[0, 0] = NODATA
    path = tmp_path / "surface.asc"
    write_ascii_grid(path, RasterGrid(spec, vals), Anchor(55.2, 25.1))
    lines = path.read_text().splitlines()
    assert lines[:6] == ["ncols 4", "nrows 3", "xllcorner -1250", "yllcorner 500", "cellsize 125", "NODATA_value -9999"]
    # first data line is the northern row
    assert lines[6].split()[0] == f"{8 / 7:.10g}"
    assert lines[-1].split()[0] == "-9999"
    back = read_ascii_grid(path)
    assert back.spec == spec and back.nodata == NODATA
    assert np.allclose(back.values, vals, rtol=1e-9, atol=0)
    side = anchor_sidecar_path(path)
    assert side.name == "surface.anchor.txt"
    text = side.read_text()
    assert "anchor_lon 55.2" in text and "anchor_lat 25.1" in text


def test_ascii_grid_shape_mismatch(tmp_path):
    path = tmp_path / "bad.asc"
    path.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n")
    with pytest.raises(DataError):
        read_ascii_grid(path)
