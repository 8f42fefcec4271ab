"""
Smoothing z-scores with IDW
===========================

Interpolate cell z-scores onto a finer raster and save it as an ESRI ASCII
grid that desktop GIS can open.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from crashspot.hotspot import hotspot_pipeline
from crashspot.interp import IdwParams, idw_at, idw_raster, raster_spec_for, read_ascii_grid, write_ascii_grid
from crashspot.synth import bbox_center, canonical_cluster_scenario, generate

# toy case first: halfway between two samples the estimate is their mean
print(idw_at((5, 0), [(0, 0), (10, 0)], [1.0, 4.0]))
# a large power approaches nearest-neighbour interpolation
print(idw_at((2, 0), [(0, 0), (10, 0)], [1.0, 4.0], IdwParams(power=30)))

scenario = canonical_cluster_scenario()
out = hotspot_pipeline(generate(scenario), anchor=bbox_center(scenario))
spec = raster_spec_for(out.grid, refine=4)
raster = idw_raster(out.grid.centers(), out.result.z, spec, IdwParams(power=2, neighbors=12))
print("raster", raster.values.shape, "z range", out.result.z.min().round(2), out.result.z.max().round(2),
      "surface range", raster.values.min().round(2), raster.values.max().round(2))

target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "gi_star_idw.asc"
write_ascii_grid(target, raster, out.anchor)
back = read_ascii_grid(target)
print("wrote", target, "round trip ok:", np.allclose(back.values, raster.values, rtol=1e-9))
