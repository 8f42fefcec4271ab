"""Command-line pipeline: validate -> temporal -> hotspot -> idw -> report.

Every command reads a JSON run configuration (``--config``) with flag
overrides and writes only into the output directory, where the fully
resolved configuration is echoed as ``config_used.json``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .exceptions import ConfigError, DataError, DegenerateTableError, SchemaError
from .geo import Anchor, GridSpec, PlanarPoint, unproject
from .hotspot import DEFAULT_BAND, DEFAULT_CELL_SIZE, HotspotClass, hotspot_pipeline
from .ingest import (
    Category,
    ColumnMapping,
    StudyWindow,
    dedupe,
    filter_categories,
    filter_window,
    load_boundary,
    parse_category,
    parse_events,
    spatial_filter,
    subcategory_shares,
    write_events,
)
from .interp import IdwParams, idw_raster, raster_spec_for, write_ascii_grid
from .synth import bbox_center, canonical_cluster_scenario, generate, load_scenario, save_scenario
from .temporal import (
    ALPHA,
    FACTOR_NAMES,
    Period,
    build_table,
    daily_mean,
    format_p,
    high_share_ratio,
    independence_test,
    make_factor,
)

log = logging.getLogger("crashspot")

CLEANED = "cleaned_events.csv"
REJECTIONS = "rejections.csv"
VALIDATE_SUMMARY = "validate_summary.json"
SHARES = "subcategory_shares.csv"
TEMPORAL_STATS = "temporal_stats.csv"
TEMPORAL_SUMMARY = "temporal_summary.json"
HOTSPOT_CELLS = "hotspot_cells.csv"
HOTSPOT_GEOJSON = "hotspot.geojson"
HOTSPOT_SUMMARY = "hotspot_summary.json"
IDW_RASTER = "gi_star_idw.asc"
REPORT = "report.md"
CONFIG_ECHO = "config_used.json"
SYNTH_EVENTS = "synthetic_events.csv"
SYNTH_BOUNDARY = "synthetic_boundary.geojson"
SYNTH_SCENARIO = "scenario_used.json"
SYNTH_RUN_CONFIG = "run_config.json"
STAGES = ("parse", "window", "duplicates", "boundary", "category")


@dataclass
class RunConfig:
    events: Optional[str] = None
    boundary: Optional[str] = None
    out: str = "out"
    delimiter: str = ","
    columns: dict = field(default_factory=dict)
    window: Optional[dict] = None
    factors: list = field(default_factory=lambda: list(FACTOR_NAMES))
    category: str = "all"
    cell_size: float = DEFAULT_CELL_SIZE
    band: float = DEFAULT_BAND
    fdr: bool = False
    anchor: Optional[list] = None
    idw_power: float = 2.0
    idw_neighbors: int = 12
    idw_max_radius: Optional[float] = None
    raster_refine: int = 4
    scenario: Optional[str] = None
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    # derived, validated views -------------------------------------------

    def validate(self) -> None:
        if not (isinstance(self.cell_size, (int, float)) and self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ConfigError("cell_size must be a positive number")
        if not (isinstance(self.band, (int, float)) and self.band > 0 and math.isfinite(self.band)):
            raise ConfigError("band must be a positive number")
        if int(self.raster_refine) != self.raster_refine or self.raster_refine < 1:
            raise ConfigError("raster_refine must be a positive integer")
        self.idw_params()
        self.column_mapping()
        self.study_window()
        self.categories()
        for name in self.factors:
            if name not in FACTOR_NAMES:
                raise ConfigError(f"unknown temporal factor {name!r}")
        if self.anchor is not None and len(self.anchor) != 2:
            raise ConfigError("anchor must be [lon, lat]")

    def column_mapping(self) -> ColumnMapping:
        return ColumnMapping.from_dict(self.columns)

    def study_window(self) -> StudyWindow | None:
        if self.window is None:
            return None
        try:
            return StudyWindow.from_strings(self.window["start"], self.window["end"], self.window.get("missing", ()))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"window needs 'start' and 'end' dates ({exc})") from None

    def categories(self) -> list[Category] | None:
        if self.category in (None, "all"):
            return None
        try:
            return [parse_category(c) for c in str(self.category).split(",")]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def idw_params(self) -> IdwParams:
        radius = math.inf if self.idw_max_radius is None else float(self.idw_max_radius)
        return IdwParams(float(self.idw_power), int(self.idw_neighbors), radius)

    def projection_anchor(self) -> Anchor | None:
        return None if self.anchor is None else Anchor(float(self.anchor[0]), float(self.anchor[1]))

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


# --------------------------------------------------------------------------
# helpers


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _prepare_out(cfg: RunConfig) -> Path:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / CONFIG_ECHO, asdict(cfg))
    return out


def _load_cleaned(cfg: RunConfig):
    path = cfg.out_dir / CLEANED
    if not path.exists():
        raise DataError(f"{path} not found; run 'validate' first")
    events, rejections = parse_events(path)
    if rejections:
        raise DataError(f"{path} contains {len(rejections)} malformed rows")
    return events


def _effective_window(cfg: RunConfig, events) -> StudyWindow:
    window = cfg.study_window()
    if window is not None:
        return window
    if not events:
        raise DataError("no events and no study window configured")
    days = [e.timestamp.date() for e in events]
    return StudyWindow(min(days), max(days))


# --------------------------------------------------------------------------
# commands


def cmd_validate(cfg: RunConfig) -> dict:
    """parse -> window filter -> dedupe -> boundary filter -> category filter."""
    if not cfg.events:
        raise ConfigError("no events input configured (--input or 'events')")
    if not Path(cfg.events).exists():
        raise ConfigError(f"events file not found: {cfg.events}")
    if cfg.boundary and not Path(cfg.boundary).exists():
        raise ConfigError(f"boundary file not found: {cfg.boundary}")
    out = _prepare_out(cfg)

    parsed = parse_events(cfg.events, cfg.column_mapping(), cfg.delimiter)
    rows = [[r.row, r.id, "parse", r.reason] for r in parsed.rejections]
    events = parsed.events
    n_input = len(parsed.events) + len(parsed.rejections)

    removed_window = 0
    window = cfg.study_window()
    if window is not None:
        events, removed = filter_window(events, window)
        removed_window = len(removed)
        rows += [["", e.id, "window", "outside study window"] for e in removed]

    events, removed = dedupe(events)
    rows += [["", e.id, "dedupe", "duplicate id"] for e in removed]
    removed_dupes = len(removed)

    removed_boundary = 0
    if cfg.boundary:
        events, removed = spatial_filter(events, load_boundary(cfg.boundary))
        removed_boundary = len(removed)
        rows += [["", e.id, "boundary", "outside boundary"] for e in removed]

    shares = subcategory_shares(events)

    removed_category = 0
    cats = cfg.categories()
    if cats is not None:
        events, removed = filter_categories(events, cats)
        removed_category = len(removed)

    write_events(out / CLEANED, events)
    _write_csv(out / REJECTIONS, ["row", "id", "stage", "reason"], rows)
    _write_csv(
        out / SHARES,
        ["category", "count", "percent"],
        [[s.category.value, s.count, f"{s.percent_rounded:.2f}"] for s in shares],
    )
    reasons: dict[str, int] = {}
    for r in parsed.rejections:
        reasons[r.reason] = reasons.get(r.reason, 0) + 1
    summary = {
        "input_rows": n_input,
        "removed": {
            "parse": len(parsed.rejections),
            "window": removed_window,
            "duplicates": removed_dupes,
            "boundary": removed_boundary,
            "category": removed_category,
        },
        "parse_rejections_by_reason": reasons,
        "retained": len(events),
    }
    _write_json(out / VALIDATE_SUMMARY, summary)
    log.info("validate: %d rows in, %d retained", n_input, len(events))
    return summary


def cmd_temporal(cfg: RunConfig) -> dict:
    out = _prepare_out(cfg)
    events = _load_cleaned(cfg)
    if not events:
        raise DataError("cleaned dataset is empty")
    window = _effective_window(cfg, events)
    stats_rows = []
    warnings_ = []
    for name in cfg.factors:
        factor = make_factor(name, window, events)
        table = build_table(events, factor)
        _write_csv(
            out / f"temporal_{name}.csv",
            ["category", "n_low", "n_high", "percent_high"],
            [
                [label, int(lo), int(hi), "" if hi + lo == 0 else repr(100.0 * hi / (hi + lo))]
                for label, (hi, lo) in zip(table.row_labels, table.observed)
            ],
        )
        try:
            rep = independence_test(table)
        except DegenerateTableError as exc:
            msg = f"{name}: {exc}"
            log.warning(msg)
            warnings_.append(msg)
            stats_rows.append([name, "", factor.r - 1, "", "NA", "", table.n, "degenerate"])
            continue
        stats_rows.append(
            [name, repr(rep.chi2), rep.df, repr(rep.p_value), format_p(rep.p_value), repr(rep.cramers_v), rep.n, ""]
        )
    _write_csv(out / TEMPORAL_STATS, ["factor", "chi2", "df", "p", "p_display", "cramers_v", "n", "note"], stats_rows)
    summary = {
        "n_events": len(events),
        "window": {
            "start": window.start_date.isoformat(),
            "end": window.end_date.isoformat(),
            "missing": sorted(d.isoformat() for d in window.missing_dates),
        },
        "observed_days": window.observed_days,
        "daily_mean": daily_mean(len(events), window),
        "night_vs_afternoon_high_share_ratio": high_share_ratio(events, Period.Night, Period.Afternoon),
        "alpha": ALPHA,
        "warnings": warnings_,
    }
    _write_json(out / TEMPORAL_SUMMARY, summary)
    return summary


def _cell_feature(rec: dict, grid: GridSpec, anchor: Anchor) -> dict:
    ring = unproject(grid.cell_polygon(rec["cell_id"]), anchor)
    props = {k: rec[k] for k in ("cell_id", "x", "n_events", "z", "p", "class")}
    return {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [[[round(a, 8), round(b, 8)] for a, b in ring]]},
        "properties": props,
    }


def cmd_hotspot(cfg: RunConfig) -> dict:
    out = _prepare_out(cfg)
    events = _load_cleaned(cfg)
    res = hotspot_pipeline(events, cfg.cell_size, cfg.band, fdr=cfg.fdr, anchor=cfg.projection_anchor())
    records = res.records()
    cols = ["cell_id", "col", "row", "lon", "lat", "x", "n_events", "z", "p", "class"]
    _write_csv(out / HOTSPOT_CELLS, cols, [[_fmt(r[c]) for c in cols] for r in records])
    fc = {"type": "FeatureCollection", "features": [_cell_feature(r, res.grid, res.anchor) for r in records]}
    (out / HOTSPOT_GEOJSON).write_text(json.dumps(fc, sort_keys=True) + "\n", encoding="utf-8")
    g = res.grid
    summary = {
        "anchor": [res.anchor.lon, res.anchor.lat],
        "grid": {"origin": [g.origin.x, g.origin.y], "cell_size": g.cell_size, "n_cols": g.n_cols, "n_rows": g.n_rows},
        "band": cfg.band,
        "fdr": cfg.fdr,
        "n_events": len(events),
        "class_counts": res.result.counts(),
    }
    _write_json(out / HOTSPOT_SUMMARY, summary)
    return summary


def cmd_idw(cfg: RunConfig) -> dict:
    out = _prepare_out(cfg)
    spath, cpath = out / HOTSPOT_SUMMARY, out / HOTSPOT_CELLS
    if not (spath.exists() and cpath.exists()):
        raise DataError("hotspot outputs not found; run 'hotspot' first")
    summary = _read_json(spath)
    g = summary["grid"]
    grid = GridSpec(PlanarPoint(*g["origin"]), g["cell_size"], g["n_cols"], g["n_rows"])
    with open(cpath, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    z = np.array([float(r["z"]) for r in sorted(rows, key=lambda r: int(r["cell_id"]))])
    raster = idw_raster(grid.centers(), z, raster_spec_for(grid, int(cfg.raster_refine)), cfg.idw_params())
    write_ascii_grid(out / IDW_RASTER, raster, Anchor(*summary["anchor"]))
    valid = raster.values[raster.valid]
    return {
        "ncols": raster.spec.n_cols,
        "nrows": raster.spec.n_rows,
        "min": float(valid.min()) if valid.size else None,
        "max": float(valid.max()) if valid.size else None,
    }


def _stage_notice(name: str) -> str:
    return f"_Stage not run: `{name}` outputs were not found in the output directory._\n"


def cmd_report(cfg: RunConfig) -> str:
    out = _prepare_out(cfg)
    parts = ["# Collision analysis report", ""]

    parts.append("## Data cleaning")
    if (out / VALIDATE_SUMMARY).exists():
        s = _read_json(out / VALIDATE_SUMMARY)
        parts += [
            "| stage | count |",
            "|---|---:|",
            f"| input rows | {s['input_rows']} |",
            *[f"| removed: {k} | {s['removed'][k]} |" for k in STAGES],
            f"| retained | {s['retained']} |",
            "",
        ]
    else:
        parts.append(_stage_notice("validate"))

    parts.append("## Category shares")
    if (out / SHARES).exists():
        with open(out / SHARES, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        total = sum(int(r["count"]) for r in rows)
        parts += ["| category | count | % |", "|---|---:|---:|"]
        parts += [f"| {r['category']} | {r['count']} | {r['percent']} |" for r in rows]
        parts += [f"| **Total** | {total} | {sum(float(r['percent']) for r in rows):.2f} |", ""]
    else:
        parts.append(_stage_notice("validate"))

    parts.append("## Temporal association with severity")
    if (out / TEMPORAL_STATS).exists():
        with open(out / TEMPORAL_STATS, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        parts += ["| factor | chi2 (df) | p-value | Cramér's V | N |", "|---|---:|---:|---:|---:|"]
        for r in rows:
            if r["note"]:
                parts.append(f"| {r['factor']} | {r['note']} ({r['df']}) | NA | NA | {r['n']} |")
            else:
                parts.append(
                    f"| {r['factor']} | {float(r['chi2']):.2f} ({r['df']}) | {r['p_display']} | "
                    f"{float(r['cramers_v']):.3f} | {r['n']} |"
                )
        if (out / TEMPORAL_SUMMARY).exists():
            t = _read_json(out / TEMPORAL_SUMMARY)
            ratio = t["night_vs_afternoon_high_share_ratio"]
            parts += [
                "",
                f"Observed days: {t['observed_days']}; mean events per day: {t['daily_mean']:.2f}.",
                f"Night / afternoon High-severity share ratio: {'NA' if ratio is None else f'{ratio:.3f}'}.",
            ]
        parts.append("")
    else:
        parts.append(_stage_notice("temporal"))

    parts.append("## Hotspot classes")
    if (out / HOTSPOT_SUMMARY).exists():
        h = _read_json(out / HOTSPOT_SUMMARY)
        g = h["grid"]
        parts += [
            f"Grid: {g['n_cols']} x {g['n_rows']} cells of {g['cell_size']:g} m; distance band {h['band']:g} m.",
            "",
            "| class | cells |",
            "|---|---:|",
        ]
        parts += [f"| {c.value} | {h['class_counts'][c.value]} |" for c in HotspotClass]
        parts.append("")
    else:
        parts.append(_stage_notice("hotspot"))

    text = "\n".join(parts).rstrip() + "\n"
    (out / REPORT).write_text(text, encoding="utf-8")
    return text


def cmd_synth(cfg: RunConfig) -> dict:
    """Generate a synthetic dataset plus a matching rectangular boundary."""
    if cfg.scenario:
        if not Path(cfg.scenario).exists():
            raise ConfigError(f"scenario file not found: {cfg.scenario}")
        scenario = load_scenario(cfg.scenario)
        if cfg.seed is not None:
            scenario = type(scenario).from_dict({**scenario.to_dict(), "seed": cfg.seed})
    else:
        scenario = canonical_cluster_scenario() if cfg.seed is None else canonical_cluster_scenario(cfg.seed)
    out = _prepare_out(cfg)
    events = generate(scenario)
    write_events(out / SYNTH_EVENTS, events)
    save_scenario(out / SYNTH_SCENARIO, scenario)
    lon0, lat0, lon1, lat1 = scenario.bbox
    # pad so cluster disks poking past the box survive the boundary filter
    pad = 0.05
    ring = [[lon0 - pad, lat0 - pad], [lon1 + pad, lat0 - pad], [lon1 + pad, lat1 + pad], [lon0 - pad, lat1 + pad]]
    boundary = {"type": "Polygon", "coordinates": [ring + [ring[0]]]}
    _write_json(out / SYNTH_BOUNDARY, boundary)
    c = bbox_center(scenario)
    w = scenario.window
    run_cfg = {
        "events": str(out / SYNTH_EVENTS),
        "boundary": str(out / SYNTH_BOUNDARY),
        "out": str(out),
        "anchor": [c.lon, c.lat],
        "window": {
            "start": w.start_date.isoformat(),
            "end": w.end_date.isoformat(),
            "missing": sorted(d.isoformat() for d in w.missing_dates),
        },
    }
    _write_json(out / SYNTH_RUN_CONFIG, run_cfg)
    return {"n_events": len(events), "anchor": [c.lon, c.lat], "run_config": str(out / SYNTH_RUN_CONFIG)}


def cmd_run(cfg: RunConfig) -> str:
    cmd_validate(cfg)
    cmd_temporal(cfg)
    cmd_hotspot(cfg)
    cmd_idw(cfg)
    return cmd_report(cfg)


COMMANDS = {
    "synth": cmd_synth,
    "validate": cmd_validate,
    "temporal": cmd_temporal,
    "hotspot": cmd_hotspot,
    "idw": cmd_idw,
    "report": cmd_report,
    "run": cmd_run,
}


# --------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration file")
    common.add_argument("--input", dest="events", help="events file (delimited text)")
    common.add_argument("--boundary", help="GeoJSON Polygon/MultiPolygon boundary")
    common.add_argument("--out", help="output directory")
    common.add_argument("--category", help="'all', 'pedestrian' or a comma list of categories")
    common.add_argument("--cell-size", dest="cell_size", type=float, help="grid cell size in metres")
    common.add_argument("--band", type=float, help="Gi* distance band in metres")
    common.add_argument("--power", dest="idw_power", type=float, help="IDW distance power")
    common.add_argument("--neighbors", dest="idw_neighbors", type=int, help="IDW neighbour count")
    common.add_argument("--seed", type=int, help="seed for synthetic generation")
    common.add_argument("--scenario", help="synthetic scenario file (synth only)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="crashspot", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).split("\n")[0])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("events", "boundary", "out", "category", "cell_size", "band", "idw_power", "idw_neighbors", "seed", "scenario"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    try:
        cfg = RunConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, SchemaError) as exc:
        print(f"crashspot: configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"crashspot: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"crashspot: I/O error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, dict):
        print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
