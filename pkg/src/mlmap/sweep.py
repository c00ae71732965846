"""Multi-snapshot sweeps: label grids, PNGs, metrics files, pooled reports.

A sweep moves the transmitter along a straight line in tx_count linearly
spaced steps (endpoints inclusive) and evaluates the full receiver grid at
each stop. All artifacts are deterministic: rerunning a sweep with any
worker count or chunk size reproduces every output byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .archive import load_registry, save_label_grid, save_registry
from .cells import CellRegistry, GridSpec, connected_regions, label_grid
from .geometry import Scene
from .metrics import (
    HISTOGRAM_BINS,
    CellMetrics,
    SweepReport,
    aggregate_sweep,
    histogram,
    min_intercell_distance_field,
    snapshot_metrics,
)
from .render import RenderOptions, render_mlm
from .tracer import DEFAULT_BUDGET, enumerate_candidates

METRICS_CSV = "metrics.csv"
CELLS_CSV = "cells.csv"
REGISTRY_JSON = "registry.json"
SUMMARY_JSON = "sweep.json"


@dataclass(eq=False)
class SweepConfig:
    """Sweep geometry and execution knobs; lengths in metres."""

    tx_start: tuple[float, float]
    tx_end: tuple[float, float]
    bounds: tuple[float, float, float, float]
    tx_count: int = 50
    tx_altitude: float = 32.0
    nx: int = 500
    ny: int = 500
    altitude: float = 1.5
    max_order: int = 1
    chunk_size: int | None = 1024
    workers: int = 1
    block_size: int = 8192
    budget: int = DEFAULT_BUDGET
    keep_vectors: bool = False
    include_no_multipath: bool = False
    overlay_tx: bool = False

    def validate(self) -> None:
        if self.tx_count < 1:
            raise ValueError("tx_count must be at least 1")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 samples per axis")
        if self.max_order < 0:
            raise ValueError("max_order must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.nx, self.ny, tuple(self.bounds), self.altitude)


def tx_positions(config: SweepConfig) -> np.ndarray:
    """TX stops (tx_count, 3); a single stop sits at tx_start."""
    start = np.array([*config.tx_start, config.tx_altitude])
    end = np.array([*config.tx_end, config.tx_altitude])
    return np.linspace(start, end, config.tx_count)


def _float_cell(value: float | None) -> str:
    return "" if value is None else repr(value)


def _write_metrics_csv(path: Path, per_snapshot: list[list[CellMetrics]]) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["snapshot", "cell", "sample_count", "area_m2", "avg_min_dist_m", "region_count"]
        )
        for index, rows in enumerate(per_snapshot):
            for m in rows:
                writer.writerow(
                    [
                        index,
                        m.cell.hex,
                        m.sample_count,
                        repr(m.area_m2),
                        _float_cell(m.avg_min_dist_m),
                        m.region_count,
                    ]
                )


def _write_cells_csv(path: Path, registry: CellRegistry) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cell", "r", "g", "b", "a", "first_seen_snapshot", "no_multipath"])
        for cid in sorted(registry.entries, key=lambda c: c.digest):
            entry = registry.entries[cid]
            writer.writerow(
                [cid.hex, *entry.color, entry.first_seen_snapshot, int(cid.no_multipath)]
            )


def _histogram_doc(data: tuple[np.ndarray, np.ndarray] | None) -> dict | None:
    if data is None:
        return None
    edges, density = data
    return {"edges": [float(e) for e in edges], "density": [float(d) for d in density]}


def _report_pool_doc(report: SweepReport) -> dict:
    return {
        "n_observations": report.n_observations,
        "mean_area_m2": report.mean_area_m2,
        "median_area_m2": report.median_area_m2,
        "mean_avg_min_dist_m": report.mean_avg_min_dist_m,
        "median_avg_min_dist_m": report.median_avg_min_dist_m,
    }


def run_sweep(
    scene: Scene,
    config: SweepConfig,
    out_dir: str | Path,
    log: Callable[[str], None] | None = None,
) -> SweepReport:
    """Run every snapshot and write the full artifact set to out_dir.

    Artifacts: snapshot_NNN.mlm label-grid archives, snapshot_NNN.png maps,
    metrics.csv (one row per snapshot and cell), cells.csv (color table),
    registry.json, and sweep.json with pooled statistics and histograms.
    Execution knobs (workers, chunking) are deliberately absent from
    sweep.json so every artifact byte is independent of how the sweep ran.
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    enumeration = enumerate_candidates(scene.n_facets, config.max_order, config.budget)
    spec = config.grid_spec()
    registry = CellRegistry()
    per_snapshot: list[list[CellMetrics]] = []
    summaries = []
    for index, tx in enumerate(tx_positions(config)):
        if log is not None:
            log(f"snapshot {index + 1}/{config.tx_count} tx=({tx[0]:.2f}, {tx[1]:.2f})")
        grid = label_grid(
            tx,
            spec,
            enumeration,
            scene,
            chunk_size=config.chunk_size,
            workers=config.workers,
            block_size=config.block_size,
            keep_vectors=config.keep_vectors,
        )
        registry.observe_grid(grid, index)
        regions = connected_regions(grid)
        field = min_intercell_distance_field(grid)
        rows = snapshot_metrics(grid, regions, field)
        per_snapshot.append(rows)
        save_label_grid(grid, out / f"snapshot_{index:03d}.mlm")
        options = RenderOptions(overlay_tx=config.overlay_tx, tx=(float(tx[0]), float(tx[1])))
        (out / f"snapshot_{index:03d}.png").write_bytes(render_mlm(grid, options))
        summaries.append(
            {
                "index": index,
                "tx": [float(v) for v in tx],
                "n_cells": len(rows),
                "n_regions": int(sum(regions.values())),
            }
        )

    report = aggregate_sweep(per_snapshot, config.include_no_multipath)
    _write_metrics_csv(out / METRICS_CSV, per_snapshot)
    _write_cells_csv(out / CELLS_CSV, registry)
    save_registry(registry, out / REGISTRY_JSON)
    doc = {
        "format": "mlmap-sweep",
        "version": 1,
        "config": {
            "tx_start": list(config.tx_start),
            "tx_end": list(config.tx_end),
            "tx_count": config.tx_count,
            "tx_altitude": config.tx_altitude,
            "nx": config.nx,
            "ny": config.ny,
            "bounds": list(config.bounds),
            "altitude": config.altitude,
            "max_order": config.max_order,
            "include_no_multipath": config.include_no_multipath,
        },
        "snapshots": summaries,
        "pooled": _report_pool_doc(report),
        "histograms": {
            "area_m2": _histogram_doc(report.area_histogram),
            "avg_min_dist_m": _histogram_doc(report.dist_histogram),
        },
    }
    (out / SUMMARY_JSON).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return report


@dataclass(eq=False)
class SweepRows:
    """Metrics rows re-read from a sweep directory."""

    name: str
    areas: list[float]
    dists: list[float]


def load_sweep_rows(sweep_dir: str | Path, include_no_multipath: bool = False) -> SweepRows:
    """Pooled observations from a sweep's metrics.csv and registry.json."""
    sweep_dir = Path(sweep_dir)
    metrics_path = sweep_dir / METRICS_CSV
    if not metrics_path.is_file():
        raise FileNotFoundError(f"{metrics_path}: no such file")
    registry = load_registry(sweep_dir / REGISTRY_JSON)
    skip = {cid.hex for cid in registry.entries if cid.no_multipath}
    areas: list[float] = []
    dists: list[float] = []
    with metrics_path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            try:
                if row["cell"] in skip and not include_no_multipath:
                    continue
                if row["avg_min_dist_m"] == "":
                    continue
                areas.append(float(row["area_m2"]))
                dists.append(float(row["avg_min_dist_m"]))
            except (KeyError, TypeError, ValueError) as err:
                raise ValueError(f"{metrics_path}: malformed row {row!r} ({err})") from None
    return SweepRows(sweep_dir.name, areas, dists)


def build_report(sweeps: list[SweepRows], bins: int = HISTOGRAM_BINS) -> dict:
    """Pooled mean/median table and histograms for one or two sweeps."""
    entries = []
    for rows in sweeps:
        if rows.areas:
            pooled = {
                "n_observations": len(rows.areas),
                "mean_area_m2": float(np.mean(rows.areas)),
                "median_area_m2": float(np.median(rows.areas)),
                "mean_avg_min_dist_m": float(np.mean(rows.dists)),
                "median_avg_min_dist_m": float(np.median(rows.dists)),
            }
            hists = {
                "area_m2": _histogram_doc(histogram(rows.areas, bins)),
                "avg_min_dist_m": _histogram_doc(histogram(rows.dists, bins)),
            }
        else:
            pooled = {
                "n_observations": 0,
                "mean_area_m2": None,
                "median_area_m2": None,
                "mean_avg_min_dist_m": None,
                "median_avg_min_dist_m": None,
            }
            hists = {"area_m2": None, "avg_min_dist_m": None}
        entries.append({"name": rows.name, "pooled": pooled, "histograms": hists})
    return {"format": "mlmap-report", "version": 1, "sweeps": entries}


def write_report(report: dict, out_dir: str | Path) -> None:
    """Write report.json plus a flat report.csv of histogram bins."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    with (out / "report.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sweep", "metric", "bin_lo", "bin_hi", "density"])
        for entry in report["sweeps"]:
            for metric, doc in entry["histograms"].items():
                if doc is None:
                    continue
                edges = doc["edges"]
                for lo, hi, density in zip(edges[:-1], edges[1:], doc["density"]):
                    writer.writerow([entry["name"], metric, repr(lo), repr(hi), repr(density)])


def format_report_table(report: dict) -> str:
    """Fixed-width text table of pooled means and medians."""
    headers = ["sweep", "S mean", "S median", "dbar mean", "dbar median", "n"]
    lines = []
    for entry in report["sweeps"]:
        pooled = entry["pooled"]

        def cell(value):
            return "-" if value is None else f"{value:.2f}"

        lines.append(
            [
                entry["name"],
                cell(pooled["mean_area_m2"]),
                cell(pooled["median_area_m2"]),
                cell(pooled["mean_avg_min_dist_m"]),
                cell(pooled["median_avg_min_dist_m"]),
                str(pooled["n_observations"]),
            ]
        )
    widths = [max(len(h), *(len(row[i]) for row in lines)) if lines else len(h) for i, h in enumerate(headers)]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in lines:
        out.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(out)
