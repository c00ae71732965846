from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from mlmap.scenes import generate_fig2_scene
from mlmap.sweep import (
    SweepConfig,
    SweepRows,
    build_report,
    format_report_table,
    load_sweep_rows,
    run_sweep,
    tx_positions,
    write_report,
)

ARTIFACTS = [
    "snapshot_000.mlm",
    "snapshot_000.png",
    "snapshot_001.mlm",
    "snapshot_001.png",
    "metrics.csv",
    "cells.csv",
    "registry.json",
    "sweep.json",
]


def small_config(**overrides) -> SweepConfig:
    base = dict(
        tx_start=(0.0, -0.3),
        tx_end=(0.0, 0.3),
        bounds=(-0.5, -1.5, 2.5, 1.5),
        tx_count=2,
        tx_altitude=0.0,
        nx=30,
        ny=20,
        altitude=0.0,
        max_order=2,
    )
    base.update(overrides)
    return SweepConfig(**base)


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep") / "run"
    report = run_sweep(generate_fig2_scene(), small_config(), out)
    return out, report


class TestTxPositions:
    def test_single_stop(self):
        stops = tx_positions(small_config(tx_count=1))
        assert stops.shape == (1, 3)
        assert np.allclose(stops[0], [0.0, -0.3, 0.0])

    def test_linear_spacing(self):
        stops = tx_positions(small_config(tx_count=3, tx_altitude=32.0))
        assert np.allclose(stops[:, 1], [-0.3, 0.0, 0.3])
        assert np.all(stops[:, 2] == 32.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            small_config(tx_count=0).validate()
        with pytest.raises(ValueError):
            small_config(workers=0).validate()


class TestRunSweep:
    def test_artifact_set(self, sweep_dir):
        out, _ = sweep_dir
        for name in ARTIFACTS:
            assert (out / name).is_file(), name

    def test_metrics_rows(self, sweep_dir):
        out, _ = sweep_dir
        with (out / "metrics.csv").open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert {r["snapshot"] for r in rows} == {"0", "1"}
        for snapshot in ("0", "1"):
            counts = [int(r["sample_count"]) for r in rows if r["snapshot"] == snapshot]
            assert sum(counts) == 30 * 20
        for r in rows:
            assert float(r["area_m2"]) == pytest.approx(
                int(r["sample_count"]) * 0.1 * 0.15
            )
            assert int(r["region_count"]) >= 1

    def test_summary_document(self, sweep_dir):
        out, report = sweep_dir
        doc = json.loads((out / "sweep.json").read_text())
        assert doc["format"] == "mlmap-sweep"
        assert len(doc["snapshots"]) == 2
        assert doc["config"]["bounds"] == [-0.5, -1.5, 2.5, 1.5]
        assert doc["pooled"]["n_observations"] == report.n_observations
        assert doc["pooled"]["mean_area_m2"] == report.mean_area_m2
        for snap in doc["snapshots"]:
            assert snap["n_cells"] >= 3
            assert snap["n_regions"] >= snap["n_cells"]

    def test_rounds_rerun_identically(self, sweep_dir, tmp_path):
        out, _ = sweep_dir
        again = tmp_path / "again"
        run_sweep(generate_fig2_scene(), small_config(), again)
        for name in ARTIFACTS:
            assert (again / name).read_bytes() == (out / name).read_bytes(), name

    def test_worker_and_chunk_invariance(self, sweep_dir, tmp_path):
        out, _ = sweep_dir
        other = tmp_path / "other"
        config = small_config(workers=2, chunk_size=None, block_size=97)
        run_sweep(generate_fig2_scene(), config, other)
        for name in ARTIFACTS:
            assert (other / name).read_bytes() == (out / name).read_bytes(), name


class TestLoadRows:
    def test_matches_sweep_report(self, sweep_dir):
        out, report = sweep_dir
        rows = load_sweep_rows(out)
        assert rows.name == "run"
        assert len(rows.areas) == report.n_observations
        assert float(np.mean(rows.areas)) == pytest.approx(report.mean_area_m2)
        assert float(np.median(rows.dists)) == pytest.approx(report.median_avg_min_dist_m)

    def test_include_flag_adds_rows(self, sweep_dir):
        out, _ = sweep_dir
        base = load_sweep_rows(out)
        wide = load_sweep_rows(out, include_no_multipath=True)
        assert len(wide.areas) >= len(base.areas)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_sweep_rows(tmp_path / "nope")


class TestReport:
    def test_two_sweep_report(self, sweep_dir, tmp_path):
        out, _ = sweep_dir
        rows = load_sweep_rows(out)
        other = SweepRows("other", [1.0, 2.0], [0.5, 0.5])
        report = build_report([rows, other], bins=5)
        assert [e["name"] for e in report["sweeps"]] == ["run", "other"]
        assert report["sweeps"][1]["pooled"]["mean_area_m2"] == 1.5

        write_report(report, tmp_path / "report")
        doc = json.loads((tmp_path / "report" / "report.json").read_text())
        assert doc == report
        with (tmp_path / "report" / "report.csv").open(newline="") as handle:
            csv_rows = list(csv.DictReader(handle))
        assert {r["sweep"] for r in csv_rows} == {"run", "other"}
        assert {r["metric"] for r in csv_rows} == {"area_m2", "avg_min_dist_m"}

    def test_empty_sweep_renders_dashes(self):
        report = build_report([SweepRows("empty", [], [])])
        table = format_report_table(report)
        assert "empty" in table
        assert "-" in table

    def test_table_alignment(self):
        report = build_report([SweepRows("a", [4.0], [2.0])])
        table = format_report_table(report)
        lines = table.splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("sweep")
        assert "4.00" in lines[1]
