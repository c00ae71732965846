"""Per-cell metrics: areas, escape distances, Hamming diagnostics, pooling.

The escape distance of a sample is the exact Euclidean distance to the
nearest grid sample carrying a different label, with the grid pitch applied
per axis. Samples of the same cell in other disconnected regions still count
as inside the cell, and the grid border is not an exit: a cell covering the
whole grid has no escape distance at all, represented as infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .cells import CellId, LabelGrid

HISTOGRAM_BINS = 30


@dataclass(eq=False)
class DistanceField:
    """Escape distance per sample, infinite where no other label exists."""

    values: np.ndarray
    pitch_x: float
    pitch_y: float


@dataclass(eq=False)
class CellMetrics:
    cell: CellId
    sample_count: int
    area_m2: float
    avg_min_dist_m: float | None
    region_count: int


@dataclass(eq=False)
class SweepReport:
    """Pooled statistics over every (snapshot, cell) observation."""

    snapshots: list[list[CellMetrics]]
    n_observations: int
    mean_area_m2: float | None
    median_area_m2: float | None
    mean_avg_min_dist_m: float | None
    median_avg_min_dist_m: float | None
    area_histogram: tuple[np.ndarray, np.ndarray] | None
    dist_histogram: tuple[np.ndarray, np.ndarray] | None


def cell_areas(grid: LabelGrid) -> dict[CellId, float]:
    """Occupied area per cell: sample count times pixel area."""
    uniq, inverse = grid.unique_inverse()
    counts = np.bincount(inverse.ravel(), minlength=uniq.shape[0])
    pixel = grid.pitch_x * grid.pitch_y
    return {grid.wrap(row.tobytes()): float(c * pixel) for row, c in zip(uniq, counts)}


def min_intercell_distance_field(grid: LabelGrid) -> DistanceField:
    """Exact per-sample distance to the nearest differently-labeled sample.

    One Euclidean distance transform per label: samples of the label form
    the foreground and every other sample is a seed, so the transform value
    at a foreground sample is exactly the distance we want.
    """
    _, inverse = grid.unique_inverse()
    values = np.full(inverse.shape, np.inf)
    for u in range(int(inverse.max()) + 1):
        mask = inverse == u
        if mask.all():
            continue
        dist = ndimage.distance_transform_edt(mask, sampling=(grid.pitch_y, grid.pitch_x))
        values[mask] = dist[mask]
    return DistanceField(values, grid.pitch_x, grid.pitch_y)


def avg_min_intercell_distance(field: DistanceField, grid: LabelGrid) -> dict[CellId, float]:
    """Mean escape distance per cell; cells with no escape are omitted."""
    uniq, inverse = grid.unique_inverse()
    out: dict[CellId, float] = {}
    for u, row in enumerate(uniq):
        vals = field.values[inverse == u]
        if np.all(np.isfinite(vals)):
            out[grid.wrap(row.tobytes())] = float(vals.mean())
    return out


def snapshot_metrics(
    grid: LabelGrid,
    regions: dict[CellId, int],
    field: DistanceField | None = None,
) -> list[CellMetrics]:
    """One CellMetrics row per cell of a snapshot, ordered by digest."""
    if field is None:
        field = min_intercell_distance_field(grid)
    uniq, inverse = grid.unique_inverse()
    counts = np.bincount(inverse.ravel(), minlength=uniq.shape[0])
    averages = avg_min_intercell_distance(field, grid)
    pixel = grid.pitch_x * grid.pitch_y
    rows = []
    for u, row in enumerate(uniq):
        cid = grid.wrap(row.tobytes())
        rows.append(
            CellMetrics(
                cell=cid,
                sample_count=int(counts[u]),
                area_m2=float(counts[u] * pixel),
                avg_min_dist_m=averages.get(cid),
                region_count=regions.get(cid, 0),
            )
        )
    return rows


@dataclass(eq=False)
class HammingStats:
    """Hamming distances across differing 4-adjacent sample pairs."""

    counts: dict[int, int]
    total_pairs: int
    fraction_distance_1: float | None


def hamming_transition_stats(
    grid: LabelGrid, vectors: dict[bytes, np.ndarray] | None = None
) -> HammingStats:
    """Distribution of validity-vector Hamming distances at label transitions.

    Needs the validity vectors, so the grid must have been labeled with
    keep_vectors (or an equivalent lookup must be supplied).
    """
    lookup = grid.vectors if vectors is None else vectors
    if lookup is None:
        raise ValueError("validity vectors were not retained for this grid")
    uniq, inverse = grid.unique_inverse()
    try:
        matrix = np.stack([np.asarray(lookup[row.tobytes()], dtype=bool) for row in uniq])
    except KeyError as missing:
        raise ValueError(f"no validity vector for digest {missing}") from None

    pairs = []
    for a, b in ((inverse[:, :-1], inverse[:, 1:]), (inverse[:-1, :], inverse[1:, :])):
        differ = a != b
        pairs.append(np.stack([a[differ], b[differ]], axis=1))
    codes = np.concatenate(pairs)
    counts: dict[int, int] = {}
    if codes.size:
        merged = codes[:, 0].astype(np.int64) * uniq.shape[0] + codes[:, 1]
        unique_codes, code_counts = np.unique(merged, return_counts=True)
        for code, n in zip(unique_codes, code_counts):
            a, b = divmod(int(code), uniq.shape[0])
            d = int(np.count_nonzero(matrix[a] ^ matrix[b]))
            counts[d] = counts.get(d, 0) + int(n)
    total = sum(counts.values())
    fraction = counts.get(1, 0) / total if total else None
    return HammingStats(counts, total, fraction)


def disk_equivalent_radius(area_m2: float) -> float:
    """Radius of the disk with the given area."""
    if area_m2 < 0:
        raise ValueError("area must be non-negative")
    return math.sqrt(area_m2 / math.pi)


def histogram(values, bins: int = HISTOGRAM_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width density histogram over [min, max].

    All-equal inputs get a single unit-width bin holding all the mass so the
    density still integrates to one.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("histogram needs at least one value")
    if not np.all(np.isfinite(values)):
        raise ValueError("histogram values must be finite")
    vmin, vmax = float(values.min()), float(values.max())
    if vmin == vmax:
        return np.array([vmin - 0.5, vmin + 0.5]), np.array([1.0])
    density, edges = np.histogram(values, bins=bins, range=(vmin, vmax), density=True)
    return edges, density


def aggregate_sweep(
    per_snapshot: list[list[CellMetrics]],
    include_no_multipath: bool = False,
    bins: int = HISTOGRAM_BINS,
) -> SweepReport:
    """Pool every (snapshot, cell) pair as one unweighted observation.

    The no-multipath cell and cells without a defined escape distance are
    left out of the pool unless explicitly included.
    """
    if not per_snapshot:
        raise ValueError("aggregate_sweep needs at least one snapshot")
    areas: list[float] = []
    dists: list[float] = []
    for rows in per_snapshot:
        for m in rows:
            if m.cell.no_multipath and not include_no_multipath:
                continue
            if m.avg_min_dist_m is None:
                continue
            areas.append(m.area_m2)
            dists.append(m.avg_min_dist_m)
    if areas:
        return SweepReport(
            snapshots=per_snapshot,
            n_observations=len(areas),
            mean_area_m2=float(np.mean(areas)),
            median_area_m2=float(np.median(areas)),
            mean_avg_min_dist_m=float(np.mean(dists)),
            median_avg_min_dist_m=float(np.median(dists)),
            area_histogram=histogram(areas, bins),
            dist_histogram=histogram(dists, bins),
        )
    return SweepReport(per_snapshot, 0, None, None, None, None, None, None)
