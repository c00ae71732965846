"""Cell identities, label grids, region counting, and stable colors.

A receiver's multipath cell is named by the SHA-256 digest of its validity
vector under a canonical serialization: an 8-byte little-endian bit-length
prefix followed by the bits packed little-endian within each byte, zero
padded to a whole byte. Equal vectors therefore hash identically across
snapshots, runs, and machines, which is what keeps cell colors stable.

Grid labeling streams validity bits chunk by chunk into one SHA-256 state
per sample, so memory stays bounded by chunk size times block size while
the digests stay byte-identical to hashing each full vector at once.
"""

from __future__ import annotations

import colorsys
import hashlib
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import Scene
from .tracer import CandidateEnumeration, ValidityVector, candidate_validity

DIGEST_SIZE = 32
DEFAULT_CHUNK = 1024
DEFAULT_BLOCK = 8192
COLOR_SATURATION = 0.65
COLOR_LIGHTNESS = 0.55


@dataclass(frozen=True)
class CellId:
    """256-bit cell identity; `no_multipath` marks the all-zero vector."""

    digest: bytes
    no_multipath: bool = False

    @property
    def hex(self) -> str:
        return self.digest.hex()


def serialize_bits(bits: np.ndarray) -> bytes:
    """Canonical byte form of a validity bit-vector."""
    bits = np.asarray(bits, dtype=bool)
    return struct.pack("<Q", bits.shape[0]) + np.packbits(bits, bitorder="little").tobytes()


def cell_id(vector: ValidityVector | np.ndarray) -> CellId:
    bits = vector.bits if isinstance(vector, ValidityVector) else np.asarray(vector, dtype=bool)
    digest = hashlib.sha256(serialize_bits(bits)).digest()
    return CellId(digest, no_multipath=not bool(bits.any()))


def no_multipath_digest(bit_length: int) -> bytes:
    """Digest of the all-zero vector of a given length."""
    return hashlib.sha256(serialize_bits(np.zeros(bit_length, dtype=bool))).digest()


def color_of(cell: CellId) -> tuple[int, int, int, int]:
    """Deterministic RGBA for a cell; the no-multipath cell is transparent.

    Hue comes from the first two digest bytes, saturation and lightness are
    fixed, so the color is a pure function of the identity.
    """
    if cell.no_multipath:
        return (0, 0, 0, 0)
    hue = int.from_bytes(cell.digest[:2], "big") / 65536.0
    r, g, b = colorsys.hls_to_rgb(hue, COLOR_LIGHTNESS, COLOR_SATURATION)
    return (round(r * 255.0), round(g * 255.0), round(b * 255.0), 255)


@dataclass(frozen=True)
class GridSpec:
    """Uniform receiver grid over a rectangle at fixed altitude.

    Samples sit at pixel centres: column ix maps to xmin + (ix + 0.5) * pitch,
    so the sample areas tile the rectangle exactly. Flat sample order is
    row-major, y outer, x inner.
    """

    nx: int
    ny: int
    bounds: tuple[float, float, float, float]
    altitude: float = 1.5

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = self.bounds
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one sample per axis")
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("grid bounds must span a positive area")

    @property
    def pitch_x(self) -> float:
        return (self.bounds[2] - self.bounds[0]) / self.nx

    @property
    def pitch_y(self) -> float:
        return (self.bounds[3] - self.bounds[1]) / self.ny

    @property
    def origin(self) -> np.ndarray:
        return np.array(
            [
                self.bounds[0] + 0.5 * self.pitch_x,
                self.bounds[1] + 0.5 * self.pitch_y,
                self.altitude,
            ]
        )

    @property
    def sample_count(self) -> int:
        return self.nx * self.ny

    def sample_block(self, lo: int, hi: int) -> np.ndarray:
        """Sample positions for flat indices [lo, hi) as a (hi-lo, 3) array."""
        idx = np.arange(lo, hi)
        iy, ix = np.divmod(idx, self.nx)
        return np.column_stack(
            [
                self.bounds[0] + (ix + 0.5) * self.pitch_x,
                self.bounds[1] + (iy + 0.5) * self.pitch_y,
                np.full(idx.size, float(self.altitude)),
            ]
        )


@dataclass(eq=False)
class LabelGrid:
    """Raster of cell digests over a receiver grid.

    `labels` has shape (ny, nx, 32): raw digest bytes per sample. `vectors`
    is an optional diagnostic map digest -> full validity bit-vector, present
    only when labeling ran with keep_vectors.
    """

    nx: int
    ny: int
    pitch_x: float
    pitch_y: float
    origin: np.ndarray
    altitude: float
    labels: np.ndarray
    no_multipath_digest: bytes
    vectors: dict[bytes, np.ndarray] | None = None
    _unique: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def wrap(self, digest: bytes) -> CellId:
        return CellId(digest, no_multipath=digest == self.no_multipath_digest)

    def cell_at(self, ix: int, iy: int) -> CellId:
        return self.wrap(self.labels[iy, ix].tobytes())

    def unique_inverse(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique digest rows (U, 32) and per-sample indices (ny, nx)."""
        if self._unique is None:
            flat = self.labels.reshape(-1, DIGEST_SIZE)
            uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
            self._unique = (uniq, inverse.reshape(self.ny, self.nx).astype(np.int32))
        return self._unique

    def unique_cells(self) -> list[CellId]:
        uniq, _ = self.unique_inverse()
        return [self.wrap(row.tobytes()) for row in uniq]


def _chunk_ranges(total: int, chunk_size: int | None) -> list[tuple[int, int]]:
    size = total if chunk_size is None else int(chunk_size)
    if size < 1:
        raise ValueError("chunk_size must be at least 1")
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def _block_digests(
    tx: np.ndarray,
    points: np.ndarray,
    scene: Scene,
    enumeration: CandidateEnumeration,
    chunks: list[tuple[int, int]],
    keep: bool,
) -> tuple[bytes, np.ndarray | None]:
    """Stream per-sample validity bits into SHA-256 states chunk by chunk.

    Bits left over from a chunk that do not fill a byte are carried into the
    next chunk, so the byte stream fed to each state is exactly the canonical
    packed serialization regardless of chunking.
    """
    count = points.shape[0]
    prefix = hashlib.sha256(struct.pack("<Q", enumeration.total_count))
    states = [prefix.copy() for _ in range(count)]
    carry = np.zeros((count, 0), dtype=bool)
    kept: list[np.ndarray] | None = [] if keep else None
    for lo, hi in chunks:
        cols = np.empty((count, hi - lo), dtype=bool)
        for j in range(lo, hi):
            cols[:, j - lo] = candidate_validity(tx, points, enumeration.candidate(j), scene)
        bits = np.concatenate([carry, cols], axis=1) if carry.shape[1] else cols
        full = bits.shape[1] - bits.shape[1] % 8
        if full:
            packed = np.packbits(bits[:, :full], axis=1, bitorder="little")
            if kept is not None:
                kept.append(packed)
            width = full // 8
            view = memoryview(packed.tobytes())
            for i in range(count):
                states[i].update(view[i * width : (i + 1) * width])
        carry = bits[:, full:]
    if carry.shape[1]:
        tail = np.packbits(carry, axis=1, bitorder="little")
        if kept is not None:
            kept.append(tail)
        view = memoryview(tail.tobytes())
        for i in range(count):
            states[i].update(view[i : i + 1])
    digests = b"".join(h.digest() for h in states)
    if kept is None:
        return digests, None
    rows = np.concatenate(kept, axis=1) if kept else np.zeros((count, 0), dtype=np.uint8)
    return digests, rows


def _label_block(args) -> tuple[int, bytes, np.ndarray | None]:
    tx, spec, lo, hi, scene, enumeration, chunks, keep = args
    digests, rows = _block_digests(tx, spec.sample_block(lo, hi), scene, enumeration, chunks, keep)
    return lo, digests, rows


def label_grid(
    tx: np.ndarray,
    spec: GridSpec,
    enumeration: CandidateEnumeration,
    scene: Scene,
    chunk_size: int | None = DEFAULT_CHUNK,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK,
    keep_vectors: bool = False,
) -> LabelGrid:
    """Label every grid sample with its cell digest.

    The sample partition into blocks is fixed by block_size alone and every
    per-sample computation is independent of its neighbours, so the result
    is bit-identical for any worker count and any chunk size.
    """
    if block_size < 1:
        raise ValueError("block_size must be at least 1")
    tx = np.asarray(tx, dtype=np.float64)
    total = spec.sample_count
    chunks = _chunk_ranges(enumeration.total_count, chunk_size)
    blocks = [(lo, min(lo + block_size, total)) for lo in range(0, total, block_size)]
    tasks = [(tx, spec, lo, hi, scene, enumeration, chunks, keep_vectors) for lo, hi in blocks]

    flat = np.empty((total, DIGEST_SIZE), dtype=np.uint8)
    packed_rows = np.empty((total, (enumeration.total_count + 7) // 8), dtype=np.uint8)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = pool.map(_label_block, tasks)
            for lo, digests, rows in results:
                hi = lo + len(digests) // DIGEST_SIZE
                flat[lo:hi] = np.frombuffer(digests, dtype=np.uint8).reshape(-1, DIGEST_SIZE)
                if rows is not None:
                    packed_rows[lo:hi] = rows
    else:
        for task in tasks:
            lo, digests, rows = _label_block(task)
            hi = lo + len(digests) // DIGEST_SIZE
            flat[lo:hi] = np.frombuffer(digests, dtype=np.uint8).reshape(-1, DIGEST_SIZE)
            if rows is not None:
                packed_rows[lo:hi] = rows

    vectors = None
    if keep_vectors:
        uniq, first = np.unique(flat, axis=0, return_index=True)
        bit_count = enumeration.total_count
        vectors = {
            row.tobytes(): np.unpackbits(packed_rows[i], bitorder="little")[:bit_count].astype(bool)
            for row, i in zip(uniq, first)
        }
    return LabelGrid(
        nx=spec.nx,
        ny=spec.ny,
        pitch_x=spec.pitch_x,
        pitch_y=spec.pitch_y,
        origin=spec.origin,
        altitude=spec.altitude,
        labels=flat.reshape(spec.ny, spec.nx, DIGEST_SIZE),
        no_multipath_digest=no_multipath_digest(enumeration.total_count),
        vectors=vectors,
    )


def connected_regions(grid: LabelGrid, connectivity: int = 8) -> dict[CellId, int]:
    """Connected components of equal-label samples, counted per cell.

    Diagonal adjacency counts by default (connectivity 8); pass 4 to restrict
    to edge-sharing neighbours.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    structure = np.ones((3, 3), dtype=bool) if connectivity == 8 else None
    uniq, inverse = grid.unique_inverse()
    counts: dict[CellId, int] = {}
    for u, row in enumerate(uniq):
        _, n = ndimage.label(inverse == u, structure=structure)
        counts[grid.wrap(row.tobytes())] = int(n)
    return counts


@dataclass(eq=False)
class CellEntry:
    color: tuple[int, int, int, int]
    first_seen_snapshot: int
    vector: np.ndarray | None = None


@dataclass(eq=False)
class CellRegistry:
    """Cells seen so far in a sweep; colors are derived, never invented."""

    entries: dict[CellId, CellEntry] = field(default_factory=dict)

    def observe_grid(self, grid: LabelGrid, snapshot_index: int) -> None:
        for cid in grid.unique_cells():
            if cid not in self.entries:
                vector = None if grid.vectors is None else grid.vectors.get(cid.digest)
                self.entries[cid] = CellEntry(color_of(cid), snapshot_index, vector)

    def color(self, cid: CellId) -> tuple[int, int, int, int]:
        entry = self.entries.get(cid)
        return entry.color if entry is not None else color_of(cid)
