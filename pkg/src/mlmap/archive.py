"""Binary label-grid archives and the JSON cell-registry sidecar.

The grid archive is a fixed header (dims, pitch, origin, altitude, the
no-multipath digest) followed by the dense 32-byte digests in row-major
order. Round-trips are exact: loading reproduces the labels byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .cells import DIGEST_SIZE, CellEntry, CellId, CellRegistry, LabelGrid

MAGIC = b"MLMG"
VERSION = 1
_HEADER = struct.Struct("<4sHII6d32s")
REGISTRY_FORMAT = "mlmap-registry"


class ArchiveError(ValueError):
    """A label-grid archive or registry file failed to load."""


def save_label_grid(grid: LabelGrid, path: str | Path) -> None:
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        grid.nx,
        grid.ny,
        grid.pitch_x,
        grid.pitch_y,
        grid.origin[0],
        grid.origin[1],
        grid.origin[2],
        grid.altitude,
        grid.no_multipath_digest,
    )
    Path(path).write_bytes(header + grid.labels.tobytes())


def load_label_grid(path: str | Path) -> LabelGrid:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ArchiveError(f"{path}: no such file") from None
    if len(blob) < _HEADER.size:
        raise ArchiveError(f"{path}: truncated header")
    magic, version, nx, ny, px, py, ox, oy, oz, altitude, zero_digest = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ArchiveError(f"{path}: not a label-grid archive")
    if version != VERSION:
        raise ArchiveError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + nx * ny * DIGEST_SIZE
    if len(blob) != expected:
        raise ArchiveError(f"{path}: expected {expected} bytes, found {len(blob)}")
    labels = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size).reshape(ny, nx, DIGEST_SIZE)
    return LabelGrid(
        nx=nx,
        ny=ny,
        pitch_x=px,
        pitch_y=py,
        origin=np.array([ox, oy, oz]),
        altitude=altitude,
        labels=labels.copy(),
        no_multipath_digest=zero_digest,
    )


def save_registry(registry: CellRegistry, path: str | Path) -> None:
    rows = []
    for cid in sorted(registry.entries, key=lambda c: c.digest):
        entry = registry.entries[cid]
        vector = None
        if entry.vector is not None:
            bits = np.asarray(entry.vector, dtype=bool)
            vector = {
                "bit_length": int(bits.shape[0]),
                "packed": np.packbits(bits, bitorder="little").tobytes().hex(),
            }
        rows.append(
            {
                "digest": cid.hex,
                "no_multipath": cid.no_multipath,
                "color": list(entry.color),
                "first_seen_snapshot": entry.first_seen_snapshot,
                "vector": vector,
            }
        )
    doc = {"format": REGISTRY_FORMAT, "version": VERSION, "cells": rows}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_registry(path: str | Path) -> CellRegistry:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ArchiveError(f"{path}: no such file") from None
    except json.JSONDecodeError as err:
        raise ArchiveError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict) or doc.get("format") != REGISTRY_FORMAT:
        raise ArchiveError(f"{path}: not a registry file")
    registry = CellRegistry()
    for i, row in enumerate(doc.get("cells", [])):
        try:
            cid = CellId(bytes.fromhex(row["digest"]), bool(row["no_multipath"]))
            vector = None
            if row.get("vector") is not None:
                packed = np.frombuffer(bytes.fromhex(row["vector"]["packed"]), dtype=np.uint8)
                length = int(row["vector"]["bit_length"])
                vector = np.unpackbits(packed, bitorder="little")[:length].astype(bool)
            entry = CellEntry(
                color=tuple(int(c) for c in row["color"]),
                first_seen_snapshot=int(row["first_seen_snapshot"]),
                vector=vector,
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ArchiveError(f"{path}: cell {i}: {err}") from None
        registry.entries[cid] = entry
    return registry
