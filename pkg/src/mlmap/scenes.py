"""Parametric scene generators and the JSON scene file format.

The street-canyon generators place an axis-aligned layout centred at the
origin: x runs across the main street, y along it, z up. Buildings are
boxes without a bottom face, walls wound so normals point outward, with an
optional ground quad spanning the full area. The two-wall scene is a small
flat-land configuration used throughout the test suite.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .geometry import Facet, Scene

HEIGHT_MIN = 20.0
HEIGHT_MAX = 50.0
DEFAULT_HEIGHTS = (25.0, 28.0, 30.0, 22.0, 26.0, 29.0)
TX_ALTITUDE = 32.0
RX_ALTITUDE = 1.5
SCENE_FORMAT = "mlmap-scene"
SCENE_VERSION = 1
FIG2_WALL_HALF_HEIGHT = 50.0


class SceneFormatError(ValueError):
    """A scene file failed to parse or validate."""


@dataclass(frozen=True)
class CanyonParams:
    """Dimensions of the street-canyon layout, metres."""

    area: tuple[float, float] = (120.0, 185.0)
    main_street_width: float = 20.0
    cross_street_width: float = 15.0
    building_footprint: tuple[float, float] = (30.0, 30.0)
    building_heights: tuple[float, ...] = DEFAULT_HEIGHTS
    ground: bool = True
    one_sided_buildings: bool = True

    def validate(self) -> None:
        width, length = self.area
        depth, along = self.building_footprint
        if min(width, length, depth, along) <= 0 or self.main_street_width <= 0:
            raise ValueError("canyon dimensions must be positive")
        if self.cross_street_width < 0:
            raise ValueError("cross-street width must be non-negative")
        if len(self.building_heights) != 6:
            raise ValueError("exactly six building heights are required")
        for h in self.building_heights:
            if not (HEIGHT_MIN <= h <= HEIGHT_MAX):
                raise ValueError(
                    f"building height {h} outside [{HEIGHT_MIN}, {HEIGHT_MAX}] m"
                )
        if self.main_street_width + 2.0 * depth > width:
            raise ValueError("buildings do not fit across the area")
        if 3.0 * along + 2.0 * self.cross_street_width > length:
            raise ValueError("buildings do not fit along the area")


def _wall_quads(x0: float, x1: float, y0: float, y1: float, h: float) -> list[np.ndarray]:
    """Outward-wound walls and roof of a box [x0,x1]x[y0,y1]x[0,h], no bottom."""
    return [
        np.array([(x0, y0, 0), (x1, y0, 0), (x1, y0, h), (x0, y0, h)], float),
        np.array([(x1, y0, 0), (x1, y1, 0), (x1, y1, h), (x1, y0, h)], float),
        np.array([(x1, y1, 0), (x0, y1, 0), (x0, y1, h), (x1, y1, h)], float),
        np.array([(x0, y1, 0), (x0, y0, 0), (x0, y0, h), (x0, y1, h)], float),
        np.array([(x0, y0, h), (x1, y0, h), (x1, y1, h), (x0, y1, h)], float),
    ]


def _canyon_metadata(kind: str, params: CanyonParams) -> dict:
    width, length = params.area
    domain = [-width / 2.0, -length / 2.0, width / 2.0, length / 2.0]
    return {
        "kind": kind,
        "domain": domain,
        "tx_path": [[0.0, domain[1]], [0.0, domain[3]]],
        "tx_altitude": TX_ALTITUDE,
        "rx_altitude": RX_ALTITUDE,
        "params": asdict(params),
    }


def _canyon_layout(params: CanyonParams) -> tuple[list[tuple[float, float]], float, float]:
    """South edges of the three building rows, plus x extents of one side."""
    _, length = params.area
    depth, along = params.building_footprint
    built = 3.0 * along + 2.0 * params.cross_street_width
    y0 = -built / 2.0
    rows = [
        (y0 + i * (along + params.cross_street_width), 0.0) for i in range(3)
    ]
    x_inner = params.main_street_width / 2.0
    return rows, x_inner, depth


def generate_canyon_6b(params: CanyonParams = CanyonParams()) -> Scene:
    """Six-building street canyon: three buildings per side, cross streets between."""
    params.validate()
    rows, x_inner, depth = _canyon_layout(params)
    _, along = params.building_footprint
    facets = []
    one_sided = params.one_sided_buildings
    for side, (x0, x1) in enumerate(((-x_inner - depth, -x_inner), (x_inner, x_inner + depth))):
        for i, (ys, _) in enumerate(rows):
            h = params.building_heights[side * 3 + i]
            for quad in _wall_quads(x0, x1, ys, ys + along, h):
                facets.append(Facet(quad, one_sided=one_sided))
    if params.ground:
        facets.append(_ground_quad(params))
    return Scene.build(facets, _canyon_metadata("canyon6b", params))


def generate_canyon_2b(params: CanyonParams = CanyonParams()) -> Scene:
    """Two-building simplification: each side's buildings fused into one box."""
    params.validate()
    rows, x_inner, depth = _canyon_layout(params)
    _, along = params.building_footprint
    y_lo = rows[0][0]
    y_hi = rows[2][0] + along
    facets = []
    one_sided = params.one_sided_buildings
    for side, (x0, x1) in enumerate(((-x_inner - depth, -x_inner), (x_inner, x_inner + depth))):
        h = max(params.building_heights[side * 3 : side * 3 + 3])
        for quad in _wall_quads(x0, x1, y_lo, y_hi, h):
            facets.append(Facet(quad, one_sided=one_sided))
    if params.ground:
        facets.append(_ground_quad(params))
    return Scene.build(facets, _canyon_metadata("canyon2b", params))


def _ground_quad(params: CanyonParams) -> Facet:
    width, length = params.area
    x0, x1 = -width / 2.0, width / 2.0
    y0, y1 = -length / 2.0, length / 2.0
    quad = np.array([(x0, y0, 0), (x1, y0, 0), (x1, y1, 0), (x0, y1, 0)], float)
    return Facet(quad, one_sided=True)


def generate_fig2_scene() -> Scene:
    """Two parallel two-sided wall strips on a flat evaluation domain.

    Wall 1 runs from (0.5, 0.75) to (1.5, 0.75), wall 2 from (0.25, -0.75)
    to (1.25, -0.75), both extruded far enough in z that tracing at z = 0
    behaves exactly like the planar construction.
    """
    half = FIG2_WALL_HALF_HEIGHT
    walls = [
        ((0.5, 1.5), 0.75),
        ((0.25, 1.25), -0.75),
    ]
    facets = []
    for (x0, x1), y in walls:
        quad = np.array(
            [(x0, y, -half), (x1, y, -half), (x1, y, half), (x0, y, half)], float
        )
        facets.append(Facet(quad, one_sided=False))
    metadata = {
        "kind": "fig2",
        "domain": [-0.5, -1.5, 2.5, 1.5],
        "tx_path": [[0.0, 0.0], [0.0, 0.0]],
        "tx_altitude": 0.0,
        "rx_altitude": 0.0,
    }
    return Scene.build(facets, metadata)


def save_scene(scene: Scene, path: str | Path) -> None:
    """Write a scene as JSON; floats round-trip bit-exactly."""
    vertex_index: dict[tuple[float, float, float], int] = {}
    vertices: list[list[float]] = []
    facet_rows = []
    for facet in scene.facets:
        row = []
        for vertex in facet.vertices:
            key = (float(vertex[0]), float(vertex[1]), float(vertex[2]))
            if key not in vertex_index:
                vertex_index[key] = len(vertices)
                vertices.append(list(key))
            row.append(vertex_index[key])
        facet_rows.append({"vertices": row, "one_sided": facet.one_sided})
    doc = {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "metadata": scene.metadata,
        "vertices": vertices,
        "facets": facet_rows,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_scene(path: str | Path) -> Scene:
    """Read and validate a scene file; raises SceneFormatError on any defect."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise SceneFormatError(f"{path}: no such file") from None
    except json.JSONDecodeError as err:
        raise SceneFormatError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict) or doc.get("format") != SCENE_FORMAT:
        raise SceneFormatError(f"{path}: not a scene file")
    if doc.get("version") != SCENE_VERSION:
        raise SceneFormatError(f"{path}: unsupported version {doc.get('version')!r}")
    vertices = doc.get("vertices")
    facet_rows = doc.get("facets")
    if not isinstance(vertices, list) or not isinstance(facet_rows, list):
        raise SceneFormatError(f"{path}: missing vertices or facets")
    pool = np.asarray(vertices, dtype=np.float64)
    if pool.size and (pool.ndim != 2 or pool.shape[1] != 3):
        raise SceneFormatError(f"{path}: vertices must be triples")
    facets = []
    for i, row in enumerate(facet_rows):
        if not isinstance(row, dict) or "vertices" not in row:
            raise SceneFormatError(f"{path}: facet {i}: malformed entry")
        idx = row["vertices"]
        if not isinstance(idx, list) or len(idx) not in (3, 4):
            raise SceneFormatError(f"{path}: facet {i}: needs 3 or 4 vertex indices")
        for j in idx:
            if not isinstance(j, int) or j < 0 or j >= len(vertices):
                raise SceneFormatError(f"{path}: facet {i}: vertex index {j} out of range")
        try:
            facets.append(Facet(pool[idx], one_sided=bool(row.get("one_sided", False))))
        except ValueError as err:
            raise SceneFormatError(f"{path}: facet {i}: {err}") from None
    metadata = doc.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise SceneFormatError(f"{path}: metadata must be an object")
    return Scene.build(facets, metadata)
