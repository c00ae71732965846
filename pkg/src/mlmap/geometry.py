"""Planar-facet geometry: mirroring, ray hits, occlusion, coplanar merging.

Coordinates are metres in a right-handed frame. A facet is a convex planar
polygon with 3 or 4 vertices; the vertex winding fixes its normal by the
right-hand rule. Scenes are immutable after construction and safe to share
across worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

EPS_OCCLUSION = 1e-6  # open-segment margin and minimum hit parameter, metres
EDGE_TOL = 1e-9       # point-in-polygon boundary tolerance, metres
PLANARITY_TOL = 1e-6  # max vertex deviation from the fitted plane, metres
UNIT_TOL = 1e-9       # plane normal unit-length budget
MIN_AREA = 1e-9       # smallest legal facet area, m^2
_PARALLEL = 1e-12     # |normal . dir| below this counts as parallel


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


class NonManifoldError(ValueError):
    """An edge is shared by more than two facets."""


@dataclass(eq=False)
class Plane:
    """Oriented plane x . normal = offset with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        self.normal = np.asarray(self.normal, dtype=np.float64)
        if self.normal.shape != (3,):
            raise ValueError("plane normal must be a 3-vector")
        if abs(np.linalg.norm(self.normal) - 1.0) > UNIT_TOL:
            raise ValueError("plane normal must be unit length")
        self.offset = float(self.offset)
        self.normal.setflags(write=False)

    @classmethod
    def from_point_normal(cls, point: np.ndarray, normal: np.ndarray) -> "Plane":
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return cls(n, float(np.dot(point, n)))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance of one point (3,) or a batch (..., 3)."""
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset


def mirror_point(p: np.ndarray, plane: Plane) -> np.ndarray:
    """Reflect a point (3,) or batch (..., 3) across the plane."""
    p = np.asarray(p, dtype=np.float64)
    d = p @ plane.normal - plane.offset
    return p - 2.0 * np.multiply.outer(d, plane.normal)


def _newell_normal(vertices: np.ndarray) -> np.ndarray:
    """Area-weighted polygon normal; robust for any planar winding."""
    v = vertices
    w = np.roll(v, -1, axis=0)
    return np.array(
        [
            np.sum((v[:, 1] - w[:, 1]) * (v[:, 2] + w[:, 2])),
            np.sum((v[:, 2] - w[:, 2]) * (v[:, 0] + w[:, 0])),
            np.sum((v[:, 0] - w[:, 0]) * (v[:, 1] + w[:, 1])),
        ]
    )


@dataclass(eq=False)
class Facet:
    """Convex planar polygon with 3 or 4 vertices.

    Derived quantities (plane, area, bounding box, edge frames for the
    point-in-polygon test) are computed once at construction. The vertex
    winding must be counter-clockwise when viewed from the normal side;
    construction rejects anything non-planar, non-convex, or degenerate.
    """

    vertices: np.ndarray
    id: int = -1
    one_sided: bool = False
    plane: Plane = field(init=False)
    area: float = field(init=False)
    aabb: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        verts = np.asarray(self.vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] not in (3, 4):
            raise ValueError("facet needs 3 or 4 vertices of 3 coordinates")
        if not np.all(np.isfinite(verts)):
            raise ValueError("facet vertices must be finite")
        raw = _newell_normal(verts)
        norm = float(np.linalg.norm(raw))
        area = 0.5 * norm
        if area <= MIN_AREA:
            raise ValueError(f"degenerate facet, area {area:g} m^2")
        normal = raw / norm
        offset = float(np.mean(verts @ normal))
        if np.max(np.abs(verts @ normal - offset)) > PLANARITY_TOL:
            raise ValueError("facet vertices are not coplanar")

        edges = np.roll(verts, -1, axis=0) - verts
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths <= 0.0):
            raise ValueError("facet has a zero-length edge")
        nxt = np.roll(edges, -1, axis=0)
        corner = np.einsum("ij,ij->i", np.cross(edges, nxt), np.broadcast_to(normal, edges.shape))
        # strict convexity: every corner turns the same way as the normal
        if np.any(corner <= EDGE_TOL * lengths * np.roll(lengths, -1)):
            raise ValueError("facet is not strictly convex")

        inward = np.cross(np.broadcast_to(normal, edges.shape), edges)
        inward /= np.linalg.norm(inward, axis=1)[:, None]
        if verts.shape[0] == 3:
            # pad the edge frame to 4 by repeating the first edge
            verts_pad = np.vstack([verts, verts[:1]])
            inward = np.vstack([inward, inward[:1]])
            self._edge_origin = verts_pad
        else:
            self._edge_origin = verts.copy()
        self._edge_inward = inward

        self.vertices = verts
        self.plane = Plane(normal, offset)
        self.area = area
        self.aabb = np.stack([verts.min(axis=0), verts.max(axis=0)])
        for arr in (self.vertices, self.aabb, self._edge_origin, self._edge_inward):
            arr.setflags(write=False)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def point_in_facet(facet: Facet, points: np.ndarray, strict: bool = False) -> np.ndarray:
    """Membership test for points (..., 3) already lying in the facet plane.

    Inclusive mode counts the boundary as inside within EDGE_TOL; strict mode
    requires points to clear every edge by more than EDGE_TOL.
    """
    rel = np.asarray(points, dtype=np.float64)[..., None, :] - facet._edge_origin
    d = np.einsum("...ej,ej->...e", rel, facet._edge_inward)
    m = d.min(axis=-1)
    if strict:
        return m > EDGE_TOL
    return m >= -EDGE_TOL


def ray_facet_intersection(
    origin: np.ndarray,
    direction: np.ndarray,
    facet: Facet,
    tmin: float = EPS_OCCLUSION,
) -> tuple[float, np.ndarray] | None:
    """First hit of a unit-direction ray on the facet, or None.

    Returns (t, point) with t > tmin; edge hits count as hits. Rays parallel
    to the plane (including rays inside it) miss.
    """
    n = facet.plane.normal
    denom = float(np.dot(n, direction))
    if abs(denom) < _PARALLEL:
        return None
    t = (facet.plane.offset - float(np.dot(n, origin))) / denom
    if t <= tmin:
        return None
    point = np.asarray(origin, dtype=np.float64) + t * np.asarray(direction, dtype=np.float64)
    if not point_in_facet(facet, point):
        return None
    return t, point


def _segment_hits_facet(a: np.ndarray, b: np.ndarray, facet: Facet) -> bool:
    """True if the open segment (a, b) crosses the facet clear of both ends."""
    axis = b - a
    length = float(np.linalg.norm(axis))
    if length <= 2.0 * EPS_OCCLUSION:
        return False
    n = facet.plane.normal
    denom = float(np.dot(n, axis)) / length
    if abs(denom) < _PARALLEL:
        return False
    t = (facet.plane.offset - float(np.dot(n, a))) / denom
    if t <= EPS_OCCLUSION or t >= length - EPS_OCCLUSION:
        return False
    return bool(point_in_facet(facet, a + (t / length) * axis))


def segment_occluded(
    a: np.ndarray,
    b: np.ndarray,
    scene: "Scene",
    ignore: Iterable[int] = (),
) -> bool:
    """True iff some facet not in ignore blocks the open segment (a, b).

    Hits within EPS_OCCLUSION of either endpoint do not count, so a path
    vertex sitting on a facet never occludes its own segments. The answer
    matches a brute-force scan over all facets; the acceleration index only
    prunes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    skip = frozenset(ignore)
    for fid in scene.accel.segment_candidates(a, b):
        if fid in skip:
            continue
        if _segment_hits_facet(a, b, scene.facets[fid]):
            return True
    return False


def segments_occluded(
    a: np.ndarray,
    b: np.ndarray,
    scene: "Scene",
    ignore: Iterable[int] = (),
    active: np.ndarray | None = None,
) -> np.ndarray:
    """Vectorised occlusion for P segments given as (P, 3) endpoint arrays.

    `active` masks rows worth testing; inactive rows come back False and their
    coordinates are never touched, so callers may leave garbage there.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    count = a.shape[0]
    blocked = np.zeros(count, dtype=bool)
    if not scene.facets:
        return blocked
    todo = np.ones(count, dtype=bool) if active is None else active.copy()
    idx_all = np.nonzero(todo)[0]
    if idx_all.size == 0:
        return blocked
    lo = np.minimum(a[idx_all], b[idx_all]) - EPS_OCCLUSION
    hi = np.maximum(a[idx_all], b[idx_all]) + EPS_OCCLUSION
    axis = b[idx_all] - a[idx_all]
    length = np.linalg.norm(axis, axis=1)
    long_enough = length > 2.0 * EPS_OCCLUSION
    skip = frozenset(ignore)
    alive = np.ones(idx_all.size, dtype=bool)
    for facet in scene.facets:
        if facet.id in skip:
            continue
        cand = alive & long_enough
        cand &= np.all(hi >= facet.aabb[0], axis=1) & np.all(lo <= facet.aabb[1], axis=1)
        sub = np.nonzero(cand)[0]
        if sub.size == 0:
            continue
        n = facet.plane.normal
        denom = axis[sub] @ n / length[sub]
        ok = np.abs(denom) >= _PARALLEL
        t = np.where(ok, (facet.plane.offset - a[idx_all[sub]] @ n) / np.where(ok, denom, 1.0), -1.0)
        ok &= (t > EPS_OCCLUSION) & (t < length[sub] - EPS_OCCLUSION)
        if not np.any(ok):
            continue
        inner = np.nonzero(ok)[0]
        pts = a[idx_all[sub[inner]]] + (t[inner] / length[sub[inner]])[:, None] * axis[sub[inner]]
        hit = point_in_facet(facet, pts)
        hit_rows = sub[inner[hit]]
        blocked[idx_all[hit_rows]] = True
        alive[hit_rows] = False
        if not np.any(alive):
            break
    return blocked


@dataclass(eq=False)
class UniformGridAccel:
    """Regular-grid spatial index over facet bounding boxes.

    Conservative by construction: any facet whose bounding box overlaps a
    query's bounding box shares at least one grid cell with it, so candidate
    sets are supersets of the true hits.
    """

    lo: np.ndarray
    hi: np.ndarray
    dims: np.ndarray
    table: dict[int, np.ndarray]

    @classmethod
    def build(cls, facets: Sequence[Facet]) -> "UniformGridAccel":
        if not facets:
            return cls(np.zeros(3), np.zeros(3), np.ones(3, dtype=np.int64), {})
        boxes = np.stack([f.aabb for f in facets])
        lo = boxes[:, 0].min(axis=0) - EPS_OCCLUSION
        hi = boxes[:, 1].max(axis=0) + EPS_OCCLUSION
        extent = hi - lo
        side = int(min(16, max(1, round(len(facets) ** (1.0 / 3.0)))))
        dims = np.where(extent > 0.0, side, 1).astype(np.int64)
        index = cls(lo, hi, dims, {})
        buckets: dict[int, list[int]] = {}
        for f in facets:
            c0, c1 = index._cell_range(f.aabb[0], f.aabb[1])
            for key in index._keys_between(c0, c1):
                buckets.setdefault(key, []).append(f.id)
        index.table = {k: np.array(sorted(v), dtype=np.int64) for k, v in buckets.items()}
        return index

    def _cell_range(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        extent = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        c0 = np.floor((lo - self.lo) / extent * self.dims).astype(np.int64)
        c1 = np.floor((hi - self.lo) / extent * self.dims).astype(np.int64)
        c0 = np.clip(c0, 0, self.dims - 1)
        c1 = np.clip(c1, 0, self.dims - 1)
        return c0, c1

    def _keys_between(self, c0: np.ndarray, c1: np.ndarray) -> Iterable[int]:
        ny, nz = int(self.dims[1]), int(self.dims[2])
        for ix in range(int(c0[0]), int(c1[0]) + 1):
            for iy in range(int(c0[1]), int(c1[1]) + 1):
                base = (ix * ny + iy) * nz
                for iz in range(int(c0[2]), int(c1[2]) + 1):
                    yield base + iz

    def segment_candidates(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Facet ids possibly crossing segment ab; a conservative superset."""
        if not self.table:
            return np.empty(0, dtype=np.int64)
        lo = np.minimum(a, b) - EPS_OCCLUSION
        hi = np.maximum(a, b) + EPS_OCCLUSION
        if np.any(hi < self.lo) or np.any(lo > self.hi):
            return np.empty(0, dtype=np.int64)
        c0, c1 = self._cell_range(lo, hi)
        found: list[np.ndarray] = []
        for key in self._keys_between(c0, c1):
            ids = self.table.get(key)
            if ids is not None:
                found.append(ids)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(found))


def build_accel(facets: Sequence[Facet]) -> UniformGridAccel:
    return UniformGridAccel.build(facets)


@dataclass(eq=False)
class Scene:
    """Immutable facet collection with a spatial index and overall bounds."""

    facets: list[Facet]
    accel: UniformGridAccel
    bounds: np.ndarray
    metadata: dict

    @classmethod
    def build(cls, facets: Sequence[Facet], metadata: dict | None = None) -> "Scene":
        facets = list(facets)
        for i, f in enumerate(facets):
            f.id = i
        accel = build_accel(facets)
        if facets:
            boxes = np.stack([f.aabb for f in facets])
            bounds = np.stack([boxes[:, 0].min(axis=0), boxes[:, 1].max(axis=0)])
        else:
            bounds = np.zeros((2, 3))
        return cls(facets, accel, bounds, dict(metadata or {}))

    @property
    def n_facets(self) -> int:
        return len(self.facets)


def _merge_loops(
    loop_a: list[tuple[float, float, float]],
    loop_b: list[tuple[float, float, float]],
    u: tuple[float, float, float],
    v: tuple[float, float, float],
) -> list[tuple[float, float, float]]:
    """Union polygon of two loops sharing the undirected edge (u, v)."""
    ia = loop_a.index(u)
    if loop_a[(ia + 1) % len(loop_a)] != v:
        u, v = v, u
    # all of A starting at v, then B's vertices strictly between u and v
    merged = []
    k = loop_a.index(v)
    for step in range(len(loop_a)):
        merged.append(loop_a[(k + step) % len(loop_a)])
    k = (loop_b.index(u) + 1) % len(loop_b)
    for step in range(len(loop_b) - 2):
        merged.append(loop_b[(k + step) % len(loop_b)])
    return merged


def merge_coplanar_facets(facets: Sequence[Facet]) -> list[Facet]:
    """Greedily merge edge-adjacent coplanar facets while unions stay convex.

    Runs to a fixpoint, rejects non-manifold meshes (an edge shared by more
    than two facets), and reassigns ids densely in a deterministic order
    keyed by each facet's lexicographically smallest vertex.
    """
    loops: list[tuple[list[tuple[float, float, float]], bool]] = [
        ([tuple(v) for v in f.vertices], f.one_sided) for f in facets
    ]

    def edge_map(items):
        edges: dict[tuple, list[int]] = {}
        for idx, (loop, _) in enumerate(items):
            for j, p in enumerate(loop):
                q = loop[(j + 1) % len(loop)]
                key = (p, q) if p <= q else (q, p)
                edges.setdefault(key, []).append(idx)
        return edges

    changed = True
    while changed:
        changed = False
        edges = edge_map(loops)
        for key, owners in edges.items():
            if len(owners) > 2:
                raise NonManifoldError(
                    f"edge {key[0]}-{key[1]} shared by {len(owners)} facets"
                )
        for key in sorted(edges):
            owners = edges[key]
            if len(owners) != 2:
                continue
            ia, ib = owners
            if ia == ib:
                continue
            loop_a, flag_a = loops[ia]
            loop_b, flag_b = loops[ib]
            if flag_a != flag_b:
                continue
            if len(loop_a) + len(loop_b) - 2 > 4:
                continue
            va = np.array(loop_a)
            vb = np.array(loop_b)
            na = _newell_normal(va)
            nb = _newell_normal(vb)
            na = na / np.linalg.norm(na)
            if float(np.dot(na, nb)) <= 0.0:
                continue
            off = float(np.mean(va @ na))
            if np.max(np.abs(vb @ na - off)) > PLANARITY_TOL:
                continue
            merged = _merge_loops(loop_a, loop_b, key[0], key[1])
            try:
                Facet(np.array(merged, dtype=np.float64))
            except ValueError:
                continue
            loops[ia] = (merged, flag_a)
            del loops[ib]
            changed = True
            break

    loops.sort(key=lambda item: (min(item[0]), sorted(item[0])))
    return [
        Facet(np.array(loop, dtype=np.float64), id=i, one_sided=flag)
        for i, (loop, flag) in enumerate(loops)
    ]
