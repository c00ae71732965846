"""Path-candidate enumeration and image-method tracing.

A path candidate is an ordered tuple of facet ids; the empty tuple is line
of sight. Candidates of order k are solved by mirroring the transmitter
across the k facet planes in sequence and back-substituting reflection
points from the receiver. Everything here is pure and deterministic, so
receivers can be evaluated in parallel without changing a single bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Scene, mirror_point, point_in_facet, segments_occluded

DEFAULT_BUDGET = 10_000_000


class BudgetExceededError(ValueError):
    """Candidate enumeration would exceed the configured budget."""

    def __init__(self, n_facets: int, max_order: int, total: int, budget: int):
        self.n_facets = n_facets
        self.max_order = max_order
        self.total = total
        self.budget = budget
        super().__init__(
            f"enumeration for N={n_facets} facets at max order K={max_order} "
            f"needs {total} candidates, over the budget of {budget}"
        )


def candidate_count(n_facets: int, order: int) -> int:
    """Number of order-k candidates: 1 for LOS, N(N-1)^(k-1) above."""
    if order == 0:
        return 1
    if n_facets == 0:
        return 0
    return n_facets * (n_facets - 1) ** (order - 1)


@dataclass(eq=False)
class CandidateEnumeration:
    """Canonical candidate list: ascending order, lexicographic within."""

    n_facets: int
    max_order: int
    by_order: list[np.ndarray]
    total_count: int

    def candidate(self, index: int) -> tuple[int, ...]:
        """Candidate at a flat position in the canonical ordering."""
        if index < 0 or index >= self.total_count:
            raise IndexError(f"candidate index {index} out of range")
        for rows in self.by_order:
            if index < rows.shape[0]:
                return tuple(int(v) for v in rows[index])
            index -= rows.shape[0]
        raise IndexError("corrupt enumeration")  # pragma: no cover

    def candidates(self):
        for rows in self.by_order:
            for row in rows:
                yield tuple(int(v) for v in row)

    def __len__(self) -> int:
        return self.total_count


def enumerate_candidates(
    n_facets: int, max_order: int, budget: int = DEFAULT_BUDGET
) -> CandidateEnumeration:
    """All candidates of order 0..max_order in canonical order.

    The total count is checked against the budget before anything is
    materialised, so an oversized request fails fast and cheaply.
    """
    if n_facets < 0 or max_order < 0:
        raise ValueError("facet count and max order must be non-negative")
    total = sum(candidate_count(n_facets, k) for k in range(max_order + 1))
    if total > budget:
        raise BudgetExceededError(n_facets, max_order, total, budget)

    by_order = [np.zeros((1, 0), dtype=np.int32)]
    prev = None
    for order in range(1, max_order + 1):
        if order == 1:
            rows = np.arange(n_facets, dtype=np.int32).reshape(n_facets, 1)
        elif prev is None or prev.shape[0] == 0 or n_facets <= 1:
            rows = np.zeros((0, order), dtype=np.int32)
        else:
            # extend each prefix with every facet except its last entry;
            # shifting the compressed choice index keeps rows lexicographic
            rep = np.repeat(prev, n_facets - 1, axis=0)
            choice = np.tile(np.arange(n_facets - 1, dtype=np.int32), prev.shape[0])
            last = rep[:, -1]
            nxt = choice + (choice >= last)
            rows = np.concatenate([rep, nxt[:, None]], axis=1)
        by_order.append(rows)
        prev = rows
    return CandidateEnumeration(n_facets, max_order, by_order, total)


@dataclass(eq=False)
class TracedPath:
    """A resolved specular path from TX through reflections to RX."""

    candidate: tuple[int, ...]
    vertices: np.ndarray
    length: float


@dataclass(eq=False)
class ValidityVector:
    """Bit per candidate of one enumeration for a single TX/RX pair."""

    bits: np.ndarray

    def __len__(self) -> int:
        return int(self.bits.shape[0])


def _reflection_points(
    tx: np.ndarray,
    rx: np.ndarray,
    candidate: tuple[int, ...],
    scene: Scene,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Solve reflection points for a batch of receivers (P, 3).

    Mirrors TX across the candidate's planes to get images I_1..I_k, then
    walks back from RX: the j-th reflection point is the intersection of the
    segment toward I_j with facet j's plane, accepted only when the segment
    endpoints straddle the plane (strictly opposite signed distances) and
    the point falls strictly inside the facet. Invalid rows keep garbage
    coordinates; the validity mask is authoritative.
    """
    order = len(candidate)
    images = [np.asarray(tx, dtype=np.float64)]
    for fid in candidate:
        images.append(mirror_point(images[-1], scene.facets[fid].plane))

    valid = np.ones(rx.shape[0], dtype=bool)
    points: list[np.ndarray] = [np.empty(0)] * order
    cursor = np.asarray(rx, dtype=np.float64)
    for j in range(order, 0, -1):
        facet = scene.facets[candidate[j - 1]]
        normal, offset = facet.plane.normal, facet.plane.offset
        d_cur = cursor @ normal - offset
        d_img = float(images[j] @ normal - offset)
        straddle = (d_cur * d_img) < 0.0
        denom = d_cur - d_img
        safe = np.where(denom == 0.0, 1.0, denom)
        s = np.where(straddle, d_cur / safe, 0.5)
        point = cursor + s[:, None] * (images[j][None, :] - cursor)
        ok = straddle & point_in_facet(facet, point, strict=True)
        if facet.one_sided:
            ok &= d_cur > 0.0
        valid &= ok
        points[j - 1] = point
        cursor = point
    return valid, points


def candidate_validity(
    tx: np.ndarray,
    rx: np.ndarray,
    candidate: tuple[int, ...],
    scene: Scene,
) -> np.ndarray:
    """Validity of one candidate for a batch of receivers (P, 3) -> (P,) bool.

    A candidate is valid when its reflection points resolve inside their
    facets on the reflective side and every segment of the path is clear of
    all facets except the ones adjacent to that segment's endpoints.
    """
    rx = np.asarray(rx, dtype=np.float64)
    tx_row = np.broadcast_to(np.asarray(tx, dtype=np.float64), rx.shape)
    order = len(candidate)
    if order == 0:
        return ~segments_occluded(tx_row, rx, scene)
    valid, points = _reflection_points(tx, rx, candidate, scene)
    if not np.any(valid):
        return valid
    hops = [tx_row, *points, rx]
    for seg in range(order + 1):
        ignore = set()
        if seg > 0:
            ignore.add(candidate[seg - 1])
        if seg < order:
            ignore.add(candidate[seg])
        valid &= ~segments_occluded(hops[seg], hops[seg + 1], scene, ignore, active=valid)
        if not np.any(valid):
            break
    return valid


def trace_candidate(
    tx: np.ndarray,
    rx: np.ndarray,
    candidate: tuple[int, ...],
    scene: Scene,
) -> TracedPath | None:
    """Resolve one candidate for a single receiver, or None when invalid."""
    tx = np.asarray(tx, dtype=np.float64)
    rx_batch = np.asarray(rx, dtype=np.float64).reshape(1, 3)
    if len(candidate) == 0:
        if bool(segments_occluded(tx.reshape(1, 3), rx_batch, scene)[0]):
            return None
        vertices = np.stack([tx, rx_batch[0]])
    else:
        if not bool(candidate_validity(tx, rx_batch, candidate, scene)[0]):
            return None
        _, points = _reflection_points(tx, rx_batch, candidate, scene)
        vertices = np.stack([tx, *[p[0] for p in points], rx_batch[0]])
    length = float(np.sum(np.linalg.norm(np.diff(vertices, axis=0), axis=1)))
    return TracedPath(tuple(candidate), vertices, length)


def validity_vector(
    tx: np.ndarray,
    rx: np.ndarray,
    enumeration: CandidateEnumeration,
    scene: Scene,
) -> ValidityVector:
    """Validity bits of every candidate for a single TX/RX pair."""
    rx_batch = np.asarray(rx, dtype=np.float64).reshape(1, 3)
    bits = np.empty(enumeration.total_count, dtype=bool)
    for j, candidate in enumerate(enumeration.candidates()):
        bits[j] = bool(candidate_validity(tx, rx_batch, candidate, scene)[0])
    return ValidityVector(bits)
