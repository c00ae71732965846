from __future__ import annotations

import numpy as np
import pytest

from mlmap.geometry import (
    Facet,
    NonManifoldError,
    Plane,
    Scene,
    build_accel,
    merge_coplanar_facets,
    mirror_point,
    point_in_facet,
    ray_facet_intersection,
    segment_occluded,
    segments_occluded,
    vec3,
)

from oracles import (
    brute_occluded,
    fan_area,
    random_rect_facet,
    random_triangle_facet,
)

Z0 = Plane(np.array([0.0, 0.0, 1.0]), 0.0)


def unit_square(z: float = 5.0) -> Facet:
    return Facet(
        np.array([(-0.5, -0.5, z), (0.5, -0.5, z), (0.5, 0.5, z), (-0.5, 0.5, z)])
    )


def scene_of(vertex_lists, **kwargs) -> Scene:
    return Scene.build([Facet(np.asarray(v, float), **kwargs) for v in vertex_lists])


class TestPlane:
    def test_rejects_non_unit_normal(self):
        with pytest.raises(ValueError):
            Plane(np.array([0.0, 0.0, 2.0]), 0.0)

    def test_from_point_normal_normalizes(self):
        plane = Plane.from_point_normal(vec3(0, 0, 3), vec3(0, 0, 10))
        assert plane.offset == pytest.approx(3.0)

    def test_signed_distance_batch(self):
        pts = np.array([[0.0, 0.0, 1.5], [2.0, -1.0, -0.5]])
        assert np.allclose(Z0.signed_distance(pts), [1.5, -0.5])


class TestMirror:
    def test_axis_aligned(self):
        assert np.allclose(mirror_point(vec3(1, 2, 3), Z0), [1, 2, -3])

    def test_point_on_plane_fixed(self):
        assert np.allclose(mirror_point(vec3(4, -7, 0), Z0), [4, -7, 0])

    def test_offset_plane(self):
        x2 = Plane(np.array([1.0, 0.0, 0.0]), 2.0)
        assert np.allclose(mirror_point(vec3(0, 0, 0), x2), [4, 0, 0])

    def test_involution_random(self, rng):
        for _ in range(50):
            n = rng.normal(size=3)
            plane = Plane(n / np.linalg.norm(n), float(rng.uniform(-5, 5)))
            p = rng.uniform(-10, 10, size=3)
            assert np.allclose(mirror_point(mirror_point(p, plane), plane), p, atol=1e-9)

    def test_signed_distances_negate(self, rng):
        n = rng.normal(size=3)
        plane = Plane(n / np.linalg.norm(n), 1.25)
        pts = rng.uniform(-10, 10, size=(20, 3))
        assert np.allclose(
            plane.signed_distance(mirror_point(pts, plane)),
            -plane.signed_distance(pts),
        )


class TestFacetValidation:
    def test_square_area_and_normal(self):
        f = unit_square()
        assert f.area == pytest.approx(1.0)
        assert np.allclose(f.plane.normal, [0, 0, 1])

    def test_winding_flips_normal(self):
        f = Facet(np.array([(-0.5, -0.5, 0.0), (-0.5, 0.5, 0.0), (0.5, 0.5, 0.0), (0.5, -0.5, 0.0)]))
        assert np.allclose(f.plane.normal, [0, 0, -1])

    def test_rejects_five_vertices(self):
        with pytest.raises(ValueError):
            Facet(np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0.5, 1.5, 0), (0, 1, 0)], dtype=float))

    def test_rejects_non_planar(self):
        with pytest.raises(ValueError, match="coplanar"):
            Facet(np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0.01), (0, 1, 0)], dtype=float))

    def test_rejects_degenerate_area(self):
        with pytest.raises(ValueError):
            Facet(np.array([(0, 0, 0), (1e-6, 0, 0), (0, 1e-6, 0)], dtype=float))

    def test_rejects_collinear_vertex(self):
        with pytest.raises(ValueError, match="convex"):
            Facet(np.array([(0, 0, 0), (1, 0, 0), (2, 0, 0), (1, 1, 0)], dtype=float))

    def test_rejects_reflex_quad(self):
        with pytest.raises(ValueError, match="convex"):
            Facet(np.array([(0, 0, 0), (2, 0, 0), (0.2, 0.2, 0), (0, 2, 0)], dtype=float))


class TestPointInFacet:
    def test_interior_and_exterior(self):
        f = unit_square(0.0)
        assert point_in_facet(f, vec3(0, 0, 0))
        assert not point_in_facet(f, vec3(0.6, 0, 0))

    def test_edge_inclusive_vs_strict(self):
        f = unit_square(0.0)
        edge = vec3(0.5, 0.0, 0.0)
        assert point_in_facet(f, edge)
        assert not point_in_facet(f, edge, strict=True)

    def test_batch_shape(self):
        f = unit_square(0.0)
        pts = np.array([[0, 0, 0], [2, 0, 0], [0.25, -0.25, 0]], dtype=float)
        assert point_in_facet(f, pts).tolist() == [True, False, True]

    def test_triangle_padding_not_degenerate(self):
        f = Facet(np.array([(0, 0, 0), (2, 0, 0), (0, 2, 0)], dtype=float))
        assert point_in_facet(f, vec3(0.5, 0.5, 0))
        assert point_in_facet(f, vec3(1.0, 1.0, 0))
        assert not point_in_facet(f, vec3(1.1, 1.1, 0))


class TestRayFacet:
    def test_straight_hit(self):
        hit = ray_facet_intersection(vec3(0, 0, 0), vec3(0, 0, 1), unit_square(5.0))
        assert hit is not None
        t, point = hit
        assert t == pytest.approx(5.0)
        assert np.allclose(point, [0, 0, 5])

    def test_behind_origin(self):
        assert ray_facet_intersection(vec3(0, 0, 0), vec3(0, 0, 1), unit_square(-5.0)) is None

    def test_parallel_ray(self):
        assert ray_facet_intersection(vec3(0, 0, 0), vec3(1, 0, 0), unit_square(5.0)) is None

    def test_miss_outside_polygon(self):
        assert ray_facet_intersection(vec3(2, 2, 0), vec3(0, 0, 1), unit_square(5.0)) is None

    def test_edge_hit_counts(self):
        hit = ray_facet_intersection(vec3(0.5, 0.0, 0.0), vec3(0, 0, 1), unit_square(5.0))
        assert hit is not None

    def test_below_tmin(self):
        assert ray_facet_intersection(vec3(0, 0, 5 - 1e-7), vec3(0, 0, 1), unit_square(5.0)) is None


class TestOcclusion:
    def test_empty_scene(self):
        scene = Scene.build([])
        assert not segment_occluded(vec3(0, 0, 0), vec3(2, 0, 0), scene)

    def test_wall_blocks(self):
        scene = scene_of([[(1, -2, -2), (1, 2, -2), (1, 2, 2), (1, -2, 2)]])
        assert segment_occluded(vec3(0, 0, 0), vec3(2, 0, 0), scene)

    def test_ignore_set(self):
        scene = scene_of([[(1, -2, -2), (1, 2, -2), (1, 2, 2), (1, -2, 2)]])
        assert not segment_occluded(vec3(0, 0, 0), vec3(2, 0, 0), scene, ignore={0})

    def test_endpoint_on_facet_does_not_occlude(self):
        scene = scene_of([[(1, -2, -2), (1, 2, -2), (1, 2, 2), (1, -2, 2)]])
        assert not segment_occluded(vec3(1, 0, 0), vec3(2, 0, 0), scene)

    def test_symmetry(self, rng):
        facets = [random_rect_facet(rng) for _ in range(5)]
        scene = scene_of(facets)
        for _ in range(100):
            a = rng.uniform(-6, 6, size=3)
            b = rng.uniform(-6, 6, size=3)
            assert segment_occluded(a, b, scene) == segment_occluded(b, a, scene)

    def test_matches_brute_force_and_batch(self, rng):
        for trial in range(10):
            facets = [random_rect_facet(rng) for _ in range(10)] + [
                random_triangle_facet(rng) for _ in range(5)
            ]
            scene = scene_of(facets)
            pairs = [f.vertices for f in scene.facets]
            starts = rng.uniform(-6, 6, size=(100, 3))
            ends = rng.uniform(-6, 6, size=(100, 3))
            batch = segments_occluded(starts, ends, scene)
            for i in range(100):
                expected = brute_occluded(starts[i], ends[i], enumerate(pairs))
                assert segment_occluded(starts[i], ends[i], scene) == expected
                assert bool(batch[i]) == expected

    def test_batch_respects_ignore_and_active(self, rng):
        facets = [random_rect_facet(rng) for _ in range(6)]
        scene = scene_of(facets)
        starts = rng.uniform(-6, 6, size=(40, 3))
        ends = rng.uniform(-6, 6, size=(40, 3))
        ignore = {1, 4}
        pairs = [f.vertices for f in scene.facets]
        batch = segments_occluded(starts, ends, scene, ignore=ignore)
        for i in range(40):
            assert bool(batch[i]) == brute_occluded(starts[i], ends[i], enumerate(pairs), ignore)
        active = np.zeros(40, dtype=bool)
        active[::3] = True
        masked = segments_occluded(starts, ends, scene, ignore=ignore, active=active)
        assert not masked[~active].any()
        assert np.array_equal(masked[active], batch[active])


class TestAccel:
    def test_empty(self):
        accel = build_accel([])
        assert accel.segment_candidates(vec3(0, 0, 0), vec3(1, 1, 1)).size == 0

    def test_single_facet(self):
        f = unit_square(0.0)
        f.id = 0
        accel = build_accel([f])
        cands = accel.segment_candidates(vec3(0, 0, -1), vec3(0, 0, 1))
        assert cands.tolist() == [0]

    def test_candidates_are_conservative(self, rng):
        facets = []
        for i in range(100):
            verts = random_rect_facet(rng, scale=1.0, center_spread=8.0)
            f = Facet(verts)
            f.id = i
            facets.append(f)
        accel = build_accel(facets)
        for _ in range(200):
            a = rng.uniform(-9, 9, size=3)
            b = rng.uniform(-9, 9, size=3)
            cands = set(accel.segment_candidates(a, b).tolist())
            for f in facets:
                from mlmap.geometry import _segment_hits_facet

                if _segment_hits_facet(a, b, f):
                    assert f.id in cands


class TestMerge:
    def test_two_triangles_make_square(self):
        t1 = Facet(np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0)], dtype=float))
        t2 = Facet(np.array([(0, 0, 0), (1, 1, 0), (0, 1, 0)], dtype=float))
        merged = merge_coplanar_facets([t1, t2])
        assert len(merged) == 1
        assert merged[0].area == pytest.approx(1.0)
        assert merged[0].vertices.shape == (4, 3)

    def test_shared_vertex_only_not_merged(self):
        t1 = Facet(np.array([(0, 0, 0), (1, 0, 0), (0, 1, 0)], dtype=float))
        t2 = Facet(np.array([(1, 1, 0), (2, 1, 0), (1, 2, 0)], dtype=float))
        assert len(merge_coplanar_facets([t1, t2])) == 2

    def test_non_coplanar_not_merged(self):
        t1 = Facet(np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0)], dtype=float))
        t2 = Facet(np.array([(0, 0, 0), (1, 1, 0), (0, 1, 0.5)], dtype=float))
        assert len(merge_coplanar_facets([t1, t2])) == 2

    def test_box_of_triangles(self):
        quads = []
        for axis in range(3):
            for side in (0.0, 1.0):
                corners = []
                for u in (0.0, 1.0):
                    for v in (0.0, 1.0):
                        p = [0.0, 0.0, 0.0]
                        p[axis] = side
                        p[(axis + 1) % 3] = u
                        p[(axis + 2) % 3] = v
                        corners.append(p)
                quad = np.array([corners[0], corners[1], corners[3], corners[2]])
                quads.append(quad)
        tris = []
        for quad in quads:
            tris.append(Facet(quad[[0, 1, 2]]))
            tris.append(Facet(quad[[0, 2, 3]]))
        before = sum(f.area for f in tris)
        merged = merge_coplanar_facets(tris)
        assert len(merged) == 6
        after = sum(f.area for f in merged)
        assert after == pytest.approx(before, rel=1e-12)
        assert after == pytest.approx(sum(fan_area(f.vertices) for f in merged), rel=1e-12)

    def test_idempotent(self):
        t1 = Facet(np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0)], dtype=float))
        t2 = Facet(np.array([(0, 0, 0), (1, 1, 0), (0, 1, 0)], dtype=float))
        once = merge_coplanar_facets([t1, t2])
        twice = merge_coplanar_facets(once)
        assert len(twice) == len(once)
        assert np.array_equal(once[0].vertices, twice[0].vertices)

    def test_ids_reassigned_deterministically(self):
        t1 = Facet(np.array([(5, 0, 0), (6, 0, 0), (6, 1, 0)], dtype=float))
        t2 = Facet(np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0)], dtype=float))
        merged = merge_coplanar_facets([t1, t2])
        assert [f.id for f in merged] == [0, 1]
        assert merged[0].vertices[:, 0].min() < merged[1].vertices[:, 0].min()

    def test_rejects_non_manifold(self):
        shared = [(0, 0, 0), (1, 0, 0)]
        f1 = Facet(np.array(shared + [(0.5, 1, 0)], dtype=float))
        f2 = Facet(np.array(shared + [(0.5, -1, 0)], dtype=float))
        f3 = Facet(np.array(shared + [(0.5, 0, 1)], dtype=float))
        with pytest.raises(NonManifoldError, match="shared by 3"):
            merge_coplanar_facets([f1, f2, f3])

    def test_union_kept_at_four_vertices(self):
        quad = Facet(np.array([(0, 0, 0), (2, 0, 0), (2, 1, 0), (0, 1, 0)], dtype=float))
        tri = Facet(np.array([(2, 0, 0), (3, 0.5, 0), (2, 1, 0)], dtype=float))
        merged = merge_coplanar_facets([quad, tri])
        assert len(merged) == 2

    def test_one_sided_flag_preserved_and_segregated(self):
        t1 = Facet(np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0)], dtype=float), one_sided=True)
        t2 = Facet(np.array([(0, 0, 0), (1, 1, 0), (0, 1, 0)], dtype=float), one_sided=False)
        assert len(merge_coplanar_facets([t1, t2])) == 2
        t2b = Facet(np.array([(0, 0, 0), (1, 1, 0), (0, 1, 0)], dtype=float), one_sided=True)
        merged = merge_coplanar_facets([t1, t2b])
        assert len(merged) == 1
        assert merged[0].one_sided
