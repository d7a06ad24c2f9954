"""Obstacle signed distances, selection, and penalty weights."""

import numpy as np
import numpy.testing as npt
import pytest

from splineplan import geom
from splineplan.geom import Box, EmptySceneError, GeomError, PlanningProblem, Scene, Sphere


def unit_scene(*obstacles, lo=(-20, -20), hi=(20, 20)):
    return Scene(obstacles=obstacles, bounds_min=lo, bounds_max=hi)


class TestSdf:
    def test_sphere_outside(self):
        assert geom.sdf(Sphere(center=(0, 0), radius=1), (2, 0)) == pytest.approx(1.0)

    def test_sphere_center(self):
        assert geom.sdf(Sphere(center=(0, 0), radius=1), (0, 0)) == pytest.approx(-1.0)

    def test_box_corner(self):
        assert geom.sdf(Box(center=(0, 0), half_extents=(1, 1)), (2, 2)) == pytest.approx(
            np.sqrt(2.0)
        )

    def test_box_interior_is_minus_face_distance(self):
        box = Box(center=(0, 0), half_extents=(2, 1))
        # closest face is y = 1, at distance 0.7
        assert geom.sdf(box, (0.5, 0.3)) == pytest.approx(-0.7)

    def test_dimension_mismatch(self):
        with pytest.raises(GeomError):
            geom.sdf(Sphere(center=(0, 0), radius=1), (1, 2, 3))

    def test_construction_validation(self):
        with pytest.raises(GeomError):
            Sphere(center=(0, 0), radius=0.0)
        with pytest.raises(GeomError):
            Box(center=(0, 0), half_extents=(1, -1))


class TestCircumference:
    def test_sphere(self):
        assert geom.bounding_circumference(Sphere(center=(0, 0), radius=1)) == pytest.approx(
            2 * np.pi
        )

    def test_box_2d(self):
        box = Box(center=(0, 0), half_extents=(1, 1))
        assert geom.bounding_circumference(box) == pytest.approx(2 * np.pi * np.sqrt(2))

    def test_box_3d_side_five(self):
        box = Box(center=(0, 0, 0), half_extents=(2.5, 2.5, 2.5))
        assert geom.bounding_circumference(box) == pytest.approx(2 * np.pi * 2.5 * np.sqrt(3))

    def test_bounds_every_surface_point(self):
        # the bounding circle must reach at least as far as any surface point
        rng = np.random.default_rng(3)
        for _ in range(50):
            box = Box(center=rng.normal(size=3), half_extents=rng.uniform(0.1, 2.0, 3))
            corners = box.center + box.half_extents * rng.choice([-1.0, 1.0], size=(64, 3))
            reach = np.linalg.norm(corners - box.center, axis=1).max()
            assert geom.bounding_circumference(box) >= 2 * np.pi * reach - 1e-12
            sphere = Sphere(center=rng.normal(size=3), radius=rng.uniform(0.1, 2.0))
            assert geom.bounding_circumference(sphere) == pytest.approx(
                2 * np.pi * sphere.radius
            )


class TestSelectObject:
    scene = unit_scene(
        Sphere(center=(0, 0), radius=1), Box(center=(10, 0), half_extents=(1, 1))
    )

    def test_nearby_object(self):
        assert geom.select_object(self.scene, (0.5, 0)) == (0, pytest.approx(-0.5))

    def test_tie_breaks_to_lowest_index(self):
        index, value = geom.select_object(self.scene, (5, 0))
        assert index == 0
        assert value == pytest.approx(4.0)

    def test_single_obstacle(self):
        scene = unit_scene(Sphere(center=(0, 0), radius=2))
        assert geom.select_object(scene, (0, 3)) == (0, pytest.approx(1.0))

    def test_empty_scene(self):
        with pytest.raises(EmptySceneError):
            geom.select_object(unit_scene(), (0, 0))

    def test_matches_exact_minimum(self):
        rng = np.random.default_rng(11)
        scene = unit_scene(
            Sphere(center=(0.3, -0.2), radius=0.5),
            Box(center=(-1.0, 0.5), half_extents=(0.4, 0.7)),
            Sphere(center=(2.0, 2.0), radius=1.2),
        )
        points = rng.uniform(-3, 3, size=(500, 2))
        indices, values = geom.select_objects(scene, points)
        matrix = geom.sdf_matrix(scene, points)
        npt.assert_array_equal(values, matrix.min(axis=1))
        npt.assert_array_equal(indices, matrix.argmin(axis=1))


class TestPathCollides:
    scene = unit_scene(Sphere(center=(0, 0), radius=1))

    def test_through(self):
        samples = np.linspace([-3, 0], [3, 0], 61)
        assert geom.path_collides(self.scene, samples)

    def test_above(self):
        samples = np.linspace([-3, 5], [3, 5], 61)
        assert not geom.path_collides(self.scene, samples)

    def test_boundary_contact_is_free(self):
        # exactly representable boundary points: the inequality is strict
        samples = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        assert geom.min_sdf_points(self.scene, samples).max() == 0.0
        assert not geom.path_collides(self.scene, samples)

    def test_needs_two_samples(self):
        with pytest.raises(GeomError):
            geom.path_collides(self.scene, np.array([[0.0, 0.0]]))


def _boundary_samples(obstacle, count):
    if isinstance(obstacle, Sphere):
        if obstacle.dim == 2:
            angles = np.linspace(0, 2 * np.pi, count, endpoint=False)
            ring = np.column_stack([np.cos(angles), np.sin(angles)])
            return obstacle.center + obstacle.radius * ring
        # Fibonacci sphere
        i = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * i / count)
        theta = np.pi * (1 + np.sqrt(5.0)) * i
        directions = np.column_stack(
            [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)]
        )
        return obstacle.center + obstacle.radius * directions
    # box: sample each face on a regular grid
    dim = obstacle.dim
    per_axis = max(2, int(round((count / (2 * dim)) ** (1.0 / (dim - 1)))))
    faces = []
    for axis in range(dim):
        for sign in (-1.0, 1.0):
            grids = [
                np.linspace(-h, h, per_axis)
                for a, h in enumerate(obstacle.half_extents)
                if a != axis
            ]
            mesh = np.meshgrid(*grids, indexing="ij") if grids else []
            face = np.zeros((per_axis ** (dim - 1), dim))
            other_axes = [a for a in range(dim) if a != axis]
            for a, values in zip(other_axes, mesh):
                face[:, a] = values.ravel()
            face[:, axis] = sign * obstacle.half_extents[axis]
            faces.append(face)
    return obstacle.center + np.vstack(faces)


def _min_distance_to(points, boundary):
    from scipy.spatial import cKDTree

    distances, _ = cKDTree(boundary).query(points)
    return distances


class TestSdfDistanceOracle:
    """|sdf| must equal the distance to densely sampled boundary points.

    With boundary gap g and query clearance d, the sampling error is about
    g^2/(8d), so the achievable tolerance depends on dimension: 2-D
    boundaries afford tight gaps (1e-6 outside), 3-D surfaces are checked
    at 1e-4 outside.  Inside tolerance is 1e-3 everywhere per the boundary
    resolution.  10^4 query points total across the four primitive cases.
    """

    CASES = [
        (Sphere(center=(0.2, -0.1), radius=0.6), 120_000, 1e-6, 0.05),
        (Box(center=(-0.3, 0.4), half_extents=(0.7, 0.4)), 120_000, 1e-6, 0.05),
        (Sphere(center=(0.1, 0.2, -0.3), radius=0.5), 120_000, 1e-4, 0.1),
        (Box(center=(0.0, 0.1, 0.2), half_extents=(0.5, 0.35, 0.6)), 120_000, 1e-4, 0.1),
    ]

    @pytest.mark.parametrize("obstacle,boundary_count,outside_tol,clearance", CASES)
    def test_matches_boundary_distance(self, obstacle, boundary_count, outside_tol, clearance):
        rng = np.random.default_rng(7)
        boundary = _boundary_samples(obstacle, boundary_count)
        assert np.abs(geom.sdf_points(obstacle, boundary)).max() < 1e-9
        queries = []
        while sum(len(q) for q in queries) < 2500:
            batch = obstacle.center + rng.uniform(-1.5, 1.5, size=(4000, obstacle.dim))
            keep = np.abs(geom.sdf_points(obstacle, batch)) > clearance
            queries.append(batch[keep])
        points = np.vstack(queries)[:2500]
        sd = geom.sdf_points(obstacle, points)
        reference = _min_distance_to(points, boundary)
        outside = sd > 0
        npt.assert_allclose(sd[outside], reference[outside], atol=outside_tol, rtol=0)
        npt.assert_allclose(-sd[~outside], reference[~outside], atol=1e-3, rtol=0)


class TestSceneJson:
    def test_roundtrip(self):
        scene = unit_scene(
            Sphere(center=(0.5, 0.5), radius=0.2), Box(center=(1, 2), half_extents=(0.3, 0.4))
        )
        data = geom.scene_to_json(scene)
        assert data["dim"] == 2
        assert data["obstacles"][0]["kind"] == "sphere"
        back = geom.scene_from_json(data)
        assert len(back.obstacles) == 2
        npt.assert_allclose(back.obstacles[1].half_extents, (0.3, 0.4))

    def test_problem_roundtrip(self):
        problem = PlanningProblem(
            scene=unit_scene(Sphere(center=(0, 0), radius=1)), start=(-3, 0), goal=(3, 1)
        )
        back = geom.problem_from_json(geom.problem_to_json(problem))
        npt.assert_allclose(back.goal, (3, 1))

    def test_unknown_kind(self):
        with pytest.raises(GeomError):
            geom.obstacle_from_json({"kind": "cylinder", "center": [0, 0], "radius": 1})


class TestSceneValidation:
    def test_dimension_consistency(self):
        with pytest.raises(GeomError):
            Scene(
                obstacles=(Sphere(center=(0, 0, 0), radius=1),),
                bounds_min=(-1, -1),
                bounds_max=(1, 1),
            )

    def test_bounds_must_have_extent(self):
        with pytest.raises(GeomError):
            Scene(obstacles=(), bounds_min=(0, 0), bounds_max=(0, 1))

    def test_gradient_matches_generic_route(self):
        from splineplan import autodiff as ad

        rng = np.random.default_rng(5)
        box = Box(center=(0.1, -0.2, 0.3), half_extents=(0.5, 0.8, 0.4))
        sphere = Sphere(center=(0.0, 0.0, 0.0), radius=0.7)
        for obstacle in (box, sphere):
            points = rng.uniform(-1.5, 1.5, size=(200, 3))
            grads = geom.sdf_gradient_points(obstacle, points)
            for i in range(0, 200, 29):
                tape_grad = ad.gradient(
                    lambda xs: geom.sdf_generic(obstacle, xs), points[i]
                )
                npt.assert_allclose(tape_grad, grads[i], atol=1e-12)
