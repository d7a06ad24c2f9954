"""Length and collision cost pieces, their bound relations, and gradients."""

import numpy as np
import numpy.testing as npt
import pytest

from splineplan import autodiff as ad
from splineplan import cost, geom
from splineplan.cost import ChompParams, CostError, CostParams
from splineplan.geom import Box, Scene, Sphere
from splineplan.spline import SplinePath, sample_path, straight_line_spline

UNIT_SPHERE = Sphere(center=(0, 0), radius=1)


def scene_of(*obstacles, lo=(-20, -20), hi=(20, 20)):
    return Scene(obstacles=obstacles, bounds_min=lo, bounds_max=hi)


def segment_samples(a, b, count):
    return np.linspace(a, b, count)


class TestPathLength:
    def test_straight_any_sample_count(self):
        for count in (2, 7, 101):
            assert cost.path_length(segment_samples((0, 0), (3, 4), count)) == pytest.approx(5.0)

    def test_two_samples(self):
        assert cost.path_length(np.array([[0.0, 0.0], [1.0, 0.0]])) == pytest.approx(1.0)

    def test_quarter_circle_polyline_bounds(self):
        angles = np.arange(0.0, np.pi / 2 + 1e-12, 0.05)
        samples = np.column_stack([np.cos(angles), np.sin(angles)])
        length = cost.path_length(samples)
        assert length < np.pi / 2
        assert length > np.sqrt(2.0)

    def test_needs_two_samples(self):
        with pytest.raises(CostError):
            cost.path_length(np.array([[0.0, 0.0]]))


class TestExactCollisionCost:
    def test_clear_path(self):
        samples = segment_samples((-3, 5), (3, 5), 31)
        assert cost.exact_collision_cost(scene_of(UNIT_SPHERE), samples) == 0.0

    def test_single_sphere(self):
        samples = segment_samples((-3, 0), (3, 0), 61)
        assert cost.exact_collision_cost(scene_of(UNIT_SPHERE), samples) == pytest.approx(
            2 * np.pi
        )

    def test_sphere_and_box(self):
        scene = scene_of(UNIT_SPHERE, Box(center=(5, 0), half_extents=(1, 1)))
        samples = segment_samples((-3, 0), (7, 0), 101)
        assert cost.exact_collision_cost(scene, samples) == pytest.approx(
            2 * np.pi + 2 * np.pi * np.sqrt(2)
        )


class TestSharedCollisionCount:
    scene = scene_of(UNIT_SPHERE, Sphere(center=(10, 0), radius=1))

    def test_three_in_same_sphere(self):
        samples = np.array([[-0.5, 0], [0.0, 0], [0.5, 0], [3.0, 0]])
        assert cost.shared_collision_count(self.scene, samples, 1) == 3

    def test_at_least_itself(self):
        samples = np.array([[-3.0, 0], [0.0, 0], [3.0, 0]])
        assert cost.shared_collision_count(self.scene, samples, 1) == 1

    def test_per_object_grouping(self):
        samples = np.array([[-0.2, 0], [0.2, 0], [10.0, 0]])
        assert cost.shared_collision_count(self.scene, samples, 2) == 1
        assert cost.shared_collision_count(self.scene, samples, 0) == 2

    def test_non_colliding_sample_is_contract_violation(self):
        samples = np.array([[-3.0, 0], [0.0, 0], [3.0, 0]])
        with pytest.raises(CostError):
            cost.shared_collision_count(self.scene, samples, 0)


class TestPointCost:
    scene = scene_of(UNIT_SPHERE)

    def test_sole_sample_inside(self):
        samples = np.array([[-3.0, 0], [0.0, 0], [3.0, 0]])
        assert cost.point_cost(self.scene, samples, 1) == pytest.approx(2 * np.pi)

    def test_share_split_four_ways(self):
        samples = np.array([[-0.6, 0], [-0.2, 0], [0.2, 0], [0.6, 0]])
        assert cost.point_cost(self.scene, samples, 2) == pytest.approx(np.pi / 2)

    def test_free_sample_is_zero(self):
        samples = np.array([[-3.0, 0], [0.0, 0], [3.0, 0]])
        assert cost.point_cost(self.scene, samples, 0) == 0.0


class TestSmoothStep:
    def test_equals_one_at_safe_distance(self):
        for delta in (0.0, 0.3, 5.0):
            assert cost.smooth_step(delta, delta) == pytest.approx(1.0)

    def test_half_above(self):
        assert cost.smooth_step(0.3 + np.log(3), 0.3) == pytest.approx(0.5)

    def test_three_halves_below(self):
        assert cost.smooth_step(0.3 - np.log(3), 0.3) == pytest.approx(1.5)

    def test_saturation(self):
        assert cost.smooth_step(100.0, 0.0) == 0.0
        assert cost.smooth_step(-100.0, 0.0) == 2.0

    def test_at_least_one_below_safe_distance(self):
        xs = np.linspace(-10, 0.5, 200)
        values = [cost.smooth_step(x, 0.5) for x in xs]
        assert min(values) >= 1.0


class TestSmoothCollisionCost:
    params = CostParams(step=0.01, safe_distance=0.0)

    def test_free_path_is_exactly_zero(self):
        samples = segment_samples((-3, 5), (3, 5), 101)
        assert cost.smooth_collision_cost(scene_of(UNIT_SPHERE), samples, self.params) == 0.0

    def test_through_sphere_within_factor_two(self):
        samples = segment_samples((-3, 0), (3, 0), 201)
        value = cost.smooth_collision_cost(scene_of(UNIT_SPHERE), samples, self.params)
        assert 2 * np.pi <= value < 4 * np.pi

    def test_single_collider_at_log_three_depth(self):
        # a sole collider at signed distance -log(3) pays 1.5 times its
        # circumference share (depth log 3 needs a radius above log 3)
        sphere = Sphere(center=(0, 0), radius=2.0)
        samples = np.array([[-5.0, 0.0], [2.0 - np.log(3.0), 0.0], [5.0, 0.0]])
        value = cost.smooth_collision_cost(scene_of(sphere), samples, self.params)
        assert value == pytest.approx(1.5 * 4 * np.pi)


class TestTotalLoss:
    params = CostParams(step=0.01, safe_distance=0.0)

    def test_free_straight_path(self):
        scene = scene_of(Sphere(center=(10, 10), radius=1))
        path = straight_line_spline((0, 0), (3, 4), 3, 2)
        breakdown = cost.total_loss(scene, path, self.params)
        assert breakdown.total_smooth == pytest.approx(5.0, abs=1e-9)
        assert not breakdown.collides

    def test_through_unit_sphere(self):
        path = straight_line_spline((-3, 0), (3, 0), 3, 2)
        breakdown = cost.total_loss(scene_of(UNIT_SPHERE), path, self.params)
        assert breakdown.exact_collision == pytest.approx(2 * np.pi)
        assert breakdown.total_smooth == pytest.approx(6.0 + breakdown.smooth_collision)
        assert breakdown.collides

    def test_degenerate_in_empty_scene(self):
        path = straight_line_spline((1, 1), (1, 1), 3, 2)
        breakdown = cost.total_loss(scene_of(), path, self.params)
        assert breakdown.total_smooth == pytest.approx(0.0, abs=1e-12)
        assert not breakdown.collides

    def test_breakdown_json(self):
        path = straight_line_spline((0, 0), (1, 0), 3, 2)
        data = cost.total_loss(scene_of(), path, self.params).to_json()
        assert set(data) == {
            "length",
            "exact_collision",
            "smooth_collision",
            "total_smooth",
            "collides",
        }


class TestChompPointCost:
    params = ChompParams(collision_weight=1.0, clearance=1.0)

    def test_inside_branch(self):
        assert cost.chomp_point_cost(-1.0, self.params) == pytest.approx(1.5)

    def test_margin_branch(self):
        assert cost.chomp_point_cost(0.5, self.params) == pytest.approx(0.125)

    def test_far_branch(self):
        assert cost.chomp_point_cost(2.0, self.params) == 0.0

    def test_boundary_uses_margin_branch(self):
        assert cost.chomp_point_cost(0.0, self.params) == pytest.approx(0.5)

    def test_continuity_at_zero(self):
        below = cost.chomp_point_cost(-1e-12, self.params)
        above = cost.chomp_point_cost(+1e-12, self.params)
        assert below == pytest.approx(above, abs=1e-9)

    def test_parameter_validation(self):
        with pytest.raises(CostError):
            ChompParams(collision_weight=0.0, clearance=1.0)
        with pytest.raises(CostError):
            ChompParams(collision_weight=1.0, clearance=-1.0)


class TestChompTotalLoss:
    def test_clear_path_is_plain_length(self):
        scene = scene_of(Sphere(center=(50, 50), radius=1))
        path = straight_line_spline((0, 0), (3, 4), 3, 2)
        params = ChompParams(collision_weight=2.0, clearance=1.0)
        value = cost.chomp_total_loss(scene, path, CostParams(step=0.01), params)
        assert value == pytest.approx(5.0, abs=1e-9)

    def test_one_deep_sample_arithmetic(self):
        # a sole sample at signed distance -1 with unit margin adds
        # weight * 1.5 on top of the polyline length
        params = ChompParams(collision_weight=2.0, clearance=1.0)
        samples = np.array([[-4.0, 0.0], [0.0, 0.0], [4.0, 0.0]])
        scene = scene_of(UNIT_SPHERE)
        sd = geom.min_sdf_points(scene, samples)
        npt.assert_allclose(sd, [3.0, -1.0, 3.0])
        penalty = sum(cost.chomp_point_cost(v, params) for v in sd)
        length = cost.path_length(samples)
        assert length + params.collision_weight * penalty == pytest.approx(length + 3.0)

    def test_total_matches_manual_recomputation(self):
        scene = scene_of(UNIT_SPHERE)
        path = straight_line_spline((-3, 0.2), (3, -0.1), 3, 2)
        cost_params = CostParams(step=0.02)
        params = ChompParams(collision_weight=1.3, clearance=0.4)
        samples = sample_path(path, cost_params.step)
        manual = cost.path_length(samples) + params.collision_weight * sum(
            cost.chomp_point_cost(v, params)
            for v in geom.min_sdf_points(scene, samples.points)
        )
        assert cost.chomp_total_loss(scene, path, cost_params, params) == pytest.approx(
            manual, abs=1e-9
        )

    def test_zero_weight_limit_is_length(self):
        # the weight must be positive; a vanishing weight recovers length
        scene = scene_of(UNIT_SPHERE)
        path = straight_line_spline((-3, 0), (3, 0), 3, 2)
        cost_params = CostParams(step=0.02)
        tiny = cost.chomp_total_loss(
            scene, path, cost_params, ChompParams(collision_weight=1e-12, clearance=1.0)
        )
        breakdown = cost.total_loss(scene, path, cost_params)
        assert tiny == pytest.approx(breakdown.length, abs=1e-9)


def random_scene_and_path(rng):
    scene = scene_of(
        Sphere(center=rng.uniform(0.2, 0.8, 2), radius=rng.uniform(0.08, 0.25)),
        Box(center=rng.uniform(0.2, 0.8, 2), half_extents=rng.uniform(0.05, 0.25, 2)),
        lo=(0, 0),
        hi=(1, 1),
    )
    n = int(rng.integers(2, 5))
    path = SplinePath(
        degree=2,
        start=rng.uniform(0, 1, 2),
        goal=rng.uniform(0, 1, 2),
        anchors=rng.uniform(0, 1, (n, 2)),
        weights=rng.uniform(0.2, 1.0, n),
    )
    return scene, path


class TestBoundInvariants:
    def test_smooth_upper_bounds_exact(self):
        rng = np.random.default_rng(12)
        params = CostParams(step=0.05, safe_distance=rng.uniform(0, 0.2))
        for _ in range(1000):
            scene, path = random_scene_and_path(rng)
            breakdown = cost.total_loss(scene, path, params)
            assert breakdown.smooth_collision >= breakdown.exact_collision - 1e-9

    def test_zero_equivalence(self):
        rng = np.random.default_rng(13)
        params = CostParams(step=0.05)
        seen_free = seen_hit = False
        for _ in range(400):
            scene, path = random_scene_and_path(rng)
            samples = sample_path(path, params.step)
            breakdown = cost.total_loss(scene, path, params)
            collides = geom.path_collides(scene, samples.points)
            assert (breakdown.smooth_collision == 0.0) == (breakdown.exact_collision == 0.0)
            assert (breakdown.exact_collision == 0.0) == (not collides)
            assert breakdown.collides == collides
            seen_free |= not collides
            seen_hit |= collides
        assert seen_free and seen_hit

    def test_polyline_length_refines_monotonically(self):
        # nested ladders: each halving includes the previous sample set
        rng = np.random.default_rng(14)
        for _ in range(100):
            path = SplinePath(
                degree=2,
                start=rng.uniform(-1, 1, 2),
                goal=rng.uniform(-1, 1, 2),
                anchors=rng.uniform(-1, 1, (4, 2)),
                weights=np.ones(4),
            )
            lengths = [
                cost.path_length(sample_path(path, step)) for step in (0.4, 0.2, 0.1, 0.05)
            ]
            for coarse, fine in zip(lengths, lengths[1:]):
                assert fine >= coarse - 1e-9

    def test_indicator_sum_equals_share_sum(self):
        rng = np.random.default_rng(15)
        params = CostParams(step=0.05)
        for _ in range(1000):
            scene, path = random_scene_and_path(rng)
            samples = sample_path(path, params.step)
            indicator_total = cost.exact_collision_cost(scene, samples)
            share_total = sum(
                cost.point_cost(scene, samples, j) for j in range(len(samples))
            )
            assert share_total == pytest.approx(indicator_total, abs=1e-9)


class TestScaleBehavior:
    def test_length_and_exact_cost_scale_linearly(self):
        rng = np.random.default_rng(16)
        params = CostParams(step=0.05)
        for _ in range(50):
            scene, path = random_scene_and_path(rng)
            base = cost.total_loss(scene, path, params)
            for k in (0.1, 10.0):
                scaled_scene = Scene(
                    obstacles=tuple(_scale_obstacle(o, k) for o in scene.obstacles),
                    bounds_min=scene.bounds_min * k,
                    bounds_max=scene.bounds_max * k,
                )
                scaled_path = SplinePath(
                    degree=path.degree,
                    start=path.start * k,
                    goal=path.goal * k,
                    anchors=path.anchors * k,
                    weights=path.weights,
                )
                scaled = cost.total_loss(scaled_scene, scaled_path, params)
                assert scaled.length == pytest.approx(k * base.length, rel=1e-9, abs=1e-12)
                assert scaled.exact_collision == pytest.approx(
                    k * base.exact_collision, rel=1e-9, abs=1e-12
                )
                # the sigmoid is not scale-free, so the smooth bound only
                # stays within its sandwich after scaling
                assert scaled.smooth_collision >= scaled.exact_collision - 1e-9
                assert scaled.smooth_collision <= 2.0 * scaled.exact_collision + 1e-9

    def test_exact_argmin_is_scale_invariant(self):
        # scaling scene, endpoints, and grid scales the landscape by k,
        # so the minimizing grid cell must not move
        from splineplan import harness, oracle
        from splineplan.geom import PlanningProblem

        problems = harness.gen_simple2d(5, 10)
        params = CostParams(step=0.01)
        for problem in problems:
            base_grid = oracle.GridSpec.from_scene(problem.scene, 61)
            base = oracle.brute_force_optimum(problem, params, base_grid, objective="exact")
            for k in (0.1, 10.0):
                scene = problem.scene
                scaled = PlanningProblem(
                    scene=Scene(
                        obstacles=tuple(_scale_obstacle(o, k) for o in scene.obstacles),
                        bounds_min=scene.bounds_min * k,
                        bounds_max=scene.bounds_max * k,
                    ),
                    start=problem.start * k,
                    goal=problem.goal * k,
                )
                grid = oracle.GridSpec.from_scene(scaled.scene, 61)
                result = oracle.brute_force_optimum(scaled, params, grid, objective="exact")
                assert result.best_index == base.best_index
                npt.assert_allclose(result.best_cost, k * base.best_cost, rtol=1e-9)


def _scale_obstacle(obstacle, k):
    if isinstance(obstacle, Sphere):
        return Sphere(center=obstacle.center * k, radius=obstacle.radius * k)
    return Box(center=obstacle.center * k, half_extents=obstacle.half_extents * k)


class TestAnalyticGradients:
    def test_matches_tape_and_finite_differences(self):
        rng = np.random.default_rng(17)
        params = CostParams(step=0.05, safe_distance=0.1)
        checked = 0
        while checked < 25:
            scene, path = random_scene_and_path(rng)
            samples = sample_path(path, params.step)
            if cost.branch_margin(scene, samples.points) < 1e-3:
                continue
            checked += 1
            breakdown, anchor_grad, weight_grad = cost.loss_and_grad(
                scene, path, params, train_weights=True
            )
            flat = np.concatenate([path.anchors.ravel(), path.weights])
            objective = lambda xs: cost.generic_smooth_loss(
                scene, path, params, xs, train_weights=True
            )
            assert ad.value_of(objective(list(flat))) == pytest.approx(
                breakdown.total_smooth, abs=1e-9
            )
            analytic = np.concatenate([anchor_grad.ravel(), weight_grad])
            npt.assert_allclose(ad.gradient(objective, flat), analytic, atol=1e-10)
            fd = ad.finite_difference(objective, flat, h=1e-6)
            npt.assert_allclose(fd, analytic, atol=2e-6)

    def test_chomp_gradient_matches(self):
        rng = np.random.default_rng(18)
        params = CostParams(step=0.05)
        chomp = ChompParams(collision_weight=1.7, clearance=0.3)
        for _ in range(15):
            scene, path = random_scene_and_path(rng)
            value, anchor_grad, _ = cost.chomp_loss_and_grad(scene, path, params, chomp)
            flat = path.anchors.ravel()
            objective = lambda xs: cost.generic_chomp_loss(scene, path, params, chomp, xs)
            assert ad.value_of(objective(list(flat))) == pytest.approx(value, abs=1e-9)
            npt.assert_allclose(ad.gradient(objective, flat), anchor_grad.ravel(), atol=1e-10)

    def test_collision_only_gradient_is_zero_on_free_path(self):
        scene = scene_of(UNIT_SPHERE)
        path = straight_line_spline((-3, 4), (3, 4), 2, 2)
        breakdown, anchor_grad, _ = cost.loss_and_grad(
            scene, path, CostParams(step=0.01), include_length=False
        )
        assert breakdown.smooth_collision == 0.0
        npt.assert_array_equal(anchor_grad, 0.0)


class TestSamplingResolution:
    def test_spacing_check(self):
        scene = scene_of(Sphere(center=(0.5, 0.5), radius=0.1), lo=(0, 0), hi=(1, 1))
        path = straight_line_spline((0, 0), (1, 1), 3, 2)
        fine = sample_path(path, 0.01)
        coarse = sample_path(path, 0.5)
        assert cost.check_sampling_resolution(scene, fine)
        assert not cost.check_sampling_resolution(scene, coarse)
        assert cost.max_sample_spacing(fine) < cost.max_sample_spacing(coarse)

    def test_cost_params_validation(self):
        with pytest.raises(CostError):
            CostParams(step=0.0)
        with pytest.raises(CostError):
            CostParams(step=0.1, safe_distance=-1.0)
