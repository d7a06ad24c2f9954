"""Direct path optimization: success, determinism, anchoring, refinement."""

import numpy as np
import numpy.testing as npt
import pytest

from splineplan import cost, geom, optimizer, spline
from splineplan.cost import ChompParams, CostParams
from splineplan.geom import PlanningProblem, Scene, Sphere
from splineplan.optimizer import OptimizerConfig, minimize_chomp, optimize_path, refine_collision_only

SPHERE_SCENE = Scene(
    obstacles=(Sphere(center=(0, 0), radius=1.0),), bounds_min=(-5, -5), bounds_max=(5, 5)
)
EMPTY_SCENE = Scene(obstacles=(), bounds_min=(-5, -5), bounds_max=(5, 5))
PARAMS = CostParams(step=0.01)
CONFIG = OptimizerConfig(n_anchors=1, degree=2, restarts=5, seed=0)


class TestOptimizePath:
    def test_sphere_blocking_problem(self):
        # the brute-force oracle confirms a collision-free one-anchor
        # solution exists for this instance (see test_oracle)
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 0), goal=(3, 0))
        result = optimize_path(problem, PARAMS, CONFIG)
        assert result.success
        assert result.breakdown.exact_collision == 0.0

    def test_unobstructed_within_one_percent(self):
        problem = PlanningProblem(scene=EMPTY_SCENE, start=(-3, 0), goal=(3, 1))
        result = optimize_path(problem, PARAMS, CONFIG)
        assert result.breakdown.length <= 1.01 * problem.straight_distance

    def test_degenerate_endpoints(self):
        problem = PlanningProblem(scene=EMPTY_SCENE, start=(1, 1), goal=(1, 1))
        result = optimize_path(problem, PARAMS, CONFIG)
        assert result.success
        assert result.breakdown.length == pytest.approx(0.0, abs=1e-12)

    def test_anchoring_never_moves_endpoints(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 0.3), goal=(3, -0.2))
        result = optimize_path(problem, PARAMS, CONFIG)
        npt.assert_allclose(spline.nurbs_eval(result.path, 0.0), problem.start, atol=1e-12)
        npt.assert_allclose(
            spline.nurbs_eval(result.path, result.path.domain_max), problem.goal, atol=1e-12
        )

    def test_deterministic_across_runs(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 0.2), goal=(3, 0.1))
        a = optimize_path(problem, PARAMS, CONFIG)
        b = optimize_path(problem, PARAMS, CONFIG)
        assert a.path.anchors.tobytes() == b.path.anchors.tobytes()
        assert a.breakdown == b.breakdown
        assert a.iterations == b.iterations
        assert a.restart_index == b.restart_index

    def test_feasible_straight_line_not_worsened(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 3), goal=(3, 3))
        result = optimize_path(problem, PARAMS, CONFIG)
        assert result.breakdown.total_smooth <= problem.straight_distance + 1e-6

    def test_reported_breakdown_matches_path(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 0.1), goal=(3, 0))
        result = optimize_path(problem, PARAMS, CONFIG)
        recomputed = cost.total_loss(problem.scene, result.path, PARAMS)
        assert result.breakdown.total_smooth == pytest.approx(
            recomputed.total_smooth, abs=1e-12
        )
        assert result.success == (result.breakdown.exact_collision == 0.0)

    def test_endpoints_must_lie_inside_bounds(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-30, 0), goal=(3, 0))
        with pytest.raises(ValueError):
            optimize_path(problem, PARAMS, CONFIG)

    def test_trainable_weights_mode(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 0.2), goal=(3, 0))
        config = OptimizerConfig(
            n_anchors=2, degree=2, restarts=3, seed=1, weight_mode="trainable"
        )
        result = optimize_path(problem, PARAMS, config)
        assert result.success
        assert np.all(result.path.weights > 0.0) and np.all(result.path.weights < 1.0)

    def test_result_json(self):
        problem = PlanningProblem(scene=EMPTY_SCENE, start=(0, 0), goal=(1, 0))
        data = optimize_path(problem, PARAMS, CONFIG).to_json()
        assert {"path", "breakdown", "iterations", "restart_index", "success"} <= set(data)


class TestConfigValidation:
    def test_moment_coefficients(self):
        with pytest.raises(ValueError):
            OptimizerConfig(beta1=1.0)
        with pytest.raises(ValueError):
            OptimizerConfig(beta2=0.0)

    def test_weight_mode(self):
        with pytest.raises(ValueError):
            OptimizerConfig(weight_mode="frozen")

    def test_restarts(self):
        with pytest.raises(ValueError):
            OptimizerConfig(restarts=0)

    def test_rate_scales_with_diagonal(self):
        config = OptimizerConfig()
        assert config.resolve_rate(SPHERE_SCENE) == pytest.approx(
            0.05 * SPHERE_SCENE.diagonal
        )
        assert OptimizerConfig(learning_rate=0.2).resolve_rate(SPHERE_SCENE) == 0.2


class TestRefineCollisionOnly:
    def test_collision_free_path_unchanged(self):
        path = spline.straight_line_spline((-3, 3), (3, 3), 1, 2)
        result = refine_collision_only(path, SPHERE_SCENE, PARAMS, steps=6)
        npt.assert_array_equal(result.path.anchors, path.anchors)

    def test_blocked_straight_line_improves(self):
        # slightly off-axis start so the outward gradient has a direction
        path = spline.straight_line_spline((-3, 0.15), (3, 0), 1, 2)
        before = cost.total_loss(SPHERE_SCENE, path, PARAMS)
        result = refine_collision_only(path, SPHERE_SCENE, PARAMS, steps=6)
        assert before.exact_collision > 0
        assert result.breakdown.exact_collision < before.exact_collision

    def test_zero_steps_identity(self):
        path = spline.straight_line_spline((-3, 0.15), (3, 0), 1, 2)
        result = refine_collision_only(path, SPHERE_SCENE, PARAMS, steps=0)
        npt.assert_array_equal(result.path.anchors, path.anchors)
        assert result.iterations == 0


class TestChompMinimizer:
    def test_avoids_with_strong_weight(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 0.1), goal=(3, 0))
        chomp = ChompParams(collision_weight=10.0, clearance=0.3)
        result = minimize_chomp(problem, PARAMS, chomp, CONFIG)
        assert result.breakdown.exact_collision == 0.0

    def test_deterministic(self):
        problem = PlanningProblem(scene=SPHERE_SCENE, start=(-3, 0.1), goal=(3, 0))
        chomp = ChompParams(collision_weight=2.0, clearance=0.5)
        a = minimize_chomp(problem, PARAMS, chomp, CONFIG)
        b = minimize_chomp(problem, PARAMS, chomp, CONFIG)
        assert a.path.anchors.tobytes() == b.path.anchors.tobytes()
