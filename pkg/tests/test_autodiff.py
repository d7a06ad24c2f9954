"""Tape recording, primitive derivatives, and the finite-difference checker."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from splineplan import autodiff as ad


class TestPrimitives:
    def test_square_gradient(self):
        grad = ad.gradient(lambda xs: xs[0] * xs[0], [3.0])
        npt.assert_allclose(grad, [6.0])

    def test_exp_gradient(self):
        grad = ad.gradient(lambda xs: ad.exp(xs[0]), [0.0])
        npt.assert_allclose(grad, [1.0])

    def test_min_select_unselected_branch(self):
        grad = ad.gradient(lambda xs: ad.min_select(xs[0], xs[1]), [1.0, 2.0])
        npt.assert_allclose(grad, [1.0, 0.0])

    def test_min_select_tie_prefers_first(self):
        grad = ad.gradient(lambda xs: ad.min_select(xs[0], xs[1]), [1.0, 1.0])
        npt.assert_allclose(grad, [1.0, 0.0])

    def test_max_select(self):
        grad = ad.gradient(lambda xs: ad.max_select(xs[0], xs[1]), [1.0, 2.0])
        npt.assert_allclose(grad, [0.0, 1.0])

    def test_division_and_pow2(self):
        grad = ad.gradient(lambda xs: ad.pow2(xs[0]) / xs[1], [3.0, 2.0])
        npt.assert_allclose(grad, [3.0, -2.25])

    def test_sqrt_and_tanh(self):
        grad = ad.gradient(lambda xs: ad.sqrt(xs[0]), [4.0])
        npt.assert_allclose(grad, [0.25])
        grad = ad.gradient(lambda xs: ad.tanh(xs[0]), [0.5])
        npt.assert_allclose(grad, [1.0 - math.tanh(0.5) ** 2])

    def test_values_track_eager_results(self):
        tape = ad.Tape()
        x = tape.leaf(2.0)
        y = (x * 3.0 + 1.0) / 2.0 - 0.5
        assert y.value == pytest.approx(3.0)

    def test_float_dispatch(self):
        assert ad.exp(0.0) == 1.0
        assert ad.sqrt(9.0) == 3.0
        assert ad.min_select(1.0, 2.0) == 1.0
        assert ad.stop_gradient(1.5) == 1.5


class TestGradient:
    def test_sum_of_squares(self):
        grad = ad.gradient(lambda xs: xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2], [1, 2, 3])
        npt.assert_allclose(grad, [2, 4, 6])

    def test_segment_length_unit_vector(self):
        # distance from the origin to a free endpoint
        grad = ad.gradient(
            lambda xs: ad.sqrt(ad.pow2(xs[0]) + ad.pow2(xs[1])), [3.0, 4.0]
        )
        npt.assert_allclose(grad, [0.6, 0.8])

    def test_constant_output(self):
        grad = ad.gradient(lambda xs: 7.0, [1.0, 2.0])
        npt.assert_allclose(grad, [0.0, 0.0])

    def test_linearity(self):
        rng = np.random.default_rng(0)

        def f(xs):
            return xs[0] * xs[1] + ad.exp(xs[2])

        def g(xs):
            return ad.sqrt(ad.pow2(xs[0]) + 1.0) * xs[2]

        for _ in range(20):
            x = rng.uniform(0.1, 2.0, 3)
            a, b = rng.uniform(-2, 2, 2)
            combined = ad.gradient(lambda xs: a * f(xs) + b * g(xs), x)
            separate = a * ad.gradient(f, x) + b * ad.gradient(g, x)
            npt.assert_allclose(combined, separate, atol=1e-12)

    def test_stop_gradient_freezes_factor(self):
        for value in (0.5, -2.0, 3.0):
            grad = ad.gradient(lambda xs: ad.stop_gradient(xs[0]) * xs[0], [value])
            npt.assert_allclose(grad, [value])

    def test_tape_determinism(self):
        def f(xs):
            return ad.exp(xs[0]) * xs[1] + ad.sqrt(xs[1]) / xs[0]

        a = ad.gradient(f, [1.3, 0.7])
        b = ad.gradient(f, [1.3, 0.7])
        assert a.tobytes() == b.tobytes()


class TestErrors:
    def test_division_by_zero(self):
        with pytest.raises(ad.NumericError):
            ad.gradient(lambda xs: xs[0] / 0.0, [1.0])

    def test_sqrt_of_negative(self):
        with pytest.raises(ad.NumericError):
            ad.gradient(lambda xs: ad.sqrt(xs[0]), [-1.0])

    def test_exp_overflow(self):
        with pytest.raises(ad.NumericError):
            ad.gradient(lambda xs: ad.exp(xs[0]), [1000.0])

    def test_tapes_do_not_mix(self):
        x = ad.Tape().leaf(1.0)
        y = ad.Tape().leaf(2.0)
        with pytest.raises(ValueError):
            _ = x + y

    def test_sqrt_at_zero_uses_zero_subgradient(self):
        grad = ad.gradient(lambda xs: ad.sqrt(ad.pow2(xs[0])), [0.0])
        npt.assert_allclose(grad, [0.0])


class TestGradCheck:
    def test_quadratic(self):
        error = ad.grad_check(
            lambda xs: xs[0] * xs[0] + 3.0 * xs[1] * xs[0], [1.0, -2.0], h=1e-5
        )
        assert error < 1e-9

    def test_requires_positive_step(self):
        with pytest.raises(ValueError):
            ad.grad_check(lambda xs: xs[0], [1.0], h=0.0)

    def test_finite_difference_matches_known_gradient(self):
        fd = ad.finite_difference(lambda xs: float(np.cos(xs[0])), [0.3], h=1e-6)
        npt.assert_allclose(fd, [-np.sin(0.3)], atol=1e-8)
