import numpy as np
import pytest

from src.errors import DataError
from src.loss import (
    sqhinge_grad_l,
    sqhinge_grad_s,
    sqhinge_task_value,
    sqhinge_total,
    sqhinge_value_grad_w,
)
from src.model import Dataset, LatentModel, TaskData

from .conftest import random_dataset


def _central_differences(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[idx] = h
        grad[idx] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


class TestValue:
    def test_zero_weights_cost_half_per_sample(self, small_instance):
        dataset, _, _ = small_instance
        model = LatentModel(np.zeros((20, 5)), np.zeros((5, 6)), tuple(dataset.names))
        assert sqhinge_total(model, dataset) == pytest.approx(0.5 * sum(dataset.sizes))

    def test_single_sample(self):
        task = TaskData("a", [[1.0, 2.0]], [1.0])
        # margin 0.5 -> 1/2 * 0.5^2
        assert sqhinge_task_value([0.5, 0.0], task) == pytest.approx(0.125)
        assert sqhinge_task_value([1.0, 1.0], task) == 0.0

    def test_empty_pool_contributes_nothing(self):
        task = TaskData("a", np.zeros((0, 3)), [])
        assert sqhinge_task_value(np.ones(3), task) == 0.0

    def test_dimension_mismatch(self, small_instance):
        dataset, _, _ = small_instance
        model = LatentModel(np.zeros((7, 2)), np.zeros((2, 6)), tuple(dataset.names))
        with pytest.raises(DataError):
            sqhinge_total(model, dataset)


class TestGradients:
    def test_w_gradient_matches_finite_differences(self, small_instance, rng):
        dataset, _, _ = small_instance
        w = 0.1 * rng.standard_normal((20, 6))
        _, grad = sqhinge_value_grad_w(w, dataset)
        fd = _central_differences(lambda v: sqhinge_value_grad_w(v, dataset)[0], w)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-6)

    def test_factor_gradients_on_random_instances(self, rng):
        worst = 0.0
        for _ in range(20):
            dataset = random_dataset(rng)
            l = 0.3 * rng.standard_normal((20, 5))
            s = 0.3 * rng.standard_normal((5, 6))
            model = LatentModel(l, s, tuple(dataset.names))

            def f_s(v):
                return sqhinge_total(model.with_factors(s=v), dataset)

            def f_l(v):
                return sqhinge_total(model.with_factors(l=v), dataset)

            for analytic, fd in (
                (sqhinge_grad_s(model, dataset), _central_differences(f_s, s)),
                (sqhinge_grad_l(model, dataset), _central_differences(f_l, l)),
            ):
                err = np.max(np.abs(analytic - fd)) / max(np.max(np.abs(analytic)), 1.0)
                worst = max(worst, err)
        assert worst <= 1e-5

    def test_chain_rule_shapes(self, small_instance):
        dataset, _, model = small_instance
        assert sqhinge_grad_s(model, dataset).shape == (5, 6)
        assert sqhinge_grad_l(model, dataset).shape == (20, 5)

    def test_gradient_vanishes_beyond_margin(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        dataset = Dataset((TaskData("a", x, [1.0, -1.0]),))
        value, grad = sqhinge_value_grad_w(np.array([[2.0], [-2.0]]), dataset)
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros((2, 1)))
