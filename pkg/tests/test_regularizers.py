import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from src.errors import DataError, SolverError
from src.model import GroupPartition
from src.regularizers import (
    GroupPenalty,
    block_norms,
    block_support,
    frobenius_sq,
    frobenius_sq_grad,
    group_l21_value,
    l1_value,
    prox_group_l21,
    prox_l1,
    smooth_group_l21,
    smoothing_gap_bound,
    support_pattern,
)


def _scalar_oracle(objective, lo, hi):
    return minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}).x


class TestL1:
    def test_soft_threshold(self):
        np.testing.assert_array_equal(prox_l1([3.0, -0.5, 1.0, -4.0], 1.0), [2.0, 0.0, 0.0, -3.0])

    def test_zero_threshold_is_identity(self, rng):
        v = rng.standard_normal((4, 3))
        np.testing.assert_array_equal(prox_l1(v, 0.0), v)

    def test_negative_threshold(self):
        with pytest.raises(DataError):
            prox_l1([1.0], -0.1)

    def test_matches_numerical_minimiser(self, rng):
        values = 3.0 * rng.standard_normal(1000)
        thresholds = rng.uniform(0.0, 2.0, 1000)
        for v, t in zip(values, thresholds):
            x = _scalar_oracle(lambda z: 0.5 * (z - v) ** 2 + t * abs(z), -abs(v) - 1.0, abs(v) + 1.0)
            assert prox_l1(np.array([v]), t)[0] == pytest.approx(x, abs=1e-6)

    def test_non_expansive(self, rng):
        for _ in range(1000):
            a, b = rng.standard_normal((2, 5))
            t = rng.uniform(0.0, 2.0)
            assert np.linalg.norm(prox_l1(a, t) - prox_l1(b, t)) <= np.linalg.norm(a - b) + 1e-12

    def test_values(self):
        l = np.array([[1.0, -2.0], [0.0, 3.0]])
        assert l1_value(l) == 6.0
        assert frobenius_sq(l) == 14.0
        np.testing.assert_array_equal(frobenius_sq_grad(l), 2.0 * l)


class TestGroupL21:
    def test_value_sums_block_norms(self):
        s = np.array([[3.0, 4.0, 1.0], [0.0, 0.0, -2.0]])
        part = GroupPartition((("a", (0, 1)), ("b", (2,))))
        np.testing.assert_allclose(block_norms(s, part), [[5.0, 1.0], [0.0, 2.0]])
        assert group_l21_value(s, part) == pytest.approx(8.0)
        assert group_l21_value(s, part, size_weighted=True) == pytest.approx(5.0 * np.sqrt(2) + 3.0)

    def test_block_shrink(self):
        s = np.array([[3.0, 4.0, 1.0], [0.3, 0.4, -2.0]])
        part = GroupPartition((("a", (0, 1)), ("b", (2,))))
        out = prox_group_l21(s, 1.0, part)
        np.testing.assert_allclose(out, [[2.4, 3.2, 0.0], [0.0, 0.0, -1.0]])

    def test_support(self):
        s = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
        part = GroupPartition((("a", (0, 1)), ("b", (2,))))
        np.testing.assert_array_equal(block_support(s, part), [[True, False], [False, True]])

    @pytest.mark.parametrize(
        "s, pattern",
        [
            ([[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]], "exclusive"),
            ([[1.0, 0.0, 3.0], [0.0, 0.0, 2.0]], "shared"),
            ([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]], "empty"),
        ],
    )
    def test_support_pattern(self, s, pattern):
        part = GroupPartition((("a", (0, 1)), ("b", (2,))))
        assert support_pattern(np.array(s), part) == pattern

    def test_invalid_partition(self):
        with pytest.raises(DataError):
            group_l21_value(np.ones((2, 3)), GroupPartition((("a", (0, 1)),)))
        with pytest.raises(DataError):
            prox_group_l21(np.ones((2, 3)), 1.0, GroupPartition((("a", (0, 1, 2)), ("b", (2,)))))

    def test_matches_radial_oracle(self, rng):
        part = GroupPartition.single(3)
        for _ in range(1000):
            v = rng.standard_normal((1, 3))
            t = rng.uniform(0.0, 2.0)
            norm = np.linalg.norm(v)
            r = _scalar_oracle(lambda z: 0.5 * (z - norm) ** 2 + t * z, 0.0, norm + 1.0)
            expected = v * (r / norm)
            np.testing.assert_allclose(prox_group_l21(v, t, part), expected, atol=1e-6)

    def test_non_expansive(self, rng):
        part = GroupPartition.contiguous(4, 2)
        for _ in range(1000):
            a, b = rng.standard_normal((2, 3, 4))
            t = rng.uniform(0.0, 2.0)
            gap = np.linalg.norm(prox_group_l21(a, t, part) - prox_group_l21(b, t, part))
            assert gap <= np.linalg.norm(a - b) + 1e-12


class TestSmoothing:
    def test_gap_within_bound(self, rng):
        part = GroupPartition.contiguous(6, 2)
        k = 5
        for _ in range(100):
            s = rng.standard_normal((k, 6)) * rng.uniform(0.01, 2.0)
            nu = 10.0 ** rng.uniform(-6, 0)
            gap = group_l21_value(s, part) - smooth_group_l21(s, part, nu).value
            assert -1e-12 <= gap <= nu * k * part.n_groups / 2 + 1e-12

    def test_gap_shrinks_with_nu(self, rng):
        part = GroupPartition.contiguous(6, 3)
        s = 0.05 * rng.standard_normal((4, 6))
        exact = group_l21_value(s, part)
        gaps = [exact - smooth_group_l21(s, part, 10.0 ** -p).value for p in range(1, 7)]
        assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 1e-6 * 4 * 3 / 2

    def test_gradient_matches_finite_differences(self, rng):
        part = GroupPartition.contiguous(6, 2)
        s = rng.standard_normal((3, 6))
        nu = 0.5
        grad = smooth_group_l21(s, part, nu).gradient
        h = 1e-6
        for idx in np.ndindex(s.shape):
            e = np.zeros_like(s)
            e[idx] = h
            fd = (smooth_group_l21(s + e, part, nu).value - smooth_group_l21(s - e, part, nu).value) / (2 * h)
            assert grad[idx] == pytest.approx(fd, abs=1e-6)

    def test_quadratic_regime(self):
        part = GroupPartition.single(2)
        s = np.array([[0.03, 0.04]])
        sm = smooth_group_l21(s, part, nu=1.0)
        assert sm.value == pytest.approx(0.5 * 0.05**2)
        np.testing.assert_allclose(sm.gradient, s)

    def test_bound_formula(self):
        part = GroupPartition((("a", (0,)), ("b", (1, 2, 3, 4))))
        assert smoothing_gap_bound(3, part, 0.1) == pytest.approx(0.1 * 3 * 2 / 2)
        assert smoothing_gap_bound(3, part, 0.1, size_weighted=True) == pytest.approx(0.1 * 3 * 5 / 2)

    def test_rejects_non_positive_nu(self):
        with pytest.raises(DataError):
            smooth_group_l21(np.ones((1, 2)), GroupPartition.single(2), 0.0)


class TestGroupPenalty:
    def test_plain_matches_functions(self, rng):
        part = GroupPartition.contiguous(6, 2)
        s = rng.standard_normal((4, 6))
        pen = GroupPenalty(part)
        assert pen.value(s) == group_l21_value(s, part)
        np.testing.assert_array_equal(pen.prox(s, 0.3), prox_group_l21(s, 0.3, part))
        assert pen.gradient_lipschitz(0.25) == 4.0
        assert pen.gap_bound(4, 0.1) == pytest.approx(0.4)

    def test_squared_variant(self, rng):
        part = GroupPartition.contiguous(6, 2)
        s = rng.standard_normal((4, 6))
        pen = GroupPenalty(part, squared=True)
        omega = group_l21_value(s, part)
        assert pen.value(s) == pytest.approx(omega**2)
        sm = pen.smooth(s, 0.01)
        base = smooth_group_l21(s, part, 0.01)
        assert sm.value == pytest.approx(base.value**2)
        np.testing.assert_allclose(sm.gradient, 2 * base.value * base.gradient)
        with pytest.raises(SolverError):
            pen.prox(s, 0.1)
