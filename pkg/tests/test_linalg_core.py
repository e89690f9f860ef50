import numpy as np
import pytest

from src.errors import DataError
from src.linalg_core import as_matrix, spectral_norm_sq_bound, svd_thin


def _orthonormal_columns(q, atol=1e-10):
    np.testing.assert_allclose(q.T @ q, np.eye(q.shape[1]), atol=atol)


class TestAsMatrix:
    def test_float64_c_contiguous_copy(self):
        src = np.arange(6, dtype=np.int32).reshape(2, 3)
        out = as_matrix(src)
        assert out.dtype == np.float64
        assert out.flags.c_contiguous
        out[0, 0] = 99.0
        assert src[0, 0] == 0

    def test_rejects_nan_with_position(self):
        with pytest.raises(DataError, match=r"\(0, 1\)"):
            as_matrix([[1.0, np.nan], [0.0, 0.0]], "features")

    def test_rejects_vector(self):
        with pytest.raises(DataError, match="2-D"):
            as_matrix([1.0, 2.0])

    def test_rejects_non_numeric(self):
        with pytest.raises(DataError):
            as_matrix([["a", "b"]])


class TestSvdThin:
    @pytest.mark.parametrize("shape", [(8, 5), (5, 8), (6, 6), (1, 4), (4, 1)])
    def test_reconstruction_and_orthonormality(self, rng, shape):
        a = rng.standard_normal(shape)
        u, sigma, v = svd_thin(a)
        r = min(shape)
        assert u.shape == (shape[0], r)
        assert v.shape == (shape[1], r)
        np.testing.assert_allclose(u @ np.diag(sigma) @ v.T, a, atol=1e-10)
        _orthonormal_columns(u)
        _orthonormal_columns(v)

    def test_singular_values_sorted_and_match_lapack(self, rng):
        a = rng.standard_normal((12, 7))
        _, sigma, _ = svd_thin(a)
        assert np.all(np.diff(sigma) <= 0)
        np.testing.assert_allclose(sigma, np.linalg.svd(a, compute_uv=False), rtol=1e-10)

    def test_sign_convention(self, rng):
        u, _, _ = svd_thin(rng.standard_normal((9, 4)))
        for j in range(u.shape[1]):
            assert u[np.argmax(np.abs(u[:, j])), j] > 0

    def test_deterministic(self, rng):
        a = rng.standard_normal((7, 5))
        first = svd_thin(a)
        second = svd_thin(a)
        for x, y in zip(first, second):
            np.testing.assert_array_equal(x, y)

    def test_rank_one_keeps_orthonormal_basis(self, rng):
        a = np.outer(rng.standard_normal(6), rng.standard_normal(4))
        u, sigma, v = svd_thin(a)
        assert np.all(sigma[1:] <= 1e-12 * sigma[0])
        _orthonormal_columns(u)
        _orthonormal_columns(v)
        np.testing.assert_allclose(u @ np.diag(sigma) @ v.T, a, atol=1e-10)

    def test_zero_matrix(self):
        u, sigma, v = svd_thin(np.zeros((5, 3)))
        np.testing.assert_array_equal(sigma, np.zeros(3))
        _orthonormal_columns(u)
        _orthonormal_columns(v)

    def test_empty_matrix_rejected(self):
        with pytest.raises(DataError):
            svd_thin(np.zeros((0, 3)))


class TestSpectralBound:
    def test_known_spectrum(self, rng):
        q1, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        q2, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        a = q1[:, :3] @ np.diag([3.0, 1.0, 0.5]) @ q2.T
        bound = spectral_norm_sq_bound(a)
        assert 9.0 - 1e-9 <= bound <= 9.0 * 1.02 + 1e-9

    def test_upper_bound_on_random_matrices(self, rng):
        for _ in range(10):
            a = rng.standard_normal((30, 20))
            true = np.linalg.norm(a, 2) ** 2
            bound = spectral_norm_sq_bound(a)
            assert true * (1 - 1e-8) <= bound <= np.sum(a * a) + 1e-9

    def test_zero_and_empty(self):
        assert spectral_norm_sq_bound(np.zeros((4, 3))) == 0.0
        assert spectral_norm_sq_bound(np.zeros((0, 3))) == 0.0

    def test_rank_one_hits_frobenius_cap(self):
        a = np.outer([1.0, 2.0], [3.0, 0.0, 4.0])
        assert spectral_norm_sq_bound(a) == pytest.approx(np.sum(a * a))
