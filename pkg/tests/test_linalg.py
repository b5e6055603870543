import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_spatia import covmodel, linalg


def random_hermitian(n, rng, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a + a.conj().T) / 2


def random_pd(n, rng):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T + n * np.eye(n)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestHermitianEig:
    def test_identity(self):
        w, v = linalg.hermitian_eig(np.eye(4))
        np.testing.assert_array_equal(w, np.ones(4))
        np.testing.assert_allclose(v.conj().T @ v, np.eye(4), atol=1e-14)

    def test_two_by_two(self):
        w, v = linalg.hermitian_eig(np.array([[1.0, 0.5], [0.5, 1.0]]))
        np.testing.assert_allclose(w, [1.5, 0.5], rtol=1e-14)
        np.testing.assert_allclose(np.abs(v[:, 0]), [2**-0.5, 2**-0.5], rtol=1e-14)

    def test_ula_trace_and_positivity(self):
        R = covmodel.exponential_ula(8, 0.9, 0.0).R
        w = linalg.eigvalsh(R)
        assert abs(w.sum() - 8) < 1e-12
        assert np.all(w > 0)

    def test_sorted_descending(self):
        w = linalg.eigvalsh(random_hermitian(12, np.random.default_rng(3)))
        assert np.all(np.diff(w) <= 0)

    @pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 33, 100])
    def test_reconstruction_and_orthogonality(self, n):
        a = random_hermitian(n, np.random.default_rng(n))
        w, v = linalg.hermitian_eig(a)
        assert rel_fro(v @ np.diag(w) @ v.conj().T, a) <= 1e-10
        assert np.linalg.norm(v.conj().T @ v - np.eye(n)) <= 1e-10

    def test_matches_lapack(self):
        a = random_hermitian(40, np.random.default_rng(11))
        np.testing.assert_allclose(linalg.eigvalsh(a), np.linalg.eigvalsh(a)[::-1], atol=1e-11)

    def test_degenerate_spectrum(self):
        # repeated eigenvalues from a Kronecker product
        a = linalg.kron(np.diag([2.0, 1.0]), np.eye(3))
        u = np.linalg.qr(random_hermitian(6, np.random.default_rng(0)))[0]
        w, v = linalg.hermitian_eig(u @ a @ u.conj().T)
        np.testing.assert_allclose(w, [2, 2, 2, 1, 1, 1], atol=1e-12)
        assert np.linalg.norm(v.conj().T @ v - np.eye(6)) <= 1e-10

    def test_zero_matrix(self):
        w, v = linalg.hermitian_eig(np.zeros((3, 3)))
        np.testing.assert_array_equal(w, 0)
        np.testing.assert_array_equal(v, np.eye(3))

    def test_non_convergence_reports_residual(self):
        a = random_hermitian(10, np.random.default_rng(1))
        with pytest.raises(linalg.EigenNotConverged) as exc:
            linalg.hermitian_eig(a, max_sweeps=1)
        assert exc.value.sweeps == 1
        assert exc.value.residual > 0

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            linalg.hermitian_eig(np.ones((2, 3)))

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
    def test_trace_and_frobenius_identities(self, n, seed, scale):
        a = random_hermitian(n, np.random.default_rng(seed), scale)
        w, v = linalg.hermitian_eig(a)
        norm = np.linalg.norm(a)
        assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - a) <= 1e-10 * norm
        assert abs(w.sum() - np.trace(a).real) <= 1e-10 * max(norm, 1e-300) * np.sqrt(n)
        assert abs(np.sum(w**2) - linalg.frobenius_sq(a)) <= 1e-10 * norm**2


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(linalg.cholesky(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(linalg.cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_ula_reconstruction(self):
        R = covmodel.exponential_ula(16, 0.5, np.pi / 6).R
        L = linalg.cholesky(R)
        assert rel_fro(L @ L.conj().T, R) <= 1e-10
        np.testing.assert_array_equal(np.triu(L, 1), 0)

    def test_rank_one_rejected(self):
        R = covmodel.exponential_ula(4, 1.0, 0.3).R
        with pytest.raises(linalg.NotPositiveDefinite) as exc:
            linalg.cholesky(R)
        assert exc.value.pivot_index == 1

    def test_indefinite_rejected(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.cholesky(np.diag([1.0, -1.0]))

    def test_tiny_pivot_rejected(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.cholesky(np.diag([1.0, 1e-13]))

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(1, 20), seed=st.integers(0, 2**32 - 1))
    def test_reconstruction_property(self, n, seed):
        a = random_pd(n, np.random.default_rng(seed))
        L = linalg.cholesky(a)
        assert rel_fro(L @ L.conj().T, a) <= 1e-10


class TestKron:
    def test_identities(self):
        np.testing.assert_array_equal(linalg.kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_diagonals(self):
        np.testing.assert_array_equal(linalg.kron(np.diag([1, 2]), np.diag([3, 4])), np.diag([3, 4, 6, 8]))

    def test_block_layout(self):
        rng = np.random.default_rng(5)
        a, b = random_hermitian(2, rng), random_hermitian(3, rng)
        k = linalg.kron(a, b)
        assert k.shape == (6, 6)
        np.testing.assert_allclose(k[3:6, 0:3], a[1, 0] * b)

    def test_eigenvalue_products(self):
        rng = np.random.default_rng(9)
        a, b = random_hermitian(3, rng), random_hermitian(3, rng)
        products = np.sort(np.outer(linalg.eigvalsh(a), linalg.eigvalsh(b)).ravel())[::-1]
        np.testing.assert_allclose(linalg.eigvalsh(linalg.kron(a, b)), products, atol=1e-8)


class TestSolve:
    def test_identity(self):
        b = np.random.default_rng(0).standard_normal((4, 3)) + 0j
        np.testing.assert_allclose(linalg.hermitian_solve(np.eye(4), b), b)

    def test_scaled_identity(self):
        np.testing.assert_allclose(linalg.hermitian_solve(2 * np.eye(3), np.eye(3)), 0.5 * np.eye(3))

    def test_vector_rhs(self):
        a = random_pd(5, np.random.default_rng(2))
        b = np.arange(5.0) + 1j
        x = linalg.hermitian_solve(a, b)
        assert x.shape == (5,)
        assert np.linalg.norm(a @ x - b) <= 1e-9 * np.linalg.norm(b)

    def test_two_ue_observation_residual(self):
        R1 = 10 * covmodel.exponential_ula(32, 0.5, 0.4).R
        R2 = covmodel.exponential_ula(32, 0.7, -1.2).R
        Q = R1 + R2 + np.eye(32)
        X = linalg.hermitian_solve(Q, R1)
        assert np.linalg.norm(Q @ X - R1) <= 1e-9 * np.linalg.norm(R1)

    def test_propagates_not_positive_definite(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.hermitian_solve(np.diag([1.0, 0.0]), np.eye(2))

    def test_inverse_quadratic_trace(self):
        a = random_pd(6, np.random.default_rng(4))
        b = random_hermitian(6, np.random.default_rng(5))
        expected = np.trace(b.conj().T @ np.linalg.solve(a, b)).real
        assert linalg.inverse_quadratic_trace(a, b) == pytest.approx(expected, rel=1e-10)


def test_frobenius_sq_matches_trace_of_square():
    a = random_hermitian(9, np.random.default_rng(8))
    assert linalg.frobenius_sq(a) == pytest.approx(np.trace(a @ a).real, rel=1e-12)


def test_as_hermitian_mirrors_upper_triangle():
    a = np.array([[1 + 5j, 2 + 1j], [99.0, 3.0]])
    h = linalg.as_hermitian(a)
    np.testing.assert_array_equal(h, [[1, 2 + 1j], [2 - 1j, 3]])
