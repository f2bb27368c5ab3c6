import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from mtdc import densela
from mtdc.densela import (
    DimensionError,
    NotSymmetric,
    SingularMatrix,
    balance,
    cholesky_pd_check,
    det,
    jacobi_sym_eig,
    lu_factor,
    lu_solve,
    lyapunov_residual,
    lyapunov_solve,
    norm2_estimate,
)


def random_hurwitz(rng, n):
    a = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(a).real)
    return a - (shift + 0.1 + rng.random()) * np.eye(n)


def sturm_count(s, lam):
    """Eigenvalues of symmetric ``s`` below ``lam``: sign changes of leading minors of s - lam I."""
    t = s - lam * np.eye(len(s))
    prev, changes = 1.0, 0
    for k in range(1, len(s) + 1):
        cur = det(t[:k, :k])
        if cur == 0.0:
            cur = -1e-300 * np.sign(prev)
        if np.sign(cur) != np.sign(prev):
            changes += 1
        prev = cur
    return changes


def bisection_eigs(s, tol=1e-11):
    """Characteristic-polynomial bisection oracle for symmetric matrices."""
    r = np.max(np.sum(np.abs(s), axis=1))
    out = []
    for k in range(len(s)):
        lo, hi = -r - 1.0, r + 1.0
        while hi - lo > tol * max(1.0, r):
            mid = 0.5 * (lo + hi)
            if sturm_count(s, mid) > k:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.array(out)


class TestLU:
    def test_solves_random_system(self, rng):
        a = rng.standard_normal((8, 8)) + 8 * np.eye(8)
        b = rng.standard_normal(8)
        x = lu_solve(a, b)
        assert np.max(np.abs(a @ x - b)) < 1e-12

    def test_matrix_right_hand_side(self, rng):
        a = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        b = rng.standard_normal((5, 3))
        np.testing.assert_allclose(lu_solve(a, b), np.linalg.solve(a, b), rtol=1e-12, atol=1e-12)

    def test_pivoting_needed(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(lu_solve(a, [2.0, 3.0]), [3.0, 2.0])

    def test_singular_raises(self):
        with pytest.raises(SingularMatrix):
            lu_factor(np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_laplacian_is_singular(self):
        lap = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        with pytest.raises(SingularMatrix):
            lu_solve(lap, np.ones(3))
        assert det(lap) == 0.0

    def test_det_matches_numpy(self, rng):
        a = rng.standard_normal((6, 6))
        assert det(a) == pytest.approx(np.linalg.det(a), rel=1e-10)

    def test_dimension_limit(self):
        with pytest.raises(DimensionError):
            lu_factor(np.eye(65))

    def test_non_square(self):
        with pytest.raises(DimensionError):
            lu_factor(np.ones((2, 3)))


class TestCholesky:
    def test_pd(self):
        res = cholesky_pd_check(np.array([[4.0, 1.0], [1.0, 3.0]]))
        assert res.is_pd and res.min_pivot > 0
        np.testing.assert_allclose(res.factor @ res.factor.T, [[4.0, 1.0], [1.0, 3.0]])

    def test_indefinite(self):
        assert not cholesky_pd_check(np.array([[1.0, 2.0], [2.0, 1.0]])).is_pd

    def test_semidefinite_rejected(self):
        assert not cholesky_pd_check(np.array([[1.0, 1.0], [1.0, 1.0]])).is_pd

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            cholesky_pd_check(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestJacobi:
    def test_against_bisection_oracle(self, rng):
        b = rng.standard_normal((7, 7))
        s = b + b.T
        res = jacobi_sym_eig(s)
        np.testing.assert_allclose(np.sort(res.eigenvalues), bisection_eigs(s), atol=1e-8)

    def test_reconstruction_and_orthogonality(self, rng):
        b = rng.standard_normal((10, 10))
        s = b @ b.T
        res = jacobi_sym_eig(s)
        v, lam = res.eigenvectors, res.eigenvalues
        assert np.max(np.abs(v @ np.diag(lam) @ v.T - s)) <= 1e-9
        assert np.max(np.abs(v.T @ v - np.eye(10))) <= 1e-12

    def test_ascending(self, rng):
        b = rng.standard_normal((6, 6))
        lam = jacobi_sym_eig(b + b.T).eigenvalues
        assert np.all(np.diff(lam) >= 0)

    def test_diagonal_input(self):
        res = jacobi_sym_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(res.eigenvalues, [1.0, 2.0, 3.0])

    def test_rejects_nonsymmetric(self):
        with pytest.raises(NotSymmetric):
            jacobi_sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_trace_preserved(self, n, seed):
        b = np.random.default_rng(seed).standard_normal((n, n))
        s = b + b.T
        assert np.sum(jacobi_sym_eig(s).eigenvalues) == pytest.approx(np.trace(s), abs=1e-9)


class TestLyapunov:
    def test_scalar_closed_form(self):
        # 2 a p = -1
        p = lyapunov_solve(np.array([[-2.0]]))
        assert p[0, 0] == pytest.approx(0.25)

    def test_against_scipy(self, rng):
        a = random_hurwitz(rng, 6)
        ref = scipy.linalg.solve_continuous_lyapunov(a.T, -np.eye(6))
        np.testing.assert_allclose(lyapunov_solve(a), ref, rtol=1e-9, atol=1e-11)

    def test_solution_symmetric_pd(self, rng):
        p = lyapunov_solve(random_hurwitz(rng, 5))
        assert np.array_equal(p, p.T)
        assert cholesky_pd_check(p).is_pd

    def test_residual_many_random(self, rng):
        worst = max(lyapunov_residual(a, lyapunov_solve(a))
                    for a in (random_hurwitz(rng, int(rng.integers(1, 13))) for _ in range(40)))
        assert worst <= 1e-7

    def test_marginal_singular(self):
        with pytest.raises(SingularMatrix):
            lyapunov_solve(np.array([[0.0, 1.0], [-1.0, 0.0]]))

    def test_unstable_gives_indefinite(self):
        p = lyapunov_solve(np.diag([-1.0, 2.0]))
        assert not cholesky_pd_check(p).is_pd


class TestBalanceAndNorm:
    def test_balance_is_power_of_two_similarity(self, rng):
        a = rng.standard_normal((5, 5)) * np.logspace(-4, 4, 5)[:, None]
        d, bal = balance(a)
        np.testing.assert_allclose(np.diag(1 / d) @ a @ np.diag(d), bal, rtol=1e-15)
        assert np.all(np.log2(d) == np.round(np.log2(d)))
        np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(bal)),
                                   np.sort_complex(np.linalg.eigvals(a)), rtol=1e-8)

    def test_norm_estimate_close_to_two_norm(self, rng):
        a = rng.standard_normal((9, 9))
        est = norm2_estimate(a)
        true = np.linalg.norm(a, 2)
        assert true * 0.99 <= est <= max(true, densela.max_norm(a)) * 1.0000001

    def test_norm_bounds_spectral_radius(self, rng):
        a = random_hurwitz(rng, 7)
        assert norm2_estimate(a) >= 0.99 * np.max(np.abs(np.linalg.eigvals(a)))
