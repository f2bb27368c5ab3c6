"""Small dense linear-algebra kernels.

Matrices are plain 2-D ``float64`` numpy arrays; numpy is used for storage
and vectorised row operations only. Factorisations, the symmetric
eigensolver and the Lyapunov solver are implemented here so that every
stability certificate in the package rests on code with fixed, documented
tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DIM = 64


@dataclass(frozen=True)
class ToleranceProfile:
    lu_pivot: float = 1e-12
    lu_residual: float = 1e-9
    chol_pivot: float = 1e-12
    symmetry: float = 1e-10
    jacobi_offdiag: float = 1e-12
    jacobi_max_sweeps: int = 100
    lyap_residual: float = 1e-7


TOL = ToleranceProfile()


class LinAlgError(ArithmeticError):
    pass


class SingularMatrix(LinAlgError):
    pass


class NotSymmetric(LinAlgError):
    pass


class NoConvergence(LinAlgError):
    pass


class DimensionError(ValueError):
    pass


def as_matrix(a, *, square: bool = False, max_dim: int | None = MAX_DIM) -> np.ndarray:
    """Validate and copy ``a`` into a finite 2-D float array."""
    m = np.array(a, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if max_dim is not None and max(m.shape) > max_dim:
        raise DimensionError(f"matrix dimension {max(m.shape)} exceeds limit {max_dim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def max_norm(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class LUFactor:
    lu: np.ndarray
    perm: np.ndarray
    sign: float


def lu_factor(a, *, max_dim: int | None = MAX_DIM) -> LUFactor:
    """Doolittle LU with partial pivoting, ``P A = L U``.

    Raises SingularMatrix when a pivot falls below ``1e-12 * max|A|``.
    """
    lu = as_matrix(a, square=True, max_dim=max_dim)
    n = lu.shape[0]
    perm = np.arange(n)
    sign = 1.0
    thresh = TOL.lu_pivot * max_norm(lu)
    if n and thresh == 0.0:
        raise SingularMatrix("zero matrix")
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < thresh:
            raise SingularMatrix(f"pivot {k} has magnitude {abs(lu[p, k]):.3e} below {thresh:.3e}")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            sign = -sign
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return LUFactor(lu, perm, sign)


def lu_apply(f: LUFactor, b) -> np.ndarray:
    """Solve with an existing factorisation; ``b`` may hold several columns."""
    b = np.asarray(b, dtype=float)
    x = b[f.perm].copy()
    n = f.lu.shape[0]
    for i in range(1, n):
        x[i] -= f.lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - f.lu[i, i + 1:] @ x[i + 1:]) / f.lu[i, i]
    return x


def lu_solve(a, b, *, refine: int = 1, max_dim: int | None = MAX_DIM) -> np.ndarray:
    """Solve ``A x = b`` by partial-pivoting LU plus iterative refinement."""
    a = as_matrix(a, square=True, max_dim=max_dim)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"rhs length {b.shape[0]} does not match {a.shape[0]}")
    f = lu_factor(a, max_dim=max_dim)
    x = lu_apply(f, b)
    for _ in range(refine):
        x = x + lu_apply(f, b - a @ x)
    return x


def det(a) -> float:
    """Determinant via LU; exactly singular input returns 0."""
    try:
        f = lu_factor(a)
    except SingularMatrix:
        return 0.0
    return f.sign * float(np.prod(np.diag(f.lu)))


def check_symmetric(s) -> np.ndarray:
    s = as_matrix(s, square=True)
    scale = max_norm(s)
    asym = max_norm(s - s.T)
    if asym > TOL.symmetry * max(scale, np.finfo(float).tiny):
        raise NotSymmetric(f"asymmetry {asym:.3e} relative to scale {scale:.3e}")
    return 0.5 * (s + s.T)


@dataclass(frozen=True)
class CholeskyResult:
    is_pd: bool
    min_pivot: float
    factor: np.ndarray | None = None


def cholesky_pd_check(s) -> CholeskyResult:
    """Positive-definiteness test by Cholesky factorisation.

    ``S`` is declared positive definite iff every pivot exceeds
    ``1e-12 * trace(S) / n``. The lower factor is returned only then.
    """
    s = check_symmetric(s)
    n = s.shape[0]
    if n == 0:
        return CholeskyResult(True, np.inf, np.zeros((0, 0)))
    thresh = TOL.chol_pivot * float(np.trace(s)) / n
    low = np.zeros_like(s)
    min_pivot = np.inf
    for k in range(n):
        piv = s[k, k] - low[k, :k] @ low[k, :k]
        min_pivot = min(min_pivot, piv)
        if not piv > thresh or thresh <= 0.0:
            return CholeskyResult(False, float(piv))
        low[k, k] = np.sqrt(piv)
        low[k + 1:, k] = (s[k + 1:, k] - low[k + 1:, :k] @ low[k, :k]) / low[k, k]
    return CholeskyResult(True, float(min_pivot), low)


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0


def jacobi_sym_eig(s) -> SpectralResult:
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius
    norm is at most ``1e-12 * ||S||_F``. Eigenvalues come back ascending,
    eigenvectors as the matching orthonormal columns.
    """
    a = check_symmetric(s)
    n = a.shape[0]
    v = np.eye(n)
    target = TOL.jacobi_offdiag * np.linalg.norm(a)
    sweeps = 0

    def off(m):
        # summed directly; ||M||_F^2 - sum(diag^2) cancels far above the target
        return np.sqrt(2.0 * np.sum(np.triu(m, 1) ** 2))

    while off(a) > target:
        if sweeps >= TOL.jacobi_max_sweeps:
            raise NoConvergence(f"no convergence after {sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-300 * max(abs(diff), 1.0):
                    continue
                theta = diff / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta)) if theta != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                sn = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SpectralResult(w[order], v[:, order], sweeps)


def lyapunov_operator(a) -> np.ndarray:
    """Matrix of ``P -> A^T P + P A`` acting on column-major ``vec(P)``."""
    a = as_matrix(a, square=True)
    eye = np.eye(a.shape[0])
    return np.kron(eye, a.T) + np.kron(a.T, eye)


def lyapunov_solve(a) -> np.ndarray:
    """Solve ``A^T P + P A = -I`` by Kronecker vectorisation.

    Raises SingularMatrix when the Lyapunov operator is singular, which
    happens whenever two eigenvalues of ``A`` sum to zero.
    """
    a = as_matrix(a, square=True)
    n = a.shape[0]
    rhs = -np.eye(n).reshape(-1, order="F")
    vec_p = lu_solve(lyapunov_operator(a), rhs, max_dim=None)
    p = vec_p.reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def lyapunov_residual(a, p) -> float:
    a = np.asarray(a, dtype=float)
    return max_norm(a.T @ p + p @ a + np.eye(a.shape[0]))


def balance(a, *, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Radix-2 diagonal balancing.

    Returns ``(d, b)`` with ``b = diag(d)^-1 A diag(d)``. All scale factors
    are powers of two, so ``b`` is exactly similar to ``A`` in floating
    point.
    """
    b = as_matrix(a, square=True)
    n = b.shape[0]
    d = np.ones(n)
    for _ in range(max_iter):
        done = True
        for i in range(n):
            c = np.sum(np.abs(b[:, i])) - abs(b[i, i])
            r = np.sum(np.abs(b[i, :])) - abs(b[i, i])
            if c == 0.0 or r == 0.0:
                continue
            s = c + r
            f = 1.0
            while c < r / 2.0:
                f *= 2.0
                c *= 4.0
            while c > r * 2.0:
                f /= 2.0
                c /= 4.0
            if (c + r) / f < 0.95 * s:
                done = False
                d[i] *= f
                b[i, :] /= f
                b[:, i] *= f
        if done:
            break
    return d, b


def norm2_estimate(a, *, iters: int = 60) -> float:
    """Power-iteration estimate of the spectral norm ``||A||_2``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    if n == 0 or max_norm(a) == 0.0:
        return 0.0
    x = 1.0 + np.arange(n) / n
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = a.T @ (a @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        est = np.sqrt(ny)
        x = y / ny
    # guard against a start vector nearly orthogonal to the top singular vector
    return max(est, max_norm(a))
