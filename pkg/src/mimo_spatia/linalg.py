"""Dense complex linear-algebra kernels.

The eigensolver is a cyclic Jacobi method written here; Cholesky factorization
and triangular solves go through LAPACK (via scipy) because they sit on the hot
path of every angle/shadowing sweep.
"""
from __future__ import annotations

import functools

import numpy as np
from scipy.linalg import blas, lapack

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
PD_TOL = 1e-12


class LinAlgError(ArithmeticError):
    pass


class NotPositiveDefinite(LinAlgError):
    def __init__(self, pivot_index: int, pivot: float, tol: float):
        self.pivot_index = pivot_index
        self.pivot = pivot
        self.tol = tol
        super().__init__(
            f"matrix is not positive definite: pivot {pivot_index} = {pivot:.3e} "
            f"(tolerance {tol:.3e})"
        )


class EigenNotConverged(LinAlgError):
    def __init__(self, sweeps: int, residual: float):
        self.sweeps = sweeps
        self.residual = residual
        super().__init__(
            f"Jacobi eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal norm {residual:.3e})"
        )


def as_hermitian(a) -> np.ndarray:
    """Return a complex copy of ``a`` with the upper triangle mirrored into the lower."""
    a = np.array(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    upper = np.triu(a, 1)
    return upper + upper.conj().T + np.diag(a.diagonal().real).astype(complex)


def frobenius_sq(a: np.ndarray) -> float:
    """Squared Frobenius norm; for Hermitian ``a`` this equals tr(a @ a)."""
    v = np.asarray(a).ravel(order="K")
    return float(np.vdot(v, v).real)


def trace(a: np.ndarray) -> complex:
    return complex(np.trace(a))


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


@functools.lru_cache(maxsize=64)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Pairings for one cyclic sweep: n-1 rounds of disjoint (p, q) pairs, p < q.

    Odd ``n`` is padded with a dummy index whose pairs are dropped.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            i, j = players[k], players[m - 1 - k]
            if i >= n or j >= n:
                continue
            ps.append(min(i, j))
            qs.append(max(i, j))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _rotate_rows(x: np.ndarray, p, q, c, s, phase) -> None:
    # x <- U^H x, U = [[c, s], [-s conj(e), c conj(e)]] on the (p, q) plane
    k = len(p)
    rows = x[np.concatenate((p, q))]
    rp, rq = rows[:k], rows[k:]
    x[p] = c[:, None] * rp - (s * phase)[:, None] * rq
    x[q] = s[:, None] * rp + (c * phase)[:, None] * rq


def hermitian_eig(a, *, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = JACOBI_TOL):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in round-robin order so that
    the rotations of one round touch disjoint rows/columns and can be applied
    together. Stops when the off-diagonal Frobenius norm drops below
    ``tol * ||a||_F``.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted descending
    and eigenvectors as orthonormal columns.
    """
    a = as_hermitian(a)
    n = a.shape[0]
    # rows of w are the conjugated eigenvectors: w = V^H
    w = np.eye(n, dtype=complex)
    scale = np.sqrt(frobenius_sq(a))
    if n == 1 or scale == 0.0:
        return _sorted(a.diagonal().real.copy(), w)
    threshold = tol * scale
    idx = np.arange(n)

    def off_norm():
        # summed directly: ||a||^2 - sum|a_ii|^2 cancels to noise near sqrt(eps) ||a||
        d = a.diagonal().copy()
        a[idx, idx] = 0.0
        out = np.sqrt(frobenius_sq(a))
        a[idx, idx] = d
        return out

    off = off_norm()
    sweeps = 0
    while off > threshold:
        if sweeps >= max_sweeps:
            raise EigenNotConverged(sweeps, off)
        for p, q in _round_robin(n):
            apq = a[p, q]
            mag = np.abs(apq)
            if not np.any(mag > 0.0):
                continue
            safe = np.where(mag > 0.0, mag, 1.0)
            phase = np.where(mag > 0.0, apq / safe, 1.0)
            tau = (a[q, q].real - a[p, p].real) / (2.0 * safe)
            # real symmetric 2x2 rotation zeroing |a_pq| after the phase shift
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t = np.where(mag > 0.0, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # U^H a U = U^H (U^H a)^H because a is Hermitian
            _rotate_rows(a, p, q, c, s, phase)
            a = np.ascontiguousarray(a.T.conj())
            _rotate_rows(a, p, q, c, s, phase)
            a[p, q] = 0.0
            a[q, p] = 0.0
            _rotate_rows(w, p, q, c, s, phase)
        a[idx, idx] = a.diagonal().real
        sweeps += 1
        off = off_norm()
    return _sorted(a.diagonal().real.copy(), np.ascontiguousarray(w.T.conj()))


def _sorted(w: np.ndarray, v: np.ndarray):
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def eigvalsh(a) -> np.ndarray:
    """Eigenvalues only, sorted descending."""
    return hermitian_eig(a)[0]


def cholesky(a, *, clean: bool = True, overwrite: bool = False) -> np.ndarray:
    """Lower-triangular ``L`` with ``a = L @ L^H``.

    Raises NotPositiveDefinite when a squared pivot falls at or below
    ``1e-12 * max(diag(a))``. With ``clean=False`` the strict upper triangle of
    the result is left unspecified (cheaper when only triangular solves follow).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    diag = a.diagonal().real
    tol = PD_TOL * float(np.max(diag)) if diag.size else 0.0
    c, info = lapack.zpotrf(a, lower=1, clean=int(clean), overwrite_a=int(overwrite))
    if info > 0:
        k = info - 1
        raise NotPositiveDefinite(k, float(c[k, k].real), tol)
    if info < 0:
        raise ValueError(f"zpotrf: illegal argument {-info}")
    pivots = c.diagonal().real ** 2
    bad = np.flatnonzero(pivots <= tol)
    if bad.size:
        k = int(bad[0])
        raise NotPositiveDefinite(k, float(pivots[k]), tol)
    return c


def hermitian_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for Hermitian positive definite ``a`` via Cholesky."""
    l = cholesky(a)
    b = np.asarray(b, dtype=complex)
    vector = b.ndim == 1
    rhs = b[:, None] if vector else b
    x, info = lapack.zpotrs(l, rhs, lower=1)
    if info != 0:
        raise ValueError(f"zpotrs: illegal argument {-info}")
    return x[:, 0] if vector else x


def whitened(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``L^{-1} b`` for a lower Cholesky factor ``l``."""
    return blas.ztrsm(1.0, l, np.asarray(b, dtype=complex), side=0, lower=1)


def inverse_quadratic_trace(a, b) -> float:
    """tr(b^H a^{-1} b) for Hermitian positive definite ``a``.

    Computed as ||L^{-1} b||_F^2 without forming the inverse.
    """
    return frobenius_sq(whitened(cholesky(a), b))
