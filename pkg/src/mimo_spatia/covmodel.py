"""Exponential spatial-correlation covariances for linear and planar arrays.

A ULA covariance is built as the congruence ``D (beta E) D`` where ``E`` is the
Hermitian Toeplitz matrix with first row ``(r e^{i theta})^k`` and
``D = diag(10^{f/20})`` carries per-antenna shadowing in dB. A UPA covariance
is the Kronecker product of a horizontal and a vertical ULA factor, with
shadowing drawn per factor.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from mimo_spatia import linalg


class ArrayKind(str, enum.Enum):
    ULA = "ULA"
    UPA = "UPA"
    UNCORRELATED = "uncorrelated"


class ModelError(ValueError):
    pass


def near_square(m: int) -> tuple[int, int]:
    """(M_h, M_v) with M_h * M_v = m and M_h the largest divisor not above sqrt(m)."""
    if m < 1:
        raise ModelError(f"antenna count must be >= 1, got {m}")
    h = math.isqrt(m)
    while m % h:
        h -= 1
    return h, m // h


@dataclass(frozen=True)
class CorrelationModelSpec:
    array_kind: ArrayKind
    M: int
    r: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    sigma_db: float = 0.0
    beta: float = 1.0
    M_h: int | None = None
    M_v: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "array_kind", ArrayKind(self.array_kind))
        if self.M < 1:
            raise ModelError(f"M must be >= 1, got {self.M}")
        if not 0.0 <= self.r <= 1.0:
            raise ModelError(f"r must lie in [0, 1], got {self.r}")
        if self.sigma_db < 0.0:
            raise ModelError(f"sigma_db must be >= 0, got {self.sigma_db}")
        if not self.beta > 0.0:
            raise ModelError(f"beta must be > 0, got {self.beta}")
        if not -math.pi <= self.theta < math.pi:
            raise ModelError(f"theta must lie in [-pi, pi), got {self.theta}")
        if not -math.pi / 2 <= self.phi < math.pi / 2:
            raise ModelError(f"phi must lie in [-pi/2, pi/2), got {self.phi}")
        if self.array_kind is ArrayKind.UPA:
            if self.M_h is None and self.M_v is None:
                h, v = near_square(self.M)
                object.__setattr__(self, "M_h", h)
                object.__setattr__(self, "M_v", v)
            elif self.M_h is None or self.M_v is None:
                raise ModelError("UPA needs both M_h and M_v (or neither)")
            if self.M_h < 1 or self.M_v < 1 or self.M_h * self.M_v != self.M:
                raise ModelError(f"UPA needs M_h * M_v = M, got {self.M_h} x {self.M_v} != {self.M}")


@dataclass(frozen=True)
class CovarianceMatrix:
    """A covariance ``R`` with the model it came from and the shadowing actually applied.

    For a UPA ``shadowing`` holds the horizontal draws followed by the vertical ones.
    """

    R: np.ndarray
    spec: CorrelationModelSpec
    shadowing: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def M(self) -> int:
        return self.R.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.R).real)


def sample_shadowing(M: int, sigma_db: float, rng: np.random.Generator) -> np.ndarray:
    """``M`` i.i.d. Normal(0, sigma_db^2) offsets in dB."""
    if sigma_db < 0:
        raise ModelError(f"sigma_db must be >= 0, got {sigma_db}")
    if sigma_db == 0:
        return np.zeros(M)
    return rng.normal(0.0, sigma_db, size=M)


def _toeplitz_core(M: int, r: float, theta: float) -> np.ndarray:
    # upper triangle (r e^{i theta})^(n-m), mirrored conjugately below
    lag = np.arange(M)[None, :] - np.arange(M)[:, None]
    k = np.abs(lag)
    mag = np.power(float(r), k)  # 0**0 == 1 keeps r = 0 on the identity
    e = mag * np.exp(1j * theta * k)
    return np.where(lag >= 0, e, e.conj())


def ula_matrix(M: int, r: float, theta: float, beta: float, f_db=None) -> np.ndarray:
    """Raw ULA covariance array; ``f_db`` may be a stack ``(..., M)`` of shadowing draws."""
    core = beta * _toeplitz_core(M, r, theta)
    if f_db is None:
        return core
    f_db = np.asarray(f_db, dtype=float)
    if f_db.shape[-1] != M:
        raise ModelError(f"shadowing vector length {f_db.shape[-1]} != M = {M}")
    if not np.any(f_db):
        return np.broadcast_to(core, f_db.shape[:-1] + (M, M)).copy()
    d = np.power(10.0, f_db / 20.0)
    return _mirror_upper(d[..., :, None] * core * d[..., None, :])


def _mirror_upper(a: np.ndarray) -> np.ndarray:
    # rounding in the scaling is not symmetric; rebuild the lower triangle bit-exactly
    upper = np.triu(a, 1)
    diag = np.diagonal(a, axis1=-2, axis2=-1).real
    out = upper + np.conj(np.swapaxes(upper, -1, -2))
    idx = np.arange(a.shape[-1])
    out[..., idx, idx] = diag
    return out


def exponential_ula(M: int, r: float, theta: float, beta: float = 1.0, f_db=None) -> CovarianceMatrix:
    spec = CorrelationModelSpec(ArrayKind.ULA, M, r=r, theta=theta, beta=beta)
    f = np.zeros(M) if f_db is None else np.asarray(f_db, dtype=float)
    if f.shape != (M,):
        raise ModelError(f"shadowing vector must have shape ({M},), got {f.shape}")
    R = ula_matrix(M, r, theta, beta, f)
    return CovarianceMatrix(R, spec, f.copy() if np.any(f) else np.zeros(0))


def upa_matrix(M_h, M_v, r, theta, phi, beta, f_h=None, f_v=None) -> np.ndarray:
    """Raw UPA covariance ``R_h kron R_v``; shadowing arguments may be stacked like ``ula_matrix``."""
    rh = ula_matrix(M_h, r, theta, beta, f_h)
    rv = ula_matrix(M_v, r, phi, 1.0, f_v)
    if rh.ndim == 2 and rv.ndim == 2:
        return linalg.kron(rh, rv)
    rh, rv = np.broadcast_arrays(rh[..., :, None, :, None], rv[..., None, :, None, :])
    out = rh * rv
    return out.reshape(out.shape[:-4] + (M_h * M_v, M_h * M_v))


def upa_covariance(M_h, M_v, r, theta, phi, beta=1.0, f_h=None, f_v=None) -> CovarianceMatrix:
    spec = CorrelationModelSpec(ArrayKind.UPA, M_h * M_v, r=r, theta=theta, phi=phi, beta=beta,
                                M_h=M_h, M_v=M_v)
    fh = np.zeros(M_h) if f_h is None else np.asarray(f_h, dtype=float)
    fv = np.zeros(M_v) if f_v is None else np.asarray(f_v, dtype=float)
    if fh.shape != (M_h,) or fv.shape != (M_v,):
        raise ModelError(f"UPA shadowing must have shapes ({M_h},) and ({M_v},)")
    R = upa_matrix(M_h, M_v, r, theta, phi, beta, fh, fv)
    shadow = np.concatenate([fh, fv]) if (np.any(fh) or np.any(fv)) else np.zeros(0)
    return CovarianceMatrix(R, spec, shadow)


def uncorrelated(M: int, beta: float = 1.0) -> CovarianceMatrix:
    spec = CorrelationModelSpec(ArrayKind.UNCORRELATED, M, beta=beta)
    return CovarianceMatrix(beta * np.eye(M, dtype=complex), spec)


def build_covariance(spec: CorrelationModelSpec, rng: np.random.Generator | None = None) -> CovarianceMatrix:
    """Construct the covariance for ``spec``, drawing shadowing from ``rng`` when sigma_db > 0."""
    if spec.sigma_db > 0 and rng is None and spec.array_kind is not ArrayKind.UNCORRELATED:
        raise ModelError("sigma_db > 0 needs a random stream")
    if spec.array_kind is ArrayKind.UNCORRELATED:
        return uncorrelated(spec.M, spec.beta)
    if spec.array_kind is ArrayKind.ULA:
        f = sample_shadowing(spec.M, spec.sigma_db, rng) if spec.sigma_db > 0 else None
        cov = exponential_ula(spec.M, spec.r, spec.theta, spec.beta, f)
    else:
        if spec.sigma_db > 0:
            fh = sample_shadowing(spec.M_h, spec.sigma_db, rng)
            fv = sample_shadowing(spec.M_v, spec.sigma_db, rng)
        else:
            fh = fv = None
        cov = upa_covariance(spec.M_h, spec.M_v, spec.r, spec.theta, spec.phi, spec.beta, fh, fv)
    return CovarianceMatrix(cov.R, spec, cov.shadowing)


def eigen_spectrum(cov: CovarianceMatrix | np.ndarray) -> np.ndarray:
    """Eigenvalues of the covariance, sorted descending."""
    R = cov.R if isinstance(cov, CovarianceMatrix) else np.asarray(cov)
    return linalg.eigvalsh(R)


def hardening_variance(cov: CovarianceMatrix | np.ndarray) -> float:
    """tr(R^2) / tr(R)^2, with tr(R^2) taken as the squared Frobenius norm."""
    R = cov.R if isinstance(cov, CovarianceMatrix) else np.asarray(cov)
    tr = float(np.trace(R).real)
    if not tr > 0:
        raise ModelError(f"hardening variance needs trace(R) > 0, got {tr}")
    return linalg.frobenius_sq(R) / tr**2


def ula_hardening_terms(M: int, r: float, f_db) -> tuple[np.ndarray, np.ndarray]:
    """(tr(R^2), tr(R)) for unit-beta ULA covariances over a stack of shadowing draws.

    Uses |R_mn|^2 = r^(2|n-m|) p_m p_n with p = 10^(f/10), so the angle drops
    out and no M x M complex matrix is formed per draw.
    """
    f_db = np.atleast_2d(np.asarray(f_db, dtype=float))
    p = np.power(10.0, f_db / 10.0)
    lag = np.abs(np.arange(M)[None, :] - np.arange(M)[:, None])
    t = np.power(float(r) ** 2, lag)
    tr2 = np.einsum("bi,ij,bj->b", p, t, p)
    return tr2, p.sum(axis=-1)


def hardening_variance_draws(kind: ArrayKind, M: int, r: float, sigma_db: float, n: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Hardening variance for ``n`` independent shadowing draws (length ``n`` array).

    UPA values use the Kronecker identities tr((A kron B)^2) = tr(A^2) tr(B^2) and
    tr(A kron B) = tr(A) tr(B).
    """
    kind = ArrayKind(kind)
    if kind is ArrayKind.UNCORRELATED:
        return np.full(n, 1.0 / M)
    if kind is ArrayKind.ULA:
        f = rng.normal(0.0, sigma_db, size=(n, M)) if sigma_db > 0 else np.zeros((n, M))
        tr2, tr = ula_hardening_terms(M, r, f)
        return tr2 / tr**2
    m_h, m_v = near_square(M)
    out = np.ones(n)
    for m in (m_h, m_v):
        f = rng.normal(0.0, sigma_db, size=(n, m)) if sigma_db > 0 else np.zeros((n, m))
        tr2, tr = ula_hardening_terms(m, r, f)
        out *= tr2 / tr**2
    return out
