"""Correlated Rayleigh channel draws g ~ CN(0, R) and their empirical statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mimo_spatia import linalg
from mimo_spatia.covmodel import CovarianceMatrix


@dataclass(frozen=True)
class ChannelSampleSet:
    R_ref: CovarianceMatrix | np.ndarray
    samples: np.ndarray  # M x n_draws, one draw per column
    seed: int | None = None

    @property
    def n_draws(self) -> int:
        return self.samples.shape[1]


def _as_array(R) -> np.ndarray:
    return R.R if isinstance(R, CovarianceMatrix) else np.asarray(R, dtype=complex)


def coloring_factor(R) -> np.ndarray:
    """F with F F^H = R: the Cholesky factor, or V diag(sqrt(max(lambda, 0))) when R is singular.

    In the fallback, eigenvalues below the numerical-rank cut ``M * eps * lambda_max``
    are treated as zero so rank-deficient draws stay in the exact column space.
    """
    R = _as_array(R)
    try:
        return linalg.cholesky(R)
    except linalg.NotPositiveDefinite:
        w, v = linalg.hermitian_eig(R)
        cut = R.shape[0] * np.finfo(float).eps * max(float(w[0]), 0.0)
        return v * np.sqrt(np.where(w > cut, w, 0.0))[None, :]


def standard_complex_normal(shape, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) entries: each real component has variance 1/2."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def sample_channels(R, n: int, rng: np.random.Generator | int, *, factor: np.ndarray | None = None) -> ChannelSampleSet:
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = np.random.default_rng(rng) if seed is not None else rng
    F = coloring_factor(R) if factor is None else factor
    z = standard_complex_normal((F.shape[1], n), gen)
    return ChannelSampleSet(R, F @ z, seed)


def gains(samples: ChannelSampleSet | np.ndarray) -> np.ndarray:
    g = samples.samples if isinstance(samples, ChannelSampleSet) else np.asarray(samples)
    return np.sum(np.abs(g) ** 2, axis=0)


def empirical_hardening(samples: ChannelSampleSet | np.ndarray) -> float:
    """Sample variance of ||g||^2 / mean(||g||^2) across draws."""
    g2 = gains(samples)
    if g2.size < 2:
        raise ValueError("empirical hardening needs at least two draws")
    return float(np.var(g2 / g2.mean(), ddof=1))


def empirical_covariance(samples: ChannelSampleSet | np.ndarray) -> np.ndarray:
    g = samples.samples if isinstance(samples, ChannelSampleSet) else np.asarray(samples)
    return g @ g.conj().T / g.shape[1]
