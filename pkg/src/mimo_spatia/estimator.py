"""MMSE channel estimation under pilot sharing.

All UEs in a :class:`PilotScenario` reuse one pilot. Pilot power is fixed at
``rho_p = 1`` and each UE's effective SNR is folded into its covariance, so a
UE with effective SNR ``s`` dB carries ``beta = 10**(s/10)``.

The closed-form path builds ``Q = sum_l R_l + I``, the filter ``W = R Q^-1``,
the estimate covariance ``Psi = R Q^-1 R`` and the error covariance
``C = R - Psi``. The Monte Carlo path draws channels and noise and applies
``W`` to the de-spread pilot observation ``y = sum_l g_l + n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mimo_spatia import linalg
from mimo_spatia.channel import coloring_factor, standard_complex_normal
from mimo_spatia.covmodel import CovarianceMatrix

RHO_P = 1.0


class ScenarioError(ValueError):
    pass


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


@dataclass(frozen=True)
class PilotScenario:
    covariances: tuple[np.ndarray, ...]
    target_index: int = 0
    snr_db: tuple[float, ...] | None = None

    def __post_init__(self):
        covs = tuple(
            c.R if isinstance(c, CovarianceMatrix) else np.asarray(c, dtype=complex)
            for c in self.covariances
        )
        if not covs:
            raise ScenarioError("a pilot scenario needs at least one UE")
        M = covs[0].shape[0]
        for i, c in enumerate(covs):
            if c.shape != (M, M):
                raise ScenarioError(f"UE {i} covariance has shape {c.shape}, expected ({M}, {M})")
        if not 0 <= self.target_index < len(covs):
            raise ScenarioError(f"target_index {self.target_index} out of range for {len(covs)} UEs")
        object.__setattr__(self, "covariances", covs)

    @classmethod
    def from_snr(cls, ues, target_index: int = 0) -> "PilotScenario":
        """Build from ``(covariance, snr_db)`` pairs.

        Each covariance is divided by its model beta (1 for raw arrays) and
        multiplied by the linear effective SNR, so shadowing realizations keep
        their per-antenna gains.
        """
        covs, snrs = [], []
        for R, snr_db in ues:
            if isinstance(R, CovarianceMatrix):
                beta, R = R.spec.beta, R.R
            else:
                beta, R = 1.0, np.asarray(R, dtype=complex)
            covs.append(R * (db_to_linear(snr_db) / (RHO_P * beta)))
            snrs.append(float(snr_db))
        return cls(tuple(covs), target_index, tuple(snrs))

    @property
    def M(self) -> int:
        return self.covariances[0].shape[0]

    @property
    def target(self) -> np.ndarray:
        return self.covariances[self.target_index]

    def observation_covariance(self) -> np.ndarray:
        return RHO_P * np.sum(self.covariances, axis=0) + np.eye(self.M)


@dataclass(frozen=True)
class EstimatorQuantities:
    Q: np.ndarray
    W: np.ndarray
    Psi: np.ndarray
    C: np.ndarray
    R: np.ndarray


def build_quantities(s: PilotScenario, target_index: int | None = None) -> EstimatorQuantities:
    k = s.target_index if target_index is None else target_index
    R = s.covariances[k]
    Q = s.observation_covariance()
    # W = sqrt(rho_p) R Q^-1 = (Q^-1 R)^H since both are Hermitian
    QinvR = linalg.hermitian_solve(Q, R)
    W = np.sqrt(RHO_P) * QinvR.conj().T
    Psi = RHO_P * (R @ QinvR)
    Psi = 0.5 * (Psi + Psi.conj().T)
    C = R - Psi
    return EstimatorQuantities(Q, W, Psi, C, R)


def nmse(q: EstimatorQuantities, R_target=None) -> float:
    """tr(C) / tr(R): 0 is perfect estimation, 1 is estimating by the mean."""
    R = q.R if R_target is None else (R_target.R if isinstance(R_target, CovarianceMatrix) else R_target)
    return float(np.trace(q.C).real / np.trace(R).real)


def scenario_nmse(s: PilotScenario, target_index: int | None = None) -> float:
    """NMSE of one UE without materialising the filter: 1 - tr(R Q^-1 R) / tr(R)."""
    k = s.target_index if target_index is None else target_index
    R = s.covariances[k]
    psi = RHO_P * linalg.inverse_quadratic_trace(s.observation_covariance(), R)
    return 1.0 - psi / float(np.trace(R).real)


def correlation_coefficient(s: PilotScenario, a: int, b: int) -> float:
    """|E{g_a^H g_b}| / sqrt(E{||g_a||^2} E{||g_b||^2}) for the MMSE estimates of UEs a and b.

    Closed form: |rho_p tr(Q^-1 R_a R_b)| / sqrt(tr(Psi_a) tr(Psi_b)).
    """
    if a == b:
        raise ScenarioError("correlation coefficient needs two distinct UEs")
    L = linalg.cholesky(s.observation_covariance())
    return _coefficient(L, s.covariances[a], s.covariances[b])


def _coefficient(L: np.ndarray, Ra: np.ndarray, Rb: np.ndarray) -> float:
    xa = linalg.whitened(L, Ra)
    xb = linalg.whitened(L, Rb)
    # tr(Q^-1 R_a R_b) = tr((L^-1 R_a)^H (L^-1 R_b)) because R_a is Hermitian
    cross = RHO_P * np.vdot(xa.ravel(), xb.ravel())
    pa = RHO_P * linalg.frobenius_sq(xa)
    pb = RHO_P * linalg.frobenius_sq(xb)
    if not (pa > 0 and pb > 0):
        raise ScenarioError("estimate covariance has zero trace")
    return float(abs(cross) / np.sqrt(pa * pb))


def nmse_and_coefficient(Rt: np.ndarray, Ri: np.ndarray) -> tuple[float, float, float]:
    """For a desired/interferer pair sharing a pilot: (NMSE desired, NMSE interferer, coefficient).

    One Cholesky factorization of Q serves all three quantities.
    """
    L = linalg.cholesky(_observation(Rt, Ri), clean=False, overwrite=True)
    xt = linalg.whitened(L, Rt)
    xi = linalg.whitened(L, Ri)
    pt = RHO_P * linalg.frobenius_sq(xt)
    pi = RHO_P * linalg.frobenius_sq(xi)
    cross = RHO_P * np.vdot(xt.ravel(), xi.ravel())
    nt = 1.0 - pt / float(np.trace(Rt).real)
    ni = 1.0 - pi / float(np.trace(Ri).real)
    return nt, ni, float(abs(cross) / np.sqrt(pt * pi))


def nmse_pair(Rt: np.ndarray, Ri: np.ndarray | None) -> float:
    """NMSE of ``Rt`` with an optional single co-pilot interferer ``Ri``."""
    L = linalg.cholesky(_observation(Rt, Ri), clean=False, overwrite=True)
    return 1.0 - RHO_P * linalg.frobenius_sq(linalg.whitened(L, Rt)) / float(np.trace(Rt).real)


def _observation(Rt: np.ndarray, Ri: np.ndarray | None) -> np.ndarray:
    Q = RHO_P * (Rt + Ri) if Ri is not None else RHO_P * Rt
    idx = np.arange(Q.shape[0])
    Q[idx, idx] += 1.0
    return Q


@dataclass(frozen=True)
class PilotPhaseSamples:
    channels: np.ndarray  # (n_ues, M, n_trials)
    estimates: np.ndarray  # (n_ues, M, n_trials)
    observations: np.ndarray  # (M, n_trials)


def simulate_pilot_phase(s: PilotScenario, rng: np.random.Generator, n_trials: int, *,
                         noise: bool = True, filters=None) -> PilotPhaseSamples:
    """Draw channels and noise, form y = sqrt(rho_p) sum_l g_l + n and apply each UE's MMSE filter.

    ``filters`` overrides the per-UE filter matrices (used for negative controls).
    """
    factors = [coloring_factor(R) for R in s.covariances]
    g = np.stack([F @ standard_complex_normal((F.shape[1], n_trials), rng) for F in factors])
    y = np.sqrt(RHO_P) * g.sum(axis=0)
    if noise:
        y = y + standard_complex_normal((s.M, n_trials), rng)
    if filters is None:
        filters = [build_quantities(s, k).W for k in range(len(s.covariances))]
    est = np.stack([W @ y for W in filters])
    return PilotPhaseSamples(g, est, y)


def empirical_nmse(samples: PilotPhaseSamples, k: int) -> float:
    err = samples.channels[k] - samples.estimates[k]
    return float(np.sum(np.abs(err) ** 2) / np.sum(np.abs(samples.channels[k]) ** 2))


def empirical_coefficient(samples: PilotPhaseSamples, a: int, b: int) -> float:
    ga, gb = samples.estimates[a], samples.estimates[b]
    cross = np.vdot(ga.ravel(), gb.ravel())
    return float(abs(cross) / np.sqrt(np.vdot(ga.ravel(), ga.ravel()).real * np.vdot(gb.ravel(), gb.ravel()).real))


def orthogonality_check(samples: PilotPhaseSamples, k: int = 0) -> float:
    """Largest |entry| of the empirical cross-covariance E{g_hat g_err^H} for UE ``k``."""
    n = samples.channels.shape[2]
    if n < 2:
        raise ValueError("orthogonality check needs at least two trials")
    est = samples.estimates[k]
    err = samples.channels[k] - est
    return float(np.max(np.abs(est @ err.conj().T / n)))
