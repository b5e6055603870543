"""Quick analytic-oracle checks behind ``mimo-spatia selftest``.

Each check compares a library result against a closed form and finishes in
well under a second; the full property and Monte Carlo suites live in tests/.
"""
from __future__ import annotations

import math
import sys
from typing import Callable, TextIO

import numpy as np

from mimo_spatia import channel, covmodel, estimator, linalg


def _close(a, b, tol=1e-12) -> bool:
    return bool(np.allclose(a, b, rtol=tol, atol=tol))


def _identity_table_row() -> bool:
    M = 100
    expected = (11 / 21, 1 / 6, 1.1 / 11.1)
    got = []
    for snr_i in (10.0, 0.0, -10.0):
        s = estimator.PilotScenario.from_snr([(covmodel.uncorrelated(M), 10.0), (covmodel.uncorrelated(M), snr_i)])
        got.append(estimator.nmse(estimator.build_quantities(s)))
    return _close(got, expected, 1e-14)


def _two_by_two_eig() -> bool:
    w, v = linalg.hermitian_eig(np.array([[1.0, 0.5], [0.5, 1.0]]))
    return _close(w, [1.5, 0.5]) and _close(v.conj().T @ v, np.eye(2))


def _kronecker_spectrum() -> bool:
    cov = covmodel.upa_covariance(2, 2, 0.5, 0.0, 0.0)
    return _close(covmodel.eigen_spectrum(cov), [2.25, 0.75, 0.75, 0.25], 1e-10)


def _ula_entries() -> bool:
    R = covmodel.exponential_ula(2, 0.5, math.pi / 2).R
    return _close(R, [[1, 0.5j], [-0.5j, 1]])


def _cholesky_diag() -> bool:
    return _close(linalg.cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def _hardening_closed_forms() -> bool:
    ok = _close(covmodel.hardening_variance(covmodel.exponential_ula(2, 0.5, 0.0)), 0.625)
    ok &= _close(covmodel.hardening_variance(covmodel.uncorrelated(37)), 1 / 37)
    for M in (1, 10, 100):
        ok &= covmodel.hardening_variance(covmodel.exponential_ula(M, 1.0, 0.3)) == 1.0
        for kind in (covmodel.ArrayKind.ULA, covmodel.ArrayKind.UPA):
            ok &= bool(np.all(covmodel.hardening_variance_draws(kind, M, 1.0, 0.0, 1, None) == 1.0))
    return bool(ok)


def _single_ue_nmse() -> bool:
    s = estimator.PilotScenario.from_snr([(covmodel.uncorrelated(8), 10.0)])
    return _close(estimator.nmse(estimator.build_quantities(s)), 1 / 11)


def _coefficient_identity() -> bool:
    s = estimator.PilotScenario.from_snr([(covmodel.uncorrelated(16), 10.0), (covmodel.uncorrelated(16), -3.0)])
    return _close(estimator.correlation_coefficient(s, 0, 1), 1.0)


def _rank_one_sampling() -> bool:
    theta = 0.7
    cov = covmodel.exponential_ula(4, 1.0, theta)
    g = channel.sample_channels(cov, 50, 1).samples
    # R(m, n) = e^{i(n-m)theta} = a_m conj(a_n) with a_m = e^{-i m theta}
    steer = np.exp(-1j * theta * np.arange(4))
    coef = g[0] / steer[0]
    return _close(g, steer[:, None] * coef[None, :], 1e-8)


CHECKS: dict[str, Callable[[], bool]] = {
    "identity-covariance contamination NMSE (11/21, 1/6, 1.1/11.1)": _identity_table_row,
    "2x2 Hermitian eigenpairs": _two_by_two_eig,
    "Kronecker eigenvalue products": _kronecker_spectrum,
    "ULA entries at theta = pi/2": _ula_entries,
    "diagonal Cholesky": _cholesky_diag,
    "hardening closed forms (1/M, 0.625, r = 1)": _hardening_closed_forms,
    "single-UE NMSE 1/(1 + SNR)": _single_ue_nmse,
    "correlation coefficient of identity covariances": _coefficient_identity,
    "rank-1 sampling along the steering vector": _rank_one_sampling,
}


def run_selftest(out: TextIO = sys.stdout) -> bool:
    all_ok = True
    for name, check in CHECKS.items():
        try:
            ok = bool(check())
            detail = ""
        except Exception as exc:  # report and keep going
            ok, detail = False, f" ({type(exc).__name__}: {exc})"
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}{detail}", file=out)
    print("selftest:", "all checks passed" if all_ok else "FAILURES", file=out)
    return all_ok
