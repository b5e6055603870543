"""Experiment engine: turns an :class:`ExperimentConfig` into result tables.

Every sweep point draws its randomness from a stream derived from
(master seed, experiment kind, point index, batch index), so results do not
depend on how many threads run the points or in which order they finish.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from mimo_spatia import __version__, covmodel, estimator
from mimo_spatia.config import ConfigError, ExperimentConfig, ExperimentKind
from mimo_spatia.covmodel import ArrayKind, near_square
from mimo_spatia.results import ResultTable
from mimo_spatia.seeding import point_rng

log = logging.getLogger(__name__)

HARDENING_TARGET = 1e-2
DEFAULT_HARDENING_GRID = tuple(k * k for k in range(1, 31))
DEFAULT_R_GRID = tuple(round(0.1 * k, 10) for k in range(11))
DEFAULT_SNR_GRID = tuple(-10.0 + 2.5 * k for k in range(13))
DEFAULT_SNR_SERIES_M = (10.0, 50.0, 100.0)


class ExperimentError(RuntimeError):
    """A sweep point failed; carries the point description for diagnostics."""


@dataclass(frozen=True)
class Params:
    array: ArrayKind
    M: int
    r: float
    sigma_db: float
    snr_db: float
    theta_deg: float
    phi_deg: float

    def replace(self, axis: str | None, value) -> "Params":
        if axis is None or value is None:
            return self
        if axis == "M":
            value = int(value)
        return Params(**{**self.__dict__, axis: value})


def base_params(cfg: ExperimentConfig, array: ArrayKind) -> Params:
    m = cfg.model
    return Params(ArrayKind(array), m.M, m.r, m.sigma_db, m.snr_db, m.theta_deg, m.phi_deg)


def ula_azimuths(n: int) -> np.ndarray:
    """``n`` uniform azimuths in degrees over [-180, 180)."""
    return -180.0 + 360.0 * np.arange(n) / n


def elevations(n: int) -> np.ndarray:
    """``n`` uniform elevations in degrees over [-90, 90)."""
    return -90.0 + 180.0 * np.arange(n) / n


def angle_grid(cfg: ExperimentConfig, array: ArrayKind) -> list[tuple[float, float]]:
    mc = cfg.monte_carlo
    if array is ArrayKind.UPA:
        return [(float(t), float(p)) for t in ula_azimuths(mc.upa_azimuth_points)
                for p in elevations(mc.upa_elevation_points)]
    if array is ArrayKind.ULA:
        return [(float(t), cfg.model.phi_deg) for t in ula_azimuths(mc.azimuth_points)]
    return [(cfg.model.theta_deg, cfg.model.phi_deg)]


def covariance_draws(array: ArrayKind, M: int, r: float, theta_deg: float, phi_deg: float,
                     sigma_db: float, n: int, rng: np.random.Generator | None) -> np.ndarray:
    """Stack ``(n, M, M)`` of unit-beta covariances, one shadowing realization per slice."""
    theta = math.radians(theta_deg)
    phi = math.radians(phi_deg)
    if array is ArrayKind.UNCORRELATED:
        return np.broadcast_to(np.eye(M, dtype=complex), (n, M, M))
    if array is ArrayKind.ULA:
        f = rng.normal(0.0, sigma_db, size=(n, M)) if sigma_db > 0 else np.zeros((n, M))
        return covmodel.ula_matrix(M, r, theta, 1.0, f)
    m_h, m_v = near_square(M)
    if sigma_db > 0:
        fh = rng.normal(0.0, sigma_db, size=(n, m_h))
        fv = rng.normal(0.0, sigma_db, size=(n, m_v))
    else:
        fh, fv = np.zeros((n, m_h)), np.zeros((n, m_v))
    return covmodel.upa_matrix(m_h, m_v, r, theta, phi, 1.0, fh, fv)


def _batches(n: int, size: int):
    for b, start in enumerate(range(0, n, size)):
        yield b, min(size, n - start)


def _map(fn, tasks, threads: int):
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _provenance(cfg: ExperimentConfig, table: str) -> dict:
    return {
        "table": table,
        "experiment": cfg.kind.value,
        "master_seed": cfg.seed,
        "version": f"mimo-spatia {__version__}",
        "config": cfg.to_dict(),
    }


def _stem(cfg: ExperimentConfig, default: str) -> str:
    return cfg.output.stem or default


def _resolve_sweep(cfg: ExperimentConfig, allowed_axes, default_axis, default_values,
                   default_series_axis=None, default_series_values=None):
    sw = cfg.sweep
    axis = sw.axis or default_axis
    if axis not in allowed_axes:
        raise ConfigError(f"sweep.axis: '{axis}' is not valid for {cfg.kind.value}", "sweep.axis")
    values = sw.values if sw.values is not None else default_values
    series_axis = sw.series_axis or default_series_axis
    if series_axis is not None and series_axis == axis:
        raise ConfigError("sweep.series_axis: must differ from sweep.axis", "sweep.series_axis")
    series_values = sw.series_values
    if series_values is None and series_axis is not None:
        series_values = default_series_values
        if series_values is None:
            raise ConfigError("sweep.series_values: required with series_axis", "sweep.series_values")
    return axis, tuple(values), series_axis, tuple(series_values) if series_values else (None,)


def _series(cfg: ExperimentConfig, series_axis, series_values) -> list[tuple[ArrayKind, float | None]]:
    return [(ArrayKind(a), v) for a in cfg.model.arrays for v in series_values]


def _run_points(cfg, threads, n_points, n_series, fn):
    def task(ij):
        i, j = ij
        try:
            return fn(i, j)
        except Exception as exc:  # abort the whole run, naming the point
            raise ExperimentError(f"{cfg.kind.value}: sweep point {i}, series {j} failed: {exc}") from exc

    tasks = list(itertools.product(range(n_points), range(n_series)))
    return dict(zip(tasks, _map(task, tasks, threads)))


# --- spectra -----------------------------------------------------------------


def mean_spectrum(p: Params, n: int, batch_size: int, seed: int, kind: str, path) -> np.ndarray:
    """Descending eigenvalues of a unit-beta covariance, averaged over shadowing draws when sigma > 0."""
    M = p.M
    if p.array is ArrayKind.UNCORRELATED:
        return np.ones(M)
    theta, phi = math.radians(p.theta_deg), math.radians(p.phi_deg)
    if p.sigma_db == 0:
        if p.array is ArrayKind.ULA:
            cov = covmodel.exponential_ula(M, p.r, theta)
        else:
            m_h, m_v = near_square(M)
            cov = covmodel.upa_covariance(m_h, m_v, p.r, theta, phi)
        return covmodel.eigen_spectrum(cov)
    total = np.zeros(M)
    for b, nb in _batches(n, batch_size):
        rng = point_rng(seed, kind, *path, b)
        if p.array is ArrayKind.ULA:
            stack = covmodel.ula_matrix(M, p.r, theta, 1.0, rng.normal(0.0, p.sigma_db, size=(nb, M)))
            w = np.linalg.eigvalsh(stack)
        else:
            m_h, m_v = near_square(M)
            fh = rng.normal(0.0, p.sigma_db, size=(nb, m_h))
            fv = rng.normal(0.0, p.sigma_db, size=(nb, m_v))
            wh = np.linalg.eigvalsh(covmodel.ula_matrix(m_h, p.r, theta, 1.0, fh))
            wv = np.linalg.eigvalsh(covmodel.ula_matrix(m_v, p.r, phi, 1.0, fv))
            # Kronecker spectrum: all pairwise products of the factor spectra
            w = (wh[:, :, None] * wv[:, None, :]).reshape(nb, M)
        total += np.sort(w, axis=-1)[:, ::-1].sum(axis=0)
    return total / n


def run_spectrum(cfg: ExperimentConfig, threads: int = 1) -> list[ResultTable]:
    axis, values, series_axis, series_values = _resolve_sweep(cfg, ("r", "sigma_db"), "r", (cfg.model.r,))
    if series_axis not in (None, "r", "sigma_db"):
        raise ConfigError("sweep.series_axis: spectrum series may vary r or sigma_db", "sweep.series_axis")
    series = _series(cfg, series_axis, series_values)
    kind = cfg.kind.value

    def point(i, j):
        array, sv = series[j]
        p = base_params(cfg, array).replace(series_axis, sv).replace(axis, values[i])
        return p, mean_spectrum(p, cfg.monte_carlo.n, cfg.monte_carlo.batch_size, cfg.seed, kind, (i, j))

    out = _run_points(cfg, threads, len(values), len(series), point)
    table = ResultTable(_stem(cfg, "spectrum"), ("array", "r", "sigma_db", "M", "antenna_index", "eigenvalue"),
                        provenance=_provenance(cfg, "spectrum"))
    for i in range(len(values)):
        for j in range(len(series)):
            p, w = out[(i, j)]
            for k, lam in enumerate(w):
                table.append((p.array.value, p.r, p.sigma_db, p.M, k + 1, float(lam)))
    return [table]


# --- channel hardening ---------------------------------------------------------


def mean_hardening(p: Params, n: int, batch_size: int, seed: int, kind: str, path) -> float:
    """Hardening variance tr(R^2)/tr(R)^2, averaged over shadowing draws when sigma > 0."""
    if p.array is ArrayKind.UNCORRELATED:
        return 1.0 / p.M
    if p.sigma_db == 0:
        return float(covmodel.hardening_variance_draws(p.array, p.M, p.r, 0.0, 1, None)[0])
    total = 0.0
    for b, nb in _batches(n, batch_size):
        rng = point_rng(seed, kind, *path, b)
        total += float(np.sum(covmodel.hardening_variance_draws(p.array, p.M, p.r, p.sigma_db, nb, rng)))
    return total / n


def hardening_threshold(ms, vs, target: float = HARDENING_TARGET) -> tuple[float, float]:
    """(smallest grid M with v <= target, M where log(v) linearly interpolated hits target).

    Both are NaN when the grid never reaches the target.
    """
    ms = [float(m) for m in ms]
    for k, (m, v) in enumerate(zip(ms, vs)):
        if v <= target:
            if k == 0 or v == target:
                return m, m
            lo, hi = math.log(vs[k - 1]), math.log(v)
            frac = (lo - math.log(target)) / (lo - hi)
            return m, ms[k - 1] + frac * (m - ms[k - 1])
    return math.nan, math.nan


def _hardening_curves(cfg: ExperimentConfig, threads: int, series, grid, kind: str, base=None):
    def point(i, j):
        array, p0 = series[j]
        p = p0.replace("M", grid[i])
        return mean_hardening(p, cfg.monte_carlo.n, cfg.monte_carlo.batch_size, cfg.seed, kind, (i, j))

    out = _run_points(cfg, threads, len(grid), len(series), point)
    return [[out[(i, j)] for i in range(len(grid))] for j in range(len(series))]


def run_hardening_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[ResultTable]:
    _, grid, series_axis, series_values = _resolve_sweep(cfg, ("M",), "M", DEFAULT_HARDENING_GRID)
    grid = tuple(int(m) for m in grid)
    if series_axis not in (None, "r", "sigma_db"):
        raise ConfigError("sweep.series_axis: hardening series may vary r or sigma_db", "sweep.series_axis")
    series = [(a, base_params(cfg, a).replace(series_axis, v)) for a, v in _series(cfg, series_axis, series_values)]
    for a, _ in series:
        if a is ArrayKind.UPA:
            for m in grid:
                h, v = near_square(m)
                if h != v:
                    log.warning("UPA point M=%d is not square; using %dx%d", m, h, v)
    curves = _hardening_curves(cfg, threads, series, grid, cfg.kind.value)
    table = ResultTable(_stem(cfg, "hardening"), ("array", "r", "sigma_db", "M", "variance"),
                        provenance=_provenance(cfg, "hardening"))
    thresholds = ResultTable(_stem(cfg, "hardening") + "_thresholds",
                             ("array", "r", "sigma_db", "threshold_grid_M", "threshold_M"),
                             provenance=_provenance(cfg, "hardening_thresholds"))
    for (a, p), vs in zip(series, curves):
        for m, v in zip(grid, vs):
            table.append((a.value, p.r, p.sigma_db, m, v))
        grid_m, interp_m = hardening_threshold(grid, vs)
        thresholds.append((a.value, p.r, p.sigma_db, grid_m, interp_m))
    return [table, thresholds]


# --- single-UE estimation quality -------------------------------------------------


def mean_single_nmse(p: Params, cfg: ExperimentConfig, kind: str, path) -> float:
    """NMSE of a lone UE averaged over the angle grid (and shadowing draws when sigma > 0).

    Without an interferer the NMSE does not depend on the nominal angles (they
    enter only through a diagonal unitary similarity), so with shadowing each
    draw is paired with one grid angle in turn instead of the whole grid.
    """
    snr = estimator.db_to_linear(p.snr_db)
    grid = angle_grid(cfg, p.array)
    if p.array is ArrayKind.UNCORRELATED:
        return 1.0 / (1.0 + snr)
    if p.sigma_db == 0:
        vals = [estimator.nmse_pair(snr * covariance_draws(p.array, p.M, p.r, t, ph, 0.0, 1, None)[0], None)
                for t, ph in grid]
        return float(np.mean(vals))
    n, bs = cfg.monte_carlo.n, cfg.monte_carlo.batch_size
    total, k = 0.0, 0
    for b, nb in _batches(n, bs):
        rng = point_rng(cfg.seed, kind, *path, b)
        for _ in range(nb):
            t, ph = grid[k % len(grid)]
            R = covariance_draws(p.array, p.M, p.r, t, ph, p.sigma_db, 1, rng)[0]
            total += estimator.nmse_pair(snr * R, None)
            k += 1
    return total / n


def run_nmse_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[ResultTable]:
    if cfg.kind is ExperimentKind.NMSE_VS_SNR:
        axis, values, series_axis, series_values = _resolve_sweep(
            cfg, ("snr_db",), "snr_db", DEFAULT_SNR_GRID, "M", DEFAULT_SNR_SERIES_M)
        stem = "nmse_snr"
    else:
        axis, values, series_axis, series_values = _resolve_sweep(
            cfg, ("r", "sigma_db", "M", "snr_db"), "r", DEFAULT_R_GRID)
        stem = "nmse"
    if series_axis == "interferer_snr_db":
        raise ConfigError("sweep.series_axis: single-UE sweeps have no interferer", "sweep.series_axis")
    series = _series(cfg, series_axis, series_values)
    kind = cfg.kind.value

    def point(i, j):
        array, sv = series[j]
        p = base_params(cfg, array).replace(series_axis, sv).replace(axis, values[i])
        return p, mean_single_nmse(p, cfg, kind, (i, j))

    out = _run_points(cfg, threads, len(values), len(series), point)
    table = ResultTable(_stem(cfg, stem), ("array", "M", "r", "sigma_db", "snr_db", "nmse"),
                        provenance=_provenance(cfg, stem))
    for j in range(len(series)):
        for i in range(len(values)):
            p, v = out[(i, j)]
            table.append((p.array.value, p.M, p.r, p.sigma_db, p.snr_db, v))
    return [table]


# --- pilot contamination ------------------------------------------------------------


def contamination_point(cfg: ExperimentConfig, array: ArrayKind, theta_i: float, phi_i: float,
                        interferer_snr_db, kind: str, path, *, with_coefficient: bool = True,
                        r: float | None = None, sigma_db: float | None = None, M: int | None = None):
    """Mean (NMSE, coefficient) of the desired UE for one interferer position.

    Returns two arrays indexed like ``interferer_snr_db``; all interferer SNR
    levels share the same shadowing draws. The coefficient array is NaN when
    ``with_coefficient`` is false.
    """
    m = cfg.model
    r = m.r if r is None else r
    sigma_db = m.sigma_db if sigma_db is None else sigma_db
    M = m.M if M is None else M
    snr_t = estimator.db_to_linear(m.snr_db)
    snr_i = [estimator.db_to_linear(s) for s in interferer_snr_db]
    n = cfg.monte_carlo.n if (sigma_db > 0 and array is not ArrayKind.UNCORRELATED) else 1
    nmse_sum = np.zeros(len(snr_i))
    coef_sum = np.zeros(len(snr_i))
    for b, nb in _batches(n, cfg.monte_carlo.batch_size):
        rng = point_rng(cfg.seed, kind, *path, b)
        Rt = covariance_draws(array, M, r, m.theta_deg, m.phi_deg, sigma_db, nb, rng)
        Ri = covariance_draws(array, M, r, theta_i, phi_i, sigma_db, nb, rng)
        for k in range(nb):
            rt = snr_t * Rt[k]
            for s, lin in enumerate(snr_i):
                if with_coefficient:
                    nt, _, c = estimator.nmse_and_coefficient(rt, lin * Ri[k])
                    coef_sum[s] += c
                else:
                    nt = estimator.nmse_pair(rt, lin * Ri[k])
                nmse_sum[s] += nt
    coef = coef_sum / n if with_coefficient else np.full(len(snr_i), math.nan)
    return nmse_sum / n, coef


def run_contamination(cfg: ExperimentConfig, threads: int = 1) -> list[ResultTable]:
    sw = cfg.sweep
    if sw.axis is not None:
        raise ConfigError("sweep.axis: contamination sweeps the interferer angle grid; leave axis unset",
                          "sweep.axis")
    if sw.series_axis not in (None, "interferer_snr_db"):
        raise ConfigError("sweep.series_axis: contamination series vary interferer_snr_db", "sweep.series_axis")
    snrs = tuple(sw.series_values) if sw.series_values is not None else tuple(cfg.model.interferer_snr_db)
    kind = cfg.kind.value
    arrays = [ArrayKind(a) for a in cfg.model.arrays]
    table = ResultTable(_stem(cfg, "contamination"),
                        ("array", "interferer_snr_db", "theta_deg", "phi_deg", "coefficient", "nmse"),
                        provenance=_provenance(cfg, "contamination"))
    summary = ResultTable(_stem(cfg, "contamination") + "_summary",
                          ("array", "interferer_snr_db", "mean_coefficient", "mean_nmse"),
                          provenance=_provenance(cfg, "contamination_summary"))
    for ai, array in enumerate(arrays):
        grid = angle_grid(cfg, array) if array is not ArrayKind.UNCORRELATED else [
            (float(t), cfg.model.phi_deg) for t in ula_azimuths(cfg.monte_carlo.azimuth_points)]

        def point(i, _j, array=array, grid=grid, ai=ai):
            t, ph = grid[i]
            return contamination_point(cfg, array, t, ph, snrs, kind, (ai, i))

        out = _run_points(cfg, threads, len(grid), 1, point)
        for s, snr in enumerate(snrs):
            coefs, nmses = [], []
            for i, (t, ph) in enumerate(grid):
                nm, co = out[(i, 0)]
                coefs.append(co[s])
                nmses.append(nm[s])
                table.append((array.value, snr, t, ph, co[s], nm[s]))
            summary.append((array.value, snr, float(np.mean(coefs)), float(np.mean(nmses))))
    return [table, summary]


# --- summary table --------------------------------------------------------------------

TABLE1_COLUMNS = ("scenario", "nmse_same_snr", "nmse_10db_weaker", "nmse_20db_weaker", "hardening_M_threshold")


def run_table1(cfg: ExperimentConfig, threads: int = 1) -> list[ResultTable]:
    m = cfg.model
    snrs = tuple(m.interferer_snr_db)
    if len(snrs) != 3:
        raise ConfigError("model.interferer_snr_db: table1 needs exactly three interferer SNR levels",
                          "model.interferer_snr_db")
    kind = cfg.kind.value
    rows = []
    hardening_series = []
    for ai, array in enumerate((ArrayKind.UNCORRELATED, ArrayKind.ULA, ArrayKind.UPA)):
        grid = angle_grid(cfg, array)

        def point(i, _j, array=array, grid=grid, ai=ai):
            t, ph = grid[i]
            nm, _ = contamination_point(cfg, array, t, ph, snrs, kind, (ai, i), with_coefficient=False)
            return nm

        out = _run_points(cfg, threads, len(grid), 1, point)
        nmse = np.mean([out[(i, 0)] for i in range(len(grid))], axis=0)
        rows.append((array, nmse))
        hardening_series.append((array, base_params(cfg, array)))

    grid = DEFAULT_HARDENING_GRID
    curves = _hardening_curves(cfg, threads, hardening_series, grid, kind + ":hardening")
    table = ResultTable(_stem(cfg, "table1"), TABLE1_COLUMNS, provenance=_provenance(cfg, "table1"))
    by_array = {}
    for (array, nmse), vs in zip(rows, curves):
        _, threshold = hardening_threshold(grid, vs)
        table.append((array.value, float(nmse[0]), float(nmse[1]), float(nmse[2]), threshold))
        by_array[array] = nmse
    gains = ResultTable(_stem(cfg, "table1") + "_gains", ("ratio",) + TABLE1_COLUMNS[1:4],
                        provenance=_provenance(cfg, "table1_gains"))
    ula, upa, unc = by_array[ArrayKind.ULA], by_array[ArrayKind.UPA], by_array[ArrayKind.UNCORRELATED]
    gains.append(("ULA/UPA", *(float(x) for x in ula / upa)))
    gains.append(("uncorrelated/ULA", *(float(x) for x in unc / ula)))
    gains.append(("uncorrelated/UPA", *(float(x) for x in unc / upa)))
    return [table, gains]


RUNNERS = {
    ExperimentKind.SPECTRUM: run_spectrum,
    ExperimentKind.HARDENING_SWEEP: run_hardening_sweep,
    ExperimentKind.NMSE_VS_PARAM: run_nmse_sweep,
    ExperimentKind.NMSE_VS_SNR: run_nmse_sweep,
    ExperimentKind.CONTAMINATION: run_contamination,
    ExperimentKind.TABLE1: run_table1,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[ResultTable]:
    return RUNNERS[cfg.kind](cfg, threads=threads)
