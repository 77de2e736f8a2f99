# -*- coding: utf-8 -*-
"""
Estimators and diagnostics for the tracer's long-time behavior:

  * Stokes drift v = lim x(T)/T, with jackknife standard errors
  * asymptotic covariance D, directly from displacements and through the
    Green-Kubo form <psi~_i chi_j> + <psi~_j chi_i> with a Monte Carlo corrector
  * martingale part M_T and remainder R_T of the displacement
  * CLT diagnostics on whitened displacements
  * energy-balance and exponential-moment monitors

Every estimator is a pure fold over ensemble outputs.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid, trapezoid

from .dynamics import EquationKind, PathRecord, SolverOptions, SolverState, simulate, simulate_state
from .errors import ArgumentError, NumericError
from .noise import NoiseSpec, RngState
from .spectral import Convention, SpectralField, mode_set, psi_star_bound, psi_star_weights
from .tracer import TracerPath, psi_star

logger = logging.getLogger(__name__)


def _z(level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 2.0))


def jackknife(values: np.ndarray, statistic: Callable[[np.ndarray], np.ndarray] = lambda v: v.mean(axis=0)):
    """(estimate, standard error) of statistic over axis 0 by leave-one-out resampling."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    estimate = np.asarray(statistic(values))
    if n < 2:
        return estimate, np.full_like(estimate, np.inf)
    loo = np.array([statistic(np.delete(values, i, axis=0)) for i in range(n)])
    spread = loo - loo.mean(axis=0)
    se = np.sqrt((n - 1) / n * np.sum(spread ** 2, axis=0))
    return estimate, se


def displacements(paths: Sequence[TracerPath], T: float) -> np.ndarray:
    if len(paths) == 0:
        raise ArgumentError("empty ensemble")
    for p in paths:
        if abs(p.horizon - T) > 1e-9 * max(1.0, T):
            raise ArgumentError(f"path ends at t={p.horizon}, expected T={T}")
    return np.array([p.displacement() for p in paths])


def paths_from_displacements(x0s: np.ndarray, disps: np.ndarray, T: float) -> List[TracerPath]:
    """Two-sample tracer paths (t = 0 and t = T) from endpoint displacements."""
    out = []
    for x0, d in zip(np.asarray(x0s, dtype=float), np.asarray(disps, dtype=float)):
        out.append(TracerPath(x0, [0.0, T], [x0, x0 + d]))
    return out


@dataclass
class DriftEstimate:
    value: np.ndarray
    se: np.ndarray
    size: int


def stokes_drift(paths: Sequence[TracerPath], T: float) -> DriftEstimate:
    """Mean of (x(T) - x0) / T over the ensemble."""
    if T <= 0:
        raise ArgumentError(f"drift needs T > 0, got {T}")
    value, se = jackknife(displacements(paths, T) / T)
    return DriftEstimate(value, se, len(paths))


def ergodic_drift(samples: Sequence[SpectralField]) -> DriftEstimate:
    """v as the average of psi*(w) over stationary samples."""
    if len(samples) < 2:
        raise ArgumentError(f"ergodic drift needs at least two samples, got {len(samples)}")
    value, se = jackknife(np.array([psi_star(w) for w in samples]))
    return DriftEstimate(value, se, len(samples))


@dataclass
class CovarianceEstimate:
    matrix: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    level: float
    size: int


def _second_moment(z: np.ndarray, center: Optional[np.ndarray]) -> np.ndarray:
    if center is None:
        m = np.cov(z, rowvar=False, ddof=1).reshape(2, 2)
    else:
        y = z - center
        m = y.T @ y / z.shape[0]
    return 0.5 * (m + m.T)


def asymptotic_variance_direct(
    paths: Sequence[TracerPath],
    v: Optional[np.ndarray],
    T: float,
    *,
    n_boot: int = 500,
    level: float = 0.95,
    seed: int = 0,
) -> CovarianceEstimate:
    """E[(x(T) - vT)(x(T) - vT)^T] / T with percentile bootstrap intervals.

    v=None centers on the ensemble mean instead.
    """
    disp = displacements(paths, T)
    n = disp.shape[0]
    if n < 2:
        raise ArgumentError("asymptotic variance needs at least two paths")
    z = disp / np.sqrt(T)
    center = None if v is None else np.asarray(v, dtype=float) * np.sqrt(T)
    matrix = _second_moment(z, center)
    rng = np.random.default_rng(seed)
    boots = np.empty((n_boot, 2, 2))
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        boots[b] = _second_moment(z[idx], center)
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(boots, [tail, 100.0 - tail], axis=0)
    return CovarianceEstimate(matrix, boots.std(axis=0, ddof=1), np.minimum(low, matrix),
                              np.maximum(high, matrix), level, n)


@dataclass
class CorrectorEstimate:
    w: SpectralField
    t: float
    inner: int
    integral: np.ndarray
    se: np.ndarray
    half_integral: np.ndarray
    half_t: float
    v: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def value(self) -> np.ndarray:
        return self.centered(self.v)

    def centered(self, v) -> np.ndarray:
        """chi_t(w) for drift v: mean of int_0^t psi*(w(s)) ds minus v t."""
        return self.integral - np.asarray(v, dtype=float) * self.t

    @property
    def tail(self) -> float:
        half = self.half_integral - self.v * self.half_t
        return float(np.linalg.norm(self.value - half))


def _corrector_run(args):
    w, noise, dt, t, rng, options, every = args
    rec = simulate(EquationKind.LAGRANGIAN, w, noise, dt, t, ("disp1", "disp2"), rng=rng, every=every,
                   options=options)
    d = np.column_stack([rec.series("disp1"), rec.series("disp2")])
    return rec.times, d


def corrector(
    w: SpectralField,
    t: float,
    inner_ensemble: int,
    *,
    noise: NoiseSpec,
    dt: float,
    v=(0.0, 0.0),
    rng: Optional[RngState] = None,
    options: Optional[SolverOptions] = None,
    map_fn: Callable = map,
) -> CorrectorEstimate:
    """Nested Monte Carlo for chi_t(w) = int_0^t P_s psi~*(w) ds.

    Inner trajectories use consecutive streams from rng.stream; map_fn may be
    an executor's map to spread them over workers.
    """
    if inner_ensemble < 1:
        raise ArgumentError(f"inner ensemble must be >= 1, got {inner_ensemble}")
    if t <= 0:
        raise ArgumentError(f"corrector horizon must be > 0, got {t}")
    rng = rng or RngState(0)
    n_steps = int(round(t / dt))
    every = n_steps // 2 if n_steps % 2 == 0 and n_steps >= 2 else 1
    jobs = [(w, noise, dt, t, rng.spawn(rng.stream + j, rng.antithetic), options, every)
            for j in range(inner_ensemble)]
    results = list(map_fn(_corrector_run, jobs))
    times = results[0][0]
    half = int(np.searchsorted(times, times[-1] / 2.0 - 1e-12))
    finals = np.array([d[-1] for _, d in results])
    halves = np.array([d[half] for _, d in results])
    se = finals.std(axis=0, ddof=1) / np.sqrt(inner_ensemble) if inner_ensemble > 1 else np.full(2, np.inf)
    return CorrectorEstimate(w, float(times[-1]), inner_ensemble, finals.mean(axis=0), se,
                             halves.mean(axis=0), float(times[half]), np.asarray(v, dtype=float))


def linear_corrector(w: SpectralField, t: Optional[float] = None,
                     convention: Convention = Convention.PHYSICAL) -> np.ndarray:
    """Corrector of the linear dynamics: sum_k a_k w_k (1 - exp(-lambda_k t)) / lambda_k; t=None is t = inf."""
    lam = w.modes.eigenvalues(convention)
    weight = 1.0 / lam if t is None else -np.expm1(-lam * t) / lam
    a = psi_star_weights(w.cutoff)
    return 2.0 * np.real(a @ (w.coeffs * weight))


def exact_linear_estimate(w: SpectralField, t: float, convention: Convention = Convention.PHYSICAL) -> CorrectorEstimate:
    """CorrectorEstimate carrying the closed-form linear value instead of a Monte Carlo mean."""
    return CorrectorEstimate(w, t, 0, linear_corrector(w, t, convention), np.zeros(2),
                             linear_corrector(w, t / 2.0, convention), t / 2.0)


def linear_ou_diffusivity(noise: NoiseSpec, convention: Convention = Convention.PHYSICAL) -> np.ndarray:
    """D_ij = 2 sum_full Re(a_i conj(a_j)) sigma_k^2 / lambda_k, sigma_k^2 = q_k^2 / (2 lambda_k)."""
    lam = mode_set(noise.cutoff).eigenvalues(convention)
    a = psi_star_weights(noise.cutoff)
    weight = noise.q ** 2 / (2.0 * lam) / lam
    d = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            # full lattice = 2 x half lattice
            d[i, j] = 4.0 * np.sum(np.real(a[i] * np.conj(a[j])) * weight)
    return 0.5 * (d + d.T)


@dataclass
class GreenKuboEstimate:
    matrix: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    level: float
    size: int


def _green_kubo_terms(psi: np.ndarray, chi: np.ndarray) -> np.ndarray:
    a = psi[:, :, None] * chi[:, None, :]
    return a + np.swapaxes(a, 1, 2)


def green_kubo_D(
    samples: Sequence[SpectralField],
    correctors: Sequence[CorrectorEstimate],
    v=(0.0, 0.0),
    v_se=None,
    *,
    level: float = 0.95,
) -> GreenKuboEstimate:
    """Ergodic average of psi~_i chi_j + psi~_j chi_i over stationary samples.

    The spread from v +/- v_se is added in quadrature to the sampling error.
    """
    if len(samples) != len(correctors) or not samples:
        raise ArgumentError("need one corrector estimate per stationary sample")
    v = np.asarray(v, dtype=float)
    psi = np.array([psi_star(w) for w in samples])

    def terms(drift):
        chi = np.array([c.centered(drift) for c in correctors])
        return _green_kubo_terms(psi - drift, chi)

    y = terms(v)
    n = y.shape[0]
    matrix = y.mean(axis=0)
    se = y.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full((2, 2), np.inf)
    if v_se is not None:
        v_se = np.asarray(v_se, dtype=float)
        shift = np.maximum(np.abs(terms(v + v_se).mean(axis=0) - matrix),
                           np.abs(terms(v - v_se).mean(axis=0) - matrix))
        shift = 0.5 * (shift + shift.T)
        se = np.sqrt(se ** 2 + shift ** 2)
    half = _z(level) * se
    return GreenKuboEstimate(matrix, se, matrix - half, matrix + half, level, n)


def lag_autocorrelation(x: np.ndarray, lag: int = 1) -> float:
    x = np.asarray(x, dtype=float)
    if lag < 1 or x.size <= lag:
        raise ArgumentError(f"lag {lag} needs more than {lag} samples, got {x.size}")
    y = x - x.mean()
    denom = float(np.dot(y, y))
    return 0.0 if denom == 0 else float(np.dot(y[:-lag], y[lag:]) / denom)


@dataclass
class StationarySamples:
    fields: List[SpectralField]
    times: np.ndarray
    energy: np.ndarray
    autocorrelation: float
    decorrelated: bool


def stationary_samples(
    w0: SpectralField,
    noise: NoiseSpec,
    dt: float,
    count: int,
    *,
    burn_in: float = 50.0,
    thin: float = 1.0,
    rng: Optional[RngState] = None,
    options: Optional[SolverOptions] = None,
    kind: EquationKind = EquationKind.LAGRANGIAN,
    threshold: float = 0.1,
) -> StationarySamples:
    """count fields from one long run after a burn-in, spaced by thin time units."""
    if count < 1:
        raise ArgumentError(f"sample count must be >= 1, got {count}")
    thin_steps = int(round(thin / dt))
    if thin_steps < 1:
        raise ArgumentError(f"thinning {thin} is shorter than dt {dt}")
    state = SolverState(kind, w0, dt, (rng or RngState(0)).copy(), noise, options=options or SolverOptions())
    warm = simulate_state(state, int(round(burn_in / dt)) * dt, (), every=max(1, int(round(burn_in / dt))))
    rec = simulate_state(warm.final, count * thin_steps * dt, ("energy",), every=thin_steps, keep_fields=True)
    fields = rec.fields[1:]
    energy = rec.series("energy")[1:]
    acf = lag_autocorrelation(energy, 1) if energy.size > 2 else 0.0
    ok = abs(acf) < threshold
    if not ok:
        logger.warning("|w|^2 lag-%.3g autocorrelation %.3f exceeds %.2f; increase thinning", thin, acf, threshold)
    return StationarySamples(fields, rec.times[1:], energy, acf, ok)


def _integral_between(record: PathRecord, v: np.ndarray) -> np.ndarray:
    """Cumulative int_0^t psi~*(w(s)) ds at every sample."""
    if "disp1" in record.observables and "disp2" in record.observables:
        disp = np.column_stack([record.series("disp1"), record.series("disp2")])
    else:
        psi = np.column_stack([record.series("psi1"), record.series("psi2")])
        disp = cumulative_trapezoid(psi, record.times, axis=0, initial=0.0)
    return disp - np.outer(record.times - record.times[0], v)


@dataclass
class MartingaleParts:
    M: np.ndarray
    R: np.ndarray


def martingale_parts(record: PathRecord, chi: Callable[[SpectralField], np.ndarray], v=(0.0, 0.0),
                     T: Optional[float] = None) -> MartingaleParts:
    """M_T = chi(w_T) - chi(w_0) + int psi~*, R_T = (chi(w_0) - chi(w_T)) / sqrt(T)."""
    v = np.asarray(v, dtype=float)
    horizon = float(record.times[-1] - record.times[0]) if T is None else float(T)
    if horizon == 0:
        return MartingaleParts(np.zeros(2), np.zeros(2))
    if len(record.fields) < 2:
        raise ArgumentError("martingale parts need the endpoint fields of the path")
    if abs(record.times[-1] - record.times[0] - horizon) > 1e-9 * max(1.0, horizon):
        raise ArgumentError(f"record spans {record.times[-1] - record.times[0]}, expected T={horizon}")
    chi0 = np.asarray(chi(record.fields[0]))
    chi1 = np.asarray(chi(record.fields[-1]))
    integral = _integral_between(record, v)[-1]
    return MartingaleParts(chi1 - chi0 + integral, (chi0 - chi1) / np.sqrt(horizon))


def martingale_increments(record: PathRecord, chi: Callable[[SpectralField], np.ndarray], v=(0.0, 0.0)) -> np.ndarray:
    """M_{n+1} - M_n between consecutive recorded fields; shape (samples - 1, 2)."""
    if len(record.fields) != record.times.size:
        raise ArgumentError("martingale increments need a field at every recorded sample")
    v = np.asarray(v, dtype=float)
    chis = np.array([chi(w) for w in record.fields])
    integral = _integral_between(record, v)
    return np.diff(chis, axis=0) + np.diff(integral, axis=0)


@dataclass
class CLTReport:
    size: int
    whitened: np.ndarray
    ks_statistic: np.ndarray
    ks_pvalue: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    mardia_skewness: float
    mardia_skewness_pvalue: float
    mardia_kurtosis: float
    mardia_kurtosis_pvalue: float
    standardized_covariance: np.ndarray
    degenerate: bool
    alpha: float

    @property
    def passed(self) -> bool:
        return (not self.degenerate) and bool(np.all(self.ks_pvalue >= self.alpha / 2.0))

    def as_dict(self) -> dict:
        return {
            "size": self.size,
            "ks_statistic": self.ks_statistic.tolist(),
            "ks_pvalue": self.ks_pvalue.tolist(),
            "skewness": self.skewness.tolist(),
            "kurtosis": self.kurtosis.tolist(),
            "mardia_skewness": self.mardia_skewness,
            "mardia_skewness_pvalue": self.mardia_skewness_pvalue,
            "mardia_kurtosis": self.mardia_kurtosis,
            "mardia_kurtosis_pvalue": self.mardia_kurtosis_pvalue,
            "standardized_covariance": self.standardized_covariance.tolist(),
            "degenerate": self.degenerate,
            "alpha": self.alpha,
            "passed": self.passed,
        }


def _inverse_sqrt(matrix: np.ndarray, allow_singular: bool):
    """Symmetric D^{-1/2} with eigenvalue floor 1e-12 trace; (root, degenerate)."""
    sym = 0.5 * (matrix + matrix.T)
    trace = float(np.trace(sym))
    vals, vecs = np.linalg.eigh(sym)
    floor = 1e-12 * trace
    keep = vals > floor if trace > 0 else np.zeros_like(vals, dtype=bool)
    degenerate = not bool(np.all(keep))
    if degenerate and not allow_singular:
        raise NumericError(f"covariance is singular (eigenvalues {vals.tolist()}, trace {trace:.3e})")
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / np.sqrt(vals[keep])
    return (vecs * inv) @ vecs.T, degenerate


def _mardia(y: np.ndarray):
    n, d = y.shape
    centered = y - y.mean(axis=0)
    s = centered.T @ centered / n
    root, singular = _inverse_sqrt(s, allow_singular=True)
    if singular:
        return float("nan"), float("nan"), float("nan"), float("nan")
    u = centered @ root
    third = np.einsum("ia,ib,ic->abc", u, u, u) / n
    b1 = float(np.sum(third ** 2))
    b2 = float(np.mean(np.sum(u ** 2, axis=1) ** 2))
    skew_stat = n * b1 / 6.0
    skew_p = float(stats.chi2.sf(skew_stat, d * (d + 1) * (d + 2) / 6.0))
    kurt_stat = (b2 - d * (d + 2)) / np.sqrt(8.0 * d * (d + 2) / n)
    kurt_p = float(2.0 * stats.norm.sf(abs(kurt_stat)))
    return skew_stat, skew_p, float(kurt_stat), kurt_p


def clt_diagnostics(
    z: np.ndarray,
    d: np.ndarray,
    *,
    alpha: float = 0.01,
    allow_singular: bool = False,
    min_size: int = 100,
) -> CLTReport:
    """Whiten Z by D^{-1/2}, then KS against N(0, 1) per component (Bonferroni alpha / 2)."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    n = z.shape[0]
    if n < min_size:
        raise ArgumentError(f"CLT diagnostics need at least {min_size} samples, got {n}")
    root, degenerate = _inverse_sqrt(np.asarray(d, dtype=float), allow_singular)
    y = z @ root
    if np.any(np.std(y, axis=0) == 0):
        degenerate = True
        if not allow_singular:
            raise NumericError("whitened displacements have a constant component")
    ks = [stats.kstest(y[:, i], "norm") for i in range(2)]
    with np.errstate(all="ignore"):
        skew = stats.skew(y, axis=0)
        kurt = stats.kurtosis(y, axis=0)
    mardia = _mardia(y) if not degenerate else (float("nan"),) * 4
    report = CLTReport(
        n, y,
        np.array([k.statistic for k in ks]), np.array([k.pvalue for k in ks]),
        np.asarray(skew), np.asarray(kurt), *mardia,
        np.cov(y, rowvar=False).reshape(2, 2), degenerate, alpha,
    )
    logger.info("CLT: KS p-values %s, passed=%s", np.round(report.ks_pvalue, 4).tolist(), report.passed)
    return report


@dataclass
class MonitorReport:
    balance_ratio: Optional[float]
    mean_dissipation: float
    nu: float
    exp_moment: np.ndarray
    exp_moment_bounded: bool
    moments: Dict[int, float]
    sup_excursion: float

    def as_dict(self) -> dict:
        return {
            "balance_ratio": self.balance_ratio,
            "mean_dissipation": self.mean_dissipation,
            "nu": self.nu,
            "exp_moment_max": float(np.max(self.exp_moment)),
            "exp_moment_mean": float(np.mean(self.exp_moment)),
            "exp_moment_bounded": self.exp_moment_bounded,
            "moments": {str(k): v for k, v in self.moments.items()},
            "sup_excursion": self.sup_excursion,
        }


def moment_monitors(
    record: PathRecord,
    noise: NoiseSpec,
    *,
    nu: Optional[float] = None,
    burn_in: float = 0.0,
    powers: Iterable[int] = (1, 2, 4),
    growth_factor: float = 1e3,
) -> MonitorReport:
    """Energy balance, exp(nu |w|^2) series and ||w||^p moments of one recorded path."""
    t = record.times
    energy = record.series("energy")
    diss = record.series("dissipation")
    enstrophy = record.series("enstrophy")
    window = t >= t[0] + burn_in
    if not np.any(window):
        raise ArgumentError(f"burn-in {burn_in} leaves no samples")

    tw, dw = t[window], diss[window]
    if tw.size > 1:
        mean_diss = float(trapezoid(dw, tw) / (tw[-1] - tw[0]))
    else:
        mean_diss = float(dw[0])
    trace = noise.trace_q2
    ratio = None if trace == 0 else mean_diss / trace

    if nu is None:
        nu = noise.nu0 if np.isfinite(noise.nu0) else 1.0
    with np.errstate(over="ignore"):
        series = np.exp(nu * energy)
    reference = max(float(series[0]), float(np.median(series)))
    bounded = bool(np.all(np.isfinite(series)) and np.max(series) <= growth_factor * reference)

    norm1 = np.sqrt(enstrophy[window])
    moments = {int(p): float(np.mean(norm1 ** p)) for p in powers}

    if "cum_dissipation" in record.observables:
        cum = record.series("cum_dissipation")
    else:
        cum = cumulative_trapezoid(diss, t, initial=0.0)
    excursion = energy + cum - (t - t[0]) * trace - energy[0]
    return MonitorReport(ratio, mean_diss, float(nu), series, bounded, moments, float(np.max(excursion)))


@dataclass
class EnergyIdentityReport:
    lhs: float
    rhs: float
    se: float
    size: int

    @property
    def deviation(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return abs(self.deviation) <= 3.0 * self.se


def energy_identity_check(records: Sequence[PathRecord], w0_energy: float, noise: NoiseSpec, T: float) -> EnergyIdentityReport:
    """E|w(T)|^2 + E int_0^T dissipation = |w0|^2 + tr Q^2 T over an ensemble."""
    if len(records) < 2:
        raise ArgumentError("energy identity needs at least two paths")
    y = []
    for r in records:
        if abs(r.times[-1] - r.times[0] - T) > 1e-9 * max(1.0, T):
            raise ArgumentError(f"record spans {r.times[-1] - r.times[0]}, expected T={T}")
        y.append(r.series("energy")[-1] + r.series("cum_dissipation")[-1])
    y = np.asarray(y)
    return EnergyIdentityReport(float(y.mean()), w0_energy + noise.trace_q2 * T,
                                float(y.std(ddof=1) / np.sqrt(y.size)), y.size)


def displacement_bound_check(record: PathRecord) -> bool:
    """|x(t) - x(0)| <= c(N) int_0^t ||w(s)|| ds at every sample, same quadrature on both sides."""
    psi = np.column_stack([record.series("psi1"), record.series("psi2")])
    disp = cumulative_trapezoid(psi, record.times, axis=0, initial=0.0)
    budget = psi_star_bound(record.cutoff) * cumulative_trapezoid(
        np.sqrt(record.series("enstrophy")), record.times, initial=0.0)
    return bool(np.all(np.linalg.norm(disp, axis=1) <= budget * (1 + 1e-12) + 1e-15))


def doubling_se_ratio(values: np.ndarray) -> np.ndarray:
    """SE from the full ensemble over SE from its first half; about 1/sqrt(2)."""
    values = np.asarray(values, dtype=float)
    half = values.shape[0] // 2
    if half < 2:
        raise ArgumentError("need at least four samples")
    se_full = values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])
    se_half = values[:half].std(axis=0, ddof=1) / np.sqrt(half)
    return se_full / se_half


@dataclass
class EnsembleSummary:
    size: int
    horizon: float
    drift: DriftEstimate
    d_direct: CovarianceEstimate
    d_green_kubo: Optional[GreenKuboEstimate] = None
    clt: Optional[CLTReport] = None
    monitors: Optional[MonitorReport] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "ensemble": self.size,
            "T": self.horizon,
            "v_hat": self.drift.value.tolist(),
            "v_se": self.drift.se.tolist(),
            "D_direct": self.d_direct.matrix.tolist(),
            "D_direct_se": self.d_direct.se.tolist(),
            "D_direct_ci": [self.d_direct.ci_low.tolist(), self.d_direct.ci_high.tolist()],
        }
        if self.d_green_kubo is not None:
            gk = self.d_green_kubo
            out["D_green_kubo"] = gk.matrix.tolist()
            out["D_green_kubo_se"] = gk.se.tolist()
            out["D_green_kubo_ci"] = [gk.ci_low.tolist(), gk.ci_high.tolist()]
        if self.clt is not None:
            out["clt"] = self.clt.as_dict()
        if self.monitors is not None:
            out["monitors"] = self.monitors.as_dict()
        out.update(self.extra)
        return out
