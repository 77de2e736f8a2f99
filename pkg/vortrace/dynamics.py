# -*- coding: utf-8 -*-
"""
Fixed-step exponential Euler-Maruyama integration of the truncated
vorticity systems:

    Eulerian       d xi = [Delta xi - B0(xi)] dt + Q dW
    Lagrangian     d w  = [Delta w - B0(w) + B1(w)] dt + Q dW
    Deterministic  dy/dt = Delta y - B0(y) + B1(y)

Per mode: c <- exp(-lambda_k dt) (c + dt drift_k) + exact OU noise.
"""

import logging
from dataclasses import dataclass, field as dc_field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ArgumentError, BlowUpError, InvariantError
from .noise import NoiseSpec, OUPropagator, RngState
from .spectral import (
    Advection,
    Convention,
    SpectralField,
    bilinear_b,
    eval_velocity,
    hr_norm,
    truncate,
)

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e12


class EquationKind(str, Enum):
    EULERIAN = "eulerian"
    LAGRANGIAN = "lagrangian"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class SolverOptions:
    nonlinear: bool = True
    convention: Convention = Convention.PHYSICAL
    backend: str = "fft"
    refine: int = 1

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))
        if self.backend not in ("fft", "direct"):
            raise ArgumentError(f"Unknown nonlinearity backend: {self.backend}")
        if int(self.refine) < 1:
            raise ArgumentError(f"refine must be >= 1, got {self.refine}")


@dataclass
class SolverState:
    kind: EquationKind
    field: SpectralField
    dt: float
    rng: RngState
    noise: NoiseSpec
    step_index: int = 0
    options: SolverOptions = SolverOptions()
    propagator: Optional[OUPropagator] = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.kind = EquationKind(self.kind)
        if not self.dt > 0:
            raise ArgumentError(f"dt must be positive, got {self.dt}")
        if self.field.cutoff != self.noise.cutoff:
            raise ArgumentError(
                f"field cutoff {self.field.cutoff} differs from noise cutoff {self.noise.cutoff}"
            )
        if self.propagator is None:
            noise = NoiseSpec.zero(self.noise.cutoff) if self.kind is EquationKind.DETERMINISTIC else self.noise
            self.propagator = OUPropagator(noise, self.dt, self.options.convention, self.options.refine)

    @property
    def t(self) -> float:
        return self.step_index * self.dt

    @property
    def cutoff(self) -> int:
        return self.field.cutoff

    def copy(self) -> "SolverState":
        return replace(self, rng=self.rng.copy())


def drift(kind: EquationKind, w: SpectralField, options: SolverOptions = SolverOptions()) -> np.ndarray:
    """Nonlinear part of the vector field; zero when the nonlinearity is switched off."""
    if not options.nonlinear:
        return np.zeros_like(w.coeffs)
    out = -bilinear_b(w, w, Advection.B0, backend=options.backend).coeffs
    if EquationKind(kind) is not EquationKind.EULERIAN:
        out = out + bilinear_b(w, w, Advection.B1).coeffs
    return out


def _check_finite(coeffs: np.ndarray, time: float, step_index: int):
    peak = float(np.max(np.abs(coeffs), initial=0.0))
    if not np.isfinite(peak) or peak > BLOWUP_THRESHOLD:
        raise BlowUpError(time, step_index, peak)


def step(s: SolverState) -> SolverState:
    """Advance one dt; the input state (and its RNG) is left untouched."""
    rng = s.rng.copy()
    noise_rng = None if s.kind is EquationKind.DETERMINISTIC else rng
    coeffs = s.propagator.advance(s.field.coeffs, drift(s.kind, s.field, s.options), noise_rng)
    _check_finite(coeffs, (s.step_index + 1) * s.dt, s.step_index + 1)
    return replace(s, field=s.field.with_coeffs(coeffs), rng=rng, step_index=s.step_index + 1)


def dissipation(w: SpectralField, convention: Convention = Convention.PHYSICAL) -> float:
    """2 sum over the full lattice of lambda_k |w_k|^2 (the energy sink)."""
    lam = w.modes.eigenvalues(convention)
    return float(4.0 * np.sum(lam * np.abs(w.coeffs) ** 2))


def _psi(w: SpectralField, i: int) -> float:
    return float(eval_velocity(w, (0.0, 0.0))[i])


OBSERVABLES: Dict[str, Callable[[SpectralField, Convention], float]] = {
    "energy": lambda w, conv: w.norm() ** 2,
    "enstrophy": lambda w, conv: hr_norm(w, 1.0) ** 2,
    "dissipation": dissipation,
    "psi1": lambda w, conv: _psi(w, 0),
    "psi2": lambda w, conv: _psi(w, 1),
}

# running integrals accumulated every step (trapezoid), independent of record cadence
ACCUMULATORS = ("cum_dissipation", "disp1", "disp2")

DEFAULT_OBSERVABLES = ("energy", "enstrophy", "dissipation", "psi1", "psi2")


def observe(w: SpectralField, names: Sequence[str], convention: Convention = Convention.PHYSICAL) -> Dict[str, float]:
    return {name: OBSERVABLES[name](w, convention) for name in names}


@dataclass
class PathRecord:
    kind: EquationKind
    cutoff: int
    dt: float
    times: np.ndarray
    observables: Dict[str, np.ndarray]
    fields: List[SpectralField]
    final: SolverState
    provenance: dict
    status: str = "complete"

    def series(self, name: str) -> np.ndarray:
        if name not in self.observables:
            raise ArgumentError(f"observable '{name}' was not recorded")
        return self.observables[name]

    @property
    def columns(self) -> List[str]:
        return ["t"] + list(self.observables)

    def rows(self):
        cols = [self.times] + [self.observables[k] for k in self.observables]
        return [tuple(float(c[i]) for c in cols) for i in range(self.times.size)]


def simulate_state(
    state: SolverState,
    T: float,
    observables: Sequence[str] = DEFAULT_OBSERVABLES,
    *,
    every: int = 1,
    keep_fields: bool = False,
) -> PathRecord:
    """Run `state` forward for a duration T, recording every `every` steps and at the end."""
    if T < 0:
        raise ArgumentError(f"horizon T must be >= 0, got {T}")
    if every < 1:
        raise ArgumentError(f"record cadence must be >= 1, got {every}")
    unknown = [name for name in observables if name not in OBSERVABLES and name not in ACCUMULATORS]
    if unknown:
        raise ArgumentError(f"unknown observables: {', '.join(unknown)}")
    n_steps = int(round(T / state.dt))
    if abs(n_steps * state.dt - T) > 1e-9 * max(1.0, T):
        raise ArgumentError(f"T={T} is not a multiple of dt={state.dt}")

    conv = state.options.convention
    instant = [name for name in observables if name in OBSERVABLES]
    running = [name for name in observables if name in ACCUMULATORS]
    provenance = {"rng": state.rng.as_dict(), "t0": state.t}

    times: List[float] = []
    rows: Dict[str, List[float]] = {name: [] for name in observables}
    fields: List[SpectralField] = []
    acc = {"cum_dissipation": 0.0, "disp1": 0.0, "disp2": 0.0}

    def integrands(w):
        return dissipation(w, conv), eval_velocity(w, (0.0, 0.0))

    def record(s):
        times.append(s.t)
        for name, value in observe(s.field, instant, conv).items():
            rows[name].append(value)
        for name in running:
            rows[name].append(acc[name])
        if keep_fields:
            fields.append(s.field)

    def finish(s, status):
        return PathRecord(
            s.kind, s.cutoff, s.dt, np.asarray(times, dtype=float),
            {name: np.asarray(v, dtype=float) for name, v in rows.items()},
            fields, s, provenance, status,
        )

    logger.debug("simulate %s N=%d dt=%g T=%g from t=%g", state.kind.value, state.cutoff, state.dt, T, state.t)
    s = state
    record(s)
    prev = integrands(s.field) if running else None
    for k in range(1, n_steps + 1):
        try:
            nxt = step(s)
        except BlowUpError as exc:
            exc.partial = finish(s, "blow-up")
            logger.error("%s", exc)
            raise
        if running:
            cur = integrands(nxt.field)
            half = 0.5 * s.dt
            acc["cum_dissipation"] += half * (prev[0] + cur[0])
            acc["disp1"] += half * (prev[1][0] + cur[1][0])
            acc["disp2"] += half * (prev[1][1] + cur[1][1])
            prev = cur
        s = nxt
        if k % every == 0 or k == n_steps:
            record(s)
    return finish(s, "complete")


def simulate(
    kind: EquationKind,
    w0: SpectralField,
    noise: NoiseSpec,
    dt: float,
    T: float,
    observables: Sequence[str] = DEFAULT_OBSERVABLES,
    *,
    rng: Optional[RngState] = None,
    every: int = 1,
    keep_fields: bool = False,
    options: Optional[SolverOptions] = None,
) -> PathRecord:
    state = SolverState(kind, w0, dt, rng.copy() if rng is not None else RngState(0), noise,
                        options=options or SolverOptions())
    return simulate_state(state, T, observables, every=every, keep_fields=keep_fields)


@dataclass
class DecayReport:
    times: np.ndarray
    norms: np.ndarray
    bounds: np.ndarray
    worst_ratio: float
    worst_time: float
    monotone: bool


def deterministic_decay_check(
    w0: SpectralField,
    T: float,
    dt: float = 1e-3,
    *,
    every: int = 1,
    options: Optional[SolverOptions] = None,
    rtol: float = 1e-10,
) -> DecayReport:
    """Check |y(t)| <= exp(-lambda_min t) |w0| along the noise-free flow."""
    options = options or SolverOptions()
    rec = simulate(EquationKind.DETERMINISTIC, w0, NoiseSpec.zero(w0.cutoff), dt, T, ("energy",),
                   every=every, options=options)
    lam_min = float(np.min(w0.modes.eigenvalues(options.convention)))
    norms = np.sqrt(rec.series("energy"))
    bounds = np.exp(-lam_min * rec.times) * w0.norm()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bounds > 0, norms / bounds, np.where(norms > 0, np.inf, 1.0))
    worst = int(np.argmax(ratios))
    report = DecayReport(
        rec.times, norms, bounds, float(ratios[worst]), float(rec.times[worst]),
        bool(np.all(np.diff(norms) <= 0)),
    )
    if report.worst_ratio > 1.0 + rtol:
        raise InvariantError("deterministic flow exceeds the heat-decay bound", report.worst_time, report.worst_ratio)
    return report


def one_step_energy_residual(w: SpectralField, dt: float, options: Optional[SolverOptions] = None) -> float:
    """|y(dt)|^2 - |y(0)|^2 + dt * dissipation(y(0)) for one noise-free step; O(dt^2)."""
    options = options or SolverOptions()
    s = SolverState(EquationKind.DETERMINISTIC, w, dt, RngState(0), NoiseSpec.zero(w.cutoff), options=options)
    y1 = step(s).field
    return y1.norm() ** 2 - w.norm() ** 2 + dt * dissipation(w, options.convention)


@dataclass
class GalerkinSweep:
    cutoffs: Tuple[int, ...]
    finals: List[Dict[str, float]]
    changes: List[float]

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.changes, self.changes[1:]))


def galerkin_sweep(
    kind: EquationKind,
    w0: SpectralField,
    noise: NoiseSpec,
    dt: float,
    T: float,
    cutoffs: Sequence[int] = (4, 8),
    *,
    rng: Optional[RngState] = None,
    observables: Sequence[str] = ("energy", "enstrophy", "psi1", "psi2"),
    options: Optional[SolverOptions] = None,
) -> GalerkinSweep:
    """Same initial data and matched noise modes at growing cutoffs; reports final-observable changes."""
    rng = rng or RngState(0)
    finals = []
    for n in cutoffs:
        rec = simulate(kind, truncate(w0, n), noise.truncated(n), dt, T, observables, rng=rng,
                       every=max(1, int(round(T / dt))), options=options)
        finals.append({name: float(rec.series(name)[-1]) for name in observables})
        logger.info("galerkin sweep N=%d: %s", n, finals[-1])
    changes = []
    for a, b in zip(finals, finals[1:]):
        changes.append(float(np.sqrt(sum((a[k] - b[k]) ** 2 for k in observables))))
    return GalerkinSweep(tuple(cutoffs), finals, changes)


@dataclass
class ContractionEnvelope:
    times: np.ndarray
    log_ratio: np.ndarray
    integral: np.ndarray
    constant: float
    holds: bool


def fit_envelope(log_ratio: np.ndarray, scale: np.ndarray, fit_fraction: float = 0.5) -> Tuple[float, bool]:
    """(c, holds): c fitted on the leading fit_fraction of the samples, holds if log_ratio <= c scale on all of them."""
    if not 0 < fit_fraction <= 1:
        raise ArgumentError(f"fit fraction must lie in (0, 1], got {fit_fraction}")
    log_ratio = np.asarray(log_ratio, dtype=float)
    scale = np.asarray(scale, dtype=float)
    positive = np.flatnonzero(scale > 0)
    if positive.size == 0:
        return 0.0, bool(np.all(log_ratio <= 1e-12))
    cut = max(int(np.ceil(fit_fraction * scale.size)), int(positive[0]) + 1)
    window = positive[positive < cut]
    constant = max(0.0, float(np.max(log_ratio[window] / scale[window])))
    return constant, bool(np.all(log_ratio <= constant * scale + 1e-12))


def contraction_envelope(
    kind: EquationKind,
    w0: SpectralField,
    w1: SpectralField,
    noise: NoiseSpec,
    dt: float,
    T: float,
    *,
    rng: Optional[RngState] = None,
    every: int = 1,
    options: Optional[SolverOptions] = None,
    fit_fraction: float = 0.5,
) -> ContractionEnvelope:
    """log(|w(t;w0) - w(t;w1)| / |w0 - w1|) against c (int_0^t ||w(s;w0)||^2 ds + t), shared noise."""
    d0 = (w0 - w1).norm()
    if d0 == 0:
        raise ArgumentError("contraction check needs distinct initial data")
    rng = rng or RngState(0)
    a = simulate(kind, w0, noise, dt, T, ("enstrophy",), rng=rng, every=every, keep_fields=True, options=options)
    b = simulate(kind, w1, noise, dt, T, (), rng=rng, every=every, keep_fields=True, options=options)
    dist = np.array([(x - y).norm() for x, y in zip(a.fields, b.fields)])
    with np.errstate(divide="ignore"):
        log_ratio = np.log(dist / d0)
    integral = cumulative_trapezoid(a.series("enstrophy"), a.times, initial=0.0)
    constant, holds = fit_envelope(log_ratio, integral + a.times, fit_fraction)
    return ContractionEnvelope(a.times, log_ratio, integral, constant, holds)
