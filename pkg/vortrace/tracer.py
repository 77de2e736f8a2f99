# -*- coding: utf-8 -*-
"""
Passive tracer dx/dt = u(t, x(t)), the point observable psi*(w) = K(w)(0),
and the two representations of a tracer run:

    Eulerian   xi(t) plus the particle lift x(t)
    Lagrangian w(t) = xi(t, x(t) + .),  x(t) = x0 + int_0^t psi*(w(s)) ds
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .dynamics import (
    DEFAULT_OBSERVABLES,
    EquationKind,
    PathRecord,
    SolverOptions,
    SolverState,
    drift,
    observe,
    step,
)
from .errors import ArgumentError, BlowUpError
from .noise import NoiseSpec, RngState
from .spectral import SpectralField, eval_velocity, translate

logger = logging.getLogger(__name__)


def wrap(x):
    """Torus representative in [-1/2, 1/2)^2."""
    return (np.asarray(x, dtype=float) + 0.5) % 1.0 - 0.5


@dataclass
class TracerPath:
    x0: np.ndarray
    times: np.ndarray
    lift: np.ndarray

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(2)
        self.times = np.asarray(self.times, dtype=float)
        self.lift = np.asarray(self.lift, dtype=float).reshape(-1, 2)
        if self.lift.shape[0] != self.times.size:
            raise ArgumentError(f"{self.times.size} sample times but {self.lift.shape[0]} positions")

    @property
    def wrapped(self) -> np.ndarray:
        return wrap(self.lift)

    @property
    def final(self) -> np.ndarray:
        return self.lift[-1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def displacement(self) -> np.ndarray:
        return self.lift[-1] - self.x0

    def reflected(self) -> "TracerPath":
        return TracerPath(-self.x0, self.times, -self.lift)


def psi_star(w: SpectralField) -> np.ndarray:
    return eval_velocity(w, (0.0, 0.0))


def advance_tracer(x, xi_t: SpectralField, xi_next: SpectralField, dt: float) -> np.ndarray:
    """One Heun step on the lift; velocities are read at the wrapped position."""
    if dt <= 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    u0 = eval_velocity(xi_t, wrap(x))
    guess = x + dt * u0
    u1 = eval_velocity(xi_next, wrap(guess))
    return x + 0.5 * dt * (u0 + u1)


@dataclass
class EulerianTracerRun:
    record: PathRecord
    tracer: TracerPath


def run_eulerian_tracer(
    w0: SpectralField,
    noise: NoiseSpec,
    dt: float,
    T: float,
    x0=(0.0, 0.0),
    *,
    rng: Optional[RngState] = None,
    every: int = 1,
    options: Optional[SolverOptions] = None,
    rough_start: bool = False,
) -> EulerianTracerRun:
    """Eulerian field with a co-moving tracer; field snapshots are kept at every sample.

    rough_start holds the particle at x0 during the first field step, for
    initial data whose velocity is not Lipschitz.
    """
    if T < 0:
        raise ArgumentError(f"horizon T must be >= 0, got {T}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ArgumentError(f"T={T} is not a multiple of dt={dt}")
    options = options or SolverOptions()
    s = SolverState(EquationKind.EULERIAN, w0, dt, (rng or RngState(0)).copy(), noise, options=options)
    provenance = {"rng": s.rng.as_dict(), "t0": s.t, "x0": [float(v) for v in np.asarray(x0, dtype=float)]}

    x = np.asarray(x0, dtype=float).copy()
    times: List[float] = []
    lift: List[np.ndarray] = []
    fields: List[SpectralField] = []
    series = {name: [] for name in DEFAULT_OBSERVABLES}

    def record(state, pos):
        times.append(state.t)
        lift.append(pos.copy())
        fields.append(state.field)
        for name, value in observe(state.field, DEFAULT_OBSERVABLES, options.convention).items():
            series[name].append(value)

    def finish(state, status):
        rec = PathRecord(
            EquationKind.EULERIAN, state.cutoff, dt, np.asarray(times),
            {k: np.asarray(v) for k, v in series.items()}, fields, state, provenance, status,
        )
        return EulerianTracerRun(rec, TracerPath(x0, times, lift))

    record(s, x)
    for k in range(1, n_steps + 1):
        try:
            nxt = step(s)
        except BlowUpError as exc:
            exc.partial = finish(s, "blow-up")
            raise
        if not (rough_start and k == 1):
            x = advance_tracer(x, s.field, nxt.field, dt)
        s = nxt
        if k % every == 0 or k == n_steps:
            record(s, x)
    return finish(s, "complete")


def lagrangian_to_trajectory(record: PathRecord, x0) -> TracerPath:
    """x(t) = x0 + cumulative trapezoid of psi*(w(s)) over the recorded samples."""
    if "psi1" not in record.observables or "psi2" not in record.observables:
        raise ArgumentError("trajectory reconstruction needs psi1 and psi2 samples")
    times = record.times
    if times.size > 1 and np.max(np.diff(times)) > record.dt * (1 + 1e-9):
        logger.warning("psi* sampled every %.3g time units (dt=%.3g); reconstruction is coarse",
                       float(np.max(np.diff(times))), record.dt)
    psi = np.column_stack([record.series("psi1"), record.series("psi2")])
    x0 = np.asarray(x0, dtype=float).reshape(2)
    if times.size == 1:
        return TracerPath(x0, times, x0[None, :])
    lift = x0 + cumulative_trapezoid(psi, times, axis=0, initial=0.0)
    return TracerPath(x0, times, lift)


def eulerian_to_lagrangian(record: PathRecord, tracer: TracerPath) -> PathRecord:
    """w(t) = translate(xi(t), x(t)) at every sample."""
    if not record.fields:
        raise ArgumentError("Eulerian record carries no field snapshots")
    if len(record.fields) != tracer.times.size or not np.allclose(record.times, tracer.times, rtol=0, atol=1e-12):
        raise ArgumentError("field snapshot times do not match tracer sample times")
    conv = record.final.options.convention
    omegas = [translate(xi, x) for xi, x in zip(record.fields, tracer.wrapped)]
    series = {name: [] for name in DEFAULT_OBSERVABLES}
    for w in omegas:
        for name, value in observe(w, DEFAULT_OBSERVABLES, conv).items():
            series[name].append(value)
    final = replace(record.final, kind=EquationKind.LAGRANGIAN, field=omegas[-1], propagator=None)
    return PathRecord(
        EquationKind.LAGRANGIAN, record.cutoff, record.dt, record.times.copy(),
        {k: np.asarray(v) for k, v in series.items()}, omegas, final,
        dict(record.provenance, reconstructed_from="eulerian"), record.status,
    )


@dataclass
class RoundTripReport:
    dts: Sequence[float]
    errors: Sequence[float]

    @property
    def ratio(self) -> float:
        return self.errors[0] / self.errors[1] if self.errors[1] > 0 else float("inf")


def round_trip_error(run: EulerianTracerRun) -> float:
    """max_t |x(t) - x_reconstructed(t)| for one Eulerian tracer run."""
    lag = eulerian_to_lagrangian(run.record, run.tracer)
    rebuilt = lagrangian_to_trajectory(lag, run.tracer.x0)
    return float(np.max(np.linalg.norm(rebuilt.lift - run.tracer.lift, axis=1)))


def round_trip_check(
    w0: SpectralField,
    noise: NoiseSpec,
    dt: float,
    T: float,
    x0=(0.0, 0.0),
    *,
    rng: Optional[RngState] = None,
    options: Optional[SolverOptions] = None,
) -> RoundTripReport:
    """Round-trip error at dt and dt/2 driven by the same Brownian path."""
    options = options or SolverOptions()
    rng = rng or RngState(0)
    coarse = run_eulerian_tracer(w0, noise, dt, T, x0, rng=rng,
                                 options=replace(options, refine=2 * options.refine))
    fine = run_eulerian_tracer(w0, noise, dt / 2, T, x0, rng=rng, options=options)
    report = RoundTripReport((dt, dt / 2), (round_trip_error(coarse), round_trip_error(fine)))
    logger.info("round trip: errors %.3e / %.3e, ratio %.3f", *report.errors, report.ratio)
    return report


def mild_form_residual(record: PathRecord, options: Optional[SolverOptions] = None) -> np.ndarray:
    """|w(t+dt) - E(w(t) + dt(-B0(w) + B1(w)))| per recorded step of a Lagrangian path.

    Zero up to roundoff without noise; with noise it is the norm of the
    stochastic convolution of that step.
    """
    if len(record.fields) < 2:
        raise ArgumentError("residual needs at least two field snapshots")
    if not np.allclose(np.diff(record.times), record.dt, rtol=1e-9, atol=0):
        raise ArgumentError("residual needs snapshots at every step")
    options = options or record.final.options
    prop = SolverState(EquationKind.DETERMINISTIC, record.fields[0], record.dt, RngState(0),
                       NoiseSpec.zero(record.cutoff), options=options).propagator
    out = []
    for w, w_next in zip(record.fields, record.fields[1:]):
        predicted = prop.advance(w.coeffs, drift(EquationKind.LAGRANGIAN, w, options), None)
        out.append(np.sqrt(2.0 * np.sum(np.abs(w_next.coeffs - predicted) ** 2)))
    return np.asarray(out)
