# -*- coding: utf-8 -*-
"""
Derivative flow, controlled derivative flow and Malliavin derivative along a
Lagrangian path w(t).

With B = -B0 + B1 and B_s(w, v) = B(w, v) + B(v, w):

    xi'   = Delta xi + B_s(w, xi)                         derivative flow
    D'    = Delta D  + B_s(w, D) + Q g,  D(0) = 0         Malliavin derivative
    zeta  : high modes follow the derivative flow, the low part
            zeta_N = Pi_{<n0} zeta shrinks radially at unit speed 1/2
    f     = Pi_{<n0}(Delta zeta + B_s(w, zeta)) + zeta_N / (2 |zeta_N|),  g = Q^-1 f

so that xi - D = zeta for all t and zeta_N vanishes for t >= 2 |zeta_N(0)|.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import EquationKind, SolverOptions, SolverState, step
from .errors import ArgumentError, BlowUpError, DegeneracyError
from .noise import NoiseSpec, RngState
from .spectral import Advection, SpectralField, bilinear_b

logger = logging.getLogger(__name__)

EXTINCTION_SPEED = 0.5


def symmetric_b(w: SpectralField, v: SpectralField, options: SolverOptions = SolverOptions()) -> SpectralField:
    """B_s(w, v) = -B0(w, v) - B0(v, w) + B1(w, v) + B1(v, w)."""
    if not options.nonlinear:
        return SpectralField.zeros(w.cutoff)
    backend = options.backend
    return (
        bilinear_b(w, v, Advection.B1)
        + bilinear_b(v, w, Advection.B1)
        - bilinear_b(w, v, Advection.B0, backend=backend)
        - bilinear_b(v, w, Advection.B0, backend=backend)
    )


def _norm(coeffs: np.ndarray) -> float:
    return float(np.sqrt(2.0 * np.sum(np.abs(coeffs) ** 2)))


@dataclass
class CoupledState:
    base: SolverState
    xi_lin: SpectralField
    zeta: SpectralField
    malliavin: SpectralField
    n0: int
    direction: np.ndarray
    radius0: float

    def __post_init__(self):
        n = self.base.cutoff
        for name in ("xi_lin", "zeta", "malliavin"):
            if getattr(self, name).cutoff != n:
                raise ArgumentError(f"{name} cutoff {getattr(self, name).cutoff} differs from base cutoff {n}")
        if not 1 <= self.n0 <= n:
            raise ArgumentError(f"low-mode cutoff n0 must lie in [1, {n}], got {self.n0}")

    @classmethod
    def start(cls, base: SolverState, xi: SpectralField, n0: int) -> "CoupledState":
        """xi_lin(0) = zeta(0) = xi, D(0) = 0."""
        if xi.norm() > 1.0 + 1e-12:
            raise ArgumentError(f"perturbation direction must satisfy |xi| <= 1, got {xi.norm():.6g}")
        low = base.field.modes.low_mask(n0)
        lo = np.where(low, xi.coeffs, 0.0)
        r0 = _norm(lo)
        direction = lo / r0 if r0 > 0 else np.zeros_like(lo)
        return cls(base, xi, xi, SpectralField.zeros(xi.cutoff), n0, direction, r0)

    @property
    def t(self) -> float:
        return self.base.t

    @property
    def dt(self) -> float:
        return self.base.dt

    @property
    def low(self) -> np.ndarray:
        return self.base.field.modes.low_mask(self.n0)

    def radius(self, step_index: Optional[int] = None) -> float:
        """|zeta_N| at a step index, max(r0 - t/2, 0) with t taken from the step count."""
        k = self.base.step_index if step_index is None else step_index
        return max(self.radius0 - EXTINCTION_SPEED * k * self.dt, 0.0)

    def zeta_low(self) -> SpectralField:
        return self.zeta.with_coeffs(np.where(self.low, self.zeta.coeffs, 0.0))

    def identity_error(self) -> float:
        """|xi - D - zeta|"""
        return (self.xi_lin - self.malliavin - self.zeta).norm()


def _linear_advance(cs: CoupledState, v: SpectralField, forcing: Optional[np.ndarray] = None) -> SpectralField:
    drift = symmetric_b(cs.base.field, v, cs.base.options).coeffs
    if forcing is not None:
        drift = drift + forcing
    coeffs = cs.base.propagator.decay * (v.coeffs + cs.dt * drift)
    peak = float(np.max(np.abs(coeffs), initial=0.0))
    if not np.isfinite(peak) or peak > 1e12:
        raise BlowUpError(cs.t + cs.dt, cs.base.step_index + 1, peak)
    return v.with_coeffs(coeffs)


def step_derivative_flow(cs: CoupledState) -> SpectralField:
    return _linear_advance(cs, cs.xi_lin)


def control_force(cs: CoupledState, discrete: bool = True) -> Tuple[SpectralField, SpectralField]:
    """(f, g) with f supported on |k| < n0 and g = f / q.

    discrete=False gives the continuous-time force. discrete=True replaces
    the Delta and radial-shrink terms by their exact one-step increments,
    which makes xi - D = zeta hold to roundoff in the lockstep integrator.
    """
    low = cs.low
    degenerate = cs.base.noise.zero_modes(low)
    if degenerate:
        raise DegeneracyError(degenerate)
    zeta_lo = np.where(low, cs.zeta.coeffs, 0.0)
    transport = np.where(low, symmetric_b(cs.base.field, cs.zeta, cs.base.options).coeffs, 0.0)
    lam = cs.base.propagator.lam

    if discrete:
        r_now = cs.radius()
        if r_now > 0:
            shrink = cs.radius(cs.base.step_index + 1) / r_now
            f = transport + zeta_lo * (1.0 - np.exp(lam * cs.dt) * shrink) / cs.dt
        else:
            f = transport
    else:
        size = _norm(zeta_lo)
        unit = zeta_lo / size if size > 0 else np.zeros_like(zeta_lo)
        f = transport - lam * zeta_lo + EXTINCTION_SPEED * unit

    f = np.where(low, f, 0.0)
    q = cs.base.noise.q
    g = np.zeros_like(f)
    g[low] = f[low] / q[low]
    return cs.zeta.with_coeffs(f), cs.zeta.with_coeffs(g)


def step_zeta(cs: CoupledState) -> SpectralField:
    """High modes by the linearized flow, low modes on the analytic radial path."""
    high = _linear_advance(cs, cs.zeta).coeffs
    low_part = cs.radius(cs.base.step_index + 1) * cs.direction
    return cs.zeta.with_coeffs(np.where(cs.low, low_part, high))


def step_malliavin(cs: CoupledState, g: SpectralField) -> SpectralField:
    return _linear_advance(cs, cs.malliavin, cs.base.noise.q * g.coeffs)


def coupled_step(cs: CoupledState) -> Tuple[CoupledState, SpectralField, SpectralField]:
    """One lockstep update of xi, zeta, D and the base path; returns (state, f, g) at the old time."""
    f, g = control_force(cs)
    xi_next = step_derivative_flow(cs)
    zeta_next = step_zeta(cs)
    d_next = step_malliavin(cs, g)
    base_next = step(cs.base)
    return replace(cs, base=base_next, xi_lin=xi_next, zeta=zeta_next, malliavin=d_next), f, g


@dataclass
class CouplingRecord:
    times: np.ndarray
    identity_error: np.ndarray
    xi_norm: np.ndarray
    malliavin_norm: np.ndarray
    zeta_norm2: np.ndarray
    zeta_low_norm: np.ndarray
    g_norm2: np.ndarray
    control_energy: np.ndarray
    final: CoupledState

    @property
    def scale(self) -> float:
        return float(np.max(self.xi_norm + np.sqrt(self.zeta_norm2)))

    @property
    def relative_identity_error(self) -> float:
        scale = self.scale
        return float(np.max(self.identity_error) / scale) if scale > 0 else 0.0

    def extinct_after(self, t: float = 2.0) -> bool:
        mask = self.times >= t - 1e-12
        return bool(np.all(self.zeta_low_norm[mask] == 0.0))

    def columns(self):
        return {
            "t": self.times,
            "identity_error": self.identity_error,
            "xi_norm": self.xi_norm,
            "malliavin_norm": self.malliavin_norm,
            "zeta_norm2": self.zeta_norm2,
            "zeta_low_norm": self.zeta_low_norm,
            "g_norm2": self.g_norm2,
            "control_energy": self.control_energy,
        }


def run_coupled(
    w: SpectralField,
    xi: SpectralField,
    noise: NoiseSpec,
    dt: float,
    T: float,
    n0: int,
    *,
    rng: Optional[RngState] = None,
    every: int = 1,
    options: Optional[SolverOptions] = None,
) -> CouplingRecord:
    if T < 0:
        raise ArgumentError(f"horizon T must be >= 0, got {T}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ArgumentError(f"T={T} is not a multiple of dt={dt}")
    base = SolverState(EquationKind.LAGRANGIAN, w, dt, (rng or RngState(0)).copy(), noise,
                       options=options or SolverOptions())
    cs = CoupledState.start(base, xi, n0)
    rows = {key: [] for key in ("t", "err", "xi", "d", "z2", "zlo", "g2", "energy")}
    energy = 0.0
    _, g_prev = control_force(cs)
    g2_prev = g_prev.norm() ** 2

    def record(state, g2):
        rows["t"].append(state.t)
        rows["err"].append(state.identity_error())
        rows["xi"].append(state.xi_lin.norm())
        rows["d"].append(state.malliavin.norm())
        rows["z2"].append(state.zeta.norm() ** 2)
        rows["zlo"].append(state.zeta_low().norm())
        rows["g2"].append(g2)
        rows["energy"].append(energy)

    record(cs, g2_prev)
    for k in range(1, n_steps + 1):
        cs, _, _ = coupled_step(cs)
        _, g_now = control_force(cs)
        g2_now = g_now.norm() ** 2
        energy += 0.5 * dt * (g2_prev + g2_now)
        g2_prev = g2_now
        if k % every == 0 or k == n_steps:
            record(cs, g2_now)
    logger.debug("coupled run n0=%d T=%g: max identity error %.3e", n0, T, max(rows["err"]))
    return CouplingRecord(
        np.asarray(rows["t"]), np.asarray(rows["err"]), np.asarray(rows["xi"]), np.asarray(rows["d"]),
        np.asarray(rows["z2"]), np.asarray(rows["zlo"]), np.asarray(rows["g2"]), np.asarray(rows["energy"]), cs,
    )


@dataclass
class CouplingReport:
    size: int
    times: np.ndarray
    mean_zeta_norm2: np.ndarray
    mean_control_energy: np.ndarray
    max_relative_identity_error: float
    extinct: bool
    max_low_radius: float
    fitted_rate: float
    decay_factor: float
    nonincreasing: bool
    plateau_increment: float

    def as_dict(self) -> dict:
        return {
            "ensemble": self.size,
            "max_relative_identity_error": self.max_relative_identity_error,
            "extinct_after_2": self.extinct,
            "max_low_radius": self.max_low_radius,
            "fitted_rate": self.fitted_rate,
            "decay_factor": self.decay_factor,
            "nonincreasing_after_2": self.nonincreasing,
            "plateau_increment": self.plateau_increment,
        }


def coupling_report(records: Sequence[CouplingRecord], extinction_time: float = 2.0) -> CouplingReport:
    """Ensemble view: extinction, decay of E|zeta|^2 after extinction, control-energy plateau."""
    if not records:
        raise ArgumentError("coupling report needs at least one record")
    times = records[0].times
    for r in records:
        if r.times.shape != times.shape or not np.allclose(r.times, times):
            raise ArgumentError("coupled records have different sample times")
    z2 = np.mean([r.zeta_norm2 for r in records], axis=0)
    energy = np.mean([r.control_energy for r in records], axis=0)

    after = times >= extinction_time - 1e-12
    tail_t, tail_z = times[after], z2[after]
    positive = tail_z > 0
    if np.count_nonzero(positive) >= 2:
        slope = np.polyfit(tail_t[positive], np.log(tail_z[positive]), 1)[0]
        rate = float(-slope)
    else:
        rate = float("inf")
    if tail_z.size:
        target = extinction_time + (5.0 / rate if np.isfinite(rate) and rate > 0 else 0.0)
        j = min(int(np.searchsorted(tail_t, target - 1e-12)), tail_z.size - 1)
        decay = float(tail_z[0] / tail_z[j]) if tail_z[j] > 0 else float("inf")
        nonincreasing = bool(np.all(np.diff(tail_z) <= 1e-14 * max(tail_z[0], 1e-300)))
    else:
        decay, nonincreasing = float("nan"), True

    last = times[-1]
    prior = np.searchsorted(times, last - 1.0 - 1e-12)
    total = energy[-1]
    plateau = float((energy[-1] - energy[prior]) / total) if total > 0 else 0.0

    return CouplingReport(
        len(records), times, z2, energy,
        max(r.relative_identity_error for r in records),
        all(r.extinct_after(extinction_time) for r in records),
        float(max(np.max(r.zeta_low_norm) for r in records)),
        rate, decay, nonincreasing, plateau,
    )


@dataclass
class FiniteDifferenceReport:
    eps: float
    fd_norm: float
    xi_norm: float
    relative_error: float


def finite_difference_check(
    w: SpectralField,
    xi: SpectralField,
    noise: NoiseSpec,
    dt: float,
    T: float,
    eps: float = 1e-5,
    *,
    rng: Optional[RngState] = None,
    options: Optional[SolverOptions] = None,
) -> FiniteDifferenceReport:
    """(w(T; w + eps xi) - w(T; w)) / eps against the derivative flow xi(T), shared noise."""
    rng = rng or RngState(0)
    options = options or SolverOptions()
    n_steps = int(round(T / dt))
    a = SolverState(EquationKind.LAGRANGIAN, w, dt, rng.copy(), noise, options=options)
    b = SolverState(EquationKind.LAGRANGIAN, w + xi * eps, dt, rng.copy(), noise, options=options)
    cs = CoupledState.start(a, xi, 1)
    for _ in range(n_steps):
        cs = replace(cs, base=step(cs.base), xi_lin=step_derivative_flow(cs))
        b = step(b)
    fd = (b.field - cs.base.field) * (1.0 / eps)
    xi_t = cs.xi_lin
    scale = xi_t.norm()
    rel = (fd - xi_t).norm() / scale if scale > 0 else fd.norm()
    return FiniteDifferenceReport(eps, fd.norm(), scale, float(rel))
