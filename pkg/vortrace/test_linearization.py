from dataclasses import replace

import numpy as np
import pytest

from .dynamics import EquationKind, SolverOptions, SolverState
from .errors import ArgumentError, DegeneracyError
from .linearization import (
    CoupledState,
    control_force,
    coupling_report,
    finite_difference_check,
    run_coupled,
    step_derivative_flow,
    step_malliavin,
    symmetric_b,
)
from .noise import NoiseSpec, RngState
from .spectral import SpectralField, heat_semigroup, mode_set, random_field


def unit_direction(n, seed=0, mask=None):
    rng = np.random.default_rng(seed)
    xi = random_field(n, rng, slope=1.0)
    if mask is not None:
        xi = xi.with_coeffs(np.where(mask, xi.coeffs, 0.0))
    return xi * (1.0 / xi.norm())


def coupled(w, xi, n0, noise=None, dt=1e-3, options=None):
    noise = noise or NoiseSpec.power_law(w.cutoff)
    base = SolverState(EquationKind.LAGRANGIAN, w, dt, RngState(1), noise, options=options or SolverOptions())
    return CoupledState.start(base, xi, n0)


class TestSymmetricB:
    def test_symmetric(self):
        rng = np.random.default_rng(2)
        w, v = random_field(4, rng), random_field(4, rng)
        assert np.allclose(symmetric_b(w, v).coeffs, symmetric_b(v, w).coeffs, atol=1e-12)

    def test_linear_options(self):
        w = random_field(3, np.random.default_rng(0))
        assert not np.any(symmetric_b(w, w, SolverOptions(nonlinear=False)).coeffs)


class TestDerivativeFlow:
    def test_zero_direction_stays_zero(self):
        cs = coupled(random_field(4, np.random.default_rng(1)), SpectralField.zeros(4), 2)
        for _ in range(5):
            cs = replace(cs, xi_lin=step_derivative_flow(cs))
        assert not np.any(cs.xi_lin.coeffs)

    def test_heat_decay_on_zero_path(self):
        xi = unit_direction(4)
        cs = coupled(SpectralField.zeros(4), xi, 2, noise=NoiseSpec.zero(4))
        for _ in range(20):
            cs = replace(cs, xi_lin=step_derivative_flow(cs))
        expected = heat_semigroup(xi, 20 * 1e-3)
        assert np.allclose(cs.xi_lin.coeffs, expected.coeffs, rtol=1e-12, atol=1e-15)

    def test_finite_difference(self):
        w = random_field(4, np.random.default_rng(3))
        report = finite_difference_check(w, unit_direction(4, seed=4), NoiseSpec.power_law(4), 1e-3, 0.05,
                                         rng=RngState(9))
        assert report.xi_norm > 0
        assert report.relative_error <= 1e-3


class TestControl:
    def test_zero_zeta(self):
        cs = coupled(random_field(4, np.random.default_rng(0)), SpectralField.zeros(4), 2)
        f, g = control_force(cs)
        assert not np.any(f.coeffs) and not np.any(g.coeffs)

    def test_high_modes_only(self):
        high = ~mode_set(4).low_mask(2)
        cs = coupled(SpectralField.zeros(4), unit_direction(4, mask=high), 2)
        for discrete in (True, False):
            f, _ = control_force(cs, discrete)
            assert not np.any(f.coeffs)

    def test_unit_low_mode_continuous_form(self):
        low = mode_set(4).low_mask(2)
        xi = unit_direction(4, seed=5, mask=low)
        cs = coupled(SpectralField.zeros(4), xi, 2)
        f, g = control_force(cs, discrete=False)
        lam = mode_set(4).eigenvalues()
        expected = np.where(low, (0.5 - lam) * xi.coeffs, 0.0)
        assert np.allclose(f.coeffs, expected, atol=1e-13)
        q = cs.base.noise.q
        assert np.allclose(g.coeffs[low], f.coeffs[low] / q[low])

    def test_degenerate_noise(self):
        noise = NoiseSpec.power_law(4, overrides={(1, 0): 0.0})
        cs = coupled(SpectralField.zeros(4), unit_direction(4), 2, noise=noise)
        with pytest.raises(DegeneracyError) as info:
            control_force(cs)
        assert info.value.modes == [(1, 0)]

    def test_start_checks(self):
        with pytest.raises(ArgumentError):
            coupled(SpectralField.zeros(4), unit_direction(4) * 2.0, 2)
        with pytest.raises(ArgumentError):
            coupled(SpectralField.zeros(4), unit_direction(4), 5)


class TestMalliavin:
    def test_zero_control(self):
        cs = coupled(random_field(3, np.random.default_rng(0)), unit_direction(3), 2)
        zero = SpectralField.zeros(3)
        for _ in range(5):
            cs = replace(cs, malliavin=step_malliavin(cs, zero))
        assert not np.any(cs.malliavin.coeffs)

    def test_constant_forcing_closed_form(self):
        n, dt, steps = 3, 1e-3, 50
        cs = coupled(SpectralField.zeros(n), unit_direction(n), 2, dt=dt)
        i = mode_set(n).index[(1, 0)]
        g = np.zeros(mode_set(n).size, dtype=complex)
        g[i] = 0.3 - 0.1j
        g = SpectralField(n, g)
        for _ in range(steps):
            cs = replace(cs, malliavin=step_malliavin(cs, g))
        lam = 4 * np.pi ** 2
        q = cs.base.noise.q[i]
        a = np.exp(-lam * dt)
        expected = q * g.coeffs[i] * dt * a * (1 - a ** steps) / (1 - a)
        assert cs.malliavin.coeffs[i] == pytest.approx(expected, rel=1e-12)
        continuous = q * g.coeffs[i] * (1 - np.exp(-lam * dt * steps)) / lam
        assert abs(cs.malliavin.coeffs[i] - continuous) <= 0.05 * abs(continuous)


class TestCoupledRun:
    def test_identity_and_extinction(self):
        w = random_field(3, np.random.default_rng(6), norm=0.5)
        xi = unit_direction(3, seed=7)
        rec = run_coupled(w, xi, NoiseSpec.power_law(3), 1e-2, 2.5, 2, rng=RngState(3))
        assert rec.relative_identity_error <= 1e-10
        assert rec.extinct_after(2.0)
        r0 = rec.final.radius0
        assert np.allclose(rec.zeta_low_norm, np.maximum(r0 - rec.times / 2, 0.0), atol=1e-12)
        assert rec.control_energy[0] == 0.0
        assert np.all(np.diff(rec.control_energy) >= 0)

    def test_report(self):
        xi = unit_direction(3, seed=1)
        opts = SolverOptions(nonlinear=False)
        records = [
            run_coupled(random_field(3, np.random.default_rng(s), norm=0.5), xi, NoiseSpec.power_law(3),
                        1e-2, 3.0, 2, rng=RngState(s), every=10, options=opts)
            for s in (1, 2)
        ]
        report = coupling_report(records)
        assert report.size == 2
        assert report.extinct and report.max_low_radius <= 1.0
        assert report.max_relative_identity_error <= 1e-10
        assert report.nonincreasing
        assert report.decay_factor > 1.0
        d = report.as_dict()
        assert d["extinct_after_2"] is True

    def test_report_needs_records(self):
        with pytest.raises(ArgumentError):
            coupling_report([])

    def test_invalid_horizon(self):
        with pytest.raises(ArgumentError):
            run_coupled(SpectralField.zeros(3), unit_direction(3), NoiseSpec.power_law(3), 1e-2, 0.015, 2)

    @pytest.mark.slow
    def test_acceptance_scale(self):
        w = random_field(6, np.random.default_rng(0))
        noise = NoiseSpec.power_law(6)
        records = [run_coupled(w, unit_direction(6, seed=1 + i), noise, 5e-4, 10.0, 3, rng=RngState(2, i), every=100)
                   for i in range(8)]
        report = coupling_report(records)
        assert report.max_relative_identity_error <= 1e-6
        assert report.extinct
        at2 = int(np.searchsorted(report.times, 2.0 - 1e-9))
        at6 = int(np.searchsorted(report.times, 6.0 - 1e-9))
        assert report.mean_zeta_norm2[at2] >= 10 * report.mean_zeta_norm2[at6]
        assert report.mean_control_energy[-1] > 0
        assert report.plateau_increment < 0.01
