import numpy as np
import pytest

from .dynamics import EquationKind, SolverOptions, simulate
from .errors import ArgumentError, NumericError
from .noise import NoiseSpec, RngState
from .spectral import SpectralField, cos_field, mode_set, sin_field
from .statistics import (
    EnsembleSummary,
    asymptotic_variance_direct,
    clt_diagnostics,
    corrector,
    displacement_bound_check,
    doubling_se_ratio,
    energy_identity_check,
    ergodic_drift,
    exact_linear_estimate,
    green_kubo_D,
    jackknife,
    lag_autocorrelation,
    linear_corrector,
    linear_ou_diffusivity,
    martingale_increments,
    martingale_parts,
    moment_monitors,
    paths_from_displacements,
    stationary_samples,
    stokes_drift,
)

LINEAR = SolverOptions(nonlinear=False)


def stationary_linear_field(noise, rng):
    """Exact draw from the invariant law of the linear dynamics."""
    ms = mode_set(noise.cutoff)
    sigma = noise.q / np.sqrt(2.0 * ms.eigenvalues())
    g = (rng.standard_normal(ms.size) + 1j * rng.standard_normal(ms.size)) / np.sqrt(2.0)
    return SpectralField(noise.cutoff, sigma * g)


class TestDrift:
    def test_jackknife_mean_matches_standard_error(self):
        x = np.random.default_rng(0).standard_normal((50, 2))
        est, se = jackknife(x)
        assert np.allclose(est, x.mean(axis=0))
        assert np.allclose(se, x.std(axis=0, ddof=1) / np.sqrt(50))

    def test_straight_lines(self):
        v = np.array([0.3, -0.2])
        x0s = np.random.default_rng(1).uniform(-0.5, 0.5, (10, 2))
        est = stokes_drift(paths_from_displacements(x0s, np.tile(v * 4.0, (10, 1)), 4.0), 4.0)
        assert np.allclose(est.value, v)
        assert np.allclose(est.se, 0.0, atol=1e-15)
        assert est.size == 10

    def test_antithetic_pairs_cancel(self):
        d = np.random.default_rng(2).standard_normal((6, 2))
        disps = np.repeat(d, 2, axis=0)
        disps[1::2] *= -1
        x0s = np.zeros((12, 2))
        est = stokes_drift(paths_from_displacements(x0s, disps, 2.0), 2.0)
        assert np.allclose(est.value, 0.0, atol=1e-15)

    def test_ergodic_drift_of_symmetric_law(self):
        noise = NoiseSpec.power_law(3)
        rng = np.random.default_rng(13)
        est = ergodic_drift([stationary_linear_field(noise, rng) for _ in range(2000)])
        assert est.size == 2000
        assert np.all(est.se > 0)
        assert np.all(np.abs(est.value) <= 4 * est.se)
        with pytest.raises(ArgumentError):
            ergodic_drift([SpectralField.zeros(3)])

    def test_empty_and_misaligned(self):
        with pytest.raises(ArgumentError):
            stokes_drift([], 1.0)
        paths = paths_from_displacements(np.zeros((2, 2)), np.ones((2, 2)), 1.0)
        with pytest.raises(ArgumentError):
            stokes_drift(paths, 2.0)
        with pytest.raises(ArgumentError):
            stokes_drift(paths, 0.0)


class TestDirectCovariance:
    def test_identical_paths(self):
        paths = paths_from_displacements(np.zeros((5, 2)), np.tile([1.0, 2.0], (5, 1)), 2.0)
        est = asymptotic_variance_direct(paths, None, 2.0, n_boot=50)
        assert np.allclose(est.matrix, 0.0)

    def test_random_walks(self):
        T, n = 4.0, 4000
        disps = np.random.default_rng(3).standard_normal((n, 2)) * np.sqrt(T)
        paths = paths_from_displacements(np.zeros((n, 2)), disps, T)
        est = asymptotic_variance_direct(paths, np.zeros(2), T, n_boot=200, seed=1)
        assert np.all(np.abs(est.matrix - np.eye(2)) <= 4 * est.se)
        assert np.all(est.ci_low <= est.matrix) and np.all(est.matrix <= est.ci_high)
        assert np.allclose(est.matrix, est.matrix.T)

    def test_needs_two_paths(self):
        paths = paths_from_displacements(np.zeros((1, 2)), np.ones((1, 2)), 1.0)
        with pytest.raises(ArgumentError):
            asymptotic_variance_direct(paths, None, 1.0)


class TestCorrector:
    def test_null_observable(self):
        w = cos_field(3, (1, 0), 2.0)
        est = corrector(w, 0.1, 2, noise=NoiseSpec.zero(3), dt=1e-2, options=LINEAR)
        assert np.array_equal(est.value, [0.0, 0.0])
        assert est.tail == 0.0

    def test_linear_mean_matches_closed_form(self):
        w = sin_field(3, (1, 0), 2.0)
        est = corrector(w, 0.2, 32, noise=NoiseSpec.power_law(3), dt=1e-3, rng=RngState(4), options=LINEAR)
        exact = linear_corrector(w, 0.2)
        assert exact[1] == pytest.approx((1 - np.exp(-4 * np.pi ** 2 * 0.2)) / (4 * np.pi ** 3))
        assert np.all(np.abs(est.value - exact) <= 4 * est.se + 1e-3 * np.abs(exact))
        assert est.half_t == pytest.approx(0.1)

    def test_centering(self):
        est = exact_linear_estimate(sin_field(2, (1, 0), 2.0), 1.0)
        assert np.allclose(est.centered([0.0, 1.0]), est.integral - [0.0, 1.0])

    def test_stationary_mean_of_corrector_vanishes(self):
        noise = NoiseSpec.power_law(3)
        rng = np.random.default_rng(14)
        chi = np.array([exact_linear_estimate(stationary_linear_field(noise, rng), 1.0).value for _ in range(4000)])
        se = chi.std(axis=0, ddof=1) / np.sqrt(chi.shape[0])
        assert np.all(np.abs(chi.mean(axis=0)) <= 4 * se)

    def test_exact_tail_shrinks(self):
        w = sin_field(3, (1, 0), 2.0)
        tails = [exact_linear_estimate(w, t).tail for t in (0.05, 0.1, 0.2, 0.4)]
        assert all(b < a for a, b in zip(tails, tails[1:]))

    def test_monte_carlo_tail_shrinks(self):
        w = sin_field(3, (1, 0), 100.0)
        tails = [corrector(w, t, 16, noise=NoiseSpec.power_law(3), dt=1e-3, rng=RngState(6), options=LINEAR).tail
                 for t in (0.05, 0.1, 0.2)]
        assert all(b < a for a, b in zip(tails, tails[1:]))

    def test_invalid(self):
        w = cos_field(2, (1, 0))
        with pytest.raises(ArgumentError):
            corrector(w, 0.1, 0, noise=NoiseSpec.zero(2), dt=1e-2)
        with pytest.raises(ArgumentError):
            corrector(w, 0.0, 2, noise=NoiseSpec.zero(2), dt=1e-2)


class TestGreenKubo:
    def test_null_observable(self):
        w = cos_field(3, (1, 0), 2.0)
        gk = green_kubo_D([w, w], [exact_linear_estimate(w, 1.0)] * 2)
        assert np.array_equal(gk.matrix, np.zeros((2, 2)))

    def test_linear_closed_form(self):
        noise = NoiseSpec.power_law(3)
        rng = np.random.default_rng(5)
        samples = [stationary_linear_field(noise, rng) for _ in range(4000)]
        correctors = [exact_linear_estimate(w, 50.0) for w in samples]
        gk = green_kubo_D(samples, correctors)
        exact = linear_ou_diffusivity(noise)
        assert np.array_equal(gk.matrix, gk.matrix.T)
        assert np.all(np.abs(gk.matrix - exact) <= 4 * gk.se + 1e-12)

    def test_drift_uncertainty_widens_error(self):
        noise = NoiseSpec.power_law(2)
        rng = np.random.default_rng(6)
        samples = [stationary_linear_field(noise, rng) for _ in range(50)]
        correctors = [exact_linear_estimate(w, 10.0) for w in samples]
        plain = green_kubo_D(samples, correctors)
        wide = green_kubo_D(samples, correctors, v_se=[0.01, 0.01])
        assert np.all(wide.se >= plain.se)

    def test_mismatched_inputs(self):
        with pytest.raises(ArgumentError):
            green_kubo_D([SpectralField.zeros(2)], [])

    def test_closed_form_is_symmetric_and_positive(self):
        d = linear_ou_diffusivity(NoiseSpec.power_law(4))
        assert np.allclose(d, d.T)
        assert np.all(np.linalg.eigvalsh(d) > 0)
        assert not np.any(linear_ou_diffusivity(NoiseSpec.zero(3)))


class TestStationarySamples:
    def test_lag_autocorrelation(self):
        assert lag_autocorrelation(np.array([1.0, -1.0] * 20)) == pytest.approx(-39 / 40)
        assert lag_autocorrelation(np.ones(5)) == 0.0
        with pytest.raises(ArgumentError):
            lag_autocorrelation(np.ones(2), 2)

    def test_sampling_layout(self):
        s = stationary_samples(SpectralField.zeros(3), NoiseSpec.power_law(3), 1e-2, 5, burn_in=0.5, thin=0.2,
                               rng=RngState(1), options=LINEAR)
        assert len(s.fields) == 5 and s.energy.size == 5
        assert np.allclose(np.diff(s.times), 0.2)
        assert s.times[0] == pytest.approx(0.7)

    def test_invalid_thinning(self):
        with pytest.raises(ArgumentError):
            stationary_samples(SpectralField.zeros(2), NoiseSpec.zero(2), 0.1, 3, thin=0.01)


class TestMartingale:
    def test_zero_horizon(self):
        rec = simulate(EquationKind.LAGRANGIAN, SpectralField.zeros(2), NoiseSpec.zero(2), 1e-3, 0.0,
                       keep_fields=True)
        parts = martingale_parts(rec, lambda w: linear_corrector(w))
        assert np.array_equal(parts.M, [0.0, 0.0]) and np.array_equal(parts.R, [0.0, 0.0])

    def test_noise_free_linear_path_has_no_martingale(self):
        w0 = sin_field(3, (1, 0), 2.0) + cos_field(3, (1, 1), 1.0)
        rec = simulate(EquationKind.LAGRANGIAN, w0, NoiseSpec.zero(3), 1e-4, 0.05, ("psi1", "psi2", "disp1", "disp2"),
                       keep_fields=True, options=LINEAR, every=50)
        parts = martingale_parts(rec, lambda w: linear_corrector(w))
        displacement = np.array([rec.series("disp1")[-1], rec.series("disp2")[-1]])
        assert np.linalg.norm(parts.M) <= 1e-4 * np.linalg.norm(displacement)
        assert np.allclose(parts.M + np.sqrt(0.05) * parts.R, displacement)

    def test_increments_sum_to_total(self):
        rec = simulate(EquationKind.LAGRANGIAN, sin_field(3, (1, 0), 2.0), NoiseSpec.power_law(3), 1e-3, 0.1,
                       keep_fields=True, every=10, rng=RngState(2), options=LINEAR)
        inc = martingale_increments(rec, lambda w: linear_corrector(w))
        assert inc.shape == (10, 2)
        assert np.allclose(inc.sum(axis=0), martingale_parts(rec, lambda w: linear_corrector(w)).M)

    def test_remainder_shrinks_with_horizon(self):
        noise = NoiseSpec.power_law(3)
        rng = np.random.default_rng(15)

        def mean_abs_r(T):
            out = []
            for s in range(32):
                rec = simulate(EquationKind.LAGRANGIAN, stationary_linear_field(noise, rng), noise, 1e-3, T,
                               ("disp1", "disp2"), keep_fields=True, every=int(round(T / 1e-3)),
                               rng=RngState(20, s), options=LINEAR)
                out.append(np.linalg.norm(martingale_parts(rec, lambda w: linear_corrector(w)).R))
            return np.mean(out)

        assert mean_abs_r(2.0) < 0.8 * mean_abs_r(0.5)

    def test_increments_are_uncorrelated(self):
        noise = NoiseSpec.power_law(3)
        w0 = stationary_linear_field(noise, np.random.default_rng(16))
        rec = simulate(EquationKind.LAGRANGIAN, w0, noise, 1e-3, 50.0, ("disp1", "disp2"), keep_fields=True,
                       every=50, rng=RngState(21), options=LINEAR)
        inc = martingale_increments(rec, lambda w: linear_corrector(w))
        n = inc.shape[0]
        assert n == 1000
        for i in range(2):
            assert abs(lag_autocorrelation(inc[:, i], 1)) <= 3 / np.sqrt(n)


class TestCLT:
    def test_calibration(self):
        rng = np.random.default_rng(7)
        passed = [clt_diagnostics(rng.standard_normal((200, 2)), np.eye(2)).passed for _ in range(1000)]
        assert np.mean(passed) >= 0.98

    def test_whitening(self):
        rng = np.random.default_rng(8)
        d = np.array([[2.0, 0.5], [0.5, 1.0]])
        z = rng.multivariate_normal([0, 0], d, size=5000)
        report = clt_diagnostics(z, d)
        assert np.allclose(report.standardized_covariance, np.eye(2), atol=0.1)
        assert set(report.as_dict()) >= {"ks_pvalue", "mardia_skewness", "passed"}

    def test_constant_inputs(self):
        z = np.ones((150, 2))
        with pytest.raises(NumericError):
            clt_diagnostics(z, np.eye(2))
        report = clt_diagnostics(z, np.eye(2), allow_singular=True)
        assert report.degenerate and not report.passed

    def test_singular_covariance(self):
        z = np.random.default_rng(9).standard_normal((150, 2))
        with pytest.raises(NumericError):
            clt_diagnostics(z, np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_too_few_samples(self):
        with pytest.raises(ArgumentError):
            clt_diagnostics(np.zeros((10, 2)), np.eye(2))


class TestMonitors:
    def test_noise_free_decay(self):
        rec = simulate(EquationKind.LAGRANGIAN, sin_field(3, (1, 0), 2.0), NoiseSpec.zero(3), 1e-3, 0.1, every=10)
        report = moment_monitors(rec, NoiseSpec.zero(3))
        assert report.balance_ratio is None
        assert report.exp_moment_bounded
        assert report.nu == 1.0

    def test_linear_energy_balance(self):
        noise = NoiseSpec.power_law(3)
        w0 = stationary_linear_field(noise, np.random.default_rng(10))
        rec = simulate(EquationKind.LAGRANGIAN, w0, noise, 1e-3, 20.0, every=10, rng=RngState(3), options=LINEAR)
        report = moment_monitors(rec, noise, burn_in=1.0)
        assert report.balance_ratio == pytest.approx(1.0, abs=0.15)
        assert report.nu == pytest.approx(noise.nu0)
        assert set(report.moments) == {1, 2, 4}

    @pytest.mark.slow
    def test_nonlinear_energy_balance(self):
        noise = NoiseSpec.power_law(4)
        rec = simulate(EquationKind.LAGRANGIAN, SpectralField.zeros(4), noise, 1e-3, 500.0, every=100,
                       rng=RngState(1))
        report = moment_monitors(rec, noise, burn_in=10.0)
        assert 0.95 <= report.balance_ratio <= 1.05

    def test_burn_in_too_long(self):
        rec = simulate(EquationKind.LAGRANGIAN, SpectralField.zeros(2), NoiseSpec.zero(2), 1e-3, 0.01)
        with pytest.raises(ArgumentError):
            moment_monitors(rec, NoiseSpec.zero(2), burn_in=1.0)

    def test_energy_identity(self):
        noise = NoiseSpec.power_law(3)
        w0 = sin_field(3, (1, 0), 1.0)
        records = [
            simulate(EquationKind.LAGRANGIAN, w0, noise, 1e-3, 0.2, ("energy", "cum_dissipation"), every=200,
                     rng=RngState(s), options=LINEAR)
            for s in range(32)
        ]
        report = energy_identity_check(records, w0.norm() ** 2, noise, 0.2)
        assert report.size == 32
        assert abs(report.deviation) <= 5 * report.se

    def test_displacement_bound(self):
        rec = simulate(EquationKind.LAGRANGIAN, sin_field(3, (1, 0), 2.0), NoiseSpec.power_law(3), 1e-3, 0.1,
                       rng=RngState(4))
        assert displacement_bound_check(rec)


class TestSummary:
    def test_doubling_ratio(self):
        x = np.random.default_rng(11).standard_normal((4000, 2))
        assert np.allclose(doubling_se_ratio(x), 1 / np.sqrt(2), atol=0.05)
        with pytest.raises(ArgumentError):
            doubling_se_ratio(np.zeros((3, 2)))

    def test_to_dict(self):
        disps = np.random.default_rng(12).standard_normal((8, 2))
        paths = paths_from_displacements(np.zeros((8, 2)), disps, 1.0)
        summary = EnsembleSummary(8, 1.0, stokes_drift(paths, 1.0),
                                  asymptotic_variance_direct(paths, None, 1.0, n_boot=20), extra={"note": 1})
        d = summary.to_dict()
        assert d["ensemble"] == 8 and d["note"] == 1
        assert len(d["D_direct"]) == 2 and "clt" not in d


@pytest.mark.slow
class TestAcceptanceScale:
    def test_ensemble_energy_identity(self):
        noise = NoiseSpec.power_law(3)
        records = [
            simulate(EquationKind.LAGRANGIAN, SpectralField.zeros(3), noise, 1e-3, 5.0, ("energy", "cum_dissipation"),
                     every=5000, rng=RngState(30, s))
            for s in range(200)
        ]
        report = energy_identity_check(records, 0.0, noise, 5.0)
        assert report.size == 200
        assert report.passed

    def test_monte_carlo_corrector_matches_linear_closed_form(self):
        w = sin_field(3, (1, 0), 100.0) + cos_field(3, (0, 1), 60.0)
        est = corrector(w, 1.0, 32, noise=NoiseSpec.power_law(3), dt=1e-3, rng=RngState(31), options=LINEAR)
        exact = linear_corrector(w, 1.0)
        assert np.linalg.norm(est.value - exact) <= 0.05 * np.linalg.norm(exact)

    def test_nonlinear_drift_vanishes_and_rms_shrinks(self):
        noise = NoiseSpec.power_law(3)
        disps = []
        for s in range(96):
            rec = simulate(EquationKind.LAGRANGIAN, SpectralField.zeros(3), noise, 2.5e-3, 10.0, ("disp1", "disp2"),
                           every=2000, rng=RngState(32, s))
            disps.append(np.column_stack([rec.series("disp1"), rec.series("disp2")]))
        disps = np.array(disps)
        assert disps.shape == (96, 3, 2)
        rms = {}
        for j, T in ((1, 5.0), (2, 10.0)):
            drift = stokes_drift(paths_from_displacements(np.zeros((96, 2)), disps[:, j], T), T)
            assert np.all(np.abs(drift.value) <= 3 * drift.se)
            rms[T] = np.sqrt(np.mean(np.sum((disps[:, j] / T) ** 2, axis=1)))
        assert rms[10.0] < rms[5.0]
