import numpy as np
import pytest

from .dynamics import EquationKind, PathRecord, SolverOptions, simulate
from .errors import ArgumentError
from .noise import NoiseSpec, RngState, ou_noise_scale
from .spectral import (
    Convention,
    SpectralField,
    cos_field,
    field_from_terms,
    hr_norm,
    mode_set,
    psi_star_bound,
    random_field,
    reflect,
    sin_field,
    truncate,
)
from .tracer import (
    TracerPath,
    advance_tracer,
    eulerian_to_lagrangian,
    lagrangian_to_trajectory,
    mild_form_residual,
    psi_star,
    round_trip_check,
    round_trip_error,
    run_eulerian_tracer,
    wrap,
)


def constant_psi_record(times, psi):
    n = len(times)
    obs = {"psi1": np.full(n, psi[0]), "psi2": np.full(n, psi[1])}
    return PathRecord(EquationKind.LAGRANGIAN, 2, times[1] - times[0], np.asarray(times), obs, [], None, {})


def smooth_low_field(n=3):
    return field_from_terms(n, [("sin", (1, 0), 1.0), ("cos", (0, 1), 0.8), ("cos", (1, 1), 0.5)])


class TestPointObservable:
    def test_examples(self):
        assert np.array_equal(psi_star(SpectralField.zeros(3)), [0.0, 0.0])
        assert np.allclose(psi_star(sin_field(3, (1, 0), 2.0)), [0.0, 1 / np.pi])

    def test_truncation_continuity(self):
        w = random_field(8, np.random.default_rng(0), slope=3.0)
        c = psi_star_bound(8)
        for n in (1, 2, 4, 7):
            tail = w - truncate(truncate(w, n), 8)
            gap = np.linalg.norm(psi_star(truncate(w, n)) - psi_star(w))
            assert gap <= c * hr_norm(tail, 1.0) * (1 + 1e-12)

    def test_wrap(self):
        assert np.allclose(wrap([0.75, -0.6]), [-0.25, 0.4])


class TestAdvance:
    def test_zero_field(self):
        z = SpectralField.zeros(3)
        assert np.array_equal(advance_tracer([0.2, 0.3], z, z, 1e-3), [0.2, 0.3])

    def test_reflection_negates_step(self):
        rng = np.random.default_rng(3)
        a, b = random_field(4, rng), random_field(4, rng)
        x = np.array([0.37, -0.12])
        forward = advance_tracer(x, a, b, 1e-2)
        mirrored = advance_tracer(-x, reflect(a), reflect(b), 1e-2)
        assert np.allclose(mirrored, -forward, atol=1e-15)

    def test_lift_is_not_wrapped(self):
        w = sin_field(2, (1, 0), 2.0)
        x = np.array([0.0, 0.49])
        for _ in range(20):
            x = advance_tracer(x, w, w, 0.1)
        assert x[1] > 0.5

    def test_invalid_dt(self):
        z = SpectralField.zeros(2)
        with pytest.raises(ArgumentError):
            advance_tracer([0, 0], z, z, 0.0)


class TestReconstruction:
    def test_zero_path(self):
        path = lagrangian_to_trajectory(constant_psi_record([0.0, 0.1, 0.2], (0.0, 0.0)), (0.1, 0.2))
        assert np.allclose(path.lift, [[0.1, 0.2]] * 3)

    def test_frozen_field(self):
        times = np.linspace(0.0, 1.0, 11)
        path = lagrangian_to_trajectory(constant_psi_record(times, (0.0, 1 / np.pi)), (0.25, 0.0))
        assert np.allclose(path.lift[:, 0], 0.25)
        assert np.allclose(path.lift[:, 1], times / np.pi)

    def test_missing_psi(self):
        rec = simulate(EquationKind.LAGRANGIAN, SpectralField.zeros(2), NoiseSpec.zero(2), 1e-3, 0.002, ("energy",))
        with pytest.raises(ArgumentError):
            lagrangian_to_trajectory(rec, (0, 0))

    def test_displacement_and_reflection(self):
        path = lagrangian_to_trajectory(constant_psi_record([0.0, 1.0], (1.0, 1.0)), (0.0, 0.0))
        assert path.displacement().tolist() == [1.0, 1.0]
        assert path.reflected().final.tolist() == [-1.0, -1.0]

    def test_path_length_mismatch(self):
        with pytest.raises(ArgumentError):
            TracerPath((0, 0), [0.0, 1.0], [[0, 0]])


class TestEulerianToLagrangian:
    def test_tracer_at_rest(self):
        # 2cos(2 pi x1) has no velocity at the origin and stays a single mode
        w0 = cos_field(3, (1, 0), 2.0)
        run = run_eulerian_tracer(w0, NoiseSpec.zero(3), 1e-3, 0.01)
        assert np.allclose(run.tracer.lift, 0.0)
        lag = eulerian_to_lagrangian(run.record, run.tracer)
        assert lag.kind is EquationKind.LAGRANGIAN
        assert all(np.allclose(a.coeffs, b.coeffs) for a, b in zip(lag.fields, run.record.fields))

    def test_translation_example(self):
        w0 = cos_field(3, (1, 0), 2.0)
        run = run_eulerian_tracer(w0, NoiseSpec.zero(3), 1e-3, 0.0, x0=(0.5, 0.0))
        lag = eulerian_to_lagrangian(run.record, run.tracer)
        assert np.allclose(lag.fields[0].coeffs, (-w0).coeffs, atol=1e-15)

    def test_misaligned_times(self):
        run = run_eulerian_tracer(smooth_low_field(), NoiseSpec.zero(3), 1e-3, 0.004, every=2)
        shifted = TracerPath(run.tracer.x0, run.tracer.times + 1e-3, run.tracer.lift)
        with pytest.raises(ArgumentError):
            eulerian_to_lagrangian(run.record, shifted)


class TestEulerianTracerRun:
    def test_deterministic(self):
        q = NoiseSpec.power_law(3)
        a = run_eulerian_tracer(smooth_low_field(), q, 1e-3, 0.05, (0.1, 0.1), rng=RngState(2))
        b = run_eulerian_tracer(smooth_low_field(), q, 1e-3, 0.05, (0.1, 0.1), rng=RngState(2))
        assert np.array_equal(a.tracer.lift, b.tracer.lift)
        assert a.record.rows() == b.record.rows()

    def test_rough_start_holds_first_step(self):
        run = run_eulerian_tracer(smooth_low_field(), NoiseSpec.zero(3), 1e-3, 0.002, (0.1, 0.1), rough_start=True)
        assert np.array_equal(run.tracer.lift[1], [0.1, 0.1])
        assert not np.array_equal(run.tracer.lift[2], [0.1, 0.1])

    def test_invalid_horizon(self):
        with pytest.raises(ArgumentError):
            run_eulerian_tracer(smooth_low_field(), NoiseSpec.zero(3), 1e-3, 0.0025)


class TestRoundTrip:
    def test_noise_free_second_order(self):
        report = round_trip_check(smooth_low_field(), NoiseSpec.zero(3), 5e-4, 0.5, (0.1, 0.2))
        assert report.errors[0] > 0
        assert 3.5 <= report.ratio <= 4.5

    def test_stochastic_run_is_small(self):
        run = run_eulerian_tracer(smooth_low_field(), NoiseSpec.power_law(3), 1e-3, 0.5, (0.1, 0.2),
                                  rng=RngState(11))
        assert round_trip_error(run) <= 1e-4

    @pytest.mark.slow
    def test_acceptance_scale(self):
        report = round_trip_check(smooth_low_field(4), NoiseSpec.power_law(4), 1e-3, 10.0, (0.0, 0.0),
                                  rng=RngState(5))
        assert report.errors[0] <= 1e-4
        assert 3.5 <= report.ratio <= 4.5


class TestMildForm:
    def test_noise_free_path_satisfies_scheme(self):
        rec = simulate(EquationKind.LAGRANGIAN, smooth_low_field(), NoiseSpec.zero(3), 1e-3, 0.01, (),
                       keep_fields=True)
        assert np.max(mild_form_residual(rec)) <= 1e-13

    def test_noisy_residual_is_the_stochastic_convolution(self):
        noise = NoiseSpec.power_law(3)
        rec = simulate(EquationKind.LAGRANGIAN, smooth_low_field(), noise, 1e-3, 2.0, (), rng=RngState(8),
                       keep_fields=True)
        r2 = mild_form_residual(rec) ** 2
        lam = mode_set(3).eigenvalues(Convention.PHYSICAL)
        expected = 2.0 * np.sum(ou_noise_scale(noise.q, lam, 1e-3) ** 2)
        se = r2.std(ddof=1) / np.sqrt(r2.size)
        assert r2.size == 2000
        assert abs(r2.mean() - expected) <= 4.0 * se

    def test_needs_every_step(self):
        rec = simulate(EquationKind.LAGRANGIAN, smooth_low_field(), NoiseSpec.zero(3), 1e-3, 0.01, (),
                       keep_fields=True, every=2)
        with pytest.raises(ArgumentError):
            mild_form_residual(rec, SolverOptions())
