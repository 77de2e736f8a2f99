import numpy as np
import pytest
from scipy import stats

from .errors import ArgumentError, DimensionError
from .noise import (
    NoiseSpec,
    OUPropagator,
    RngState,
    hs_norm,
    ou_mode_update,
    ou_noise_scale,
    sample_increment,
)
from .spectral import Convention, Wavevector, mode_set, translate


def low_unit_noise(n=2):
    ms = mode_set(n)
    return NoiseSpec(n, ms.low_mask(2).astype(float))


class TestRngState:
    def test_same_state_same_draws(self):
        a, b = RngState(42, 3, 7), RngState(42, 3, 7)
        assert np.array_equal(a.complex_normals(10), b.complex_normals(10))
        assert a.counter == b.counter == 8

    def test_counter_selects_block(self):
        rng = RngState(1)
        first = rng.complex_normals(4)
        second = rng.complex_normals(4)
        assert not np.array_equal(first, second)
        assert np.array_equal(RngState(1, counter=1).complex_normals(4), second)

    def test_streams_differ(self):
        assert not np.array_equal(RngState(1, 0).complex_normals(4), RngState(1, 1).complex_normals(4))

    def test_antithetic_conjugates(self):
        plain = RngState(5).complex_normals(6)
        mirrored = RngState(5).spawn(0, antithetic=True).complex_normals(6)
        assert np.array_equal(mirrored, np.conj(plain))

    def test_copy_is_independent(self):
        rng = RngState(9)
        clone = rng.copy()
        rng.complex_normals(3)
        assert clone.counter == 0

    def test_range_checked(self):
        with pytest.raises(ArgumentError):
            RngState(-1)
        with pytest.raises(ArgumentError):
            RngState(1 << 64)
        with pytest.raises(ArgumentError):
            RngState(0, algorithm="mt19937")

    def test_as_dict(self):
        d = RngState(3, 2, 1, True).as_dict()
        assert d == {"algorithm": "philox4x64", "seed": 3, "stream": 2, "counter": 1, "antithetic": True}


class TestNoiseSpec:
    def test_power_law(self):
        q = NoiseSpec.power_law(3)
        ms = mode_set(3)
        assert np.allclose(q.q, ms.norm2 ** -1.5)
        assert q.non_degenerate and not q.is_zero

    def test_overrides_fold_negative_modes(self):
        q = NoiseSpec.power_law(2, overrides={(-1, 0): 0.5, (0, 1): 0.0, (9, 9): 3.0})
        ms = mode_set(2)
        assert q.q[ms.index[(1, 0)]] == 0.5
        assert q.zero_modes() == [(0, 1)]
        assert not q.non_degenerate

    def test_zero(self):
        q = NoiseSpec.zero(3)
        assert q.is_zero and q.trace_q2 == 0.0 and q.nu0 == float("inf")

    def test_nu0(self):
        q = NoiseSpec.power_law(3, amplitude=2.0)
        assert q.nu0 == pytest.approx(1.0 / 8.0)

    def test_wrong_size(self):
        with pytest.raises(DimensionError):
            NoiseSpec(2, np.ones(3))

    def test_complex_rejected(self):
        with pytest.raises(ArgumentError):
            NoiseSpec(1, np.array([1.0 + 1j, 1.0, 1.0, 1.0]))

    def test_truncated(self):
        q = NoiseSpec.power_law(4)
        assert np.array_equal(q.truncated(2).q, NoiseSpec.power_law(2).q)
        table = NoiseSpec(2, np.arange(1, 13, dtype=float))
        assert np.array_equal(table.truncated(1).q, [1.0, 2.0, 3.0, 4.0])
        assert np.count_nonzero(table.truncated(3).q) == 12


class TestNorms:
    def test_hs_norm(self):
        q = low_unit_noise()
        assert hs_norm(q, 0) == pytest.approx(np.sqrt(8.0))
        assert hs_norm(q, 1) == pytest.approx(np.sqrt(12.0))
        assert hs_norm(NoiseSpec.zero(2), 1) == 0.0

    def test_trace(self):
        assert low_unit_noise().trace_q2 == pytest.approx(8.0)


class TestIncrements:
    def test_zero_noise(self):
        assert not np.any(sample_increment(NoiseSpec.zero(2), 0.1, RngState(0)).coeffs)

    def test_invalid_dt(self):
        with pytest.raises(ArgumentError):
            sample_increment(NoiseSpec.zero(2), 0.0, RngState(0))

    def test_deterministic(self):
        q = NoiseSpec.power_law(3)
        a = sample_increment(q, 0.01, RngState(7, counter=5))
        b = sample_increment(q, 0.01, RngState(7, counter=5))
        assert a.equals(b)

    def test_ito_isometry(self):
        q = low_unit_noise()
        dt = 0.01
        rng = RngState(123)
        values = np.array([sample_increment(q, dt, rng).norm() ** 2 / dt for _ in range(20000)])
        se = values.std(ddof=1) / np.sqrt(values.size)
        assert abs(values.mean() - q.trace_q2) <= 3 * se

    def test_translated_increments_have_the_same_law(self):
        q = NoiseSpec.power_law(2)
        plain_rng, moved_rng = RngState(31, 0), RngState(31, 1)
        plain = np.array([sample_increment(q, 0.01, plain_rng).coeffs for _ in range(2000)])
        moved = np.array([translate(sample_increment(q, 0.01, moved_rng), (0.3, 0.7)).coeffs for _ in range(2000)])
        pvalues = []
        for k in range(4):
            for part in (np.real, np.imag):
                pvalues.append(stats.ks_2samp(part(plain[:, k]), part(moved[:, k])).pvalue)
        assert min(pvalues) >= 1e-3
        assert not np.allclose(plain[:, 0], moved[:, 0])


class TestOU:
    def test_pure_decay(self):
        k = Wavevector(1, 1)
        out = ou_mode_update(2.0 + 1j, k, 0.0, 0.1, 5.0)
        assert out == pytest.approx((2.0 + 1j) * np.exp(-8 * np.pi ** 2 * 0.1))

    def test_large_step_limit(self):
        lam = 3.0
        assert ou_noise_scale(1.5, lam, 1e3) == pytest.approx(1.5 / np.sqrt(2 * lam))

    def test_stationary_variance(self):
        k = Wavevector(1, 0)
        q_k, dt = 0.8, 1.0
        rng = np.random.default_rng(0)
        g = (rng.standard_normal(100000) + 1j * rng.standard_normal(100000)) / np.sqrt(2)
        c, samples = 0j, []
        for i, gi in enumerate(g):
            c = ou_mode_update(c, k, q_k, dt, gi, Convention.UNIT)
            if i >= 100:
                samples.append(abs(c) ** 2)
        samples = np.array(samples)
        phi = np.exp(-2 * dt)
        se = samples.std() / np.sqrt(samples.size) * np.sqrt((1 + phi) / (1 - phi))
        assert abs(samples.mean() - q_k ** 2 / 2.0) <= 3 * se

    def test_refined_step_matches_half_steps(self):
        q = NoiseSpec.power_law(3)
        c0 = np.linspace(0.1, 1.0, mode_set(3).size) * (1 + 0.5j)
        zero = np.zeros_like(c0)
        coarse = OUPropagator(q, 1e-3, refine=2).advance(c0, zero, RngState(4))
        fine = OUPropagator(q, 5e-4)
        rng = RngState(4)
        c = fine.advance(fine.advance(c0, zero, rng), zero, rng)
        assert np.allclose(coarse, c, rtol=1e-13, atol=1e-16)

    def test_no_rng_means_no_noise(self):
        q = NoiseSpec.power_law(2)
        prop = OUPropagator(q, 0.01)
        c0 = np.ones(mode_set(2).size, dtype=complex)
        assert np.array_equal(prop.advance(c0, np.zeros_like(c0), None), prop.decay * c0)

    def test_invalid_arguments(self):
        q = NoiseSpec.zero(2)
        with pytest.raises(ArgumentError):
            OUPropagator(q, 0.0)
        with pytest.raises(ArgumentError):
            OUPropagator(q, 0.1, refine=0)
        with pytest.raises(ArgumentError):
            ou_mode_update(0j, Wavevector(1, 0), 1.0, -1.0, 0j)
