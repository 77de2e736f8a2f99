# -*- coding: utf-8 -*-
"""
Diagonal covariance Q, homogeneous Wiener increments and exact per-mode
stochastic convolution factors.

Each half-lattice mode k carries an independent complex Brownian motion
B_k (real and imaginary parts of variance t/2), with B_{-k} = conj(B_k), so
the noise field is real, spatially homogeneous and Q has a trivial null
space whenever every q_k is nonzero.

Random numbers come from Philox, a counter-based generator: the draw for a
given (seed, stream, counter) is fixed, independent of what was drawn
before, which keeps ensembles reproducible under any scheduling and lets a
snapshot resume a trajectory bit-exactly.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ArgumentError, DimensionError
from .spectral import Convention, SpectralField, Wavevector, mode_set


ALGORITHM = "philox4x64"
_U64 = (1 << 64) - 1


@dataclass
class RngState:
    """Philox key (seed, stream) plus the index of the next draw block.

    Single owner: one state per trajectory, advanced in place by each draw.
    """

    seed: int
    stream: int = 0
    counter: int = 0
    antithetic: bool = False
    algorithm: str = ALGORITHM

    def __post_init__(self):
        if self.algorithm != ALGORITHM:
            raise ArgumentError(f"Unknown RNG algorithm: {self.algorithm}")
        for name in ("seed", "stream", "counter"):
            value = int(getattr(self, name))
            if not 0 <= value <= _U64:
                raise ArgumentError(f"RNG {name} must fit in 64 unsigned bits, got {value}")
            setattr(self, name, value)

    def generator(self, counter: Optional[int] = None) -> np.random.Generator:
        block = self.counter if counter is None else counter
        bitgen = np.random.Philox(
            key=np.array([self.seed, self.stream], dtype=np.uint64),
            counter=np.array([0, block, 0, 0], dtype=np.uint64),
        )
        return np.random.Generator(bitgen)

    def complex_normals(self, m: int) -> np.ndarray:
        """m complex standard Gaussians (E|g|^2 = 1) from the current block; advances the counter."""
        z = self.generator().standard_normal((m, 2))
        self.counter += 1
        g = (z[:, 0] + 1j * z[:, 1]) / np.sqrt(2.0)
        return np.conj(g) if self.antithetic else g

    def copy(self) -> "RngState":
        return replace(self)

    def spawn(self, stream: int, antithetic: bool = False) -> "RngState":
        return RngState(self.seed, stream, 0, antithetic)

    def as_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "stream": self.stream,
            "counter": self.counter,
            "antithetic": self.antithetic,
        }


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    cutoff: int
    q: np.ndarray
    form: str = "table"
    amplitude: float = 0.0
    exponent: float = 0.0
    overrides: Tuple[Tuple[Tuple[int, int], float], ...] = field(default=())

    def __post_init__(self):
        ms = mode_set(self.cutoff)
        q = np.asarray(self.q)
        if np.iscomplexobj(q):
            if np.any(q.imag != 0):
                raise ArgumentError("noise coefficients q_k must be real")
            q = q.real
        q = np.array(q, dtype=float).reshape(-1)
        if q.size != ms.size:
            raise DimensionError(f"cutoff {self.cutoff} needs {ms.size} noise coefficients, got {q.size}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def power_law(
        cls,
        n: int,
        amplitude: float = 1.0,
        exponent: float = 3.0,
        overrides: Optional[Dict[Tuple[int, int], float]] = None,
    ) -> "NoiseSpec":
        """q_k = amplitude * |k|^-exponent, with per-mode overrides."""
        ms = mode_set(n)
        q = amplitude * ms.norm2 ** (-exponent / 2.0)
        folded = []
        for (k1, k2), value in (overrides or {}).items():
            k = Wavevector(int(k1), int(k2))
            if k.shell > n:
                continue
            if not k.in_half_lattice():
                k = -k
            q[ms.index[(k.k1, k.k2)]] = float(value)
            folded.append(((k.k1, k.k2), float(value)))
        return cls(n, q, "power_law", float(amplitude), float(exponent), tuple(sorted(folded)))

    @classmethod
    def zero(cls, n: int) -> "NoiseSpec":
        return cls(n, np.zeros(mode_set(n).size), "zero")

    @property
    def trace_q2(self) -> float:
        """tr Q^2 = sum over the full truncated lattice of q_k^2."""
        return float(2.0 * np.sum(self.q ** 2))

    @property
    def operator_norm(self) -> float:
        return float(np.max(np.abs(self.q), initial=0.0))

    @property
    def nu0(self) -> float:
        """Largest exponential-moment parameter covered by the moment bounds: 1 / (4 |Q|)."""
        norm = self.operator_norm
        return float("inf") if norm == 0 else 1.0 / (4.0 * norm)

    @property
    def non_degenerate(self) -> bool:
        return bool(np.all(self.q != 0))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.q)

    def zero_modes(self, mask: Optional[np.ndarray] = None):
        ms = mode_set(self.cutoff)
        hit = self.q == 0 if mask is None else (self.q == 0) & mask
        return [(int(a), int(b)) for a, b in zip(ms.k1[hit], ms.k2[hit])]

    def truncated(self, n: int) -> "NoiseSpec":
        """Q^(n) = Pi_n Q on a smaller cutoff, or the same law extended to a larger one."""
        if n == self.cutoff:
            return self
        if self.form == "power_law":
            return NoiseSpec.power_law(n, self.amplitude, self.exponent, dict(self.overrides))
        if n < self.cutoff:
            return NoiseSpec(n, self.q[: mode_set(n).size], self.form)
        q = np.zeros(mode_set(n).size)
        q[: self.q.size] = self.q
        return NoiseSpec(n, q, self.form)

    def describe(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "form": self.form,
            "amplitude": self.amplitude,
            "exponent": self.exponent,
            "overrides": [[list(k), v] for k, v in self.overrides],
            "trace_q2": self.trace_q2,
            "non_degenerate": self.non_degenerate,
        }


def hs_norm(q: NoiseSpec, r: float) -> float:
    """Hilbert-Schmidt norm of Q from H into H^r."""
    weights = mode_set(q.cutoff).norm2 ** r
    return float(np.sqrt(2.0 * np.sum(weights * q.q ** 2)))


def sample_increment(q: NoiseSpec, dt: float, rng: RngState) -> SpectralField:
    """Q (W(t + dt) - W(t)); E|result|^2 = dt * tr Q^2."""
    if dt <= 0:
        raise ArgumentError(f"increment needs dt > 0, got {dt}")
    g = rng.complex_normals(q.q.size)
    return SpectralField(q.cutoff, q.q * np.sqrt(dt) * g)


def ou_noise_scale(q, lam, dt):
    """Standard deviation of int_0^dt exp(-lam (dt - s)) q dB(s)."""
    return q * np.sqrt(-np.expm1(-2.0 * lam * dt) / (2.0 * lam))


def ou_mode_update(c: complex, k: Wavevector, q_k: float, dt: float, g: complex,
                   convention: Convention = Convention.PHYSICAL) -> complex:
    """One exact step of dc = -lambda_k c dt + q_k dB_k."""
    if dt <= 0:
        raise ArgumentError(f"OU update needs dt > 0, got {dt}")
    factor = 4.0 * np.pi ** 2 if Convention(convention) is Convention.PHYSICAL else 1.0
    lam = factor * k.norm2
    return complex(np.exp(-lam * dt) * c + ou_noise_scale(q_k, lam, dt) * g)


class OUPropagator:
    """Per-mode decay and stochastic-convolution factors for a fixed step.

    With refine > 1 the noise of one step is assembled from `refine` exact
    sub-step integrals drawn at consecutive counters, so a run at dt with
    refine=2 sees the same Brownian path as a run at dt/2.
    """

    def __init__(self, noise: NoiseSpec, dt: float, convention: Convention = Convention.PHYSICAL,
                 refine: int = 1):
        if dt <= 0:
            raise ArgumentError(f"step needs dt > 0, got {dt}")
        if refine < 1:
            raise ArgumentError(f"refine must be >= 1, got {refine}")
        self.noise = noise
        self.dt = float(dt)
        self.refine = int(refine)
        self.convention = Convention(convention)
        self.lam = mode_set(noise.cutoff).eigenvalues(self.convention)
        self.decay = np.exp(-self.lam * self.dt)
        sub = self.dt / self.refine
        self.sub_scale = ou_noise_scale(noise.q, self.lam, sub)
        self.sub_decay = np.exp(-self.lam * sub)

    def noise_term(self, rng: RngState) -> np.ndarray:
        total = np.zeros(self.lam.size, dtype=complex)
        for _ in range(self.refine):
            total = self.sub_decay * total + self.sub_scale * rng.complex_normals(self.lam.size)
        return total

    def advance(self, c: np.ndarray, drift: np.ndarray, rng: Optional[RngState]) -> np.ndarray:
        """exp(-lambda dt) (c + dt drift) + stochastic convolution; rng=None means no noise."""
        out = self.decay * (c + self.dt * drift)
        if rng is not None:
            out = out + self.noise_term(rng)
        return out
