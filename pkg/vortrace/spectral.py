# -*- coding: utf-8 -*-
"""
Mean-zero real scalar fields on the unit torus as truncated Fourier series.

A field w(x) = sum_k w_k exp(2 pi i k.x) is stored on the half lattice
(k2 > 0, or k2 == 0 and k1 > 0) inside the square cutoff
max(|k1|, |k2|) <= N; the other half follows from w_{-k} = conj(w_k), so
every stored field is real-valued and the k = 0 mode is absent.

Conventions used throughout the package:

- reported norms |w|_r use |k|^r (no 2 pi);
- the Laplacian acts as -lambda_k with lambda_k = 4 pi^2 |k|^2 by default
  ("physical"), or |k|^2 with the "unit" convention;
- Biot-Savart: u_k = (-i / (2 pi |k|^2)) k_perp w_k with k_perp = (k2, -k1),
  which makes rot(biot_savart(w)) == w;
- translate(w, x) is the field y -> w(y + x), i.e. w_k exp(+2 pi i k.x).
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .errors import ArgumentError, DimensionError
from .kernels import advective_product


TWO_PI = 2.0 * np.pi

# |K_i(w)|_{r+1} <= BIOT_SAVART_BOUND * |w|_r for either velocity component
BIOT_SAVART_BOUND = 1.0 / TWO_PI


class Convention(str, Enum):
    PHYSICAL = "physical"  # lambda_k = 4 pi^2 |k|^2
    UNIT = "unit"          # lambda_k = |k|^2


class Advection(str, Enum):
    B0 = "B0"  # K(h) . grad(w), product re-truncated to the cutoff
    B1 = "B1"  # K(h)(0) . grad(w), constant-coefficient transport


@dataclass(frozen=True)
class Wavevector:
    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 == 0 and self.k2 == 0:
            raise ArgumentError("the zero wavevector is not part of the mean-zero space")

    @property
    def perp(self) -> Tuple[int, int]:
        return (self.k2, -self.k1)

    @property
    def norm2(self) -> int:
        return self.k1 * self.k1 + self.k2 * self.k2

    @property
    def shell(self) -> int:
        return max(abs(self.k1), abs(self.k2))

    def in_half_lattice(self) -> bool:
        return self.k2 > 0 or (self.k2 == 0 and self.k1 > 0)

    def __neg__(self) -> "Wavevector":
        return Wavevector(-self.k1, -self.k2)


def _half_lattice(n: int):
    modes = []
    for shell in range(1, n + 1):
        ring = []
        for k2 in range(0, shell + 1):
            for k1 in range(-shell, shell + 1):
                if max(abs(k1), abs(k2)) != shell:
                    continue
                if k2 == 0 and k1 <= 0:
                    continue
                ring.append((k2, k1))
        modes.extend((k1, k2) for k2, k1 in sorted(ring))
    return modes


class ModeSet:
    """Half-lattice modes of one cutoff, ordered shell by shell.

    The ordering makes the modes of cutoff n a prefix of the modes of any
    larger cutoff, which is what lets noise draws be matched across cutoffs.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ArgumentError(f"cutoff must be >= 1, got {n}")
        self.cutoff = n
        pairs = _half_lattice(n)
        self.k1 = np.array([p[0] for p in pairs], dtype=np.int64)
        self.k2 = np.array([p[1] for p in pairs], dtype=np.int64)
        self.norm2 = (self.k1 ** 2 + self.k2 ** 2).astype(float)
        self.shell = np.maximum(np.abs(self.k1), np.abs(self.k2))
        self.index: Dict[Tuple[int, int], int] = {p: i for i, p in enumerate(pairs)}
        # positions of k and -k inside the (2N+1, 2N+1) full-lattice layout
        self.pos = (self.k1 + n, self.k2 + n)
        self.neg = (-self.k1 + n, -self.k2 + n)
        for arr in (self.k1, self.k2, self.norm2, self.shell):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.k1.size

    def eigenvalues(self, convention: Convention = Convention.PHYSICAL) -> np.ndarray:
        factor = 4.0 * np.pi ** 2 if Convention(convention) is Convention.PHYSICAL else 1.0
        return factor * self.norm2

    def low_mask(self, n0: int) -> np.ndarray:
        """Modes with Euclidean |k| < n0."""
        return self.norm2 < n0 * n0

    def wavevectors(self):
        return [Wavevector(int(a), int(b)) for a, b in zip(self.k1, self.k2)]


@lru_cache(maxsize=None)
def mode_set(n: int) -> ModeSet:
    return ModeSet(n)


@dataclass(frozen=True, eq=False)
class SpectralField:
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        ms = mode_set(self.cutoff)
        arr = np.array(self.coeffs, dtype=complex).reshape(-1)
        if arr.size != ms.size:
            raise DimensionError(
                f"cutoff {self.cutoff} needs {ms.size} half-lattice coefficients, got {arr.size}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    # --- construction ---

    @classmethod
    def zeros(cls, n: int) -> "SpectralField":
        return cls(n, np.zeros(mode_set(n).size, dtype=complex))

    @classmethod
    def from_modes(cls, n: int, modes: Dict[Tuple[int, int], complex]) -> "SpectralField":
        """Build from any lattice coefficients; entries at -k are folded by conjugation."""
        ms = mode_set(n)
        c = np.zeros(ms.size, dtype=complex)
        for (k1, k2), value in modes.items():
            k = Wavevector(int(k1), int(k2))
            if k.shell > n:
                raise DimensionError(f"mode {(k1, k2)} lies outside cutoff {n}")
            if k.in_half_lattice():
                c[ms.index[(k.k1, k.k2)]] = value
            else:
                c[ms.index[(-k.k1, -k.k2)]] = np.conj(value)
        return cls(n, c)

    @classmethod
    def from_full(cls, full: np.ndarray) -> "SpectralField":
        n = (full.shape[0] - 1) // 2
        return cls(n, full[mode_set(n).pos])

    @classmethod
    def from_grid(cls, values: np.ndarray, n: int) -> "SpectralField":
        """Project point values on an m x m grid (x_j = j / m) onto cutoff n."""
        m = values.shape[0]
        if m < 2 * n + 1:
            raise DimensionError(f"grid of size {m} cannot resolve cutoff {n}")
        ms = mode_set(n)
        coeffs = np.fft.fft2(values) / (m * m)
        return cls(n, coeffs[ms.k1 % m, ms.k2 % m])

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.cutoff, coeffs)

    # --- access ---

    @property
    def modes(self) -> ModeSet:
        return mode_set(self.cutoff)

    def coefficient(self, k1: int, k2: int) -> complex:
        k = Wavevector(k1, k2)
        if k.shell > self.cutoff:
            return 0j
        if k.in_half_lattice():
            return complex(self.coeffs[self.modes.index[(k1, k2)]])
        return complex(np.conj(self.coeffs[self.modes.index[(-k1, -k2)]]))

    def full(self) -> np.ndarray:
        """Coefficients on the full lattice, layout [k1 + N, k2 + N]."""
        n = self.cutoff
        ms = self.modes
        out = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
        out[ms.pos] = self.coeffs
        out[ms.neg] = np.conj(self.coeffs)
        return out

    def _grid_complex(self, m: Optional[int]) -> np.ndarray:
        n = self.cutoff
        m = 2 * n + 2 if m is None else m
        if m < 2 * n + 1:
            raise DimensionError(f"grid of size {m} cannot resolve cutoff {n}")
        idx = np.arange(-n, n + 1) % m
        grid = np.zeros((m, m), dtype=complex)
        grid[np.ix_(idx, idx)] = self.full()
        return np.fft.ifft2(grid) * (m * m)

    def to_grid(self, m: Optional[int] = None) -> np.ndarray:
        """Real point values w(j1/m, j2/m)."""
        return self._grid_complex(m).real

    def grid_imaginary_residual(self, m: Optional[int] = None) -> float:
        """max |Im w| / max |w| on the grid; zero for an exactly real field."""
        vals = self._grid_complex(m)
        scale = np.max(np.abs(vals))
        return 0.0 if scale == 0 else float(np.max(np.abs(vals.imag)) / scale)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def equals(self, other: "SpectralField") -> bool:
        """Bit-exact equality."""
        return self.cutoff == other.cutoff and self.coeffs.tobytes() == other.coeffs.tobytes()

    # --- arithmetic ---

    def _check(self, other: "SpectralField"):
        if other.cutoff != self.cutoff:
            raise DimensionError(f"cutoff mismatch: {self.cutoff} vs {other.cutoff}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def inner(self, other: "SpectralField") -> float:
        """L2 inner product over the torus (full lattice)."""
        self._check(other)
        return float(2.0 * np.real(np.vdot(other.coeffs, self.coeffs)))

    def norm(self) -> float:
        return hr_norm(self, 0.0)


@dataclass(frozen=True, eq=False)
class VelocityField:
    u1: SpectralField
    u2: SpectralField

    def __post_init__(self):
        if self.u1.cutoff != self.u2.cutoff:
            raise DimensionError("velocity components must share a cutoff")

    @property
    def cutoff(self) -> int:
        return self.u1.cutoff

    def divergence_residual(self) -> float:
        """max_k |k1 u1_k + k2 u2_k| relative to the largest component coefficient."""
        ms = self.u1.modes
        div = ms.k1 * self.u1.coeffs + ms.k2 * self.u2.coeffs
        scale = max(np.max(np.abs(self.u1.coeffs), initial=0.0), np.max(np.abs(self.u2.coeffs), initial=0.0))
        return 0.0 if scale == 0 else float(np.max(np.abs(div)) / scale)


def hr_norm(w: SpectralField, r: float) -> float:
    """|w|_r = sqrt(sum over the full lattice of |k|^{2r} |w_k|^2)."""
    weights = w.modes.norm2 ** r
    return float(np.sqrt(2.0 * np.sum(weights * np.abs(w.coeffs) ** 2)))


def _biot_savart_factor(ms: ModeSet) -> np.ndarray:
    return -1j / (TWO_PI * ms.norm2)


def biot_savart(w: SpectralField) -> VelocityField:
    ms = w.modes
    f = _biot_savart_factor(ms) * w.coeffs
    return VelocityField(w.with_coeffs(f * ms.k2), w.with_coeffs(-f * ms.k1))


def rot(v: VelocityField) -> SpectralField:
    ms = v.u1.modes
    return v.u1.with_coeffs(1j * TWO_PI * (ms.k2 * v.u1.coeffs - ms.k1 * v.u2.coeffs))


def _phases(ms: ModeSet, x: np.ndarray) -> np.ndarray:
    return np.exp(1j * TWO_PI * (np.multiply.outer(x[..., 0], ms.k1) + np.multiply.outer(x[..., 1], ms.k2)))


def psi_star_weights(n: int) -> np.ndarray:
    """Per-mode vectors a_k with K(w)(0) = 2 Re sum_half a_k w_k; shape (2, modes)."""
    ms = mode_set(n)
    f = _biot_savart_factor(ms)
    return np.vstack([f * ms.k2, -f * ms.k1])


def psi_star_bound(n: int) -> float:
    """c(n) with |K(w)(0)| <= c(n) |w|_1 for every w of cutoff n."""
    ms = mode_set(n)
    return float(np.sqrt(2.0 * np.sum(ms.norm2 ** -2.0)) / TWO_PI)


def eval_velocity(w: SpectralField, x) -> np.ndarray:
    """Velocity K(w) at a point (shape (2,)) or at an (m, 2) array of points."""
    x = np.asarray(x, dtype=float)
    weights = psi_star_weights(w.cutoff) * w.coeffs
    if x.ndim == 1:
        phase = _phases(w.modes, x[None, :])[0]
        return 2.0 * np.real(weights @ phase)
    phase = _phases(w.modes, x)
    return 2.0 * np.real(phase @ weights.T)


def translate(w: SpectralField, x) -> SpectralField:
    x = np.asarray(x, dtype=float)
    return w.with_coeffs(w.coeffs * _phases(w.modes, x[None, :])[0])


def reflect(w: SpectralField) -> SpectralField:
    """The field x -> w(-x)."""
    return w.with_coeffs(np.conj(w.coeffs))


def heat_semigroup(w: SpectralField, t: float, convention: Convention = Convention.PHYSICAL) -> SpectralField:
    if t < 0:
        raise ArgumentError(f"heat semigroup needs t >= 0, got {t}")
    return w.with_coeffs(w.coeffs * np.exp(-w.modes.eigenvalues(convention) * t))


def truncate(w: SpectralField, n: int) -> SpectralField:
    """Project onto cutoff n (n < cutoff) or zero-extend (n > cutoff)."""
    if n == w.cutoff:
        return w
    target = mode_set(n)
    if n < w.cutoff:
        return SpectralField(n, w.coeffs[: target.size])
    c = np.zeros(target.size, dtype=complex)
    c[: w.coeffs.size] = w.coeffs
    return SpectralField(n, c)


def bilinear_b(
    h: SpectralField,
    w: SpectralField,
    kind: Advection = Advection.B0,
    cutoff: Optional[int] = None,
    backend: str = "fft",
) -> SpectralField:
    """B0(h, w) = Pi_N (K(h) . grad w);  B1(h, w) = K(h)(0) . grad w."""
    if h.cutoff != w.cutoff or (cutoff is not None and cutoff != w.cutoff):
        raise DimensionError(f"cutoff mismatch: h={h.cutoff}, w={w.cutoff}, N={cutoff}")
    ms = w.modes
    if Advection(kind) is Advection.B1:
        v = eval_velocity(h, (0.0, 0.0))
        return w.with_coeffs(1j * TWO_PI * (v[0] * ms.k1 + v[1] * ms.k2) * w.coeffs)

    u = biot_savart(h)
    grad1 = w.with_coeffs(1j * TWO_PI * ms.k1 * w.coeffs)
    grad2 = w.with_coeffs(1j * TWO_PI * ms.k2 * w.coeffs)
    prod = advective_product(u.u1.full(), u.u2.full(), grad1.full(), grad2.full(), backend)
    return SpectralField.from_full(prod)


def cos_field(n: int, k: Tuple[int, int], amplitude: float = 1.0) -> SpectralField:
    """amplitude * cos(2 pi k.x)"""
    return SpectralField.from_modes(n, {k: amplitude / 2.0})


def sin_field(n: int, k: Tuple[int, int], amplitude: float = 1.0) -> SpectralField:
    """amplitude * sin(2 pi k.x)"""
    return SpectralField.from_modes(n, {k: -0.5j * amplitude})


def random_field(n: int, rng: np.random.Generator, slope: float = 2.0, norm: float = 1.0) -> SpectralField:
    """Random smooth field with |w_k| ~ |k|^-slope, rescaled to |w| = norm."""
    ms = mode_set(n)
    c = (rng.standard_normal(ms.size) + 1j * rng.standard_normal(ms.size)) * ms.norm2 ** (-slope / 2.0)
    w = SpectralField(n, c)
    return w * (norm / w.norm()) if norm is not None else w


def field_from_terms(n: int, terms: Iterable[Tuple[str, Tuple[int, int], float]]) -> SpectralField:
    """Sum of ("cos" | "sin", k, amplitude) terms."""
    out = SpectralField.zeros(n)
    for kind, k, amp in terms:
        if kind == "cos":
            out = out + cos_field(n, k, amp)
        elif kind == "sin":
            out = out + sin_field(n, k, amp)
        else:
            raise ArgumentError(f"Unknown analytic term: {kind}")
    return out
