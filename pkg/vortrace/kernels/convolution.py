# convolution.py
"""
Galerkin-exact quadratic products on the square lattice |k|_inf <= N.

Coefficient arrays use the full-lattice layout ``a[k1 + N, k2 + N]`` for
-N <= k1, k2 <= N. A product of two such series has modes up to 2N; both
backends return it re-truncated to |k|_inf <= N with no aliasing.
"""

import numpy as np
from scipy.signal import convolve2d


BACKENDS = ("fft", "direct")


def padded_size(n: int, factor: int = 2) -> int:
    """Grid size for the alias-free transform of a product of two cutoff-n series.

    Aliasing of a product mode p (|p|_inf <= 2n) onto a kept mode k needs
    M <= 3n, so any M >= 3n + 1 is exact; the padding factor is applied to
    the (2n + 1)-point base grid on top of that.
    """
    if factor < 2:
        raise ValueError("padding factor must be >= 2")
    m = max(factor * (2 * n + 1), 3 * n + 1)
    return m + (m % 2)


def _cutoff_of(a: np.ndarray) -> int:
    side = a.shape[-1]
    if a.shape[-2] != side or side % 2 != 1:
        raise ValueError(f"expected a (2N+1, 2N+1) coefficient array, got {a.shape}")
    return (side - 1) // 2


def advective_product_direct(u1, u2, g1, g2) -> np.ndarray:
    """Reference backend: u1*g1 + u2*g2 by explicit 2-D convolution of coefficients."""
    n = _cutoff_of(u1)
    full = convolve2d(u1, g1, mode="full") + convolve2d(u2, g2, mode="full")
    return full[n:3 * n + 1, n:3 * n + 1]


def _to_grid(a: np.ndarray, idx: np.ndarray, m: int) -> np.ndarray:
    grid = np.zeros((m, m), dtype=complex)
    grid[np.ix_(idx, idx)] = a
    # numpy's ifft2 carries 1/M^2; point values need the bare sum
    return np.fft.ifft2(grid).real * (m * m)


def advective_product_fft(u1, u2, g1, g2, factor: int = 2) -> np.ndarray:
    """Zero-padded transform backend: products formed on an M x M physical grid."""
    n = _cutoff_of(u1)
    m = padded_size(n, factor)
    idx = np.arange(-n, n + 1) % m
    prod = _to_grid(u1, idx, m) * _to_grid(g1, idx, m) + _to_grid(u2, idx, m) * _to_grid(g2, idx, m)
    coeffs = np.fft.fft2(prod) / (m * m)
    return coeffs[np.ix_(idx, idx)]


def advective_product(u1, u2, g1, g2, backend: str = "fft") -> np.ndarray:
    if backend == "fft":
        return advective_product_fft(u1, u2, g1, g2)
    if backend == "direct":
        return advective_product_direct(u1, u2, g1, g2)
    raise ValueError(f"Unknown product backend: {backend}")
