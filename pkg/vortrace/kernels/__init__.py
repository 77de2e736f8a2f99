"""Numerical kernels for products of truncated Fourier series."""

from .convolution import (
    BACKENDS,
    advective_product,
    advective_product_direct,
    advective_product_fft,
    padded_size,
)

__all__ = [
    "BACKENDS",
    "advective_product",
    "advective_product_direct",
    "advective_product_fft",
    "padded_size",
]
