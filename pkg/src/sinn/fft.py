"""Iterative radix-2 complex FFT over the last axis."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError


def next_pow_two(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x) -> np.ndarray:
    """Decimation-in-time FFT along the last axis; length must be a power of two."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1]
    if n < 1 or n & (n - 1):
        raise ParameterError(f"radix-2 FFT needs a power-of-two length, got {n}")
    a = a[..., _bit_reverse_indices(n)]
    lead = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    return a


def ifft(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(a))) / a.shape[-1]
