"""Discrete Fourier transforms along the last axis.

Forward transform is unnormalized, the inverse is scaled by ``1/n``, which is
the same convention as :func:`numpy.fft.fft`. Power-of-two lengths go through
an iterative radix-2 Cooley-Tukey kernel; every other length is mapped onto a
power-of-two circular convolution with Bluestein's chirp-z identity.
"""

from functools import lru_cache

import numpy as np


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=64)
def _radix2_plan(n: int):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    twiddles = []
    half = 1
    while half < n:
        twiddles.append(np.exp(-1j * np.pi * np.arange(half) / half))
        half *= 2
    return rev, twiddles


def _radix2(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[-1]
    rev, twiddles = _radix2_plan(n)
    batch = x.shape[:-1]
    y = x[..., rev].reshape(-1, n)
    m = y.shape[0]
    half = 1
    for w in twiddles:
        if inverse:
            w = w.conj()
        blocks = y.reshape(m, n // (2 * half), 2, half)
        even = blocks[:, :, 0, :]
        odd = blocks[:, :, 1, :] * w
        y = np.concatenate((even + odd, even - odd), axis=-1).reshape(m, n)
        half *= 2
    return y.reshape(*batch, n)


@lru_cache(maxsize=64)
def _bluestein_plan(n: int):
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase exact for large k
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    kernel = np.zeros(m, dtype=complex)
    kernel[:n] = chirp.conj()
    kernel[m - n + 1:] = chirp[1:][::-1].conj()
    return m, chirp, _radix2(kernel, inverse=False)


def _bluestein(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[-1]
    m, chirp, kernel_hat = _bluestein_plan(n)
    if inverse:
        # conj(DFT(conj(x))) is the unnormalized inverse
        return _bluestein(x.conj(), inverse=False).conj()
    a = np.zeros(x.shape[:-1] + (m,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _radix2(_radix2(a, False) * kernel_hat, True) / m
    return conv[..., :n] * chirp


def _transform(x, inverse: bool) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0:
        raise ValueError("expected at least a 1-d array")
    n = x.shape[-1]
    if n == 0:
        raise ValueError("cannot transform an empty vector")
    if n == 1:
        return x.copy()
    if _is_pow2(n):
        return _radix2(x, inverse)
    return _bluestein(x, inverse)


def dft(x) -> np.ndarray:
    """Unnormalized forward DFT over the last axis."""
    return _transform(x, inverse=False)


def idft(x) -> np.ndarray:
    """Inverse DFT over the last axis, scaled by ``1/n``."""
    x = np.asarray(x, dtype=complex)
    return _transform(x, inverse=True) / x.shape[-1]


def naive_dft(x) -> np.ndarray:
    """O(n^2) reference transform, kept for cross-checking the fast paths."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    k = np.arange(n)
    F = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ F.T
