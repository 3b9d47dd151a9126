"""Chirp-z scaled resampling of uniformly gridded data (exact for band-limited input)."""

from __future__ import annotations

import numpy as np
from scipy.signal import czt


def czt_scaled_resample(f: np.ndarray, c: float, x0: float, d: float, axis=-1):
    """Evaluate the trigonometric interpolant of f at the scaled nodes c*x_j.

    f samples live on x_m = x0 + m*d, m = 0..N-1; the returned array holds the
    interpolant at c*x_j on the same index set.  Complex output; take .real for
    real input (the unpaired Nyquist mode leaves a tiny imaginary residue).
    """
    if c == 1.0:
        return np.asarray(f, dtype=complex)
    N = f.shape[axis]
    dk = 2.0 * np.pi / (N * d)
    msh = np.arange(N) - N // 2
    alpha = dk * x0 * (c - 1.0)
    beta = c * dk * d
    shape = [1] * f.ndim
    shape[axis] = N
    Fh = np.fft.fftshift(np.fft.fft(f, axis=axis), axes=axis) / N
    y = Fh * np.exp(1j * alpha * msh).reshape(shape)
    out = czt(y, m=N, w=np.exp(1j * beta), a=1.0 + 0.0j, axis=axis)
    return out * np.exp(-1j * beta * (N // 2) * np.arange(N)).reshape(shape)
