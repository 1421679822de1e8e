"""Inverse Helmholtz operators (1 - d_xx)^{-1} and (4 - d_xx)^{-1}.

Both are diagonal in Fourier space with multiplier 1/(a + k^2).  On the
real line they are convolutions with the Green kernels
G_1(x) = exp(-|x|)/2 and G_4(x) = exp(-2|x|)/4; the periodic solve below
is the periodized version of those convolutions.
"""
from __future__ import annotations

import enum

import numpy as np

from .grid import GridFunction


class HelmholtzKind(enum.IntEnum):
    ONE = 1
    FOUR = 4

    @property
    def shift(self) -> int:
        return int(self)


def _kind(kind) -> HelmholtzKind:
    try:
        return HelmholtzKind(kind)
    except ValueError:
        raise ValueError(f"Helmholtz shift must be 1 or 4, got {kind!r}") from None


def green_kernel(kind, x):
    """Free-space kernel of (a - d_xx)^{-1}: exp(-sqrt(a)|x|) / (2 sqrt(a))."""
    s = np.sqrt(float(_kind(kind)))
    return np.exp(-s * np.abs(x)) / (2.0 * s)


def inv_helmholtz(kind, f: GridFunction) -> GridFunction:
    a = _kind(kind).shift
    grid = f.grid
    k = grid.wavenumbers
    fh = np.fft.rfft(f.values) / (a + k**2)
    return GridFunction(grid, np.fft.irfft(fh, grid.n_points))


def inv_helmholtz_dx(kind, f: GridFunction) -> GridFunction:
    """(a - d_xx)^{-1} d_x f with the bounded multiplier ik/(a + k^2)."""
    a = _kind(kind).shift
    grid = f.grid
    k = grid.wavenumbers
    fh = np.fft.rfft(f.values) * (1j * k / (a + k**2))
    fh[-1] = 0.0
    return GridFunction(grid, np.fft.irfft(fh, grid.n_points))


def apply_helmholtz(kind, f: GridFunction) -> GridFunction:
    """Forward operator (a - d_xx) f, spectrally."""
    a = _kind(kind).shift
    grid = f.grid
    k = grid.wavenumbers
    fh = np.fft.rfft(f.values) * (a + k**2)
    return GridFunction(grid, np.fft.irfft(fh, grid.n_points))


def resolvent_identity_residual(f: GridFunction) -> float:
    """Max-norm defect of (1-d²)^{-1}(4-d²)^{-1} = [(1-d²)^{-1} - (4-d²)^{-1}]/3."""
    both = inv_helmholtz(1, inv_helmholtz(4, f))
    split = (inv_helmholtz(1, f) - inv_helmholtz(4, f)) / 3.0
    return float(np.max(np.abs((both - split).values)))
