"""Uniform periodic grid on [-L, L) and the sampled-function toolkit.

Every other module works on :class:`GridFunction` samples.  Quadrature is
the periodic rectangle rule, derivatives are Fourier multipliers, and
off-grid values come from a local 4-point cubic.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

@dataclass(frozen=True)
class UniformGrid:
    """Nodes x_j = -L + j*h, j = 0..N-1, with h = 2L/N."""

    half_width: float = 30.0
    n_points: int = 8192

    def __post_init__(self):
        n = int(self.n_points)
        if n < 16 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 16, got {self.n_points}")
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def L(self) -> float:
        return self.half_width

    @property
    def N(self) -> int:
        return self.n_points

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @property
    def x(self) -> np.ndarray:
        return _nodes(self.half_width, self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Non-negative angular wavenumbers matching ``np.fft.rfft`` output."""
        return _rwavenumbers(self.half_width, self.n_points)

    def wrap(self, d):
        """Map displacements to the nearest periodic image in [-L, L)."""
        L = self.half_width
        return np.mod(np.asarray(d, dtype=float) + L, 2.0 * L) - L

    def refined(self, factor: int = 2) -> "UniformGrid":
        return UniformGrid(self.half_width, self.n_points * factor)

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return GridFunction(self, fn(self.x))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n_points))


@functools.lru_cache(maxsize=16)
def _nodes(L: float, N: int) -> np.ndarray:
    x = -L + (2.0 * L / N) * np.arange(N)
    x.setflags(write=False)
    return x


@functools.lru_cache(maxsize=16)
def _rwavenumbers(L: float, N: int) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.rfftfreq(N, d=2.0 * L / N)
    k.setflags(write=False)
    return k


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: UniformGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} samples, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # arithmetic keeps the grid; mixing grids is a bug
    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.grid, self.values / self._other(other))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __pow__(self, p):
        return GridFunction(self.grid, self.values**p)

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))

    def __len__(self):
        return self.grid.n_points

    def roll(self, shift: int) -> "GridFunction":
        """Translate by an integer number of cells (periodic)."""
        return GridFunction(self.grid, np.roll(self.values, shift))

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for xj, vj in zip(self.grid.x, self.values):
                writer.writerow([f"{xj:.17g}", f"{vj:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["x", "value"]:
                raise ValueError(f"unexpected CSV header {header!r}")
            rows = [(float(a), float(b)) for a, b in reader]
        xs = np.array([r[0] for r in rows])
        if len(xs) < 2:
            raise ValueError("CSV holds fewer than two nodes")
        grid = UniformGrid(-xs[0], len(xs))
        if not np.allclose(xs, grid.x, rtol=0, atol=1e-12 * grid.L):
            raise ValueError("CSV nodes are not a uniform periodic grid on [-L, L)")
        return cls(grid, np.array([r[1] for r in rows]))


def integrate(f: GridFunction) -> float:
    """Periodic rectangle rule h * sum(values)."""
    return float(f.grid.h * np.sum(f.values))


def spectral_derivative(f: GridFunction, order: int = 1) -> GridFunction:
    """Derivative via the multiplier (ik)^order.

    The Nyquist coefficient is dropped for odd orders so that the result
    of a real input stays real and odd operators stay skew.
    """
    if order not in (1, 2):
        raise ValueError(f"unsupported derivative order {order!r}; use 1 or 2")
    grid = f.grid
    k = grid.wavenumbers
    fh = np.fft.rfft(f.values)
    if order == 1:
        fh = 1j * k * fh
        fh[-1] = 0.0
    else:
        fh = -(k**2) * fh
    return GridFunction(grid, np.fft.irfft(fh, grid.n_points))


def eval_at(f: GridFunction, x):
    """Cubic (4-point Lagrange) interpolation at x in [-L, L).

    Uses the nodes j-1, j, j+1, j+2 around the cell [x_j, x_{j+1}),
    wrapping periodically.  Exact at nodes and for cubic data.
    """
    grid = f.grid
    xs = np.asarray(x, dtype=float)
    if np.any(xs < -grid.L) or np.any(xs >= grid.L) or not np.all(np.isfinite(xs)):
        raise ValueError(f"evaluation point outside [-{grid.L}, {grid.L})")
    s = (xs + grid.L) / grid.h
    j = np.floor(s).astype(int)
    t = s - j
    # guard the rounding case s -> N
    over = j >= grid.N
    j = np.where(over, grid.N - 1, j)
    t = np.where(over, 1.0, t)
    n = grid.N
    v = f.values
    vm, v0, v1, v2 = v[(j - 1) % n], v[j % n], v[(j + 1) % n], v[(j + 2) % n]
    out = (
        -t * (t - 1) * (t - 2) / 6 * vm
        + (t + 1) * (t - 1) * (t - 2) / 2 * v0
        - (t + 1) * t * (t - 2) / 2 * v1
        + (t + 1) * t * (t - 1) / 6 * v2
    )
    return float(out) if out.ndim == 0 else out


def norms(f: GridFunction) -> tuple[float, float]:
    """(L2 norm by the rectangle rule, max |value|)."""
    l2 = float(np.sqrt(integrate(f * f)))
    linf = float(np.max(np.abs(f.values)))
    return l2, linf


def trig_eval(f: GridFunction, x, order: int = 0):
    """Evaluate the trigonometric interpolant of f (or its derivative) at x.

    O(N) per point; used where sub-grid accuracy matters more than speed.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"unsupported derivative order {order!r}")
    grid = f.grid
    n = grid.N
    k = grid.wavenumbers
    coef = np.fft.rfft(f.values) / n
    weight = np.full(k.shape, 2.0)
    weight[0] = 1.0
    weight[-1] = 1.0
    coef = coef * weight * (1j * k) ** order
    if order % 2:
        coef[-1] = 0.0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    phase = np.exp(1j * np.outer(xs + grid.L, k))
    out = np.real(phase @ coef)
    return float(out[0]) if np.ndim(x) == 0 else out
