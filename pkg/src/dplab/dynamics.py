"""Method-of-lines integration of the DP equation in nonlocal form

    u_t + (1/2) (u^2)_x + (3/2) (1 - d_xx)^{-1} (u^2)_x = 0

Fourier pseudo-spectral in space with 3/2 zero padding for u^2, classical
RK4 in time, and an exponential filter after each step.  Point masses in
the initial momentum are replaced by narrow Gaussians so that u_x is
continuous at t = 0.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .admissible import MeasureData
from .functionals import energy_E, energy_F, h_norm_distance
from .grid import GridFunction, UniformGrid
from .helmholtz import inv_helmholtz
from .stability import locate_max, refine_critical_point
from .waves import sample_peakon, sample_smooth_peakon

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvolutionConfig:
    t_end: float
    cfl: float = 0.3
    filter_strength: float = 36.0
    filter_order: int = 36
    monitor_stride: int = 10
    mollify_cells: float = 4.0
    dt: Optional[float] = None  # fixed step; None selects cfl * h / max(1, max|u|)
    dt_refresh: int = 50
    snapshot_every: int = 0  # keep u every k monitor records; 0 keeps none
    blowup_factor: float = 1e3

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.filter_strength < 0:
            raise ValueError("filter_strength must be >= 0")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        if self.monitor_stride < 1 or self.dt_refresh < 1:
            raise ValueError("monitor_stride and dt_refresh must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.mollify_cells > 0:
            raise ValueError("mollify_cells must be positive")


def _dealiased_square_hat(u: GridFunction) -> np.ndarray:
    """rfft of u^2 with the 3/2 padding rule; Nyquist mode dropped."""
    n = u.grid.N
    m = 3 * n // 2
    uh = np.fft.rfft(u.values)
    uh[-1] = 0.0
    padded = np.zeros(m // 2 + 1, dtype=complex)
    padded[: n // 2 + 1] = uh
    up = np.fft.irfft(padded, m) * (m / n)
    wh = np.fft.rfft(up * up)[: n // 2 + 1] * (n / m)
    wh[-1] = 0.0
    return wh


def dp_rhs(u: GridFunction) -> GridFunction:
    """-(1/2) d_x(u^2) - (3/2) (1 - d_xx)^{-1} d_x(u^2)."""
    k = u.grid.wavenumbers
    mult = -0.5j * k - 1.5j * k / (1.0 + k**2)
    out = mult * _dealiased_square_hat(u)
    return GridFunction(u.grid, np.fft.irfft(out, u.grid.N))


def spectral_filter(u: GridFunction, strength: float = 36.0, order: int = 36) -> GridFunction:
    """Multiply mode k by exp(-strength (k/k_max)^order)."""
    if strength == 0:
        return u
    k = u.grid.wavenumbers
    sigma = np.exp(-strength * (k / k[-1]) ** order)
    return GridFunction(u.grid, np.fft.irfft(np.fft.rfft(u.values) * sigma, u.grid.N))


def max_stable_dt(u: GridFunction, cfl: float = 1.0) -> float:
    umax = float(np.max(np.abs(u.values)))
    return math.inf if umax == 0 else cfl * u.grid.h / umax


def step_rk4(
    u: GridFunction,
    dt: float,
    *,
    cfl: float = 1.0,
    filter_strength: float = 36.0,
    filter_order: int = 36,
) -> GridFunction:
    """One classical RK4 step followed by the spectral filter.

    Raises ValueError when dt exceeds cfl * h / max|u|.
    """
    bound = max_stable_dt(u, cfl)
    if dt > bound:
        raise ValueError(f"dt = {dt:.3e} violates the advective bound; admissible dt <= {bound:.3e}")
    k1 = dp_rhs(u)
    k2 = dp_rhs(u + (0.5 * dt) * k1)
    k3 = dp_rhs(u + (0.5 * dt) * k2)
    k4 = dp_rhs(u + dt * k3)
    new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return spectral_filter(new, filter_strength, filter_order)


def mollify_measure(y: MeasureData, width: float) -> GridFunction:
    """u = G_1 * y after replacing each atom by a unit Gaussian of std ``width``.

    Both the Gaussian and G_1 are positive, so u stays in the cone.
    """
    y.validate()
    grid = y.grid
    dens = np.zeros(grid.N) if y.density is None else np.array(y.density.values)
    for a in y.atoms:
        d = grid.wrap(grid.x - a.pos)
        dens += a.mass * np.exp(-0.5 * (d / width) ** 2) / (width * math.sqrt(2.0 * math.pi))
    return inv_helmholtz(1, GridFunction(grid, dens))


def momentum_min(u: GridFunction, sigma: float = 0.0) -> float:
    """Minimum over nodes of y = (1 - d_xx) u, seen through a Gaussian of std sigma.

    sigma = 0 gives the pointwise spectral y.  A nonnegative measure stays
    nonnegative after Gaussian smoothing for every sigma > 0.
    """
    k = u.grid.wavenumbers
    mult = (1.0 + k**2) * np.exp(-0.5 * (sigma * k) ** 2)
    y = np.fft.irfft(np.fft.rfft(u.values) * mult, u.grid.N)
    return float(np.min(y))


def ux_total_variation(u: GridFunction) -> float:
    k = u.grid.wavenumbers
    uh = np.fft.rfft(u.values) * (1j * k)
    uh[-1] = 0.0
    ux = np.fft.irfft(uh, u.grid.N)
    return float(np.sum(np.abs(np.diff(np.append(ux, ux[0])))))


def spectral_shift(u: GridFunction, s: float) -> GridFunction:
    """u(. - s) through the Fourier phase; exact for the trigonometric interpolant."""
    k = u.grid.wavenumbers
    uh = np.fft.rfft(u.values) * np.exp(-1j * k * s)
    uh[-1] = uh[-1].real * math.cos(k[-1] * s)
    return GridFunction(u.grid, np.fft.irfft(uh, u.grid.N))


def modulation(u: GridFunction) -> tuple[float, float]:
    """(xi, M) for v = (4 - d_xx)^{-1} u: grid argmax, parabola, then Newton."""
    v = inv_helmholtz(4, u)
    return refine_critical_point(v, locate_max(v).xi)


def traveling_wave_error(u: GridFunction, c: float, t: float, z0: float = 0.0) -> float:
    """max |v - rho_c(. - z0 - c t)|: distance of v to the exact smooth peakon."""
    v = inv_helmholtz(4, u)
    ref = sample_smooth_peakon(u.grid, c, z0 + c * t)
    return float(np.max(np.abs(v.values - ref.values)))


@dataclass
class EvolutionTrace:
    c_ref: float
    times: list = field(default_factory=list)
    E_series: list = field(default_factory=list)
    F_series: list = field(default_factory=list)
    xi_series: list = field(default_factory=list)
    M_series: list = field(default_factory=list)
    delta_series: list = field(default_factory=list)
    h_distance_series: list = field(default_factory=list)
    min_y_series: list = field(default_factory=list)
    min_y_raw_series: list = field(default_factory=list)
    tv_ux_series: list = field(default_factory=list)
    snapshots: list = field(default_factory=list, repr=False)  # (t, u) pairs
    aborted: bool = False

    CSV_COLUMNS = ("t", "E", "F", "xi", "M", "delta", "h_distance", "min_y")

    def __len__(self):
        return len(self.times)

    def rows(self):
        return zip(
            self.times, self.E_series, self.F_series, self.xi_series, self.M_series,
            self.delta_series, self.h_distance_series, self.min_y_series,
        )

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for row in self.rows():
            w.writerow([f"{float(v):.17g}" for v in row])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())

    def xi_unwrapped(self, L: float) -> np.ndarray:
        xi = np.asarray(self.xi_series)
        return np.unwrap(xi * (np.pi / L)) * (L / np.pi)

    def xi_slope(self, L: float) -> float:
        return float(np.polyfit(np.asarray(self.times), self.xi_unwrapped(L), 1)[0])

    def max_relative_drift(self, series: str) -> float:
        s = np.asarray(getattr(self, series))
        return float(np.max(np.abs(s - s[0])) / abs(s[0]))


class BlowUpError(RuntimeError):
    def __init__(self, message: str, trace: EvolutionTrace):
        super().__init__(message)
        self.trace = trace


def _record(trace: EvolutionTrace, t: float, u: GridFunction, sigma: float, keep: bool) -> None:
    xi, M = modulation(u)
    c = trace.c_ref
    trace.times.append(float(t))
    trace.E_series.append(energy_E(u))
    trace.F_series.append(energy_F(u))
    trace.xi_series.append(xi)
    trace.M_series.append(M)
    trace.delta_series.append(c / 6.0 - M)
    trace.h_distance_series.append(h_norm_distance(u, sample_peakon(u.grid, c, xi)))
    trace.min_y_series.append(momentum_min(u, sigma))
    trace.min_y_raw_series.append(momentum_min(u, 0.0))
    trace.tv_ux_series.append(ux_total_variation(u))
    if keep:
        trace.snapshots.append((float(t), u))


def evolve(y0: MeasureData, c_ref: float, cfg: EvolutionConfig) -> EvolutionTrace:
    """Integrate from the mollified y0 to cfg.t_end, monitoring every stride steps.

    The cone monitor ``min_y`` looks at y through a Gaussian of the same
    width as the initial mollifier; the raw pointwise minimum is kept in
    ``min_y_raw_series``.
    """
    grid: UniformGrid = y0.grid
    width = cfg.mollify_cells * grid.h
    u = mollify_measure(y0, width)
    umax0 = float(np.max(np.abs(u.values)))
    trace = EvolutionTrace(float(c_ref))
    _record(trace, 0.0, u, width, cfg.snapshot_every > 0)

    def choose_dt(u):
        if cfg.dt is not None:
            return cfg.dt
        return cfg.cfl * grid.h / max(1.0, float(np.max(np.abs(u.values))))

    t = 0.0
    step = 0
    dt = choose_dt(u)
    while t < cfg.t_end * (1 - 1e-14):
        h_step = min(dt, cfg.t_end - t)
        u = step_rk4(u, h_step, filter_strength=cfg.filter_strength, filter_order=cfg.filter_order)
        t += h_step
        step += 1
        umax = float(np.max(np.abs(u.values)))
        if not math.isfinite(umax) or umax > cfg.blowup_factor * umax0:
            trace.aborted = True
            raise BlowUpError(f"blow-up at t = {t:.4g}: max|u| = {umax:.3e}", trace)
        done = t >= cfg.t_end * (1 - 1e-14)
        if step % cfg.monitor_stride == 0 or done:
            keep = cfg.snapshot_every > 0 and len(trace) % cfg.snapshot_every == 0
            _record(trace, t, u, width, keep)
        if step % cfg.dt_refresh == 0:
            dt = choose_dt(u)
    log.debug("evolved %d steps to t=%g", step, t)
    return trace
