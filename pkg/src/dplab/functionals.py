"""Conserved functionals E, F, the H-norm, and sup-norm profile distances.

With v = (4 - d_xx)^{-1} u and y = (1 - d_xx) u:

    E(u) = int y v = int (4 v^2 + 5 v_x^2 + v_xx^2)
    F(u) = int u^3 = int (-v_xx^3 + 12 v v_xx^2 - 48 v^2 v_xx + 64 v^3)

E is computed from v so that the kinked u is never differentiated.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .grid import GridFunction, eval_at, integrate, spectral_derivative
from .helmholtz import inv_helmholtz, inv_helmholtz_dx
from .waves import peakon, smooth_peakon


def v_and_derivatives(u: GridFunction) -> tuple[GridFunction, GridFunction, GridFunction]:
    """v, v_x, v_xx for v = (4 - d_xx)^{-1} u.

    v_xx = 4v - u holds exactly in the discrete model, so no second
    spectral derivative is taken.
    """
    v = inv_helmholtz(4, u)
    vx = inv_helmholtz_dx(4, u)
    vxx = 4.0 * v - u
    return v, vx, vxx


def energy_E(u: GridFunction) -> float:
    v, vx, vxx = v_and_derivatives(u)
    return integrate(4.0 * v * v + 5.0 * vx * vx + vxx * vxx)


def energy_E_alt(u: GridFunction, y=None) -> float:
    """int y v, evaluated without spectral derivatives of u.

    With measure data ``y`` this is sum_i m_i v(p_i) + int density * v.
    Otherwise y v is integrated by parts once, int (u v + u_x v_x), with
    u_x from centred differences.
    """
    v = inv_helmholtz(4, u)
    if y is not None:
        total = sum(a.mass * eval_at(v, a.pos) for a in y.atoms)
        if y.density is not None:
            total += integrate(y.density * v)
        return float(total)
    h = u.grid.h
    ux = (np.roll(u.values, -1) - np.roll(u.values, 1)) / (2.0 * h)
    vx = inv_helmholtz_dx(4, u).values
    return float(h * np.sum(u.values * v.values + ux * vx))


def energy_F(u: GridFunction) -> float:
    return integrate(u * u * u)


def energy_F_alt(u: GridFunction) -> float:
    v = inv_helmholtz(4, u)
    vxx = spectral_derivative(v, 2)
    return integrate(-(vxx**3) + 12.0 * v * vxx**2 - 48.0 * v * v * vxx + 64.0 * v**3)


def l2_squared_via_v(u: GridFunction) -> float:
    """int (16 v^2 + 8 v_x^2 + v_xx^2), which equals int u^2."""
    v, vx, vxx = v_and_derivatives(u)
    return integrate(16.0 * v * v + 8.0 * vx * vx + vxx * vxx)


def v_h2_norm(u: GridFunction) -> float:
    v, vx, vxx = v_and_derivatives(u)
    return float(np.sqrt(integrate(v * v + vx * vx + vxx * vxx)))


@dataclass(frozen=True)
class EnergyPair:
    E: float
    F: float
    E_alt: float
    F_alt: float

    @property
    def E_gap(self) -> float:
        return abs(self.E - self.E_alt)

    @property
    def F_gap(self) -> float:
        return abs(self.F - self.F_alt)

    def to_json(self) -> str:
        d = asdict(self)
        d.update(E_gap=self.E_gap, F_gap=self.F_gap)
        return json.dumps(d, sort_keys=True)


def energies(u: GridFunction, y=None) -> EnergyPair:
    return EnergyPair(energy_E(u), energy_F(u), energy_E_alt(u, y), energy_F_alt(u))


def h_norm(u: GridFunction) -> float:
    # E is a nonnegative quadratic form; clip rounding below zero
    return float(np.sqrt(max(energy_E(u), 0.0)))


def h_norm_distance(u: GridFunction, w: GridFunction) -> float:
    return h_norm(u - w)


class CkDistances(NamedTuple):
    c0_u: float
    c0_v: float
    c1_v: float
    c2_v: float


def ck_distances(u: GridFunction, c: float, z: float = 0.0) -> CkDistances:
    """Sup-norm distances of u to phi_c(.-z) and of v, v', v'' to rho_c(.-z)."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    grid = u.grid
    d = grid.wrap(grid.x - z)
    v, vx, vxx = v_and_derivatives(u)
    sup = lambda a: float(np.max(np.abs(a)))  # noqa: E731
    return CkDistances(
        sup(u.values - peakon(c, 0.0, d)),
        sup(v.values - smooth_peakon(c, 0.0, d, 0)),
        sup(vx.values - smooth_peakon(c, 0.0, d, 1)),
        sup(vxx.values - smooth_peakon(c, 0.0, d, 2)),
    )


def ck_distances_between(u: GridFunction, w: GridFunction) -> CkDistances:
    """Same four sup-norm distances, against a sampled reference ``w``."""
    vu = v_and_derivatives(u)
    vw = v_and_derivatives(w)
    sup = lambda a, b: float(np.max(np.abs(a.values - b.values)))  # noqa: E731
    return CkDistances(sup(u, w), *(sup(a, b) for a, b in zip(vu, vw)))
