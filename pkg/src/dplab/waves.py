"""Peakon and smooth-peakon profiles in closed form.

peakon:        phi_c(x) = c exp(-|x - z|)
smooth peakon: rho_c = (4 - d_xx)^{-1} phi_c
                     = (c/3) exp(-|x - z|) - (c/6) exp(-2|x - z|)

rho_c is C^2 with a jump in its third derivative at the crest.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import GridFunction, UniformGrid

THETA_EDGE = 6.7
V_ZONE_EDGE = math.log(math.sqrt(2.0))
EXACT_THETA = math.log(20.0 / (20.0 - math.sqrt(399.0)))


def peakon(c: float, z: float, x):
    return c * np.exp(-np.abs(np.asarray(x, dtype=float) - z))


def peakon_derivative(c: float, z: float, x):
    """phi_c' away from the crest; the crest itself is not a valid input."""
    d = np.asarray(x, dtype=float) - z
    if np.any(d == 0):
        raise ValueError("peakon derivative is undefined at the crest")
    return -np.sign(d) * c * np.exp(-np.abs(d))


def smooth_peakon(c: float, z: float, x, order: int = 0):
    if order not in (0, 1, 2):
        raise ValueError(f"unsupported derivative order {order!r}; use 0, 1 or 2")
    d = np.asarray(x, dtype=float) - z
    e1 = np.exp(-np.abs(d))
    e2 = e1 * e1
    if order == 0:
        out = c / 3.0 * e1 - c / 6.0 * e2
    elif order == 1:
        # odd; sign(0) = 0 gives rho'(z) = 0
        out = -np.sign(d) * (c / 3.0) * (e1 - e2)
    else:
        out = c / 3.0 * e1 - 2.0 * c / 3.0 * e2
    return float(out) if out.ndim == 0 else out


def sample_peakon(grid: UniformGrid, c: float, z: float = 0.0) -> GridFunction:
    """phi_c(. - z) at the nodes, using the nearest periodic image of z."""
    return GridFunction(grid, c * np.exp(-np.abs(grid.wrap(grid.x - z))))


def sample_smooth_peakon(grid: UniformGrid, c: float, z: float = 0.0, order: int = 0) -> GridFunction:
    d = grid.wrap(grid.x - z)
    return GridFunction(grid, smooth_peakon(c, 0.0, d, order))


@dataclass(frozen=True)
class Landmark:
    name: str
    location: float
    value: float


@dataclass(frozen=True)
class LandmarkTable:
    speed: float
    entries: tuple[Landmark, ...]

    def __getitem__(self, name: str) -> Landmark:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def to_json(self) -> str:
        return json.dumps([asdict(e) for e in self.entries], indent=2)


def landmark_constants(c: float) -> LandmarkTable:
    """Profile landmarks of the smooth peakon centred at 0.

    Length-type entries (window edges) carry the length in both fields.
    ``rho1_at_edge`` records |rho_c'(6.7)|; the sign is +/- by oddness.
    """
    if not c > 0:
        raise ValueError(f"landmarks need c > 0, got {c}")
    ln2 = math.log(2.0)
    ln4 = math.log(4.0)
    rho = lambda x, k=0: smooth_peakon(c, 0.0, x, k)  # noqa: E731
    entries = [
        Landmark("rho_max", 0.0, rho(0.0)),
        Landmark("rho1_min", ln2, rho(ln2, 1)),
        Landmark("rho2_min", 0.0, rho(0.0, 2)),
        Landmark("rho2_max_right", ln4, rho(ln4, 2)),
        Landmark("rho2_max_left", -ln4, rho(-ln4, 2)),
        Landmark("rho2_zero_right", ln2, rho(ln2, 2)),
        Landmark("rho2_zero_left", -ln2, rho(-ln2, 2)),
        Landmark("rho1_at_minus_v_edge", -V_ZONE_EDGE, rho(-V_ZONE_EDGE, 1)),
        Landmark("rho1_at_plus_v_edge", V_ZONE_EDGE, rho(V_ZONE_EDGE, 1)),
        Landmark("theta_edge", THETA_EDGE, THETA_EDGE),
        Landmark("exact_theta", EXACT_THETA, EXACT_THETA),
        Landmark("rho_at_edge", THETA_EDGE, rho(THETA_EDGE)),
        Landmark("rho1_at_edge", THETA_EDGE, abs(rho(THETA_EDGE, 1))),
        Landmark("rho2_at_edge", THETA_EDGE, rho(THETA_EDGE, 2)),
        Landmark("phi_at_edge", THETA_EDGE, float(peakon(c, 0.0, THETA_EDGE))),
        Landmark("v_zone_edge", V_ZONE_EDGE, V_ZONE_EDGE),
        Landmark("rho2_bound_on_V", V_ZONE_EDGE, (math.sqrt(2.0) - 2.0) * c / 6.0),
    ]
    return LandmarkTable(float(c), tuple(entries))


def approx_equal(alpha: float, beta: float) -> bool:
    """alpha ~ beta in the sense 0.9*beta <= alpha <= 1.1*beta."""
    lo, hi = sorted((0.9 * beta, 1.1 * beta))
    return lo <= alpha <= hi
