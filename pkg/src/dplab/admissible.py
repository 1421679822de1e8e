"""Initial data in the positive cone y = (1 - d_xx) u >= 0.

A momentum measure is stored as nonnegative point masses plus a
nonnegative density on the grid.  ``u = G_1 * y`` is then assembled with
the periodized kernel in closed form for the atoms and a spectral solve
for the density.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .functionals import h_norm, h_norm_distance
from .grid import GridFunction, UniformGrid
from .helmholtz import inv_helmholtz, inv_helmholtz_dx
from .waves import sample_peakon


class ConeError(ValueError):
    """Data outside the positive cone, or a perturbation that cannot stay in it."""


@dataclass(frozen=True)
class Atom:
    pos: float
    mass: float


@dataclass(frozen=True)
class MeasureData:
    grid: UniformGrid
    atoms: tuple[Atom, ...] = ()
    density: Optional[GridFunction] = None

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(Atom(float(a.pos), float(a.mass)) for a in self.atoms))
        if self.density is not None and self.density.grid != self.grid:
            raise ValueError("density lives on a different grid")

    def total_mass(self) -> float:
        m = sum(a.mass for a in self.atoms)
        if self.density is not None:
            m += self.grid.h * float(np.sum(self.density.values))
        return float(m)

    def validate(self) -> None:
        L = self.grid.L
        for i, a in enumerate(self.atoms):
            if not (math.isfinite(a.mass) and a.mass >= 0):
                raise ConeError(f"atom {i} (pos={a.pos}, mass={a.mass}) has negative mass")
            if not (-L <= a.pos < L):
                raise ConeError(f"atom {i} (pos={a.pos}) lies outside [-{L}, {L})")
        if self.density is not None:
            vals = self.density.values
            j = int(np.argmin(vals))
            if vals[j] < 0:
                raise ConeError(
                    f"density node {j} (x={self.grid.x[j]:.6g}) has negative value {vals[j]:.3e}"
                )
        if not self.total_mass() > 0:
            raise ConeError("measure has no mass; nontrivial data required")

    def __add__(self, other: "MeasureData") -> "MeasureData":
        if other.grid != self.grid:
            raise ValueError("measures live on different grids")
        if self.density is None:
            dens = other.density
        elif other.density is None:
            dens = self.density
        else:
            dens = self.density + other.density
        return MeasureData(self.grid, self.atoms + other.atoms, dens)

    def scaled(self, a: float) -> "MeasureData":
        dens = None if self.density is None else a * self.density
        return MeasureData(self.grid, tuple(Atom(p.pos, a * p.mass) for p in self.atoms), dens)

    def to_json(self, path, density_csv=None) -> None:
        """Write ``{atoms: [{pos, mass}], density_csv}``; the density goes to its own CSV."""
        path = Path(path)
        ref = None
        if self.density is not None:
            csv_path = Path(density_csv) if density_csv else path.with_suffix(".density.csv")
            self.density.to_csv(csv_path)
            ref = str(csv_path)
        payload = {
            "atoms": [{"pos": a.pos, "mass": a.mass} for a in self.atoms],
            "density_csv": ref,
        }
        path.write_text(json.dumps(payload, indent=2))

    @classmethod
    def from_json(cls, path, grid: Optional[UniformGrid] = None) -> "MeasureData":
        path = Path(path)
        payload = json.loads(path.read_text())
        density = None
        if payload.get("density_csv"):
            csv_path = Path(payload["density_csv"])
            if not csv_path.is_absolute():
                csv_path = path.parent / csv_path
            density = GridFunction.from_csv(csv_path)
            if grid is not None and density.grid != grid:
                raise ValueError("density CSV grid does not match the requested grid")
            grid = density.grid
        if grid is None:
            raise ValueError("atom-only measure files need an explicit grid")
        atoms = tuple(Atom(a["pos"], a["mass"]) for a in payload.get("atoms", []))
        return cls(grid, atoms, density)


def periodic_kernel(grid: UniformGrid, d) -> np.ndarray:
    """sum_n exp(-|d + 2Ln|) for the periodic image sum of exp(-|.|)."""
    L = grid.L
    a = np.abs(grid.wrap(d))
    return np.exp(-a) * (1.0 + np.exp(-2.0 * (L - a))) / (1.0 - np.exp(-2.0 * L))


def synthesize_u(y: MeasureData) -> GridFunction:
    y.validate()
    grid = y.grid
    vals = np.zeros(grid.N)
    for a in y.atoms:
        vals += 0.5 * a.mass * periodic_kernel(grid, grid.x - a.pos)
    u = GridFunction(grid, vals)
    if y.density is not None:
        u = u + inv_helmholtz(1, y.density)
    return u


def peakon_measure(grid: UniformGrid, c: float, z: float = 0.0) -> MeasureData:
    """y = 2c delta_z, whose u is the peakon phi_c(. - z)."""
    return MeasureData(grid, (Atom(float(grid.wrap(z)), 2.0 * c),))


# --- cone certificate -------------------------------------------------------


@dataclass(frozen=True)
class Margin:
    value: float
    location: float


@dataclass(frozen=True)
class CertificateReport:
    """Minima of u - |u_x|, 2v - |v_x| and 6v - u, with where they occur."""

    u_minus_abs_ux: Margin
    two_v_minus_abs_vx: Margin
    six_v_minus_u: Margin

    def margins(self) -> dict[str, Margin]:
        return {
            "u_minus_abs_ux": self.u_minus_abs_ux,
            "two_v_minus_abs_vx": self.two_v_minus_abs_vx,
            "six_v_minus_u": self.six_v_minus_u,
        }

    def violations(self, tol: float) -> list[str]:
        return [
            f"{name} = {m.value:.3e} at x = {m.location:.4f}"
            for name, m in self.margins().items()
            if m.value < -tol
        ]

    def ok(self, tol: float) -> bool:
        return not self.violations(tol)


def minmod_derivative(u: GridFunction) -> np.ndarray:
    """One-sided differences combined by minmod.

    Where both one-sided slopes agree in sign the smaller one is kept;
    at extrema and kinks the slope is 0, an element of the weak
    derivative's range.  For exact cone data this never overstates |u_x|.
    """
    vals = u.values
    h = u.grid.h
    fwd = (np.roll(vals, -1) - vals) / h
    bwd = (vals - np.roll(vals, 1)) / h
    same = np.sign(fwd) == np.sign(bwd)
    return np.where(same, np.sign(fwd) * np.minimum(np.abs(fwd), np.abs(bwd)), 0.0)


def cone_check(u: GridFunction) -> CertificateReport:
    x = u.grid.x
    ux = minmod_derivative(u)
    v = inv_helmholtz(4, u).values
    vx = inv_helmholtz_dx(4, u).values

    def margin(arr):
        j = int(np.argmin(arr))
        return Margin(float(arr[j]), float(x[j]))

    return CertificateReport(
        margin(u.values - np.abs(ux)),
        margin(2.0 * v - np.abs(vx)),
        margin(6.0 * v - u.values),
    )


# --- perturbed peakons ------------------------------------------------------


@dataclass(frozen=True)
class PerturbationRecipe:
    """How to perturb y = 2c delta_z.

    kind: "atom"    extra point mass at z + offset
          "bump"    Gaussian density of std ``width`` centred at z + offset
          "rescale" main mass 2c -> 2c (1 + sign * a)
    The amplitude a is chosen by bisection to hit the target distance.
    """

    kind: str = "atom"
    offset: float = 1.0
    width: float = 0.5
    sign: int = 1

    def __post_init__(self):
        if self.kind not in ("atom", "bump", "rescale"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "bump" and not self.width > 0:
            raise ValueError("bump width must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")


def _perturbed(grid: UniformGrid, c: float, z: float, recipe: PerturbationRecipe, a: float) -> MeasureData:
    main = peakon_measure(grid, c, z)
    if recipe.kind == "rescale":
        return main.scaled(1.0 + recipe.sign * a)
    pos = float(grid.wrap(z + recipe.offset))
    if recipe.kind == "atom":
        return main + MeasureData(grid, (Atom(pos, a),))
    d = grid.wrap(grid.x - pos)
    g = np.exp(-0.5 * (d / recipe.width) ** 2) / (recipe.width * math.sqrt(2.0 * math.pi))
    return main + MeasureData(grid, (), GridFunction(grid, a * g))


def perturbed_peakon_measure(
    c: float,
    eps: float,
    recipe: PerturbationRecipe = PerturbationRecipe(),
    grid: Optional[UniformGrid] = None,
    center: float = 0.0,
    rtol: float = 0.01,
) -> tuple[MeasureData, float]:
    """Measure whose u is at H-distance eps^2 from phi_c(. - center).

    Bisects the perturbation amplitude; distances are measured with the
    discrete H-norm.  Returns the measure and the achieved distance.
    """
    grid = grid or UniformGrid()
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not 0 <= eps < 1:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    if eps == 0:
        return peakon_measure(grid, c, center), 0.0
    target = eps**2
    ref = sample_peakon(grid, c, center)

    def dist(a):
        return h_norm_distance(synthesize_u(_perturbed(grid, c, center, recipe, a)), ref)

    if recipe.kind == "rescale" and recipe.sign < 0:
        hi = 1.0
        reach = h_norm(ref)  # a = 1 removes all mass
        if reach < target:
            raise ConeError(
                f"removing all peakon mass reaches only {reach:.3e} < {target:.3e}; "
                "the cone forbids going further"
            )
    else:
        hi = c
        while dist(hi) < target:
            hi *= 2.0
            if hi > 1e3 * c:
                raise ConeError(f"recipe {recipe} cannot reach distance {target:.3e}")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d = dist(mid)
        if abs(d - target) <= rtol * target:
            return _perturbed(grid, c, center, recipe, mid), d
        if d < target:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("bisection did not converge")  # pragma: no cover


def make_perturbed_peakon(
    c: float,
    eps: float,
    recipe: PerturbationRecipe = PerturbationRecipe(),
    grid: Optional[UniformGrid] = None,
    center: float = 0.0,
) -> tuple[GridFunction, float]:
    y, d = perturbed_peakon_measure(c, eps, recipe, grid, center)
    return synthesize_u(y), d


@dataclass(frozen=True)
class EnsembleMember:
    u: GridFunction = field(repr=False)
    y: MeasureData = field(repr=False)
    eps: float
    center: float
    recipe: PerturbationRecipe
    distance: float


def random_recipe(rng: np.random.Generator) -> PerturbationRecipe:
    kind = ("atom", "bump", "rescale")[int(rng.integers(3))]
    return PerturbationRecipe(
        kind=kind,
        offset=float(rng.uniform(-3.0, 3.0)),
        width=float(rng.uniform(0.3, 1.0)),
        sign=int(rng.choice([-1, 1])),
    )


def admissible_ensemble(
    c: float,
    n: int,
    eps_max: float = 0.05,
    seed: int = 0,
    grid: Optional[UniformGrid] = None,
    eps_min: Optional[float] = None,
    center_spread: float = 2.0,
) -> list[EnsembleMember]:
    """Seeded admissible data at H-distance eps^2 from a peakon, eps <= eps_max."""
    grid = grid or UniformGrid()
    rng = np.random.default_rng(seed)
    eps_min = 0.2 * eps_max if eps_min is None else eps_min
    members = []
    for _ in range(n):
        recipe = random_recipe(rng)
        eps = float(rng.uniform(eps_min, eps_max))
        center = float(rng.uniform(-center_spread, center_spread))
        y, d = perturbed_peakon_measure(c, eps, recipe, grid, center)
        members.append(EnsembleMember(synthesize_u(y), y, eps, center, recipe, d))
    return members


def with_grid(y: MeasureData, grid: UniformGrid) -> MeasureData:
    """Atom-only measures can be moved to another grid unchanged."""
    if y.density is not None:
        raise ValueError("density data is tied to its grid")
    return replace(y, grid=grid)
