"""Peakon stability machinery on a single snapshot u.

Locates the maximum (xi, M) of v = (4 - d_xx)^{-1} u, then evaluates the
quadratic identity, the g/h integral identities, the bound h <= 18M, the
cubic inequality, the tail bounds outside [xi - 6.7, xi + 6.7] and the
sign structure of v_x that makes the maximum unique.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .admissible import CertificateReport, cone_check
from .functionals import energy_E, energy_F, h_norm_distance, v_and_derivatives
from .grid import GridFunction, eval_at, integrate, trig_eval
from .helmholtz import inv_helmholtz
from .waves import THETA_EDGE, V_ZONE_EDGE, sample_peakon


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def mask(self, grid) -> np.ndarray:
        """Nodes inside the interval, read periodically around its centre."""
        if self.hi - self.lo >= 2.0 * grid.L:
            return np.ones(grid.N, dtype=bool)
        d = grid.wrap(grid.x - self.center)
        half = 0.5 * (self.hi - self.lo)
        return np.abs(d) <= half


def theta_window(z: float) -> Interval:
    return Interval(z - THETA_EDGE, z + THETA_EDGE)


def v_window(z: float) -> Interval:
    return Interval(z - V_ZONE_EDGE, z + V_ZONE_EDGE)


@dataclass(frozen=True)
class ModulationPoint:
    xi: float
    M: float
    refinement: float  # parabolic offset in units of h


def locate_max(v: GridFunction) -> ModulationPoint:
    """Grid argmax (smallest x on ties) refined by a 3-point parabola."""
    vals = v.values
    if np.ptp(vals) <= 1e-14 * max(1.0, float(np.max(np.abs(vals)))):
        raise ValueError("degenerate profile: v is constant")
    grid = v.grid
    n = grid.N
    j = int(np.argmax(vals))
    a, b, c = vals[(j - 1) % n], vals[j], vals[(j + 1) % n]
    den = a - 2.0 * b + c
    off = 0.5 * (a - c) / den if den < 0 else 0.0
    off = min(max(off, -0.5), 0.5)
    M = b - 0.25 * (a - c) * off
    xi = float(grid.wrap(grid.x[j] + off * grid.h))
    return ModulationPoint(xi, float(M), float(off))


def refine_critical_point(v: GridFunction, xi0: float, iters: int = 30) -> tuple[float, float]:
    """Newton on the trigonometric interpolant of v_x, kept within one cell of xi0.

    Returns (xi, v(xi)).
    """
    grid = v.grid
    xi = xi0
    for _ in range(iters):
        g1 = trig_eval(v, xi, 1)
        g2 = trig_eval(v, xi, 2)
        if g2 >= 0:
            break
        step = g1 / g2
        new = xi - step
        if abs(grid.wrap(new - xi0)) > grid.h:
            break
        xi = float(grid.wrap(new))
        if abs(step) < 1e-15 * max(1.0, grid.L):
            break
    return xi, float(trig_eval(v, xi, 0))


def count_local_maxima(v: GridFunction, window: Interval) -> int:
    """Strict local maxima of the 3-node median of v whose location is in ``window``.

    Plateaus left by the median pass count once, at their middle node.
    """
    vals = v.values
    s = np.median(np.stack([np.roll(vals, 1), vals, np.roll(vals, -1)]), axis=0)
    n = len(s)
    if np.all(s == s[0]):
        return 0
    # rotate so that index 0 starts a new run
    start = int(np.flatnonzero(s != np.roll(s, 1))[0])
    s_rot = np.roll(s, -start)
    edges = np.flatnonzero(np.diff(s_rot) != 0) + 1
    runs = np.split(np.arange(n), edges)
    mask = window.mask(v.grid)
    count = 0
    m = len(runs)
    for i, run in enumerate(runs):
        val = s_rot[run[0]]
        prev = s_rot[runs[i - 1][0]]
        nxt = s_rot[runs[(i + 1) % m][0]]
        if val > prev and val > nxt:
            mid = (run[len(run) // 2] + start) % n
            if mask[mid]:
                count += 1
    return count


def quadratic_identity_residual(u: GridFunction, c: float, xi: float) -> float:
    """|E(u) - E(phi_c) - ||u - phi_c(.-xi)||_H^2 - 4c (v(xi) - c/6)|, E(phi_c) = c^2/3."""
    v = inv_helmholtz(4, u)
    lhs = energy_E(u) - c * c / 3.0
    dist = h_norm_distance(u, sample_peakon(u.grid, c, xi))
    rhs = dist**2 + 4.0 * c * (eval_at(v, xi) - c / 6.0)
    return float(abs(lhs - rhs))


def _branches(grid, xi: float):
    """Masks for x < xi, x > xi, and the switch node nearest xi."""
    d = grid.wrap(grid.x - xi)
    j = int(np.argmin(np.abs(d)))
    left = d < 0
    right = d > 0
    left[j] = right[j] = False
    switch = np.zeros(grid.N, dtype=bool)
    switch[j] = True
    return left, right, switch


def build_g(v: GridFunction, vx: GridFunction, vxx: GridFunction, xi: float) -> GridFunction:
    """g = 2v + v_xx - 3v_x left of xi, 2v + v_xx + 3v_x right of it."""
    left, right, switch = _branches(v.grid, xi)
    base = 2.0 * v.values + vxx.values
    g = np.where(left, base - 3.0 * vx.values, base + 3.0 * vx.values)
    g[switch] = base[switch]
    return GridFunction(v.grid, g)


def build_h(v: GridFunction, vx: GridFunction, vxx: GridFunction, xi: float) -> GridFunction:
    """h = -v_xx - 6v_x + 16v left of xi, -v_xx + 6v_x + 16v right of it."""
    left, right, switch = _branches(v.grid, xi)
    base = -vxx.values + 16.0 * v.values
    h = np.where(left, base - 6.0 * vx.values, base + 6.0 * vx.values)
    h[switch] = base[switch]
    return GridFunction(v.grid, h)


def _check_critical(v: GridFunction, u: GridFunction, xi: float, tol: Optional[float]) -> None:
    if tol is None:
        tol = 1e-6 * float(np.max(np.abs(u.values)))
    slope = trig_eval(v, xi, 1)
    if abs(slope) > tol:
        raise ValueError(f"xi is not a critical point: |v_x(xi)| = {abs(slope):.3e} > {tol:.3e}")


def _g_h(u: GridFunction, xi: float):
    v, vx, vxx = v_and_derivatives(u)
    M = trig_eval(v, xi, 0)
    return v, build_g(v, vx, vxx, xi), build_h(v, vx, vxx, xi), M


def identity_g_residual(u: GridFunction, xi: float, tol: Optional[float] = None) -> float:
    """|int g^2 - (E(u) - 12 M^2)| with M = v(xi)."""
    v, g, _, M = _g_h(u, xi)
    _check_critical(v, u, xi, tol)
    return float(abs(integrate(g * g) - (energy_E(u) - 12.0 * M * M)))


def identity_h_residual(u: GridFunction, xi: float, tol: Optional[float] = None) -> float:
    """|int h g^2 - (F(u) - 144 M^3)| with M = v(xi)."""
    v, g, h, M = _g_h(u, xi)
    _check_critical(v, u, xi, tol)
    return float(abs(integrate(h * g * g) - (energy_F(u) - 144.0 * M**3)))


def h_bound_margin(u: GridFunction, xi: float, c: Optional[float] = None) -> float:
    """18 M - max h; nonnegative for admissible data near a peakon."""
    _, _, h, M = _g_h(u, xi)
    return float(18.0 * M - np.max(h.values))


def cubic_inequality_value(E: float, F: float, M: float) -> float:
    return M**3 - 0.25 * E * M + F / 72.0


def cubic_peakon_factored(M: float, c: float) -> float:
    """(M - c/6)^2 (M + c/3): the cubic at E = c^2/3, F = 2c^3/3."""
    return (M - c / 6.0) ** 2 * (M + c / 3.0)


def tail_bounds(u: GridFunction, xi: float, c: float) -> tuple[float, float]:
    """c/300 minus the sup of v, resp. u, outside [xi - 6.7, xi + 6.7]."""
    outside = ~theta_window(xi).mask(u.grid)
    if not outside.any():
        return math.inf, math.inf
    v = inv_helmholtz(4, u)
    return (
        float(c / 300.0 - np.max(v.values[outside])),
        float(c / 300.0 - np.max(u.values[outside])),
    )


def slope_structure(u: GridFunction, xi: float) -> tuple[float, float, float]:
    """(min v_x on [xi-6.7, xi-ln sqrt2], -max v_x on [xi+ln sqrt2, xi+6.7], -max v_xx on V_xi).

    All three are >= 0 when v rises, falls and is concave as required.
    """
    grid = u.grid
    _, vx, vxx = v_and_derivatives(u)
    d = grid.wrap(grid.x - xi)
    left = (d >= -THETA_EDGE) & (d <= -V_ZONE_EDGE)
    right = (d >= V_ZONE_EDGE) & (d <= THETA_EDGE)
    vzone = np.abs(d) <= V_ZONE_EDGE

    def pick(mask, arr, fn, empty):
        return float(fn(arr[mask])) if mask.any() else empty

    return (
        pick(left, vx.values, np.min, math.inf),
        -pick(right, vx.values, np.max, -math.inf),
        -pick(vzone, vxx.values, np.max, -math.inf),
    )


# --- certificate -------------------------------------------------------------


@dataclass(frozen=True)
class CertificateTolerances:
    cone: float = 1e-6  # x c
    margin: float = 1e-3  # x c
    residual: float = 1e-3  # x c^2 or c^3
    critical: float = 1e-6  # x c


@dataclass
class StabilityReport:
    c: float
    E: float
    F: float
    xi: float
    M: float
    delta: float
    h_distance_to_peakon_at_xi: float
    quadratic_identity_residual: float
    g_identity_residual: float
    h_identity_residual: float
    h_sup_margin: float
    cubic_value: float
    local_max_count_on_theta: int
    tail_v_margin: float
    tail_u_margin: float
    left_slope_margin: float
    right_slope_margin: float
    concavity_margin: float
    cone_u_margin: float
    cone_v_margin: float
    cone_six_v_margin: float
    parabolic_xi: float
    eighteen_M_over_c: float
    passed: bool = False
    reasons: list[str] = field(default_factory=list)

    @property
    def tail_margins(self) -> tuple[float, float]:
        return self.tail_v_margin, self.tail_u_margin

    def scalars(self) -> dict:
        d = asdict(self)
        d.pop("reasons")
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=True, indent=2)

    @classmethod
    def csv_header(cls) -> str:
        names = [f for f in cls.__dataclass_fields__ if f != "reasons"]
        return ",".join(names)

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow(
            [_fmt(v) for k, v in self.scalars().items()]
        )
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def stability_certificate(
    u: GridFunction, c: float, tol: CertificateTolerances = CertificateTolerances()
) -> StabilityReport:
    if not c > 0:
        raise ValueError(f"stability requires c>0, got {c}")
    grid = u.grid
    cone: CertificateReport = cone_check(u)
    v, vx, vxx = v_and_derivatives(u)
    mp = locate_max(v)
    xi, M = refine_critical_point(v, mp.xi)
    E = energy_E(u)
    F = energy_F(u)
    reasons: list[str] = []

    slope = trig_eval(v, xi, 1)
    if abs(slope) > tol.critical * c:
        reasons.append(f"xi is not a critical point (|v_x| = {abs(slope):.2e})")
    g = build_g(v, vx, vxx, xi)
    h = build_h(v, vx, vxx, xi)
    g_res = abs(integrate(g * g) - (E - 12.0 * M * M))
    h_res = abs(integrate(h * g * g) - (F - 144.0 * M**3))
    tv, tu = tail_bounds(u, xi, c)
    left, right, concave = slope_structure(u, xi)

    report = StabilityReport(
        c=float(c),
        E=E,
        F=F,
        xi=xi,
        M=M,
        delta=c / 6.0 - M,
        h_distance_to_peakon_at_xi=h_norm_distance(u, sample_peakon(grid, c, xi)),
        quadratic_identity_residual=quadratic_identity_residual(u, c, xi),
        g_identity_residual=float(g_res),
        h_identity_residual=float(h_res),
        h_sup_margin=float(18.0 * M - np.max(h.values)),
        cubic_value=cubic_inequality_value(E, F, M),
        local_max_count_on_theta=count_local_maxima(v, theta_window(xi)),
        tail_v_margin=tv,
        tail_u_margin=tu,
        left_slope_margin=left,
        right_slope_margin=right,
        concavity_margin=concave,
        cone_u_margin=cone.u_minus_abs_ux.value,
        cone_v_margin=cone.two_v_minus_abs_vx.value,
        cone_six_v_margin=cone.six_v_minus_u.value,
        parabolic_xi=mp.xi,
        eighteen_M_over_c=18.0 * M / c,
    )

    reasons += [f"cone violation: {r}" for r in cone.violations(tol.cone * c)]
    if report.local_max_count_on_theta != 1:
        reasons.append(f"{report.local_max_count_on_theta} local maxima of v on Theta_xi")
    for name, scale in (
        ("quadratic_identity_residual", c * c),
        ("g_identity_residual", c * c),
        ("h_identity_residual", c**3),
    ):
        if getattr(report, name) > tol.residual * scale:
            reasons.append(f"{name} = {getattr(report, name):.3e} above tolerance")
    if report.cubic_value > tol.residual * c**3:
        reasons.append(f"cubic inequality value {report.cubic_value:.3e} > 0")
    for name in ("h_sup_margin", "tail_v_margin", "tail_u_margin",
                 "left_slope_margin", "right_slope_margin", "concavity_margin"):
        if getattr(report, name) < -tol.margin * c:
            reasons.append(f"{name} = {getattr(report, name):.3e} below tolerance")
    report.reasons = reasons
    report.passed = not reasons
    return report
