"""Comparison inequalities, Green's-formula defect and the uniqueness energy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .barrier import _smootherstep, _smootherstep_d1, _smootherstep_d2
from .geometry import DomainError, ModelGeometry, RadialField, RadialGrid, radial_drift, radial_laplacian

__all__ = [
    "TimeSeries",
    "DiniResult",
    "EnergyReport",
    "gronwall_bound",
    "power_bound",
    "dini_check",
    "power_difference_bounds",
    "green_defect",
    "green_defect_refined",
    "annulus_profile",
    "annulus_test_function",
    "uniqueness_energy",
]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d and of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, fn: Callable[[np.ndarray], np.ndarray], t_end: float, dt: float) -> "TimeSeries":
        t = np.linspace(0.0, t_end, int(round(t_end / dt)) + 1)
        return cls(t, fn(t))

    def __len__(self):
        return self.times.size


def gronwall_bound(a: float, b: float, J0: float, t: float) -> float:
    """Integrated bound for J' <= aJ + b."""
    if a <= 0:
        raise DomainError("gronwall_bound needs a > 0")
    if b < 0 or t < 0:
        raise DomainError("need b >= 0 and t >= 0")
    return J0 * math.exp(a * t) + math.expm1(a * t) * b / a


def power_bound(eta: float, Q: float, v0: float, t: float) -> float:
    """Integrated bound for d/dt v^(1/eta) <= Q."""
    if eta <= 0 or Q < 0 or v0 < 0 or t < 0:
        raise DomainError("power_bound needs eta > 0 and Q, v0, t >= 0")
    return (v0 ** (1 / eta) + Q * t) ** eta


@dataclass(frozen=True)
class DiniResult:
    ok: bool
    first_violation: int | None
    worst_excess: float

    def __bool__(self):
        return self.ok


def dini_check(
    series: TimeSeries,
    rate: Callable[[float, float], float],
    slack: float = 0.0,
    bound: Callable[[float], float] | None = None,
) -> DiniResult:
    """Backward difference quotients against ``rate`` and values against ``bound``.

    Each comparison allows ``slack * (1 + |reference|)``.
    """
    t, v = series.times, series.values
    first = None
    worst = -math.inf
    for i in range(1, t.size):
        q = (v[i] - v[i - 1]) / (t[i] - t[i - 1])
        ref = rate(t[i], v[i])
        excess = q - ref - slack * (1 + abs(ref))
        worst = max(worst, excess)
        if excess > 0 and first is None:
            first = i
    if bound is not None:
        for i in range(t.size):
            ref = bound(t[i])
            excess = v[i] - ref - slack * (1 + abs(ref))
            worst = max(worst, excess)
            if excess > 0 and (first is None or i < first):
                first = i
    return DiniResult(first is None, first, float(worst))


def power_difference_bounds(a, b, eta: float, rtol: float = 1e-12):
    """Check b^eta - a^eta <= (b^(eta+1) - a^(eta+1))/a and the same with /b, for 0 < a <= b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b < a):
        raise DomainError("need 0 < a <= b")
    lhs = b**eta - a**eta
    w = b ** (eta + 1) - a ** (eta + 1)
    tol = rtol * (b**eta + b ** (eta + 1) / a)
    return lhs <= w / a + tol, lhs <= w / b + tol


# ---------------------------------------------------------------------------
# Green's formula defect


def _positive_part_integral(r, g, s):
    """Integral of g over {s > 0}, crossings located by linear interpolation of s."""
    total = 0.0
    for i in range(r.size - 1):
        s0, s1 = s[i], s[i + 1]
        g0, g1 = g[i], g[i + 1]
        h = r[i + 1] - r[i]
        if s0 > 0 and s1 > 0:
            total += 0.5 * h * (g0 + g1)
        elif s0 > 0 or s1 > 0:
            x = s0 / (s0 - s1)  # crossing at r[i] + x h
            gx = g0 + x * (g1 - g0)
            if s0 > 0:
                total += 0.5 * x * h * (g0 + gx)
            else:
                total += 0.5 * (1 - x) * h * (gx + g1)
    return total


def green_defect(
    geom: ModelGeometry,
    f: RadialField,
    phi: RadialField,
    levels: int = 6,
) -> float:
    """Extrapolated value of the integral of (phi Delta f - f Delta phi) over {f > 0}.

    Each level m_k = 1e-3 * 2^-k integrates (phi Delta(f - m) - (f - m) Delta phi) over
    {f > m_k}; the values are extrapolated linearly to m = 0.
    """
    if f.grid is not phi.grid and not np.array_equal(f.r, phi.r):
        raise DomainError("f and phi must share a grid")
    if np.any(phi.values < 0):
        raise DomainError("phi must be nonnegative")
    r = f.r
    if not np.any(f.values > 0):
        return 0.0
    lap_f = radial_laplacian(geom, f).values
    lap_phi = radial_laplacian(geom, phi).values
    w = geom.volume_weight(r)
    ms = 1e-3 * 2.0 ** -np.arange(levels)
    vals = []
    for mk in ms:
        g = w * (phi.values * lap_f - (f.values - mk) * lap_phi)
        vals.append(_positive_part_integral(r, g, f.values - mk))
    slope, intercept = np.polyfit(ms, vals, 1)
    return float(intercept)


def green_defect_refined(
    geom: ModelGeometry,
    f: Callable[[np.ndarray], np.ndarray],
    phi: Callable[[np.ndarray], np.ndarray],
    grid: RadialGrid,
    levels: int = 6,
) -> float:
    """Richardson combination of green_defect on grid and grid.refined()."""
    fine = grid.refined()
    coarse_val = green_defect(geom, RadialField.sample(grid, f), RadialField.sample(grid, phi), levels)
    fine_val = green_defect(geom, RadialField.sample(fine, f), RadialField.sample(fine, phi), levels)
    return (4 * fine_val - coarse_val) / 3


# ---------------------------------------------------------------------------
# annular test functions


def annulus_profile(r, eps: float):
    """phi, phi', phi'' for phi = 0 below eps/2, 1 above eps, quintic smoothstep between."""
    r = np.asarray(r, dtype=float)
    x = (r - eps / 2) / (eps / 2)
    return _smootherstep(x), _smootherstep_d1(x) * (2 / eps), _smootherstep_d2(x) * (2 / eps) ** 2


def annulus_test_function(geom: ModelGeometry, eps: float, num: int = 4001):
    """Returns (phi on [eps/4, 2 eps], max Laplacian, mass of the positive Laplacian)."""
    if not (0 < eps and 2 * eps < geom.upper):
        raise DomainError("annulus (eps/2, eps) must sit well inside the domain")
    grid = RadialGrid.uniform(eps / 4, 2 * eps, num)
    phi, _, _ = annulus_profile(grid.nodes, eps)
    # the Laplacian only lives on the annulus; integrate it on its own dense grid
    ra = np.linspace(eps / 2, eps, 20001)
    _, d1, d2 = annulus_profile(ra, eps)
    lap = d2 + radial_drift(geom, ra) * d1
    mass = float(np.trapezoid(np.maximum(lap, 0.0) * geom.volume_weight(ra), ra))
    return RadialField(grid, phi), float(lap.max()), mass


# ---------------------------------------------------------------------------
# uniqueness energy


@dataclass(frozen=True, eq=False)
class EnergyReport:
    J: TimeSeries
    alpha: float
    beta: float
    epsilon: float
    bound: Callable[[float], float]
    violated: bool
    rate: float = 0.0
    inequalities_hold: bool = True
    exponent: int = 0

    def bound_values(self) -> np.ndarray:
        return np.array([self.bound(t) for t in self.J.times])


def _affine_exp_bound(J0, a, B, t):
    if a == 0:
        return J0 + B * t
    return J0 * math.exp(a * t) + math.expm1(a * t) * B / a


def uniqueness_energy(flowA, flowB, eps: float, *, rtol: float = 1e-9) -> EnergyReport:
    """J(t) = integral of (u^(eta+1) - u~^(eta+1))_+ phi over the tube, with its integrated bound.

    flowB plays the reference u~. The bound integrates J' <= alpha J + beta eps^(m-n-2)
    from the measured J(0); ``rtol`` absorbs quadrature round-off.
    """
    sA, sB = flowA.final, flowB.final
    if sA.geom != sB.geom or not np.array_equal(sA.grid.nodes, sB.grid.nodes):
        raise DomainError("flows must share geometry and grid")
    if not np.allclose(flowA.times, flowB.times, rtol=0, atol=1e-12):
        raise DomainError("flows must share output times")
    geom = sA.geom
    m, n = geom.m, geom.n
    eta = float(geom.eta)
    r = sA.grid.nodes
    if eps / 2 <= r[0]:
        raise DomainError("annulus must clear the inner end of the grid")
    uA, uB = flowA.u_snapshots(), flowB.u_snapshots()
    times = np.asarray(flowA.times)
    phi, _, _ = annulus_profile(r, eps)
    _, _, mass = annulus_test_function(geom, eps)
    meas = sA.grid.trapezoid_weights() * geom.volume_weight(r)
    w = uA ** (eta + 1) - uB ** (eta + 1)
    J = np.array([np.sum(np.maximum(row, 0.0) * phi * meas) for row in w])

    minus_R = float(np.max(-geom.base_scalar_curvature(r)))
    inf_ref = float(uB.min())
    sup_u = float(max(uA.max(), uB.max()))
    alpha = (eta + 1) * minus_R / inf_ref
    power = m - n - 2
    beta = (eta + 1) * (m - 1) / eta * sup_u**eta * mass / eps**power
    # on {w > 0} the curvature term is bounded by a multiple of w; with sup(-R) < 0 the
    # lower estimate b^eta - a^eta >= eta w / ((eta+1) b) supplies the (negative) rate
    rate = alpha if minus_R >= 0 else eta * minus_R / sup_u
    B = beta * eps**power
    J0 = float(J[0])

    def bound(t, J0=J0, rate=rate, B=B):
        return _affine_exp_bound(J0, rate, B, t - times[0])

    scale = float(np.sum(np.maximum(uA, uB).max(axis=0) ** (eta + 1) * phi * meas))
    violated = any(J[i] > bound(times[i]) + rtol * scale for i in range(times.size))

    lo, hi = np.minimum(uA, uB).ravel(), np.maximum(uA, uB).ravel()
    ok_over_a, ok_over_b = power_difference_bounds(lo, hi, eta)
    return EnergyReport(
        TimeSeries(times, J),
        alpha,
        beta,
        eps,
        bound,
        bool(violated),
        rate=rate,
        inequalities_hold=bool(ok_over_a.all() and ok_over_b.all()),
        exponent=power,
    )
