"""Barrier conformal factors, cutoff test functions and supersolutions.

A barrier factor f(r) defines the background ``g~ = f * gbar`` near the
singular set, where ``gbar`` is scalar flat.  ``f = r^-2`` serves the case
n < (m-2)/2; the borderline case n = (m-2)/2 needs the logarithmic correction
``f = r^-2 (-log r)^(-2/3)``.  The cutoff machinery measures g~-distance to
the outer boundary of the tube (``rho``) and composes it with a fixed cutoff
profile (``phi = chi(rho)``).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .geometry import (
    DomainError,
    Grading,
    Model,
    ModelGeometry,
    RadialField,
    RadialGrid,
    conformal_scalar_curvature,
    radial_drift,
)

logger = logging.getLogger(__name__)

__all__ = [
    "FactorKind",
    "BarrierFactor",
    "power_factor",
    "borderline_log_factor",
    "factor_curvature",
    "factor_curvature_raw",
    "positivity_radius",
    "CutoffProfile",
    "TestFunctionPhi",
    "rho_closed_form",
    "phi_derivatives",
    "cutoff_inequality_margin",
    "fit_cutoff_constant",
    "Supersolution",
    "barrier_constant",
    "to_tilde_gauge",
    "from_tilde_gauge",
    "power_gap_holds",
]


class FactorKind(enum.Enum):
    POWER = "power"
    BORDERLINE_LOG = "borderline_log"


@dataclass(frozen=True)
class BarrierFactor:
    kind: FactorKind
    valid_r_max: float

    def __post_init__(self):
        if self.kind is FactorKind.BORDERLINE_LOG and not self.valid_r_max < 1:
            raise DomainError("the logarithmic factor needs valid_r_max < 1")

    def _log(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r >= 1):
            raise DomainError("logarithmic factor is defined for 0 < r < 1 only")
        return -np.log(r)

    def f(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind is FactorKind.POWER:
            return r**-2.0
        return r**-2.0 * self._log(r) ** (-2 / 3)

    def df(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind is FactorKind.POWER:
            return -2.0 * r**-3.0
        L = self._log(r)
        return (2 / 3 * L ** (-1 / 3) - 2 * L ** (2 / 3)) * r * self.f(r) ** 2

    def d2f(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind is FactorKind.POWER:
            return 6.0 * r**-4.0
        L = self._log(r)
        return (10 / 9 * L ** (-4 / 3) - 10 / 3 * L ** (-1 / 3) + 6 * L ** (2 / 3)) * self.f(r) ** 2

    def df_squared(self, r):
        """(f')^2 written as a polynomial in (-log r) times f^3."""
        r = np.asarray(r, dtype=float)
        if self.kind is FactorKind.POWER:
            return 4.0 * self.f(r) ** 3
        L = self._log(r)
        return 4 * (L ** (-4 / 3) / 9 - 2 / 3 * L ** (-1 / 3) + L ** (2 / 3)) * self.f(r) ** 3

    def check(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r > self.valid_r_max):
            raise DomainError(f"factor evaluated outside (0, {self.valid_r_max}]")


def power_factor(valid_r_max: float = 1.0) -> BarrierFactor:
    return BarrierFactor(FactorKind.POWER, valid_r_max)


def borderline_log_factor(valid_r_max: float = math.exp(-2)) -> BarrierFactor:
    return BarrierFactor(FactorKind.BORDERLINE_LOG, valid_r_max)


def _flat_only(geom: ModelGeometry):
    if geom.model is not Model.FLAT_TUBE:
        raise DomainError("closed-form barrier curvature needs a scalar-flat background")


def factor_curvature(geom: ModelGeometry, factor: BarrierFactor, r=None, *, neg_log_r=None, scalar_flat=None):
    """Scalar curvature of g~ = f * gbar.

    Flat tube: closed form, using the simplified expansion in (-log r) for the
    logarithmic factor.  Radii below the float range can be passed through
    ``neg_log_r`` instead of ``r`` (flat tube only, where r * Delta r is exact).
    Sphere tube: ``r`` must be a grid and ``scalar_flat`` an
    :class:`~yamabe_lab.elliptic.EllipticSolution`; the curvature of
    ``f * U_sf^(4/(m-2)) * g0`` is then evaluated numerically.
    """
    if geom.model is Model.SPHERE_TUBE:
        return _sphere_factor_curvature(geom, factor, r, scalar_flat)
    m, n = geom.m, geom.n
    grid = r if isinstance(r, RadialGrid) else None
    if neg_log_r is not None:
        L = np.asarray(neg_log_r, dtype=float)
        if np.any(L < -math.log(factor.valid_r_max)):
            raise DomainError(f"factor evaluated outside (0, {factor.valid_r_max}]")
        D = np.full(L.shape, float(m - n - 1))
        scalar = L.ndim == 0
    else:
        rr = grid.nodes if grid is not None else np.asarray(r, dtype=float)
        factor.check(rr)
        D = rr * radial_drift(geom, rr)  # r * Delta r
        L = -np.log(rr)
        scalar = rr.ndim == 0
    if factor.kind is FactorKind.POWER:
        R = -(m - 1) * (m - 2 * D)
    else:
        O = D - (m - n - 1)
        R = -(m - 1) * (
            (m + 4) / (9 * L ** (4 / 3))
            - 2 * (n - O) / (3 * L ** (1 / 3))
            - (m - 2 - 2 * n + 2 * O) * L ** (2 / 3)
        )
    R = np.broadcast_to(R, np.shape(L)).astype(float)
    if grid is not None:
        return RadialField(grid, R)
    return float(R) if scalar else R


def factor_curvature_raw(geom: ModelGeometry, factor: BarrierFactor, r):
    """Same curvature from f, f', f'' without algebraic simplification."""
    _flat_only(geom)
    r = np.asarray(r, dtype=float)
    factor.check(r)
    f, df, d2f = factor.f(r), factor.df(r), factor.d2f(r)
    A = radial_drift(geom, r)
    rhs = d2f / f**2 + df * A / f**2 + (geom.m - 6) / 4 * df**2 / f**3
    return -(geom.m - 1) * rhs


def _sphere_factor_curvature(geom, factor, grid, scalar_flat):
    if not isinstance(grid, RadialGrid) or scalar_flat is None:
        raise DomainError("sphere barrier curvature needs a grid and the scalar-flat gauge")
    factor.check(grid.nodes)
    eta = float(geom.eta)
    b = scalar_flat.conformal_factor(grid.nodes)
    U = RadialField(grid, (factor.f(grid.nodes) * b) ** eta)
    return conformal_scalar_curvature(geom, U, outer="one_sided")


def positivity_radius(
    geom: ModelGeometry,
    factor: BarrierFactor,
    *,
    r_lo: float = 1e-12,
    samples: int = 4000,
    scalar_flat=None,
) -> float:
    """Largest scanned delta with positive barrier curvature on (r_lo, delta]."""
    cap = min(factor.valid_r_max, geom.upper if geom.pole is None else geom.upper * (1 - 1e-9))
    scan = np.geomspace(r_lo, cap, samples)
    if geom.model is Model.SPHERE_TUBE:
        grid = RadialGrid(scan, Grading.GEOMETRIC)
        R = factor_curvature(geom, factor, grid, scalar_flat=scalar_flat).values
    else:
        R = factor_curvature(geom, factor, scan)
    bad = np.flatnonzero(R <= 0)
    if bad.size == 0:
        return float(cap)
    if bad[0] == 0:
        logger.info("barrier curvature is not positive near r=%g (R=%g)", scan[0], R[0])
        return 0.0
    return float(scan[bad[0] - 1])


# ---------------------------------------------------------------------------
# cutoff machinery


def _smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (x * (6 * x - 15) + 10)


def _smootherstep_d1(x):
    inside = (x > 0) & (x < 1)
    return np.where(inside, 30 * x**2 * (1 - x) ** 2, 0.0)


def _smootherstep_d2(x):
    inside = (x > 0) & (x < 1)
    return np.where(inside, 60 * x * (1 - x) * (1 - 2 * x), 0.0)


@dataclass(frozen=True)
class CutoffProfile:
    """chi(s) = (1 - S(s-1))^p on [1, 2] with S the quintic smoothstep."""

    p: float = 2.0

    @classmethod
    def for_geometry(cls, geom: ModelGeometry) -> "CutoffProfile":
        return cls(float(max(2, math.ceil(2 * geom.eta))))

    def chi(self, s):
        return (1 - _smootherstep(np.asarray(s, dtype=float) - 1)) ** self.p

    def dchi(self, s):
        x = np.asarray(s, dtype=float) - 1
        base = 1 - _smootherstep(x)
        return -self.p * base ** (self.p - 1) * _smootherstep_d1(x)

    def d2chi(self, s):
        x = np.asarray(s, dtype=float) - 1
        base = 1 - _smootherstep(x)
        p = self.p
        return p * (p - 1) * base ** (p - 2) * _smootherstep_d1(x) ** 2 - p * base ** (p - 1) * _smootherstep_d2(x)


def rho_closed_form(factor: BarrierFactor, epsilon: float, delta: float, r):
    """epsilon times the g~-distance from r to the outer boundary r = delta."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r > delta):
        raise DomainError("rho needs 0 < r <= delta")
    if factor.kind is FactorKind.POWER:
        out = epsilon * np.log(delta / r)
    else:
        if not delta < 1:
            raise DomainError("logarithmic rho needs delta < 1")
        out = 1.5 * epsilon * ((-np.log(r)) ** (2 / 3) - (-np.log(delta)) ** (2 / 3))
    return float(out) if out.ndim == 0 else out


def _rho_inverse(factor: BarrierFactor, epsilon: float, delta: float, rho):
    rho = np.asarray(rho, dtype=float)
    if factor.kind is FactorKind.POWER:
        return delta * np.exp(-rho / epsilon)
    L = (2 * rho / (3 * epsilon) + (-np.log(delta)) ** (2 / 3)) ** 1.5
    return np.exp(-L)


@dataclass(frozen=True)
class TestFunctionPhi:
    geom: ModelGeometry
    epsilon: float
    delta: float
    factor: BarrierFactor
    profile: CutoffProfile = field(default_factory=CutoffProfile)

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")
        if self.delta > self.factor.valid_r_max:
            raise DomainError("delta exceeds the validity range of the factor")

    @property
    def epsilon_eff(self) -> float:
        if self.factor.kind is FactorKind.BORDERLINE_LOG:
            return math.sqrt(self.epsilon)
        return self.epsilon

    def rho(self, r):
        return rho_closed_form(self.factor, self.epsilon, self.delta, r)

    def phi(self, r):
        return self.profile.chi(self.rho(r))

    def r_at_rho(self, rho):
        return _rho_inverse(self.factor, self.epsilon, self.delta, rho)

    def _neg_log_r_at_rho(self, rho):
        rho = np.asarray(rho, dtype=float)
        L_delta = -math.log(self.delta)
        if self.factor.kind is FactorKind.POWER:
            return L_delta + rho / self.epsilon
        return (2 * rho / (3 * self.epsilon) + L_delta ** (2 / 3)) ** 1.5

    def _drift_from_log(self, L, D):
        # -((m-1) f^-1 d(sqrt f)/dr + Delta r / sqrt f) with r*Delta r = D
        m = self.geom.m
        if self.factor.kind is FactorKind.POWER:
            return (m - 1) - D
        return (m - 1) * (L ** (1 / 3) - L ** (-2 / 3) / 3) - D * L ** (1 / 3)

    def drift_coefficient(self, r):
        """-((m-1) f^-1 d(sqrt f)/dr + Delta r / sqrt f); equals n + O(r) for f = r^-2."""
        r = np.asarray(r, dtype=float)
        return self._drift_from_log(-np.log(r), r * radial_drift(self.geom, r))

    def quantities_at_rho(self, rho):
        """(phi, |grad phi|^2, Laplacian of phi) on the level set {rho}, all in g~.

        Works in the log variable, so radii far below the float range are fine
        on the flat tube.
        """
        if self.geom.model is not Model.FLAT_TUBE:
            phi, _, gradsq, lap = phi_derivatives(self, self.r_at_rho(rho))
            return phi, gradsq, lap
        rho = np.asarray(rho, dtype=float)
        L = self._neg_log_r_at_rho(rho)
        D = float(self.geom.m - self.geom.n - 1)
        eps = self.epsilon
        d1, d2 = self.profile.dchi(rho), self.profile.d2chi(rho)
        lap = eps**2 * d2 + self._drift_from_log(L, D) * eps * d1
        return self.profile.chi(rho), eps**2 * d1**2, lap


def phi_derivatives(tf: TestFunctionPhi, r):
    """(phi, dphi/dr, |grad phi|^2 in g~, Laplacian of phi in g~)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r > tf.delta):
        raise DomainError("phi derivatives need 0 < r <= delta")
    eps = tf.epsilon
    rho = tf.rho(r)
    chi, d1, d2 = tf.profile.chi(rho), tf.profile.dchi(rho), tf.profile.d2chi(rho)
    dphi = -eps * np.sqrt(tf.factor.f(r)) * d1
    gradsq = eps**2 * d1**2
    lap = eps**2 * d2 + tf.drift_coefficient(r) * eps * d1
    return chi, dphi, gradsq, lap


def _margin_lhs(tf: TestFunctionPhi, r):
    phi, _, gradsq, lap = phi_derivatives(tf, r)
    return phi, 2 * gradsq / phi - lap


def cutoff_inequality_margin(tf: TestFunctionPhi, C: float, r):
    """(2|grad phi|^2/phi - Delta phi) - C eps_eff phi^(1-1/eta); <= 0 is the target."""
    r = np.asarray(r, dtype=float)
    if np.any(tf.phi(r) <= 0):
        raise DomainError("margin is undefined where phi vanishes")
    phi, lhs = _margin_lhs(tf, r)
    eta = float(tf.geom.eta)
    return lhs - C * tf.epsilon_eff * phi ** (1 - 1 / eta)


def fit_cutoff_constant(tf: TestFunctionPhi, samples: int = 4000) -> float:
    """Smallest C making the cutoff margin nonpositive on a dense sample of the support."""
    # dense in rho on (1, 2), clustered toward rho = 2 where phi -> 0
    t = np.linspace(0, 1, samples + 2)[1:-1]
    rho = 2 - (1 - t) ** 3
    eta = float(tf.geom.eta)

    def ratio(rho):
        phi, gradsq, lap = tf.quantities_at_rho(rho)
        return (2 * gradsq / phi - lap) / (tf.epsilon_eff * phi ** (1 - 1 / eta))

    keep = tf.quantities_at_rho(rho)[0] > 1e-280
    rho = rho[keep]
    vals = ratio(rho)
    i = int(np.argmax(vals))
    best = float(vals[i])
    if 0 < i < rho.size - 1:
        # polish an interior maximum between its sample neighbours
        res = minimize_scalar(
            lambda x: -float(ratio(x)), bounds=(rho[i - 1], rho[i + 1]), method="bounded", options={"xatol": 1e-12}
        )
        best = max(best, -float(res.fun))
    return max(best, 0.0)


# ---------------------------------------------------------------------------
# supersolution


@dataclass(frozen=True)
class Supersolution:
    c: float
    factor: BarrierFactor
    eta: float

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("barrier constant must be positive")

    def V(self, r):
        return self.c * self.factor.f(r) ** (-self.eta)


def barrier_constant(
    U0: RadialField,
    boundary_values: Sequence[float],
    factor: BarrierFactor,
    *,
    eta: float,
    delta: float | None = None,
) -> float:
    """Smallest c with U <= c f^-eta on the parabolic boundary of the tube (0, delta]."""
    bvals = np.asarray(boundary_values, dtype=float)
    if U0.values.size == 0 or bvals.size == 0:
        raise DomainError("barrier constant needs initial and boundary data")
    delta = U0.grid.r_max if delta is None else delta
    mask = U0.r <= delta
    r = U0.r[mask]
    interior = np.max(U0.values[mask] * factor.f(r) ** eta)
    boundary = np.max(bvals) * float(factor.f(delta)) ** eta
    return float(max(interior, boundary))


def to_tilde_gauge(u, f, eta: float, b=1.0):
    """Conformal factor U of g = U^(1/eta) * f * b * g0 from g = u * g0."""
    return (np.asarray(u) / (np.asarray(f) * b)) ** eta


def from_tilde_gauge(U, f, eta: float, b=1.0):
    return np.asarray(U) ** (1 / eta) * np.asarray(f) * b


def power_gap_holds(U, V, eta: float) -> np.ndarray:
    """U^(-1/eta) (U - V) <= (U - V)^(1 - 1/eta) for U > V > 0."""
    U, V = np.asarray(U, dtype=float), np.asarray(V, dtype=float)
    gap = U - V
    lhs = U ** (-1 / eta) * gap
    rhs = gap ** (1 - 1 / eta)
    return lhs <= rhs * (1 + 1e-12)
