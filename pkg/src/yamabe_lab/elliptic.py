"""Radial elliptic side problems.

* :func:`scalar_flat_gauge` - positive U on the tube (0, eps) with
  ``-Delta U + (m-2)/(4(m-1)) R U = 0`` and U(eps) = 1, so U^(4/(m-2)) g0 is
  scalar flat there.
* :func:`lowest_dirichlet_eigenvalue` - inverse iteration for the bottom of
  the Dirichlet spectrum of -Delta on the tube.
* :func:`singular_yamabe_profile` - the complete conformal metric of constant
  scalar curvature -m(m-1) that blows up like k r^-2 along N.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .geometry import (
    DomainError,
    Model,
    ModelGeometry,
    RadialField,
    RadialGrid,
    _drift_on_grid,
    apply_tridiagonal,
    tridiagonal_operator,
)

logger = logging.getLogger(__name__)

__all__ = [
    "NoConvergence",
    "NonPositiveSolution",
    "WrongRegime",
    "EllipticSolution",
    "DirichletEigenpair",
    "scalar_flat_gauge",
    "lowest_dirichlet_eigenvalue",
    "lowest_dirichlet_eigenpair",
    "singular_yamabe_profile",
    "blowup_coefficient",
]


class NoConvergence(RuntimeError):
    pass


class NonPositiveSolution(RuntimeError):
    pass


class WrongRegime(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EllipticSolution:
    field: RadialField
    residual_norm: float
    boundary_data: dict
    asymptote: dict | None = None
    geom: ModelGeometry | None = None

    def conformal_factor(self, r):
        """U^(4/(m-2)) at r; constant extension by the end values outside the grid."""
        vals = np.interp(r, self.field.r, self.field.values)
        return vals ** (4 / (self.geom.m - 2))


def _banded(bands):
    sub, diag, sup = bands
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = sup[:-1]
    ab[1] = diag
    ab[2, :-1] = sub[1:]
    return ab


def _check_positive(values, what):
    if np.any(values <= 0):
        raise NonPositiveSolution(f"{what} lost positivity (min {values.min():.3e})")


def scalar_flat_gauge(geom: ModelGeometry, eps: float, num: int = 400) -> EllipticSolution:
    if not 0 < eps < geom.upper:
        raise DomainError("eps must lie strictly inside the radial domain")
    grid = RadialGrid.staggered(eps, num)
    r = grid.nodes
    m = geom.m
    bands = tridiagonal_operator(r, _drift_on_grid(geom, grid), inner="axis", outer="dirichlet")
    coeff = (m - 2) / (4 * (m - 1)) * geom.base_scalar_curvature(r)
    sub, diag, sup = bands
    # -Delta U + coeff U = 0, last row U = 1
    A = (-sub, -diag + coeff, -sup)
    ab = _banded(A)
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    rhs = np.zeros(r.size)
    rhs[-1] = 1.0
    U = solve_banded((1, 1), ab, rhs)
    _check_positive(U, "scalar-flat gauge")
    resid = -apply_tridiagonal(bands, U) + coeff * U
    resid[-1] = U[-1] - 1.0
    return EllipticSolution(
        RadialField(grid, U),
        float(np.max(np.abs(resid))),
        {"outer": ("dirichlet", 1.0), "inner": "axis"},
        geom=geom,
    )


@dataclass(frozen=True, eq=False)
class DirichletEigenpair:
    value: float
    field: RadialField
    iterations: int

    def rayleigh_quotient(self, geom: ModelGeometry) -> float:
        """Weighted quotient <v, -Lv> / <v, v> with the tube volume measure."""
        grid = self.field.grid
        v = self.field.values
        bands = tridiagonal_operator(grid.nodes, _drift_on_grid(geom, grid), inner="axis", outer="dirichlet")
        Lv = apply_tridiagonal(bands, v)
        Lv[-1] = 0.0
        w = grid.trapezoid_weights() * geom.volume_weight(grid.nodes)
        return float(np.sum(w * v * -Lv) / np.sum(w * v * v))


def lowest_dirichlet_eigenpair(
    geom: ModelGeometry, eps: float, num: int = 400, tol: float = 1e-14, max_iter: int = 500
) -> DirichletEigenpair:
    if not 0 < eps < geom.upper:
        raise DomainError("eps must lie strictly inside the radial domain")
    # last node is the Dirichlet wall; unknowns live on the staggered interior
    h = eps / num
    nodes = np.append(h / 2 + h * np.arange(num), eps)
    grid = RadialGrid(nodes, RadialGrid.staggered(eps, 16).grading)
    bands = tridiagonal_operator(nodes, _drift_on_grid(geom, grid), inner="axis", outer="dirichlet")
    sub, diag, sup = (b[:-1].copy() for b in bands)
    sup[-1] = 0.0
    ab = _banded((-sub, -diag, -sup))
    x = np.ones(num)
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = solve_banded((1, 1), ab, x)
        new_lam = float(np.dot(x, x) / np.dot(x, y))
        x = y / np.max(np.abs(y))
        if it > 1 and abs(new_lam - lam) <= tol * abs(new_lam):
            lam = new_lam
            break
        lam = new_lam
    else:
        raise NoConvergence("inverse iteration did not converge")
    # one more application gives the quotient for the final vector
    y = solve_banded((1, 1), ab, x)
    lam = float(np.dot(x, x) / np.dot(x, y))
    x = y / np.max(np.abs(y))
    values = np.append(np.abs(x), 0.0)
    return DirichletEigenpair(lam, RadialField(grid, values), it)


def lowest_dirichlet_eigenvalue(geom: ModelGeometry, eps: float, num: int = 400) -> float:
    return lowest_dirichlet_eigenpair(geom, eps, num).value


def blowup_coefficient(m: int, n: int) -> float:
    """Leading coefficient k of u ~ k r^-2 for the complete metric of curvature -m(m-1)."""
    return (2 * n + 2 - m) / m


def singular_yamabe_profile(
    geom: ModelGeometry,
    r_min: float,
    *,
    ratio: float = 1.02,
    h_max: float = 0.01,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> EllipticSolution:
    """Solve -4(m-1)/(m-2) Delta U + R U = -m(m-1) U^((m+2)/(m-2)) with U = u^eta."""
    m, n = geom.m, geom.n
    if not geom.complete_side:
        raise WrongRegime(f"n={n} <= (m-2)/2: no complete negative-curvature metric")
    eta = float(geom.eta)
    k = blowup_coefficient(m, n)
    pole = geom.model is Model.SPHERE_TUBE
    grid = RadialGrid.geometric(r_min, geom.upper, ratio, h_max=h_max, pole=pole)
    r = grid.nodes
    bands = tridiagonal_operator(
        r,
        _drift_on_grid(geom, grid),
        inner="dirichlet",
        outer="pole" if pole else "mirror",
        pole_codim=geom.pole_codim,
    )
    cL = 4 * (m - 1) / (m - 2)
    p = (m + 2) / (m - 2)
    R0 = geom.base_scalar_curvature(r)
    target = -m * (m - 1)
    U = (k * r**-2.0) ** eta
    U_bc = U[0]

    def residual(U):
        F = -cL * apply_tridiagonal(bands, U) + R0 * U - target * U**p
        F[0] = U[0] - U_bc
        return F

    absbands = tuple(np.abs(b) for b in bands)

    def scale(U):
        # magnitude of the individual terms, so the test is relative to round-off
        return cL * apply_tridiagonal(absbands, U) + np.abs(R0 * U) + abs(target) * U**p + 1.0

    F = residual(U)
    for it in range(1, max_iter + 1):
        sub, diag, sup = bands
        J = (-cL * sub, -cL * diag + R0 - target * p * U ** (p - 1), -cL * sup)
        ab = _banded(J)
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
        dU = solve_banded((1, 1), ab, -F)
        step = 1.0
        norm0 = np.max(np.abs(F) / scale(U))
        while True:
            trial = U + step * dU
            if np.all(trial > 0):
                Ft = residual(trial)
                if np.max(np.abs(Ft) / scale(trial)) <= (1 - 1e-4 * step) * norm0 or step < 1e-6:
                    break
            step *= 0.5
            if step < 1e-12:
                raise NoConvergence("line search failed in the singular profile solve")
        U, F = trial, Ft
        logger.debug("profile newton %d: step %.3g residual %.3e", it, step, np.max(np.abs(F) / scale(U)))
        if np.max(np.abs(F) / scale(U)) <= tol:
            break
    else:
        raise NoConvergence("Newton iteration for the singular profile did not converge")
    _check_positive(U, "singular profile")
    u = U ** (1 / eta)
    # leading-order fit on the innermost decade, excluding the Dirichlet node
    sel = (r > r_min) & (r <= 10 * r_min)
    slope, intercept = np.polyfit(np.log(r[sel]), np.log(u[sel]), 1)
    asym = {"exponent": float(slope), "coefficient": float(math.exp(intercept)), "k_seed": k}
    return EllipticSolution(
        RadialField(grid, U),
        float(np.max(np.abs(F) / scale(U))),
        {"inner": ("dirichlet", float(U_bc)), "outer": "pole" if pole else "mirror"},
        asymptote=asym,
        geom=geom,
    )
