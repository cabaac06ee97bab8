"""Rotationally symmetric model geometries and radial finite differences.

Two models are supported.  ``SPHERE_TUBE`` is the unit round m-sphere with a
totally geodesic n-sphere removed; the distance r from it ranges over
(0, pi/2) (focal sphere at r = pi/2) or (0, pi) when n = 0 (antipode at pi).
``FLAT_TUBE`` is the flat product R^n x R^(m-n) with r the distance from the
R^n factor, truncated at a user supplied ``r_max``.

Radial functions are sampled on a :class:`RadialGrid`.  Every second order
operator in the package is of the form ``a(r) * (f'' + B(r) f')`` and is
discretised with the classical three point formulas on unequal spacings, so
the stencil is exact for quadratics in r.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "PositivityError",
    "Model",
    "ModelGeometry",
    "RadialGrid",
    "RadialField",
    "make_geometry",
    "radial_drift",
    "distance_laplacian_defect",
    "radial_laplacian",
    "radial_derivative",
    "conformal_scalar_curvature",
    "conformal_calculus",
    "tridiagonal_operator",
    "apply_tridiagonal",
]


class DomainError(ValueError):
    """Raised when an argument lies outside the admissible domain."""


class PositivityError(ValueError):
    """Raised when a conformal factor is not strictly positive."""


class Model(enum.Enum):
    SPHERE_TUBE = "sphere_tube"
    FLAT_TUBE = "flat_tube"


@dataclass(frozen=True)
class ModelGeometry:
    m: int
    n: int
    model: Model
    r_max: float = 1.0  # only used by FLAT_TUBE

    def __post_init__(self):
        if self.m < 3:
            raise DomainError(f"dimension m={self.m} must be at least 3")
        if not 0 <= self.n < self.m:
            raise DomainError(f"need 0 <= n < m, got n={self.n}, m={self.m}")
        if self.model is Model.FLAT_TUBE and not self.r_max > 0:
            raise DomainError("flat tube needs r_max > 0")

    @property
    def eta(self) -> Fraction:
        return Fraction(self.m - 2, 4)

    @property
    def codim(self) -> int:
        return self.m - self.n

    @property
    def borderline(self) -> bool:
        return 2 * self.n == self.m - 2

    @property
    def complete_side(self) -> bool:
        """True when n > (m-2)/2."""
        return 2 * self.n > self.m - 2

    @property
    def upper(self) -> float:
        """Upper end of the radial domain."""
        if self.model is Model.FLAT_TUBE:
            return float(self.r_max)
        return np.pi if self.n == 0 else np.pi / 2

    @property
    def pole(self) -> float | None:
        """Coordinate pole at the upper end, if the model has one."""
        return self.upper if self.model is Model.SPHERE_TUBE else None

    @property
    def pole_codim(self) -> int | None:
        # focal S^(m-n-1) for n >= 1 has codimension n+1; antipodal point for n = 0
        if self.model is not Model.SPHERE_TUBE:
            return None
        return self.m if self.n == 0 else self.n + 1

    def base_scalar_curvature(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        value = self.m * (self.m - 1) if self.model is Model.SPHERE_TUBE else 0.0
        return np.full(r.shape, float(value))

    def volume_weight(self, r) -> np.ndarray:
        """Radial density of the volume measure, up to a constant factor."""
        r = np.asarray(r, dtype=float)
        k = self.m - self.n - 1
        if self.model is Model.FLAT_TUBE:
            return r**k
        return np.sin(r) ** k * np.abs(np.cos(r)) ** self.n

    def contains(self, r, *, allow_pole: bool = False) -> bool:
        r = np.asarray(r, dtype=float)
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            return False
        if self.model is Model.FLAT_TUBE or allow_pole:
            return bool(np.all(r <= self.upper))
        return bool(np.all(r < self.upper))


def make_geometry(m: int, n: int, model: Model | str, r_max: float = 1.0) -> ModelGeometry:
    return ModelGeometry(int(m), int(n), Model(model), float(r_max))


def radial_drift(geom: ModelGeometry, r) -> np.ndarray | float:
    """Laplacian of the distance function, A(r) = Delta r."""
    scalar = np.ndim(r) == 0
    r = np.asarray(r, dtype=float)
    if not geom.contains(r):
        raise DomainError(f"r outside the {geom.model.value} domain")
    k = geom.m - geom.n - 1
    if geom.model is Model.FLAT_TUBE:
        out = k / r
    else:
        out = k / np.tan(r) - geom.n * np.tan(r) if geom.n else k / np.tan(r)
    return float(out) if scalar else out


def distance_laplacian_defect(geom: ModelGeometry, r):
    """r * Delta r - (m - n - 1); vanishes identically on the flat tube."""
    if np.any(np.asarray(r) > 1.0):
        raise DomainError("defect is only reported for r <= 1")
    if geom.model is Model.FLAT_TUBE:
        return 0.0 if np.ndim(r) == 0 else np.zeros(np.shape(r))
    return np.asarray(r) * radial_drift(geom, r) - (geom.m - geom.n - 1)


# ---------------------------------------------------------------------------
# grids and fields


class Grading(enum.Enum):
    UNIFORM = "uniform"
    GEOMETRIC = "geometric_toward_zero"
    GEOMETRIC_CAPPED = "geometric_capped"


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    grading: Grading
    ratio: float = 1.0
    pole_flag: bool = False
    n_geometric: int = 0  # intervals in the geometric part of a capped grid

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 16:
            raise DomainError("a radial grid needs at least 16 nodes")
        if nodes[0] <= 0:
            raise DomainError("r_min must be positive")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    @classmethod
    def uniform(cls, r_min: float, r_max: float, num: int, *, pole: bool = False) -> "RadialGrid":
        return cls(np.linspace(r_min, r_max, num), Grading.UNIFORM, pole_flag=pole)

    @classmethod
    def staggered(cls, r_max: float, num: int, *, pole: bool = False) -> "RadialGrid":
        """Uniform grid on (0, r_max] whose first node sits half a cell from 0."""
        h = r_max / (num - 0.5)
        return cls(h / 2 + h * np.arange(num), Grading.UNIFORM, pole_flag=pole)

    @classmethod
    def geometric(
        cls,
        r_min: float,
        r_max: float,
        ratio: float = 1.05,
        *,
        h_max: float | None = None,
        pole: bool = False,
    ) -> "RadialGrid":
        """Nodes with constant ratio from r_min; optionally uniform once spacing hits h_max."""
        if not ratio > 1:
            raise DomainError("geometric ratio must exceed 1")
        if h_max is None:
            count = max(15, int(np.ceil(np.log(r_max / r_min) / np.log(ratio))))
            q = (r_max / r_min) ** (1.0 / count)
            nodes = r_min * q ** np.arange(count + 1)
            nodes[-1] = r_max
            return cls(nodes, Grading.GEOMETRIC, ratio=q, pole_flag=pole)
        # geometric part stops where r * (q - 1) reaches h_max
        r_switch = min(r_max, h_max / (ratio - 1))
        if r_switch <= r_min:
            return cls.uniform(r_min, r_max, max(16, int(np.ceil((r_max - r_min) / h_max)) + 1), pole=pole)
        count = max(1, int(np.ceil(np.log(r_switch / r_min) / np.log(ratio))))
        q = (r_switch / r_min) ** (1.0 / count)
        geo = r_min * q ** np.arange(count + 1)
        k = int(np.ceil((r_max - geo[-1]) / h_max))
        tail = np.linspace(geo[-1], r_max, k + 1)[1:] if k > 0 else np.array([])
        nodes = np.concatenate([geo, tail])
        if nodes.size < 16:
            return cls.geometric(r_min, r_max, ratio ** 0.5, h_max=h_max / 2, pole=pole)
        return cls(nodes, Grading.GEOMETRIC_CAPPED, ratio=q, pole_flag=pole, n_geometric=count)

    def refined(self) -> "RadialGrid":
        """Halve every interval; the coarse nodes are kept (every other fine node)."""
        lo, hi = self.nodes[:-1], self.nodes[1:]
        if self.grading is Grading.UNIFORM:
            mid = 0.5 * (lo + hi)
        elif self.grading is Grading.GEOMETRIC:
            mid = np.sqrt(lo * hi)
        else:
            mid = 0.5 * (lo + hi)
            k = self.n_geometric
            mid[:k] = np.sqrt(lo[:k] * hi[:k])
        nodes = np.empty(2 * self.size - 1)
        nodes[0::2] = self.nodes
        nodes[1::2] = mid
        ratio = np.sqrt(self.ratio)
        return RadialGrid(nodes, self.grading, ratio, self.pole_flag, 2 * self.n_geometric)

    def trapezoid_weights(self) -> np.ndarray:
        h = np.diff(self.nodes)
        w = np.zeros(self.size)
        w[:-1] += h / 2
        w[1:] += h / 2
        return w


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise DomainError(f"field has {values.size} values for {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, grid: RadialGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "RadialField":
        return cls(grid, np.broadcast_to(fn(grid.nodes), grid.nodes.shape))

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def __call__(self, r):
        return np.interp(r, self.grid.nodes, self.values)


# ---------------------------------------------------------------------------
# stencils

# Boundary treatments for the tridiagonal operator:
#   "axis"      smooth across the singular set r = 0 (ghost at -r_0 mirrors r_0)
#   "mirror"    zero flux at the end node (ghost mirrors the neighbour)
#   "pole"      coordinate pole at r_max, Delta f = codim * f''
#   "dirichlet" row left empty, the caller imposes the value
_INNER = {"axis", "mirror", "dirichlet"}
_OUTER = {"pole", "mirror", "dirichlet"}


def _three_point(hm, hp, B):
    """Coefficients (lower, upper) of f'' + B f' at a node with spacings hm, hp.

    Falls back to an upwind first derivative where the central formula would
    produce a negative neighbour weight, which keeps the matrix monotone.
    """
    den = hm * hp * (hm + hp)
    lo = (2 * hp - B * hp**2) / den
    up = (2 * hm + B * hm**2) / den
    neg_up = up < 0
    neg_lo = lo < 0
    if np.any(neg_up):
        lo = np.where(neg_up, 2 * hp / den - B / hm, lo)
        up = np.where(neg_up, 2 * hm / den, up)
    if np.any(neg_lo):
        up = np.where(neg_lo, 2 * hm / den + B / hp, up)
        lo = np.where(neg_lo, 2 * hp / den, lo)
    return lo, up


def tridiagonal_operator(
    nodes: np.ndarray,
    drift: np.ndarray,
    scale: np.ndarray | float = 1.0,
    *,
    inner: str = "axis",
    outer: str = "dirichlet",
    pole_codim: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bands (sub, diag, sup) of ``scale * (f'' + drift * f')``.

    ``sub[i]`` multiplies f[i-1] and ``sup[i]`` multiplies f[i+1] in row i;
    ``sub[0]`` and ``sup[-1]`` are always zero.  ``drift`` is ignored at a
    pole node.
    """
    if inner not in _INNER or outer not in _OUTER:
        raise ValueError(f"unknown boundary treatment {inner!r}/{outer!r}")
    r = np.asarray(nodes, dtype=float)
    B = np.asarray(drift, dtype=float)
    N = r.size
    if N < 3:
        raise DomainError("stencil needs at least 3 nodes")
    sub = np.zeros(N)
    sup = np.zeros(N)
    h = np.diff(r)

    lo, up = _three_point(h[:-1], h[1:], B[1:-1])
    sub[1:-1] = lo
    sup[1:-1] = up
    diag = -(sub + sup)

    if inner == "axis":
        # ghost at -r0 carries f(r0), so its weight folds into the diagonal;
        # the row reduces to up0 * (f1 - f0) and only up0 >= 0 matters
        hm, hp = 2 * r[0], h[0]
        up0 = (2 * hm + B[0] * hm**2) / (hm * hp * (hm + hp))
        sup[0] = up0
        diag[0] = -up0
    elif inner == "mirror":
        sup[0] = 2.0 / h[0] ** 2
        diag[0] = -sup[0]
    if outer == "pole":
        if pole_codim is None:
            raise ValueError("pole treatment needs the pole codimension")
        sub[-1] = 2.0 * pole_codim / h[-1] ** 2
        diag[-1] = -sub[-1]
    elif outer == "mirror":
        sub[-1] = 2.0 / h[-1] ** 2
        diag[-1] = -sub[-1]

    scale = np.broadcast_to(np.asarray(scale, dtype=float), (N,))
    return sub * scale, diag * scale, sup * scale


def apply_tridiagonal(bands, f: np.ndarray) -> np.ndarray:
    sub, diag, sup = bands
    out = diag * f
    out[1:] += sub[1:] * f[:-1]
    out[:-1] += sup[:-1] * f[1:]
    return out


def _one_sided(r3: np.ndarray, f3: np.ndarray, at: int) -> tuple[float, float]:
    """First and second derivative of the quadratic through three points."""
    coeffs = np.polyfit(r3 - r3[at], f3, 2)
    return coeffs[1], 2 * coeffs[0]


def radial_derivative(field: RadialField) -> RadialField:
    """Three point first derivative, one sided at the ends (exact on quadratics)."""
    r, f = field.r, field.values
    h = np.diff(r)
    hm, hp = h[:-1], h[1:]
    den = hm * hp * (hm + hp)
    d = np.empty_like(f)
    d[1:-1] = (hm**2 * f[2:] - hp**2 * f[:-2] + (hp**2 - hm**2) * f[1:-1]) / den
    d[0] = _one_sided(r[:3], f[:3], 0)[0]
    d[-1] = _one_sided(r[-3:], f[-3:], 2)[0]
    return RadialField(field.grid, d)


def _drift_on_grid(geom: ModelGeometry, grid: RadialGrid) -> np.ndarray:
    r = grid.nodes
    B = np.zeros_like(r)
    interior = r < geom.upper if geom.pole is not None else np.ones_like(r, dtype=bool)
    B[interior] = radial_drift(geom, r[interior])
    return B


def radial_laplacian(
    geom: ModelGeometry,
    field: RadialField,
    *,
    inner: str = "one_sided",
    outer: str | None = None,
) -> RadialField:
    """Delta f = f'' + A(r) f' for a radial function.

    ``inner`` is ``"one_sided"`` (quadratic fit through the first three nodes)
    or ``"axis"`` (f extended evenly across r = 0).  ``outer`` defaults to the
    pole limit rule when the grid ends on a coordinate pole, else one sided.
    """
    grid = field.grid
    if grid.size < 3:
        raise DomainError("need at least 3 nodes")
    if outer is None:
        outer = "pole" if grid.pole_flag else "one_sided"
    if outer == "pole" and (geom.pole is None or not np.isclose(grid.r_max, geom.pole)):
        raise DomainError("grid does not end on a coordinate pole of this model")
    r, f = grid.nodes, field.values
    B = _drift_on_grid(geom, grid)
    bands = tridiagonal_operator(
        r,
        B,
        inner="axis" if inner == "axis" else "dirichlet",
        outer="pole" if outer == "pole" else "dirichlet",
        pole_codim=geom.pole_codim,
    )
    lap = apply_tridiagonal(bands, f)
    if inner == "one_sided":
        d1, d2 = _one_sided(r[:3], f[:3], 0)
        lap[0] = d2 + B[0] * d1
    elif inner != "axis":
        raise ValueError(f"unknown inner treatment {inner!r}")
    if outer == "one_sided":
        d1, d2 = _one_sided(r[-3:], f[-3:], 2)
        lap[-1] = d2 + B[-1] * d1
    return RadialField(grid, lap)


def _check_positive(*fields: RadialField):
    for fld in fields:
        if np.any(fld.values <= 0):
            raise PositivityError("conformal factor must be strictly positive")


def conformal_scalar_curvature(
    geom: ModelGeometry,
    U: RadialField,
    R_base: Callable | None = None,
    **laplacian_kw,
) -> RadialField:
    """Scalar curvature of U^(4/(m-2)) g for a radial U."""
    _check_positive(U)
    m = geom.m
    R = (R_base or geom.base_scalar_curvature)(U.r)
    lap = radial_laplacian(geom, U, **laplacian_kw).values
    u = U.values
    vals = u ** (-(m + 2) / (m - 2)) * (R * u - 4 * (m - 1) / (m - 2) * lap)
    return RadialField(U.grid, vals)


def conformal_calculus(
    geom: ModelGeometry, u: RadialField, f: RadialField, **laplacian_kw
) -> tuple[RadialField, RadialField]:
    """Gradient norm and Laplacian of f for the metric u*g, both radial."""
    _check_positive(u)
    df = radial_derivative(f).values
    du = radial_derivative(u).values
    lap_g = radial_laplacian(geom, f, **laplacian_kw).values
    uu = u.values
    gradsq = df**2 / uu
    lap = lap_g / uu + (geom.m - 2) / 2 * du * df / uu**2
    return RadialField(f.grid, gradsq), RadialField(f.grid, lap)
