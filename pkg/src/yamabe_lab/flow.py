"""Implicit solver for the radially reduced Yamabe flow.

The metric is ``g(t) = U^(1/eta) * gB`` for a fixed radial background gB
(either g0 itself or a barrier background ``f * gbar``), and U solves

    1/(eta+1) d/dt U^(1+1/eta) = -R_B U + (m-1)/eta * Delta_B U.

We step the conservative variable ``W = U^(1+1/eta)`` with backward Euler and
damped Newton; each Newton iteration is one tridiagonal solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import solve_banded

from .barrier import BarrierFactor, Supersolution, TestFunctionPhi, factor_curvature
from .geometry import (
    DomainError,
    Model,
    ModelGeometry,
    RadialField,
    RadialGrid,
    _drift_on_grid,
    apply_tridiagonal,
    conformal_scalar_curvature,
    radial_derivative,
    tridiagonal_operator,
)

logger = logging.getLogger(__name__)

__all__ = [
    "BaseMetric",
    "BarrierTilde",
    "PoleRegularity",
    "ZeroFlux",
    "Dirichlet",
    "Restriction",
    "Inflated",
    "BarrierLevel",
    "FlowConfig",
    "FlowState",
    "FlowResult",
    "FlowError",
    "NewtonDivergence",
    "Extinction",
    "GaugeMismatch",
    "initial_state",
    "step",
    "run",
    "barrier_monitor",
    "sup_ratio",
    "completeness_length",
]


class FlowError(RuntimeError):
    def __init__(self, message: str, state: "FlowState | None" = None):
        super().__init__(message)
        self.state = state


class NewtonDivergence(FlowError):
    pass


class Extinction(FlowError):
    """Terminal event: the conformal factor reached the extinction floor."""

    def __init__(self, message, state, time, complete=True):
        super().__init__(message, state)
        self.time = time
        self.complete = complete


class GaugeMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# gauges


@dataclass(frozen=True)
class BaseMetric:
    pass


@dataclass(frozen=True, eq=False)
class BarrierTilde:
    """Background f * gbar with gbar = U_sf^(4/(m-2)) g0 (gbar = g0 on the flat tube)."""

    factor: BarrierFactor
    scalar_flat: object = None  # EllipticSolution, required on the sphere tube


@dataclass(frozen=True, eq=False)
class Background:
    R: np.ndarray
    scale: np.ndarray
    drift: np.ndarray
    F: np.ndarray  # the background metric is F * g0

    @classmethod
    def build(cls, geom: ModelGeometry, grid: RadialGrid, gauge) -> "Background":
        r = grid.nodes
        if isinstance(gauge, BaseMetric):
            one = np.ones_like(r)
            return cls(geom.base_scalar_curvature(r), one, _drift_on_grid(geom, grid), one)
        if not isinstance(gauge, BarrierTilde):
            raise GaugeMismatch(f"unknown gauge {gauge!r}")
        if grid.pole_flag:
            raise DomainError("barrier backgrounds do not reach the coordinate pole")
        fac = gauge.factor
        fac.check(r)
        f, dlogf = fac.f(r), fac.df(r) / fac.f(r)
        A = _drift_on_grid(geom, grid)
        if geom.model is Model.FLAT_TUBE:
            F, dlogF = f, dlogf
            R = factor_curvature(geom, fac, r)
        else:
            sf = gauge.scalar_flat
            if sf is None:
                raise DomainError("sphere barrier gauge needs the scalar-flat solution")
            b = sf.conformal_factor(r)
            dU = radial_derivative(sf.field)
            dlogb = 4 / (geom.m - 2) * np.interp(r, sf.field.r, dU.values / sf.field.values, right=0.0)
            F, dlogF = f * b, dlogf + dlogb
            eta = float(geom.eta)
            R = conformal_scalar_curvature(geom, RadialField(grid, F**eta), outer="one_sided").values
        drift = A + (geom.m - 2) / 2 * dlogF
        return cls(np.asarray(R, dtype=float), 1.0 / F, drift, F)


# ---------------------------------------------------------------------------
# boundary specifications


@dataclass(frozen=True)
class PoleRegularity:
    """Smooth continuation: across r = 0 at the inner end, the pole rule at the outer end."""


@dataclass(frozen=True)
class ZeroFlux:
    pass


@dataclass(frozen=True, eq=False)
class Dirichlet:
    """Prescribed U (in the active gauge) as a function of time."""

    profile: Callable[[float], float]

    def U_value(self, t, r, conv):
        value = float(self.profile(t))
        if not value > 0:
            raise DomainError("Dirichlet data must be positive")
        return value


@dataclass(frozen=True, eq=False)
class Restriction:
    """Boundary values of u taken from a reference flow (base gauge)."""

    reference: "FlowResult"

    def U_value(self, t, r, conv):
        return conv(self.reference.sample_u(r, t))


@dataclass(frozen=True, eq=False)
class Inflated:
    """Reference flow values of u multiplied by K >= 1."""

    reference: "FlowResult"
    K: float

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("inflation factor K must be at least 1")

    def U_value(self, t, r, conv):
        return conv(self.K * self.reference.sample_u(r, t))


@dataclass(frozen=True, eq=False)
class BarrierLevel:
    supersolution: Supersolution

    def U_value(self, t, r, conv):
        return float(self.supersolution.V(r))


def _treatment(bc, end: str) -> str:
    if isinstance(bc, PoleRegularity):
        return "axis" if end == "inner" else "pole"
    if isinstance(bc, ZeroFlux):
        return "mirror"
    return "dirichlet"


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class FlowConfig:
    dt_initial: float = 1e-4
    dt_max: float = 1e-3
    dt_min: float = 1e-12
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    growth: float = 2.0
    extinction_floor: float = 1e-8

    def __post_init__(self):
        for name in ("dt_initial", "dt_max", "dt_min", "newton_tol", "growth", "extinction_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be positive")


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    U: RadialField
    gauge: object
    geom: ModelGeometry
    inner_bc: object
    outer_bc: object
    background: Background
    U_initial: np.ndarray
    dt: float | None = None

    def __post_init__(self):
        if np.any(self.U.values <= 0):
            raise DomainError("flow state must be positive")
        if self.t < 0:
            raise DomainError("time must be nonnegative")

    @property
    def grid(self) -> RadialGrid:
        return self.U.grid

    @property
    def eta(self) -> float:
        return float(self.geom.eta)

    @property
    def u(self) -> np.ndarray:
        """Conformal factor relative to g0."""
        return self.U.values ** (1 / self.eta) * self.background.F

    @property
    def u_initial(self) -> np.ndarray:
        return self.U_initial ** (1 / self.eta) * self.background.F

    def to_U(self, u, r):
        F = np.interp(r, self.grid.nodes, self.background.F)
        return (u / F) ** self.eta

    def dirichlet_nodes(self) -> list[int]:
        idx = []
        if _treatment(self.inner_bc, "inner") == "dirichlet":
            idx.append(0)
        if _treatment(self.outer_bc, "outer") == "dirichlet":
            idx.append(self.grid.size - 1)
        return idx


def initial_state(
    geom: ModelGeometry,
    grid: RadialGrid,
    U0,
    *,
    gauge=None,
    inner_bc=None,
    outer_bc=None,
    t0: float = 0.0,
) -> FlowState:
    """Build a state from U0 (array, RadialField or callable of r) in the given gauge."""
    gauge = BaseMetric() if gauge is None else gauge
    inner_bc = PoleRegularity() if inner_bc is None else inner_bc
    outer_bc = (PoleRegularity() if grid.pole_flag else ZeroFlux()) if outer_bc is None else outer_bc
    if isinstance(outer_bc, PoleRegularity) and not grid.pole_flag:
        raise DomainError("outer pole regularity needs a grid ending on the pole")
    if grid.pole_flag and (geom.pole is None or not math.isclose(grid.r_max, geom.pole)):
        raise DomainError("grid pole does not match the model")
    if callable(U0) and not isinstance(U0, RadialField):
        U0 = U0(grid.nodes)
    values = U0.values if isinstance(U0, RadialField) else np.broadcast_to(np.asarray(U0, float), grid.nodes.shape)
    bg = Background.build(geom, grid, gauge)
    field_ = RadialField(grid, values)
    return FlowState(t0, field_, gauge, geom, inner_bc, outer_bc, bg, field_.values.copy())


# ---------------------------------------------------------------------------
# stepping


def _operator(state: FlowState):
    bg = state.background
    return tridiagonal_operator(
        state.grid.nodes,
        bg.drift,
        bg.scale,
        inner=_treatment(state.inner_bc, "inner"),
        outer=_treatment(state.outer_bc, "outer"),
        pole_codim=state.geom.pole_codim,
    )


def _boundary_targets(state: FlowState, t: float) -> dict[int, float]:
    r = state.grid.nodes
    out = {}
    conv = lambda u, rr: float(state.to_U(u, rr))  # noqa: E731
    for idx, bc in ((0, state.inner_bc), (r.size - 1, state.outer_bc)):
        if hasattr(bc, "U_value"):
            out[idx] = bc.U_value(t, r[idx], lambda u, rr=r[idx]: conv(u, rr))
    return out


def _newton(state: FlowState, dt: float, bands, targets, config: FlowConfig):
    eta = state.eta
    p = 1 + 1 / eta
    kappa = 1 / p
    c = (state.geom.m - 1) / eta
    R = state.background.R
    sub, diag, sup = bands
    W_old = state.U.values**p
    W = W_old.copy()
    fixed = np.array(sorted(targets), dtype=int)
    W_fix = np.array([targets[i] ** p for i in fixed])
    if fixed.size:
        W[fixed] = W_fix
    for it in range(1, config.newton_max_iter + 1):
        U = W**kappa
        F = W - W_old - dt * (eta + 1) * (-R * U + c * apply_tridiagonal(bands, U))
        if fixed.size:
            F[fixed] = W[fixed] - W_fix
        denom = np.maximum(W_old, W)
        if np.max(np.abs(F) / denom) <= config.newton_tol:
            return W, it
        dU = kappa * U / W
        k = dt * (eta + 1)
        ab = np.zeros((3, W.size))
        ab[1] = 1 + k * (R * dU - c * diag * dU)
        ab[0, 1:] = -k * c * sup[:-1] * dU[1:]
        ab[2, :-1] = -k * c * sub[1:] * dU[:-1]
        # Dirichlet rows: J[i, i] = 1, J[i, i+1] at ab[0, i+1], J[i, i-1] at ab[2, i-1]
        for i in fixed:
            ab[1, i] = 1.0
            if i + 1 < W.size:
                ab[0, i + 1] = 0.0
            if i > 0:
                ab[2, i - 1] = 0.0
        dW = solve_banded((1, 1), ab, -F)
        if not np.all(np.isfinite(dW)):
            return None, it
        neg = dW < 0
        alpha = 1.0
        if np.any(neg):
            alpha = min(1.0, 0.99 * np.min(W[neg] / -dW[neg]))
        W = W + alpha * dW
    return None, config.newton_max_iter


def step(state: FlowState, config: FlowConfig, dt_cap: float | None = None) -> FlowState:
    """One accepted backward Euler step (with internal rejection and retry)."""
    dt = state.dt if state.dt is not None else config.dt_initial
    dt = min(dt, config.dt_max)
    bands = _operator(state)
    floor = config.extinction_floor
    while True:
        dt_try = min(dt, dt_cap) if dt_cap is not None else dt
        t_new = state.t + dt_try
        targets = _boundary_targets(state, t_new)
        W, iters = _newton(state, dt_try, bands, targets, config)
        if W is not None:
            U = W ** (state.eta / (state.eta + 1))
            below = U <= floor
            if np.all(below):
                raise Extinction(f"extinction at t={t_new:.6g}", state, t_new)
            if not np.any(below):
                dt_next = min(dt * config.growth, config.dt_max) if dt_try == dt else dt
                return replace(state, t=t_new, U=RadialField(state.grid, U), dt=dt_next)
        dt = dt_try / 2
        if dt < config.dt_min:
            if W is not None:
                raise Extinction(f"partial extinction near t={state.t:.6g}", state, state.t, complete=False)
            raise NewtonDivergence(f"Newton failed at t={state.t:.6g} down to dt_min", state)
        logger.debug("step rejected at t=%.6g, dt -> %.3g", state.t, dt)


# ---------------------------------------------------------------------------
# runs


@dataclass(eq=False)
class FlowResult:
    times: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    final: FlowState | None = None
    event: str | None = None
    event_time: float | None = None
    steps: int = 0
    trace_t: list = field(default_factory=list)
    trace_u: list = field(default_factory=list)

    def sample_u(self, r: float, t: float) -> float:
        """u at radius r and time t, linear in time between recorded states."""
        ts = self.trace_t
        if not ts:
            raise ValueError("reference flow has no recorded trace")
        grid = self.final.grid
        if t <= ts[0]:
            return float(np.interp(r, grid.nodes, self.trace_u[0]))
        if t >= ts[-1]:
            if t > ts[-1] * (1 + 1e-12) + 1e-15:
                raise ValueError(f"reference flow ends at t={ts[-1]}, asked for t={t}")
            return float(np.interp(r, grid.nodes, self.trace_u[-1]))
        j = int(np.searchsorted(ts, t))
        t0, t1 = ts[j - 1], ts[j]
        a = (t - t0) / (t1 - t0)
        u0 = np.interp(r, grid.nodes, self.trace_u[j - 1])
        u1 = np.interp(r, grid.nodes, self.trace_u[j])
        return float((1 - a) * u0 + a * u1)

    def u_snapshots(self) -> np.ndarray:
        eta = float(self.final.geom.eta)
        F = self.final.background.F
        return np.array([U ** (1 / eta) * F for U in self.snapshots])


def run(
    state: FlowState,
    config: FlowConfig,
    t_end: float,
    monitors: Mapping[str, Callable[[FlowState], float]] | None = None,
    *,
    cadence: float | None = None,
    keep_trace: bool = False,
    on_step: Callable[[FlowState], None] | None = None,
) -> FlowResult:
    """Advance to t_end, sampling monitors at t0 + k*cadence (and at t_end).

    ``on_step`` is called with every accepted state, including the initial one.
    """
    if t_end < state.t:
        raise ValueError("t_end precedes the current time")
    monitors = dict(monitors or {})
    result = FlowResult(series={name: [] for name in monitors})
    result.final = state
    if t_end == state.t:
        return result
    if cadence is None:
        cadence = t_end - state.t
    n_out = max(1, int(round((t_end - state.t) / cadence)))
    outputs = [state.t + (t_end - state.t) * (k + 1) / n_out for k in range(n_out)]

    def record(s):
        result.times.append(s.t)
        result.snapshots.append(s.U.values.copy())
        for name, fn in monitors.items():
            result.series[name].append(float(fn(s)))

    def trace(s):
        if on_step is not None:
            on_step(s)
        if keep_trace:
            result.trace_t.append(s.t)
            result.trace_u.append(s.u.copy())

    record(state)
    trace(state)
    current = state
    for target in outputs:
        while current.t < target * (1 - 1e-14) - 1e-300:
            try:
                current = step(current, config, dt_cap=target - current.t)
            except Extinction as ev:
                result.final = ev.state
                result.event = "extinction" if ev.complete else "partial_extinction"
                result.event_time = ev.time
                return result
            except FlowError as err:
                result.final = err.state or current
                raise
            result.steps += 1
            trace(current)
        current = replace(current, t=target) if abs(current.t - target) < 1e-12 * max(1, target) else current
        record(current)
    result.final = current
    return result


# ---------------------------------------------------------------------------
# monitors


def barrier_monitor(state: FlowState, V: Supersolution, tf: TestFunctionPhi) -> float:
    """max over nodes in (0, delta) of (U - V) * phi, clamped below at 0."""
    gauge = state.gauge
    if not isinstance(gauge, BarrierTilde) or gauge.factor != V.factor:
        raise GaugeMismatch("barrier monitor needs the matching barrier gauge")
    r = state.grid.nodes
    inside = r < tf.delta
    phi = tf.phi(r[inside])
    w = (state.U.values[inside] - V.V(r[inside])) * phi
    return float(max(w.max(initial=0.0), 0.0))


def sup_ratio(state: FlowState, delta: float, *, include_boundary: bool = True) -> float:
    """sup over nodes with r < delta of u(r, t) / u(r, 0)."""
    r = state.grid.nodes
    mask = r < delta
    if not include_boundary:
        for i in state.dirichlet_nodes():
            mask[i] = False
    if not np.any(mask):
        raise DomainError("no nodes below delta")
    return float(np.max(state.u[mask] / state.u_initial[mask]))


def completeness_length(state_or_u, r0: float, grid: RadialGrid | None = None) -> float:
    """Trapezoid quadrature of sqrt(u) dr from r_min to r0."""
    if isinstance(state_or_u, FlowState):
        grid, u = state_or_u.grid, state_or_u.u
    else:
        u = np.asarray(state_or_u.values if isinstance(state_or_u, RadialField) else state_or_u, dtype=float)
        grid = state_or_u.grid if isinstance(state_or_u, RadialField) else grid
    r = grid.nodes
    if not r[0] < r0 <= r[-1]:
        raise DomainError("r0 must lie inside the grid")
    s = np.sqrt(u)
    k = int(np.searchsorted(r, r0))
    rr = np.append(r[:k], r0)
    ss = np.append(s[:k], np.interp(r0, r, s))
    return float(np.trapezoid(ss, rr))
