import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabe_lab.barrier import Supersolution, TestFunctionPhi, power_factor
from yamabe_lab.flow import (
    BarrierTilde,
    Dirichlet,
    FlowConfig,
    GaugeMismatch,
    Inflated,
    PoleRegularity,
    Restriction,
    ZeroFlux,
    barrier_monitor,
    completeness_length,
    initial_state,
    run,
    step,
    sup_ratio,
)
from yamabe_lab.geometry import DomainError, RadialField, RadialGrid, make_geometry

S3 = make_geometry(3, 0, "sphere_tube")
FINE = FlowConfig(dt_initial=1e-4, dt_max=1e-4)


def round_sphere(num=100):
    grid = RadialGrid.staggered(math.pi, num, pole=True)
    return initial_state(S3, grid, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(dt_initial=0)
    with pytest.raises(ValueError):
        FlowConfig(newton_max_iter=0)


def test_homothety_sup_series():
    res = run(round_sphere(), FINE, 0.1, {"sup_u": lambda s: s.u.max()}, cadence=0.02)
    exact = 1 - 6 * np.asarray(res.times)
    assert np.allclose(res.series["sup_u"], exact, rtol=1e-3)
    assert res.times[-1] == pytest.approx(0.1)


def test_homothety_stays_uniform():
    res = run(round_sphere(), FlowConfig(dt_initial=1e-3, dt_max=1e-2), 0.1)
    u = res.final.u
    assert np.ptp(u) <= 1e-10 * u.max()


def test_homothety_extinction_event():
    res = run(round_sphere(), FINE, 0.3)
    assert res.event == "extinction"
    assert res.event_time == pytest.approx(1 / 6, abs=2e-3)
    assert np.all(res.final.U.values > 0)


def test_flat_steady_state():
    g = make_geometry(4, 1, "flat_tube")
    grid = RadialGrid.uniform(0.1, 1.0, 50)
    st0 = initial_state(g, grid, 2.0, inner_bc=ZeroFlux(), outer_bc=ZeroFlux())
    res = run(st0, FlowConfig(dt_initial=1e-3, dt_max=1e-2), 0.1)
    assert np.allclose(res.final.U.values, 2.0, rtol=1e-12)


def test_zero_duration_run():
    s = round_sphere()
    res = run(s, FINE, s.t, {"sup_u": lambda st: st.u.max()})
    assert res.final is s and res.series["sup_u"] == []


def test_time_increases_and_positivity():
    s = round_sphere()
    nxt = step(s, FINE)
    assert nxt.t > s.t and np.all(nxt.U.values > 0)


def test_refinement_order():
    cfg = FlowConfig(dt_initial=1e-3, dt_max=1e-3)
    finals = []
    for num in (40, 80, 160):
        grid = RadialGrid.staggered(math.pi, num, pole=True)
        s = initial_state(S3, grid, lambda r: (1 + 0.5 * np.cos(r)) ** 0.25)
        finals.append(run(s, cfg, 0.02).final.U)
    probe = np.linspace(0.2, 3.0, 15)
    e1 = np.max(np.abs(finals[0](probe) - finals[1](probe)))
    e2 = np.max(np.abs(finals[1](probe) - finals[2](probe)))
    assert e1 / e2 >= 3


def test_inner_bc_requires_valid_data():
    with pytest.raises(DomainError):
        Inflated(None, 0.5)
    g = make_geometry(3, 0, "flat_tube")
    grid = RadialGrid.uniform(0.1, 1, 20)
    with pytest.raises(DomainError):
        initial_state(g, grid, 1.0, outer_bc=PoleRegularity())


def test_restriction_reproduces_reference():
    ref_grid = RadialGrid.staggered(math.pi, 400, pole=True)
    u0 = lambda r: 1 + 0.5 * np.cos(r)  # noqa: E731
    ref = run(initial_state(S3, ref_grid, u0(ref_grid.nodes) ** 0.25), FINE, 0.02, keep_trace=True)
    grid = RadialGrid.geometric(0.05, math.pi, 1.05, h_max=0.01, pole=True)
    s = initial_state(S3, grid, u0(grid.nodes) ** 0.25, inner_bc=Restriction(ref))
    out = run(s, FINE, 0.02).final
    probe = np.linspace(0.3, 3.0, 10)
    assert np.allclose(np.interp(probe, grid.nodes, out.u), np.interp(probe, ref_grid.nodes, ref.final.u), rtol=2e-3)


def _barrier_setup():
    g = make_geometry(5, 1, "flat_tube")
    fac = power_factor()
    V = Supersolution(1.0, fac, 0.75)
    grid = RadialGrid.geometric(1e-3, 0.5, 1.1)
    tf = TestFunctionPhi(g, 0.1, 0.5, fac)
    return g, fac, V, grid, tf


def test_barrier_monitor_examples():
    g, fac, V, grid, tf = _barrier_setup()
    below = initial_state(g, grid, 0.5 * V.V(grid.nodes), gauge=BarrierTilde(fac), inner_bc=ZeroFlux(), outer_bc=ZeroFlux())
    assert barrier_monitor(below, V, tf) == 0.0
    above = initial_state(g, grid, V.V(grid.nodes) + 1, gauge=BarrierTilde(fac), inner_bc=ZeroFlux(), outer_bc=ZeroFlux())
    # the innermost nodes sit on the plateau phi = 1
    assert barrier_monitor(above, V, tf) == pytest.approx(1.0)
    base = initial_state(g, grid, 1.0, inner_bc=ZeroFlux(), outer_bc=ZeroFlux())
    with pytest.raises(GaugeMismatch):
        barrier_monitor(base, V, tf)


def test_sup_ratio_examples():
    s = round_sphere()
    assert sup_ratio(s, 0.25) == 1.0
    res = run(s, FINE, 0.05)
    assert sup_ratio(res.final, 0.25) == pytest.approx(1 - 6 * 0.05, rel=1e-3)


def test_completeness_length_examples():
    grid = RadialGrid.uniform(0.1, 1.0, 91)
    assert completeness_length(RadialField(grid, np.ones(grid.size)), 0.5) == pytest.approx(0.4)
    fine = RadialGrid.geometric(1e-4, 1.0, 1.01)
    u = RadialField(fine, fine.nodes**-2.0 / 3)
    assert completeness_length(u, 0.5) == pytest.approx(math.log(0.5 / 1e-4) / math.sqrt(3), rel=1e-4)
    with pytest.raises(DomainError):
        completeness_length(u, 2.0)


def _two_runs(data_a, data_b, bc_a, bc_b):
    g = make_geometry(3, 0, "sphere_tube")
    grid = RadialGrid.geometric(0.05, math.pi, 1.1, h_max=0.05, pole=True)
    cfg = FlowConfig(dt_initial=1e-3, dt_max=1e-3)
    out = []
    for data, bc in ((data_a, bc_a), (data_b, bc_b)):
        U0 = np.interp(grid.nodes, np.linspace(0.05, math.pi, data.size), data)
        U0[0] = bc
        s = initial_state(g, grid, U0, inner_bc=Dirichlet(lambda t, v=bc: v))
        out.append(run(s, cfg, 0.01, cadence=0.005).snapshots)
    return out


@settings(max_examples=15, deadline=None)
@given(
    st.lists(st.floats(0.5, 2.0), min_size=6, max_size=6),
    st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6),
    st.floats(0.5, 2.0),
    st.floats(0.0, 1.0),
)
def test_comparison_principle(base, bump, bc, bc_bump):
    a = np.array(base)
    b = a + np.array(bump)
    snaps_a, snaps_b = _two_runs(a, b, bc, bc + bc_bump)
    for ua, ub in zip(snaps_a, snaps_b):
        assert np.all(ua <= ub * (1 + 1e-9))


def test_on_step_sees_every_accepted_state():
    seen = []
    res = run(round_sphere(), FINE, 0.01, on_step=lambda s: seen.append(s.t))
    assert len(seen) == res.steps + 1
    assert seen[0] == 0.0 and np.all(np.diff(seen) > 0)
