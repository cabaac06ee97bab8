"""Acceptance suite: one test and one PASS/FAIL line per criterion."""

import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from yamabe_lab import barrier as bar
from yamabe_lab.comparison import (
    TimeSeries,
    annulus_test_function,
    dini_check,
    green_defect_refined,
    gronwall_bound,
    power_bound,
    power_difference_bounds,
)
from yamabe_lab.elliptic import lowest_dirichlet_eigenvalue
from yamabe_lab.experiments import (
    barrier_trial,
    default_config,
    gauge_covariance,
    run_scenario,
)
from yamabe_lab.flow import FlowConfig, initial_state, run
from yamabe_lab.geometry import RadialGrid, make_geometry


def verdict(n, checks):
    """checks: list of (name, measured, threshold, ok)."""
    ok = all(c[3] for c in checks)
    detail = "; ".join(f"{name} = {meas:.4g} (limit {thr:.4g})" for name, meas, thr, _ in checks)
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_homothety():
    start = time.perf_counter()
    geom = make_geometry(3, 0, "sphere_tube")
    grid = RadialGrid.staggered(math.pi, 400, pole=True)
    cfg = FlowConfig(dt_initial=1e-4, dt_max=1e-4)
    state = initial_state(geom, grid, 1.0)
    mid = run(state, cfg, 0.1).final
    err = float(np.max(np.abs(mid.u / (1 - 6 * 0.1) - 1)))
    res = run(mid, cfg, 0.3)
    elapsed = time.perf_counter() - start
    t_ext = res.event_time if res.event == "extinction" else float("inf")
    verdict(
        1,
        [
            ("u(0.1) relative error", err, 1e-3, err <= 1e-3),
            ("|extinction - 1/6|", abs(t_ext - 1 / 6), 2e-3, abs(t_ext - 1 / 6) <= 2e-3),
            ("runtime s", elapsed, 10, elapsed <= 10),
        ],
    )


def test_criterion_02_power_curvature_constant():
    r = np.logspace(-12, 0, 400)
    checks = []
    for m, n in ((5, 1), (6, 2), (7, 2)):
        target = (m - 1) * (m - 2 - 2 * n)
        R = bar.factor_curvature(make_geometry(m, n, "flat_tube"), bar.power_factor(), r)
        if target == 0:
            err = float(np.max(np.abs(R)))
        else:
            err = float(np.max(np.abs(R / target - 1)))
        checks.append((f"({m},{n}) deviation from {target}", err, 1e-12, err <= 1e-12))
    verdict(2, checks)


def test_criterion_03_borderline_curvature():
    geom = make_geometry(4, 1, "flat_tube")
    fac = bar.borderline_log_factor()
    r = np.logspace(-12, math.log10(math.exp(-2)), 2000)
    R = bar.factor_curvature(geom, fac, r)
    L = 1e6
    scaled = L ** (1 / 3) * float(bar.factor_curvature(geom, fac, neg_log_r=np.array([L]))[0])
    rel = abs(scaled / 2 - 1)
    verdict(
        3,
        [
            ("min R", float(R.min()), 0.0, bool(np.all(R > 0))),
            ("scaled limit relative error", rel, 0.05, rel <= 0.05),
        ],
    )


def test_criterion_04_derivative_closed_forms():
    geom = make_geometry(4, 1, "flat_tube")
    fac = bar.borderline_log_factor()
    r = np.logspace(-6, -1, 200)
    h = 1e-4 * r
    d1 = (fac.f(r + h) - fac.f(r - h)) / (2 * h)
    d2 = (fac.f(r + h) - 2 * fac.f(r) + fac.f(r - h)) / h**2
    fd = max(np.max(np.abs(d1 / fac.df(r) - 1)), np.max(np.abs(d2 / fac.d2f(r) - 1)))
    sq = float(np.max(np.abs(fac.df_squared(r) / fac.df(r) ** 2 - 1)))
    raw = float(np.max(np.abs(bar.factor_curvature_raw(geom, fac, r) / bar.factor_curvature(geom, fac, r) - 1)))
    verdict(
        4,
        [
            ("derivatives vs differences", float(fd), 1e-6, fd <= 1e-6),
            ("squared derivative", sq, 1e-6, sq <= 1e-6),
            ("simplified vs raw curvature", raw, 1e-9, raw <= 1e-9),
        ],
    )


def test_criterion_05_discrete_barrier():
    checks = []
    for m, n in ((5, 1), (6, 1)):
        geom = make_geometry(m, n, "flat_tube")
        tf = bar.TestFunctionPhi(geom, 0.1, 0.5, bar.power_factor())
        C = bar.fit_cutoff_constant(tf)
        trials = [barrier_trial(m, n, seed, C=C) for seed in range(10)]
        tol = 10 * trials[0]["newton_tol"]
        excess = max(max(d["step_excess"]) for d in trials)
        # data touch V at t = 0 so the test is not vacuous
        touch = min(d["contact"] for d in trials)
        w_gap = max(w - b for d in trials for w, b in zip(d["w"], d["w_bound"]))
        checks += [
            (f"({m},{n}) max(U - V) over steps", excess, tol, excess <= tol),
            (f"({m},{n}) worst initial max(U0/V - 1)", touch, 0.0, touch == 0.0),
            (f"({m},{n}) w - bound", w_gap, tol, w_gap <= tol),
        ]
    verdict(5, checks)


def test_criterion_06_removability():
    start = time.perf_counter()
    rep = run_scenario(default_config("removability"))
    elapsed = time.perf_counter() - start
    by_name = {c.name: c for c in rep.checks}
    mono = by_name["deviation decreases with r_min"]
    final = by_name["final deviation"]
    spread = by_name["sup_ratio spread across K"]
    verdict(
        6,
        [
            ("largest deviation step", mono.measured, 0.0, mono.passed),
            ("deviation at r_min 0.0125", final.measured, 1e-2, final.passed),
            ("sup_ratio spread across K", spread.measured, 0.2, spread.passed),
            ("runtime s", elapsed, 120, elapsed <= 120),
        ],
    )


def test_criterion_07_completeness_side():
    bvp = run_scenario(default_config("bvp", r_min_values=(1e-3, 1e-4, 1e-5, 1e-6)))
    comp = run_scenario(default_config("completeness", L_values=(10.0, 100.0, 1000.0)))
    checks = [(c.name, c.measured, c.threshold, c.passed) for c in bvp.checks + comp.checks if c.criterion == "C7"]
    assert len(checks) == 3
    verdict(7, checks)


def test_criterion_08_comparison_inequalities():
    ts = TimeSeries.sample(lambda t: t**2, 1.0, 1e-3)
    power = dini_check(ts, lambda t, v: 2 * math.sqrt(v), 1e-2, bound=lambda t: power_bound(2, 1, 0, t))
    ts = TimeSeries.sample(lambda t: np.exp(2 * t) + 0.5 * np.expm1(2 * t), 1.0, 1e-3)
    gron = dini_check(ts, lambda t, v: 2 * v + 1, 1e-2, bound=lambda t: gronwall_bound(2, 1, 1, t))

    rng = np.random.default_rng(2024)
    failures = 0
    for eta in (0.25, 0.5, 1.0, 1.5):
        a = rng.uniform(1e-3, 10, 250_000)
        b = a * (1 + rng.exponential(1.0, a.size))
        ok_over_a, ok_over_b = power_difference_bounds(a, b, eta)
        failures += int(np.sum(~ok_over_a) + np.sum(~ok_over_b))

    geom = make_geometry(5, 1, "flat_tube")
    grid = RadialGrid.uniform(0.05, 1.0, 801)

    def phi(r):
        return bar._smootherstep((r - 0.15) / 0.15) * (1 - bar._smootherstep((r - 0.7) / 0.2))

    worst = -math.inf
    for _ in range(100):
        a = rng.normal(size=5)
        c = 0.5 * rng.normal()

        def f(r, a=a, c=c):
            return c + sum(a[j] * np.cos((j + 1) * np.pi * r) for j in range(5))

        worst = max(worst, green_defect_refined(geom, f, phi, grid))
    verdict(
        8,
        [
            ("power equality case excess", power.worst_excess, 0.0, power.ok),
            ("gronwall equality case excess", gron.worst_excess, 0.0, gron.ok),
            ("power difference failures of 1e6", failures, 0, failures == 0),
            ("max green defect", worst, 1e-6, worst <= 1e-6),
        ],
    )


def test_criterion_09_annulus_scaling():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    checks = []
    for m, n in ((5, 1), (4, 1)):
        geom = make_geometry(m, n, "flat_tube")
        mass = [annulus_test_function(geom, e)[2] for e in eps]
        slope = float(np.polyfit(np.log(eps), np.log(mass), 1)[0])
        err = abs(slope - (m - n - 2))
        checks.append((f"({m},{n}) slope error", err, 0.1, err <= 0.1))
    verdict(9, checks)


def test_criterion_10_eigenvalue_growth():
    ball = make_geometry(3, 0, "flat_tube")
    eps = [0.4, 0.2, 0.1, 0.05, 0.025]
    lam = [lowest_dirichlet_eigenvalue(ball, e) for e in eps]
    rel = abs(lam[2] / (math.pi**2 / 0.01) - 1)
    slope = float(np.polyfit(np.log(eps), np.log(lam), 1)[0])
    gaps = np.diff(lam)
    verdict(
        10,
        [
            ("relative error at 0.1", rel, 0.01, rel <= 0.01),
            ("smallest increase", float(gaps.min()), 0.0, bool(np.all(gaps > 0))),
            ("|slope + 2|", abs(slope + 2), 0.1, abs(slope + 2) <= 0.1),
        ],
    )


def test_criterion_11_gauge_covariance():
    checks = []
    for label, ratio in (("uniform", None), ("geometric", 1.1)):
        gc = gauge_covariance(5, 1, ratio=ratio)
        limit = 5 * gc["self_error"]
        checks.append((f"{label} gauge gap", gc["gauge_diff"], limit, gc["gauge_diff"] <= limit))
    verdict(11, checks)
