"""Radial numerics for Yamabe flows on model manifolds with a removed submanifold."""

from .barrier import (
    BarrierFactor,
    CutoffProfile,
    FactorKind,
    Supersolution,
    TestFunctionPhi,
    barrier_constant,
    borderline_log_factor,
    cutoff_inequality_margin,
    factor_curvature,
    fit_cutoff_constant,
    positivity_radius,
    power_factor,
)
from .comparison import (
    EnergyReport,
    TimeSeries,
    annulus_test_function,
    dini_check,
    green_defect,
    gronwall_bound,
    power_bound,
    uniqueness_energy,
)
from .elliptic import (
    EllipticSolution,
    lowest_dirichlet_eigenvalue,
    scalar_flat_gauge,
    singular_yamabe_profile,
)
from .experiments import ScenarioConfig, ScenarioReport, run_scenario
from .flow import (
    BarrierTilde,
    BaseMetric,
    FlowConfig,
    FlowResult,
    FlowState,
    barrier_monitor,
    completeness_length,
    initial_state,
    run,
    step,
    sup_ratio,
)
from .geometry import Model, ModelGeometry, RadialField, RadialGrid, conformal_scalar_curvature, make_geometry

__all__ = [name for name in dir() if not name.startswith("_")]
