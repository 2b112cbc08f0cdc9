"""Numerical laboratory for pilot-wave dynamics, pointwise operator values,
and weak values on 1D/2D grids."""

from .derivatives import Scheme, cubic_interp, gradient, laplacian
from .dynamics import (
    AwSeries,
    EvolutionTerms,
    aw_along,
    evolution_terms,
    time_dependent_correction,
    verify_case,
)
from .ensemble import (
    EnsembleReport,
    born_rule_test,
    ensemble_average,
    equivariance_test,
    sample_equilibrium,
)
from .evolution import (
    EvolutionRecord,
    FreeGaussianOracle,
    Method,
    Propagator,
    analytic_state,
    continuity_residual,
    evolve,
)
from .grid import (
    Boundary,
    Grid,
    PolarForm,
    WaveFunction,
    density,
    from_polar,
    inner_product,
    norm,
    normalize,
    to_polar,
)
from .guidance import (
    Trajectory,
    TrajectoryBundle,
    TrajectoryStatus,
    integrate_many,
    integrate_trajectory,
    velocity_at,
    velocity_divergence,
)
from .operators import (
    ActualValueVerdict,
    Hamiltonian,
    Kinetic,
    MomentumAxis,
    Observable,
    PositionAxis,
    PotentialField,
    Scaled,
    SpinComponent,
    Sum,
    WeakValueRecord,
    apply,
    expectation,
    general_weak_value,
    local_eigen_check,
    probe_extrapolate,
    robustness_probe,
    weak_actual_value,
)
from .waveguide import (
    Regime,
    StepScenario,
    bohmian_velocity_in_forbidden,
    delta_sweep,
    identity_check,
    kappa,
    momentum_weak_value_profile,
    v_scale,
)

__version__ = "0.1.0"
