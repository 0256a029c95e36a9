"""Equilibrium controls for continuous-time Markov chains under
non-exponential discounting: closed-form payoff evaluation, first and
second-order equilibrium classification, best-response fixed-point
search, discrete-time counterparts, and a simulation oracle."""

__version__ = "0.1.0"

from .model import (
    AdmissibleRowSet,
    DirectionFlags,
    ExponentialMixture,
    GenericDiscount,
    GeneratorMatrix,
    InfeasibleRowError,
    ModelError,
    ModelSpec,
    NoMaximumError,
    PiecewisePolynomial,
    RowPayoff,
    StateSpace,
    ValidationReport,
    feasible_directions,
    two_state_generator,
    validate_generator,
)
from .payoff import (
    concat_payoff,
    concat_payoff_vector,
    derivative_payoff_vector,
    payoff_vector,
    payoff_vector_quadrature,
    shifted_payoff_vector,
    transition_matrix,
)
from .equilibrium import (
    Baseline,
    ClassifyOptions,
    EquilibriumReport,
    ExpansionProbe,
    RowGammaProfile,
    SolveOptions,
    Verdict,
    best_response,
    expansion_probe,
    fixed_point_solve,
    gamma_row,
    lambda_bar_row,
    lambda_matrix,
    maximize_gamma_row,
    strong_check,
    weak_check,
)
from .twostate import TwoStateModel, builtin, eg52_alpha
from .discrete import (
    DiscreteModel,
    MeshSequence,
    StepDiscount,
    TransitionMatrix,
    convergence_run,
    discrete_aux,
    discrete_equilibrium_check,
    discrete_solve,
    discrete_value,
    discrete_value_series,
    discrete_value_vector,
    discretize,
    two_state_transition,
)
from .montecarlo import EstimatorResult, PathSample, estimate_payoff, simulate_path
from .config import ConfigError, load_model, parse_model
