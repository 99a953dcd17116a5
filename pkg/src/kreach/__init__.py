"""Sample-based stochastic reachability with kernel distribution embeddings.

The package estimates safety probabilities for a controlled Markov process
from a finite set of observed transitions, without a model of the dynamics.
A conditional distribution embedding fitted on the transitions turns
conditional expectations into inner products, a backward recursion over the
time horizon propagates the safety value function, and a finite-sample
deviation bound wraps every estimate in a confidence interval.
"""

from .bounds import (
    BoundParams,
    BoundReport,
    bound_B,
    bound_field,
    bounded_difference_constant,
    complexity_term,
    eigen_lower_bound,
    model_eigen_lower_bound,
    select_bandwidth,
)
from .embedding import ConditionalEmbedding, TransitionSample, fit_embedding
from .exceptions import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    NumericalError,
    ParameterError,
    UnsupportedConfigurationError,
    WeightsFormatError,
)
from .kernels import GaussianRBF, regularized_factorize
from .oracle import ErrorStats, Grid, compare, dp_solve, monte_carlo
from .reach import (
    FIRST,
    TERMINAL,
    Box,
    EmptySet,
    Everything,
    Predicate,
    SafetyField,
    SafetySpec,
    StochasticReachability,
    compute_field,
    first_hitting,
    indicator,
    terminal_hitting,
)
from .systems import (
    AffinePolicy,
    CartPoleLinear,
    CartPoleNonlinear,
    ConstantPolicy,
    IntegratorChain,
    MLPController,
    Pendulum4D,
    draw_disturbance,
    fallback_controller,
    load_mlp_weights,
    pendulum_reverse_sample,
    reverse_transitions,
    sample_iid,
    sample_trajectories,
)

__version__ = "0.1.0"

__all__ = [
    "AffinePolicy",
    "BoundParams",
    "BoundReport",
    "Box",
    "CartPoleLinear",
    "CartPoleNonlinear",
    "ConditionalEmbedding",
    "ConfigError",
    "ConstantPolicy",
    "DimensionError",
    "EmptyInputError",
    "EmptySet",
    "ErrorStats",
    "Everything",
    "FIRST",
    "GaussianRBF",
    "Grid",
    "IntegratorChain",
    "MLPController",
    "NumericalError",
    "ParameterError",
    "Pendulum4D",
    "Predicate",
    "SafetyField",
    "SafetySpec",
    "StochasticReachability",
    "TERMINAL",
    "TransitionSample",
    "UnsupportedConfigurationError",
    "WeightsFormatError",
    "bound_B",
    "bound_field",
    "bounded_difference_constant",
    "compare",
    "complexity_term",
    "compute_field",
    "dp_solve",
    "draw_disturbance",
    "eigen_lower_bound",
    "fallback_controller",
    "first_hitting",
    "fit_embedding",
    "indicator",
    "load_mlp_weights",
    "model_eigen_lower_bound",
    "monte_carlo",
    "pendulum_reverse_sample",
    "regularized_factorize",
    "reverse_transitions",
    "sample_iid",
    "sample_trajectories",
    "select_bandwidth",
    "terminal_hitting",
]
