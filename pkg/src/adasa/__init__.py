"""Stochastic approximation with adaptive diagonal preconditioning and biased
gradient oracles, plus the measurement harness that checks observed
convergence rates and bias floors against their predicted exponents.
"""

from ._kernels import BACKEND
from .analysis import (
    BiasDecayFit,
    SlopeFit,
    TheoreticalBound,
    bias_decay_fit,
    bound_curve,
    fit_loglog_slope,
    regime_bound,
    terminal_plateau,
)
from .config import ConfigError, ExperimentConfig, config_hash, derive_run_seed, load_config, parse_config
from .driver import (
    IterateDistribution,
    MarkovOracleSpec,
    SyntheticOracleSpec,
    Trace,
    ZerothOrderOracleSpec,
    asa_step,
    check_spectral_bracket,
    iterate_distribution,
    read_trace,
    run_amsgrad,
    run_asa,
    run_bilevel,
    sample_R,
)
from .experiment import emit_plot_data, run_experiment
from .oracles import (
    GradientSample,
    MarkovStream,
    markov_oracle,
    synthetic_biased_oracle,
    zeroth_order_oracle,
)
from .preconditioners import (
    DiagonalMatrix,
    PreconditionerState,
    clip_spectral,
    coordinate_select,
    spectral_bounds,
    update_adagrad,
    update_amsgrad,
    update_rmsprop,
)
from .problems import (
    Problem,
    default_logistic,
    default_quadratic,
    finite_difference_gradient,
    verify_assumptions,
)
from .schedules import UNBIASED, PowerSchedule, RateRegime, classify_rate_regime, schedule_array, schedule_value

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BiasDecayFit",
    "ConfigError",
    "DiagonalMatrix",
    "ExperimentConfig",
    "GradientSample",
    "IterateDistribution",
    "MarkovOracleSpec",
    "MarkovStream",
    "PowerSchedule",
    "PreconditionerState",
    "Problem",
    "RateRegime",
    "SlopeFit",
    "SyntheticOracleSpec",
    "TheoreticalBound",
    "Trace",
    "UNBIASED",
    "ZerothOrderOracleSpec",
    "asa_step",
    "bias_decay_fit",
    "bound_curve",
    "check_spectral_bracket",
    "classify_rate_regime",
    "clip_spectral",
    "config_hash",
    "coordinate_select",
    "default_logistic",
    "default_quadratic",
    "derive_run_seed",
    "emit_plot_data",
    "finite_difference_gradient",
    "fit_loglog_slope",
    "iterate_distribution",
    "load_config",
    "markov_oracle",
    "parse_config",
    "read_trace",
    "regime_bound",
    "run_amsgrad",
    "run_asa",
    "run_bilevel",
    "run_experiment",
    "sample_R",
    "schedule_array",
    "schedule_value",
    "spectral_bounds",
    "synthetic_biased_oracle",
    "terminal_plateau",
    "update_adagrad",
    "update_amsgrad",
    "update_rmsprop",
    "verify_assumptions",
    "zeroth_order_oracle",
]
