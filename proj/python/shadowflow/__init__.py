"""Numerical-error diagnostics for normalizing flows and Hamiltonian MixFlows."""

from ._shadowflow import (
    ConfigError,
    MixFlow,
    NonFiniteError,
    experiment_names,
    hyperbolic_epsilon,
    lambda_min,
    lambda_min_dense,
    resolved_config,
    run_experiment,
    scaling_map_epsilon,
    shadowing_window,
)

__all__ = [
    "ConfigError",
    "MixFlow",
    "NonFiniteError",
    "experiment_names",
    "hyperbolic_epsilon",
    "lambda_min",
    "lambda_min_dense",
    "resolved_config",
    "run_experiment",
    "scaling_map_epsilon",
    "shadowing_window",
]
