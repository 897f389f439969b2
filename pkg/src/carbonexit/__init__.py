"""Optimal exit of polluting producers: thresholds, compensation schemes,
two-country games and a Monte Carlo cross-check."""

from .core import (EconomyParams, GbmParams, Model, NumericalError, ParameterError, expected_discount_factor,
                   expected_hitting_time, validate)
from .scenario import ConfigError, ResultTable, ScenarioConfig, load_config, parse_config, preset

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "EconomyParams", "GbmParams", "Model", "NumericalError", "ParameterError", "ResultTable",
    "ScenarioConfig", "expected_discount_factor", "expected_hitting_time", "load_config", "parse_config",
    "preset", "validate",
]
