"""Tune ML hyperparameters for the performance / energy-efficiency frontier."""

import importlib

__version__ = "0.1.0"

# resolved on first access so adapter processes importing greenfront.adapters
# do not pay for scipy
_EXPORTS = {
    "harness": ["TrialOptions", "TrialResult", "breakeven", "early_stop_check", "run_trial"],
    "meter": ["EnergyReport", "MeterConfig", "MeterSession", "apply_pue", "emissions"],
    "mobo.optimizer": ["Observation", "OptimizerState", "RunOptions", "run_optimization"],
    "mobo.pareto": ["ObjectiveSpec", "ParetoFront", "dominates", "hypervolume2d", "pareto_update"],
    "search_space": ["HyperparameterSpec", "SearchSpace", "cardinality", "load_space", "sobol_sample"],
}
_WHERE = {name: module for module, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE)


def __getattr__(name):
    if name not in _WHERE:
        raise AttributeError(f"module 'greenfront' has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{_WHERE[name]}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(list(globals()) + __all__)
