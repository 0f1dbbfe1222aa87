"""PCS stability inference for sparse linear models."""

__version__ = "0.1.0"

__all__ = [
    "cli",
    "config_manager",
    "core_data",
    "docgen",
    "errors",
    "evaluation",
    "lasso",
    "pcs_core",
    "perturb",
    "simgen",
]
