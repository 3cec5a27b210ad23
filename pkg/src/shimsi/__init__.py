"""Sparse high-order interaction models with exact selective inference."""

from .elastic_net import ElNetConfig, elnet_lambda_path, elnet_tau_path
from .errors import (
    CapRefusalError,
    ConsistencyError,
    DegeneracyError,
    EmptyModelError,
    InputError,
    NumericalDegeneracyError,
    ShimError,
)
from .inference import InferenceResult, TruncationRegion, infer_all
from .lasso_path import ActiveModel, Breakpoint, check_kkt, lambda_max, lambda_path
from .patterns import Dataset, feature_vector, iter_patterns, tree_size
from .tau_path import TauPathResult, fit_at, tau_path

__version__ = "0.1.0"

__all__ = [
    "ActiveModel", "Breakpoint", "CapRefusalError", "ConsistencyError", "Dataset",
    "DegeneracyError", "ElNetConfig", "EmptyModelError", "InferenceResult", "InputError",
    "NumericalDegeneracyError", "ShimError", "TauPathResult", "TruncationRegion", "check_kkt",
    "elnet_lambda_path", "elnet_tau_path", "feature_vector", "fit_at", "infer_all",
    "iter_patterns", "lambda_max", "lambda_path", "tau_path", "tree_size",
]
