"""Local average estimation and constancy tests for varying and semivarying
coefficient models."""

from .baselines import BaselineSpec, one_step, one_step_grid, two_step
from .constancy import TestResult, psi_n, test_t1, test_t2, test_t3
from .design import CsvSchema, Dataset, GroupedDesign, add_intercept, ingest_csv, read_csv, sort_and_group
from .errors import ConfigError, InputError, LocavgError, NumericalError
from .kernels import Kernel, KernelConstants, kernel_constants, kernel_eval
from .local_average import LocalAverageFit, PointwiseModel, fit_groups, gamma_hat, to_pointwise_model
from .semivarying import ProjectionOperator, SemiVaryingFit, covariance_b, fit_joint, fit_lape
from .smoothing import SmoothedCurve, SmootherSpec, kde, local_poly, nadaraya_watson, smooth_coefficient

__version__ = "0.1.0"

__all__ = [
    "BaselineSpec", "ConfigError", "CsvSchema", "Dataset", "GroupedDesign", "InputError", "Kernel",
    "KernelConstants", "LocalAverageFit", "LocavgError", "NumericalError", "PointwiseModel",
    "ProjectionOperator", "SemiVaryingFit", "SmoothedCurve", "SmootherSpec", "TestResult",
    "add_intercept", "covariance_b", "fit_groups", "fit_joint", "fit_lape", "gamma_hat",
    "ingest_csv", "kde", "kernel_constants", "kernel_eval", "local_poly", "nadaraya_watson",
    "one_step", "one_step_grid", "psi_n", "read_csv", "smooth_coefficient", "sort_and_group",
    "test_t1", "test_t2", "test_t3", "to_pointwise_model", "two_step",
]
