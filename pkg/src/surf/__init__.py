"""Sparse unit-rank tensor regression: stagewise paths, ACS baseline, CP deflation."""
from .acs import AcsConfig, acs_fit, acs_path
from .dataset import DatasetError, StandardizationRecord, TensorDataset, standardize
from .deflation import CPModel, CvConfig, predict, rmse, sequential_fit, sparsity_of_coefficients
from .simulate import SimSpec, gen_dataset, gen_split
from .solver import NullModel, SurfConfig, SurfPath, lambda_max, trace_path
from .tensor import UnitRankTerm, cp_sum, materialize

__version__ = "0.1.0"
