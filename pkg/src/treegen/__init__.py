"""Tabular data generation and imputation with gradient-boosted tree
diffusion and flow matching."""

from .encoding import Encoder, decode, decode_dataset, encode, fit_encoder
from .errors import (
    PersistenceError,
    PersistenceVersionError,
    TreegenError,
    ValidationError,
)
from .forest import (
    ImputeConfig,
    TabularDiffusionModel,
    TrainConfig,
    generate,
    impute,
    train,
)
from .gbt import Forest, GBTConfig
from .metrics import (
    GowerSpace,
    MetricReport,
    coverage,
    efficiency,
    gower,
    inference_stats,
    mad_diversity,
    mae_min_avg,
    wasserstein,
)
from .persist import load_model, save_model
from .process import NoiseSchedule, ProcessKind, TimeGrid
from .schema import Dataset, TableSchema, Variable, VariableKind, load_dataset

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Encoder", "Forest", "GBTConfig", "GowerSpace", "ImputeConfig",
    "MetricReport", "NoiseSchedule", "PersistenceError", "PersistenceVersionError",
    "ProcessKind", "TableSchema", "TabularDiffusionModel", "TimeGrid",
    "TrainConfig", "TreegenError", "ValidationError", "Variable", "VariableKind",
    "coverage", "decode", "decode_dataset", "efficiency", "encode", "fit_encoder",
    "generate", "gower", "impute", "inference_stats", "load_dataset", "load_model",
    "mad_diversity", "mae_min_avg", "save_model", "train", "wasserstein",
]
