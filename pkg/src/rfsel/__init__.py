"""Random-forest and random-ferns feature selection with a bootstrap evaluation harness."""

from .dataset import Dataset, DatasetError, bootstrap_resample, ingest_csv
from .evaluation import MethodSpec, compare_methods, run_bootstrap_experiment, scs_analysis
from .ferns import FernsParams, train_ferns
from .forest import ForestParams, train_forest
from .selectors import (Decision, ImportanceSource, run_boruta, run_rface, run_rfe, run_rrf)
from .synthgen import SyntheticSpec, generate_synthetic

__all__ = [
    "Dataset", "DatasetError", "bootstrap_resample", "ingest_csv", "MethodSpec",
    "compare_methods", "run_bootstrap_experiment", "scs_analysis", "FernsParams", "train_ferns",
    "ForestParams", "train_forest", "Decision", "ImportanceSource", "run_boruta", "run_rface",
    "run_rfe", "run_rrf", "SyntheticSpec", "generate_synthetic",
]
