"""Doubly robust post-imputation inference for matrices with missing outcomes."""

__version__ = "0.1.0"

from .data_model import (
    Dataset,
    MethodKind,
    PeptideInference,
    SkipRecord,
    filter_by_rate,
    load_dataset,
    observation_rate,
    write_dataset,
    write_results,
)
from .dr_inference import (
    InferenceConfig,
    OlsFit,
    PseudoOutcome,
    infer_all,
    infer_cross_fit,
    infer_peptide,
    ols_sandwich,
    pseudo_outcomes,
)
from .imputers import (
    ImputedMatrix,
    ImputerConfig,
    impute,
    impute_knn,
    impute_lowdim,
    impute_mean,
    impute_soft,
    load_external_nu,
)
from .multiple_testing import SelectionResult, adjust, bh_qvalues, mirror_rate, select
from .propensity import PropensityFit, fit_logistic
from .sim_bench import (
    BenchResult,
    SimConfig,
    SimTruth,
    gen_dataset,
    gen_noise,
    run_benchmark,
    toy_power_experiment,
)

__all__ = [
    "BenchResult",
    "Dataset",
    "ImputedMatrix",
    "ImputerConfig",
    "InferenceConfig",
    "MethodKind",
    "OlsFit",
    "PeptideInference",
    "PropensityFit",
    "PseudoOutcome",
    "SelectionResult",
    "SimConfig",
    "SimTruth",
    "SkipRecord",
    "adjust",
    "bh_qvalues",
    "filter_by_rate",
    "fit_logistic",
    "gen_dataset",
    "gen_noise",
    "impute",
    "impute_knn",
    "impute_lowdim",
    "impute_mean",
    "impute_soft",
    "infer_all",
    "infer_cross_fit",
    "infer_peptide",
    "load_dataset",
    "load_external_nu",
    "mirror_rate",
    "observation_rate",
    "ols_sandwich",
    "pseudo_outcomes",
    "run_benchmark",
    "select",
    "toy_power_experiment",
    "write_dataset",
    "write_results",
]
