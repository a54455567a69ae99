"""Kernel methods for causal inference with negative controls.

Two-stage kernel ridge regressions identify dose-response curves and
heterogeneous effects when an unobserved confounder leaks into a
negative control treatment and a negative control outcome. Everything
is closed form: Gram matrices, two ridge solves, and weighted kernel
averages. A simulation lab benchmarks the estimator against a naive
kernel ridge baseline on designs with known counterfactual curves.
"""

from .bridge import (
    BridgeGrams,
    BridgeModel,
    compute_grams,
    eval_bridge,
    fit_bridge,
    project_stage1,
    solve_coef,
    stage2_fitted_values,
    theoretical_embedding_penalty,
    theoretical_schedule,
)
from .data import Dataset, Schema, from_arrays, ingest, write_dataset_csv
from .effects import (
    EffectCurve,
    EffectRequest,
    TuningPlan,
    estimate_ate,
    estimate_att,
    estimate_cate,
    estimate_ds,
    estimate_te_baseline,
    kernel_specs,
    run_end_to_end,
    tuning_reports,
)
from .embeddings import (
    ConditionalEmbedding,
    UnconditionalEmbedding,
    cme_condition_on_treatment,
    cme_condition_on_v,
    cme_weights,
    mean_embed,
)
from .errors import (
    ConfigError,
    DegenerateScaleError,
    IngestError,
    InputError,
    KernelncError,
    NumericalError,
)
from .kernels import ColumnKernel, KernelSpec, gram, median_heuristic, spec_from_data
from .ridge import (
    DEFAULT_GRID,
    RidgeSystem,
    TuneReport,
    krr_fit_predict,
    loocv_embedding,
    loocv_scalar,
    solve_ridge,
)
from .simlab import (
    ReplicateReport,
    SimDesign,
    dimension_sweep,
    generate,
    run_experiment,
    score_replicate,
    true_curve,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeGrams",
    "BridgeModel",
    "ColumnKernel",
    "ConditionalEmbedding",
    "ConfigError",
    "DEFAULT_GRID",
    "Dataset",
    "DegenerateScaleError",
    "EffectCurve",
    "EffectRequest",
    "IngestError",
    "InputError",
    "KernelSpec",
    "KernelncError",
    "NumericalError",
    "ReplicateReport",
    "RidgeSystem",
    "Schema",
    "SimDesign",
    "TuneReport",
    "TuningPlan",
    "UnconditionalEmbedding",
    "cme_condition_on_treatment",
    "cme_condition_on_v",
    "cme_weights",
    "compute_grams",
    "dimension_sweep",
    "estimate_ate",
    "estimate_att",
    "estimate_cate",
    "estimate_ds",
    "estimate_te_baseline",
    "eval_bridge",
    "fit_bridge",
    "from_arrays",
    "generate",
    "gram",
    "ingest",
    "kernel_specs",
    "krr_fit_predict",
    "loocv_embedding",
    "loocv_scalar",
    "mean_embed",
    "median_heuristic",
    "project_stage1",
    "run_end_to_end",
    "run_experiment",
    "score_replicate",
    "solve_coef",
    "solve_ridge",
    "spec_from_data",
    "stage2_fitted_values",
    "theoretical_embedding_penalty",
    "theoretical_schedule",
    "true_curve",
    "tuning_reports",
    "write_dataset_csv",
]
