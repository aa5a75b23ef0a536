"""Regression trees, imputation, and benchmarks for learning with missing values."""

from .data import (
    ColumnStats,
    IncompleteMatrix,
    append_mask,
    as_target,
    complete,
    make_incomplete,
    observed_stats,
    read_csv,
    write_csv,
)
from .synth import AmputationSpec, LabeledDataset, ModelSpec, ampute, gen_model, gen_predictive
from .impute import (
    ConstantImputer,
    GaussianImputer,
    GaussianParams,
    conditional_gaussian,
    fit_constant,
    fit_gaussian_em,
    impute_conditional_mean,
    multiple_impute_predict,
    observed_loglik,
    shrink_covariance,
    transform,
)
from .tree import (
    SplitSpec,
    SurrogateRule,
    TreeHyper,
    TreeModel,
    best_split_mia,
    best_split_observed,
    dump_tree,
    fit_surrogates,
    fit_tree,
    predict,
    selected_root_feature,
)
from .ensemble import BoostModel, ForestModel, fit_boosting, fit_forest, predict_ensemble
from .theory import (
    McEstimate,
    TheoryPoint,
    argmin_c_mia,
    c_mia,
    cart_root_criterion,
    mc_stump_risk,
    risk_closed_forms,
    theory_curves,
)
from .bench import (
    ExperimentConfig,
    RunRecord,
    emit_csv,
    estimate_bayes_rate,
    r2_score,
    relative_scores,
    run_experiment,
    selection_frequency_experiment,
)

__version__ = "0.1.0"
