"""matchltr: unbiased learning-to-rank for two-sided matching markets.

Simulates popularity-biased implicit feedback between a proactive and a
reactive user side, provides naive / one-sided / two-sided
inverse-propensity-weighted ranking-metric estimators with exact expectation
oracles, and trains matrix-factorization rankers under the matching listwise
losses.
"""

from .core import (
    AssumptionViolationError,
    ContractViolation,
    DataFormatError,
    DivergenceError,
    FoldInfeasibleError,
    FoldPlan,
    InvalidPopulationError,
    MatchLtrError,
    MissingItemError,
    PairObservation,
    PreferenceMatrix,
    RankedList,
    Side,
    SideAssignment,
    UndefinedAverageError,
    UserId,
    proactive,
    rank_of,
    reactive,
)
from .metrics import (
    EstimatorKind,
    EvalRecord,
    LambdaWeight,
    MetricValue,
    dcg_at_k,
    dcg_from_gains,
    estimate_metric,
    expected_metric_exact,
    gain_ipw,
    gain_surrogate,
    gain_true,
    lambda_weight,
    load_eval_report,
    metric_ground_truth,
    metric_ipw1,
    metric_ipw2,
    metric_naive,
    rank_candidates,
    save_eval_report,
)
from .ranker import (
    GradientTables,
    LossKind,
    RankerModel,
    init_model,
    load_model,
    loss_gradient,
    loss_terms,
    loss_user,
    save_model,
    score_backward,
    score_forward,
    score_matrix,
    score_mutual,
)
from .simulate import (
    ExposureModel,
    FeedbackDataset,
    assign_sides,
    exposure_from_popularity,
    latent_preferences,
    load_dataset,
    load_exposure,
    load_fold_plan,
    load_preferences,
    load_side_assignment,
    load_square_preferences,
    make_folds,
    sample_dataset,
    save_dataset,
    save_exposure,
    save_fold_plan,
    save_preferences,
    save_side_assignment,
    synth_preferences,
)
from .train import (
    ExperimentPlan,
    TrainConfig,
    TrainingLog,
    default_method_configs,
    expected_dcg_gain,
    load_experiment_config,
    load_training_log,
    run_experiment,
    save_experiment_config,
    save_training_log,
    test_dcg_records,
    train_model,
    validation_metric,
)
from .util import derive_seed
from .verify import (
    OracleInstance,
    VerificationReport,
    check_instance,
    random_instance,
    run_verification,
    single_pair_witness,
)

__version__ = "0.1.0"
