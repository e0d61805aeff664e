//! Training loop, evaluation metrics, cross-validation and gradient checks.

mod cv;
mod gradcheck;
mod metrics;
mod train;

pub use cv::{fold_assignment, kfold, CvReport, FoldResult, MeanStd};
pub use gradcheck::{
    check_gradients, check_gradients_with, relative_error, trial_configs, trial_instance,
    BlockCheck, FdScheme, GradCheckReport, TrialConfig,
};
pub use metrics::{
    binary_auc, class_metrics, metrics, roc_auc, roc_auc_per_class, roc_curve, ClassCounts,
    ClassMetrics, ConfusionCounts, MetricsSummary,
};
pub use train::{
    batch_gradients, evaluate, predict, train, EpochLog, Evaluation, Prediction, TrainConfig,
    TrainReport,
};
