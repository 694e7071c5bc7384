//! Cross-validation protocol, metrics and ensemble voting.

mod ensemble;
mod families;
mod folds;
mod metrics;
mod protocol;

pub use ensemble::{independent_test, tally, Ensemble, TestOutcome, Vote};
pub use families::{CnnFamily, ConstantFamily, ConstantModel, SvmFamily};
pub use folds::{stratified_kfold, FoldPlan};
pub use metrics::{roc_auc, roc_auc_trapezoid, Confusion, Metrics};
pub use protocol::{
    nested_cv, repeat_and_average, AccessLog, Classifier, CvRun, CvSettings, Dataset, FoldResult, ModelFamily,
    RepeatOutcome, RepeatSummary, TrainView,
};
