//! Metrics and protocol: AUC with unknown labels, repeated stratified
//! cross-validation, paired significance tests, and the summary report.

mod auc;
mod cv;
mod report;
mod ttest;

pub use auc::{auc, auc_bounds, sure_auc, AucBounds, ScoredSample};
pub use cv::{make_cv_plan, make_cv_plan_for, CvConfig, CvPlan};
pub use report::{Cell, EvalReport, Metric, ScoringConfig, Significance, REPORT_FORMAT_VERSION};
pub use ttest::{paired_ttest, significance_stars, TTestResult, BONFERRONI_THRESHOLD};
