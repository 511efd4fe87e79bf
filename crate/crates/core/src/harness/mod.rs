//! Subject-level cross-validation of the full two-level pipeline, with
//! error tables, frame-wise curves and phase accuracy.

mod cv;
mod folds;
mod report;

pub use cv::{
    run_cv, train_base, BaseModels, CvConfig, CvOutcome, FoldArtifacts, ModelAudit, StackingMode, SubjectPrediction,
};
pub use folds::{make_folds, FoldPlan};
pub use report::{
    curves_csv, emit_outcome, emit_report, framewise_curve, phase_csv, phase_from_areas, prediction_csv,
    report_csv, report_markdown, Curve, ErrorStat, EvalReport, FoldDice, Method, MethodStats, PhaseStats,
    RunMeta, StackingStats,
};
