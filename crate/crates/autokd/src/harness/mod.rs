//! End-to-end driver: datasets, teacher management, the evaluation function,
//! search and retrain phases, trial logging, and analysis reports.

pub mod analyze;
pub mod config;
pub mod dataset;
pub mod search;
pub mod stats;
pub mod teacher;

pub use analyze::{analyze, read_trial_log, write_trial_log};
pub use config::RunConfig;
pub use dataset::{make_synthetic, Dataset, DatasetKind};
pub use search::{
    ablation_grid, ensure_teacher, retrain, run_search, AblationGrid, RetrainReport,
    SearchContext, SearchOutcome, SearchState,
};
pub use stats::{rank_correlation_report, spearman, RankReport};
pub use teacher::{train_teacher, TeacherLogits, TeacherSpec};
