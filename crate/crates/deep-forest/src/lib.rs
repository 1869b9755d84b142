//! Deep-forest training with confidence screening.
//!
//! The cascade grows level by level, each level an ensemble of a random
//! forest and a completely-random forest cross-validated on the instances
//! still in play. A screening strategy can finalize high-confidence
//! instances early: `none` keeps everything flowing to the last level,
//! `prefix` cuts at the longest high-accuracy prefix of the confidence
//! ranking, and `binning` cuts where a rank-ordered bin first drops below
//! the target accuracy. Multi-grained scanning, the comparison statistics
//! used to evaluate the variants, and CSV data handling round out the crate.

pub mod cascade;
pub mod data;
pub mod error;
pub mod forest;
pub mod level;
pub mod matrix;
pub mod persist;
pub mod rng;
pub mod scanning;
pub mod screening;
pub mod stats;

pub use cascade::{
    diagnostics_csv, fit, predict, training_accuracy_curve, CascadeConfig, CascadeModel, FitResult,
    LevelDiagnostics, Prediction, ScreeningStrategy, TaMode,
};
pub use data::{
    load_csv, load_features_csv, make_synthetic, stratified_folds, write_csv, Dataset, DatasetView,
    FoldAssignment, LabelColumn,
};
pub use error::{Error, Result};
pub use forest::{
    gini_impurity, train_forest, train_tree, ClassVector, Forest, ForestKind, ForestParams, Tree,
    TreeNode,
};
pub use level::{
    augment_features, predict_level, train_level, CascadeLevel, LevelOutput, LevelParams,
};
pub use matrix::Matrix;
pub use persist::{ModelFile, FORMAT_VERSION};
pub use rng::{mix, stream_rng};
pub use scanning::{default_windows, fit_scanner, MultiGrainScanner, ScanConfig, WindowScanner};
pub use screening::{
    bin_accuracies, bin_partition, binning_threshold, confidence, first_failing_bin,
    prefix_threshold, rank_by_confidence, route, Bin, ConfidenceRecord, Gate, RankedConfidences,
    ScreeningOutcome,
};
pub use stats::{
    friedman_statistic, friedman_test, nemenyi_cd, paired_t_statistic, rank_matrix, AccuracyTable,
    FriedmanResult, F_CRIT_0_05_6_48, Q_CRIT_0_10_7, T_CRIT_0_05_4,
};
