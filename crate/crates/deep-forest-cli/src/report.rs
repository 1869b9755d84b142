//! Cross-validation harness and the run report it produces.

use std::time::Instant;

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};

use deep_forest::rng::mix;
use deep_forest::{stratified_folds, CascadeConfig, Dataset, LevelDiagnostics};

/// Wall-clock seconds; the only report fields allowed to differ between
/// identically-seeded runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub fold_train_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub data: String,
    pub seed: u64,
    pub cv_folds: usize,
    pub config: CascadeConfig,
    /// Test accuracy per outer fold, percent.
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample (divide by F-1) standard deviation of the fold accuracies.
    pub std_accuracy: f64,
    /// Cascade depth reached in each fold.
    pub fold_levels: Vec<usize>,
    pub fold_diagnostics: Vec<Vec<LevelDiagnostics>>,
    pub timing: Timing,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("report serializes");
        json.push('\n');
        json
    }
}

/// Per-fold cascade seed: depends on the base seed and fold only, so
/// different strategies train on identical fold models when their shared
/// randomness allows.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    mix(mix(seed, 17), fold as u64)
}

/// Outer-fold assignment seed.
pub fn outer_fold_seed(seed: u64) -> u64 {
    mix(seed, 16)
}

/// Runs F-fold cross-validation: stratified outer folds, one cascade per
/// fold, test accuracy on the held-out fold.
pub fn run_cv(
    dataset: &Dataset,
    config: &CascadeConfig,
    folds: usize,
    data_label: &str,
) -> Result<RunReport> {
    ensure!(folds >= 2, "cross-validation needs at least 2 folds");
    let assignment = stratified_folds(&dataset.labels, folds, outer_fold_seed(config.seed))?;
    let total_start = Instant::now();
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut fold_levels = Vec::with_capacity(folds);
    let mut fold_diagnostics = Vec::with_capacity(folds);
    let mut fold_train_seconds = Vec::with_capacity(folds);
    for f in 0..folds {
        let train = dataset.subset(&assignment.train_rows(f));
        let test = dataset.subset(&assignment.members(f));
        let mut fold_config = config.clone();
        fold_config.seed = fold_seed(config.seed, f);
        let train_start = Instant::now();
        let fit = deep_forest::fit(&train, &fold_config)?;
        fold_train_seconds.push(train_start.elapsed().as_secs_f64());
        let predictions = deep_forest::predict(&fit.model, &test.features)?;
        let correct = predictions
            .iter()
            .zip(&test.labels)
            .filter(|(p, &l)| p.class == l)
            .count();
        fold_accuracies.push(100.0 * correct as f64 / test.len() as f64);
        fold_levels.push(fit.model.level_count());
        fold_diagnostics.push(fit.diagnostics);
    }
    let mean = fold_accuracies.iter().sum::<f64>() / folds as f64;
    let var = fold_accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / (folds - 1) as f64;
    Ok(RunReport {
        data: data_label.to_string(),
        seed: config.seed,
        cv_folds: folds,
        config: config.clone(),
        fold_accuracies,
        mean_accuracy: mean,
        std_accuracy: var.sqrt(),
        fold_levels,
        fold_diagnostics,
        timing: Timing {
            fold_train_seconds,
            total_seconds: total_start.elapsed().as_secs_f64(),
        },
    })
}
