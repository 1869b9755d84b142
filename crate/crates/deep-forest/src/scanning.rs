//! Multi-grained scanning: sliding-window feature transformation through
//! small forests, producing the cascade's input for image-like data.
//!
//! Scanning forests are fitted per fold, like the cascade levels: a training
//! row is scored only by models that never saw any slice of it, and unseen
//! rows get the fold average. Scoring training rows with forests fitted on
//! them would hand the cascade near-perfect level-one features and stall it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_folds, Dataset, DatasetView};
use crate::error::{Error, Result};
use crate::forest::{train_forest_with_design, Design, Forest, ForestKind, ForestParams};
use crate::matrix::Matrix;
use crate::rng::mix;

/// Scanning configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// `None` selects the defaults `d/4`, `d/6`, `d/8` (zero widths dropped,
    /// duplicates collapsed).
    pub window_sizes: Option<Vec<usize>>,
    pub stride: usize,
    pub trees_per_forest: usize,
    /// Folds for the out-of-fold scoring of training rows.
    #[serde(default = "default_scan_folds")]
    pub folds: usize,
}

fn default_scan_folds() -> usize {
    3
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            window_sizes: None,
            stride: 1,
            trees_per_forest: 30,
            folds: default_scan_folds(),
        }
    }
}

/// Default window widths for `d` features: `d/4`, `d/6`, `d/8` rounded down,
/// zero widths dropped, duplicates collapsed.
pub fn default_windows(feature_count: usize) -> Vec<usize> {
    let mut widths = Vec::new();
    for w in [feature_count / 4, feature_count / 6, feature_count / 8] {
        if w > 0 && !widths.contains(&w) {
            widths.push(w);
        }
    }
    widths
}

/// One window width's per-fold pairs of scanning forests.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScanner {
    pub window: usize,
    pub rf_folds: Vec<Forest>,
    pub crf_folds: Vec<Forest>,
}

/// The fitted multi-grained scanner.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGrainScanner {
    pub windows: Vec<WindowScanner>,
    pub stride: usize,
    pub feature_count: usize,
    pub class_count: usize,
}

impl MultiGrainScanner {
    /// Slices per row for one window width.
    pub fn slice_count(&self, window: usize) -> usize {
        (self.feature_count - window) / self.stride + 1
    }

    /// Total transformed width: `sum_w slice_count(w) * 2C`.
    pub fn output_width(&self) -> usize {
        self.windows
            .iter()
            .map(|w| self.slice_count(w.window) * 2 * self.class_count)
            .sum()
    }

    pub fn fold_count(&self) -> usize {
        self.windows.first().map_or(0, |w| w.rf_folds.len())
    }

    /// Scores every length-w slice of every row, averaging the fold models.
    ///
    /// Output layout: windows in fit order; within a window, slices left to
    /// right; per slice a 2C chunk holding the RF distribution then the CRF
    /// distribution.
    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: features.cols(),
            });
        }
        Ok(self.score_rows(features, None))
    }

    /// Same layout as [`transform`](Self::transform), but each row is scored
    /// only by its own held-out fold's models (the pair that never saw it).
    fn score_rows(&self, features: &Matrix, fold_for_row: Option<&[usize]>) -> Matrix {
        let c = self.class_count;
        let width = self.output_width();
        let mut out = Matrix::zeros(features.rows(), width);
        out.as_mut_slice()
            .par_chunks_mut(width.max(1))
            .enumerate()
            .for_each(|(i, out_row)| {
                let row = features.row(i);
                let pick = fold_for_row.map(|folds| folds[i]);
                let mut at = 0;
                for w in &self.windows {
                    let rf_total: usize = w.rf_folds.iter().map(|m| m.trees.len()).sum();
                    let crf_total: usize = w.crf_folds.iter().map(|m| m.trees.len()).sum();
                    for s in 0..self.slice_count(w.window) {
                        let slice = &row[s * self.stride..s * self.stride + w.window];
                        let (rf_out, crf_out) = out_row[at..at + 2 * c].split_at_mut(c);
                        match pick {
                            Some(f) => {
                                w.rf_folds[f].accumulate_proba(slice, rf_out);
                                w.crf_folds[f].accumulate_proba(slice, crf_out);
                                divide(rf_out, w.rf_folds[f].trees.len());
                                divide(crf_out, w.crf_folds[f].trees.len());
                            }
                            None => {
                                for (rf, crf) in w.rf_folds.iter().zip(&w.crf_folds) {
                                    rf.accumulate_proba(slice, rf_out);
                                    crf.accumulate_proba(slice, crf_out);
                                }
                                divide(rf_out, rf_total);
                                divide(crf_out, crf_total);
                            }
                        }
                        at += 2 * c;
                    }
                }
            });
        out
    }
}

/// Turns summed tree distributions into a mean. A single rounded division
/// keeps unanimous votes at exactly 1.0.
fn divide(values: &mut [f64], count: usize) {
    let k = count as f64;
    for v in values {
        *v /= k;
    }
}

/// Trains per-fold RF/CRF pairs for every window width on all sliding-window
/// slices of the training rows, each slice carrying its parent row's label
/// and fold. Returns the scanner together with the out-of-fold transform of
/// the training rows.
pub fn fit_scanner(
    data: DatasetView,
    config: &ScanConfig,
    seed: u64,
) -> Result<(MultiGrainScanner, Matrix)> {
    let d = data.feature_count();
    if config.stride < 1 {
        return Err(Error::InvalidConfig(
            "scanning stride must be at least 1".into(),
        ));
    }
    if config.trees_per_forest < 1 {
        return Err(Error::InvalidConfig(
            "scanning forests need at least one tree".into(),
        ));
    }
    let windows = match &config.window_sizes {
        Some(list) => {
            if list.is_empty() {
                return Err(Error::InvalidConfig("empty window list".into()));
            }
            for &w in list {
                if w < 1 || w > d {
                    return Err(Error::InvalidConfig(format!(
                        "window width {w} outside 1..={d}"
                    )));
                }
            }
            list.clone()
        }
        None => {
            let defaults = default_windows(d);
            if defaults.is_empty() {
                return Err(Error::NoWindows { features: d });
            }
            defaults
        }
    };

    let assignment = stratified_folds(data.labels, config.folds, mix(seed, 21))?;
    let k = assignment.fold_count();
    let mut scanners = Vec::with_capacity(windows.len());
    for (wi, &window) in windows.iter().enumerate() {
        let slices = (d - window) / config.stride + 1;
        let n_sub = data.len() * slices;
        let mut sub = Vec::with_capacity(n_sub * window);
        let mut sub_labels = Vec::with_capacity(n_sub);
        for i in 0..data.len() {
            let row = data.features.row(i);
            for s in 0..slices {
                sub.extend_from_slice(&row[s * config.stride..s * config.stride + window]);
                sub_labels.push(data.labels[i]);
            }
        }
        let sub_ds = Dataset::new(
            Matrix::from_vec(sub, n_sub, window),
            sub_labels,
            (0..data.class_count).map(|c| c.to_string()).collect(),
        );
        let design = Design::build(&sub_ds.features);
        let wseed = mix(seed, 100 + wi as u64);
        let base = ForestParams {
            kind: ForestKind::Random,
            tree_count: config.trees_per_forest,
            feature_subsample: None,
            max_depth: None,
        };
        let mut rf_folds = Vec::with_capacity(k);
        let mut crf_folds = Vec::with_capacity(k);
        for f in 0..k {
            let rows: Vec<usize> = (0..data.len())
                .filter(|&i| assignment.fold_of(i) != f)
                .flat_map(|i| i * slices..(i + 1) * slices)
                .collect();
            rf_folds.push(train_forest_with_design(
                &design,
                sub_ds.view(),
                &rows,
                base,
                mix(wseed, 2 * f as u64),
            ));
            crf_folds.push(train_forest_with_design(
                &design,
                sub_ds.view(),
                &rows,
                ForestParams {
                    kind: ForestKind::CompletelyRandom,
                    ..base
                },
                mix(wseed, 2 * f as u64 + 1),
            ));
        }
        scanners.push(WindowScanner {
            window,
            rf_folds,
            crf_folds,
        });
    }
    let scanner = MultiGrainScanner {
        windows: scanners,
        stride: config.stride,
        feature_count: d,
        class_count: data.class_count,
    };
    let oof = scanner.score_rows(data.features, Some(assignment.assignments()));
    Ok((scanner, oof))
}
