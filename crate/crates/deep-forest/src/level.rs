//! One cascade level: a random forest and a completely-random forest trained
//! with per-level cross-validation, plus feature augmentation.

use crate::data::{stratified_folds, DatasetView, FoldAssignment};
use crate::error::{Error, Result};
use crate::forest::{train_forest_with_design, Design, Forest, ForestKind, ForestParams};
use crate::matrix::Matrix;
use crate::rng::mix;

/// Training parameters shared by both forests of a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelParams {
    pub folds: usize,
    pub trees_per_forest: usize,
    pub feature_subsample: Option<usize>,
    pub max_depth: Option<usize>,
}

/// A trained level: per-fold random and completely-random forests.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeLevel {
    pub rf_fold_models: Vec<Forest>,
    pub crf_fold_models: Vec<Forest>,
    pub fold_assignment: FoldAssignment,
    pub level_index: usize,
}

impl CascadeLevel {
    pub fn fold_count(&self) -> usize {
        self.rf_fold_models.len()
    }

    pub fn class_count(&self) -> usize {
        self.rf_fold_models[0].class_count
    }

    /// Feature width this level was trained on.
    pub fn input_width(&self) -> usize {
        self.rf_fold_models[0].feature_count
    }
}

/// Per-instance class vectors emitted by a level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutput {
    pub rf_vectors: Matrix,
    pub crf_vectors: Matrix,
    pub mean_vectors: Matrix,
    pub out_of_fold: bool,
}

impl LevelOutput {
    pub fn new(rf_vectors: Matrix, crf_vectors: Matrix, out_of_fold: bool) -> Self {
        assert_eq!(rf_vectors.rows(), crf_vectors.rows());
        assert_eq!(rf_vectors.cols(), crf_vectors.cols());
        let mut mean_vectors = Matrix::zeros(rf_vectors.rows(), rf_vectors.cols());
        for ((m, a), b) in mean_vectors
            .as_mut_slice()
            .iter_mut()
            .zip(rf_vectors.as_slice())
            .zip(crf_vectors.as_slice())
        {
            *m = 0.5 * (a + b);
        }
        LevelOutput {
            rf_vectors,
            crf_vectors,
            mean_vectors,
            out_of_fold,
        }
    }

    pub fn len(&self) -> usize {
        self.mean_vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_vectors.rows() == 0
    }
}

/// Trains one level with F-fold cross-validation.
///
/// Fold `f`'s forests are trained on the other folds; each instance's output
/// row comes only from the fold models that never saw it, so the vectors
/// (and the confidences derived from them) are honest.
pub fn train_level(
    data: DatasetView,
    params: &LevelParams,
    level_index: usize,
    seed: u64,
) -> Result<(CascadeLevel, LevelOutput)> {
    if data.len() < params.folds {
        return Err(Error::TooFewInstances {
            context: format!("level {level_index} cross-validation"),
            needed: params.folds,
            found: data.len(),
        });
    }
    let fold_assignment = stratified_folds(data.labels, params.folds, mix(seed, 11))?;
    let design = Design::build(data.features);
    let rf_params = ForestParams {
        kind: ForestKind::Random,
        tree_count: params.trees_per_forest,
        feature_subsample: params.feature_subsample,
        max_depth: params.max_depth,
    };
    let crf_params = ForestParams {
        kind: ForestKind::CompletelyRandom,
        ..rf_params
    };

    let c = data.class_count;
    let mut rf_vectors = Matrix::zeros(data.len(), c);
    let mut crf_vectors = Matrix::zeros(data.len(), c);
    let mut rf_fold_models = Vec::with_capacity(params.folds);
    let mut crf_fold_models = Vec::with_capacity(params.folds);
    for f in 0..params.folds {
        let train_rows = fold_assignment.train_rows(f);
        let rf = train_forest_with_design(
            &design,
            data,
            &train_rows,
            rf_params,
            mix(seed, 12 + 2 * f as u64),
        );
        let crf = train_forest_with_design(
            &design,
            data,
            &train_rows,
            crf_params,
            mix(seed, 13 + 2 * f as u64),
        );
        let t = params.trees_per_forest as f64;
        for i in fold_assignment.members(f) {
            let row = data.features.row(i);
            rf.accumulate_proba(row, rf_vectors.row_mut(i));
            crf.accumulate_proba(row, crf_vectors.row_mut(i));
            for v in rf_vectors.row_mut(i).iter_mut() {
                *v /= t;
            }
            for v in crf_vectors.row_mut(i).iter_mut() {
                *v /= t;
            }
        }
        rf_fold_models.push(rf);
        crf_fold_models.push(crf);
    }

    let level = CascadeLevel {
        rf_fold_models,
        crf_fold_models,
        fold_assignment,
        level_index,
    };
    Ok((level, LevelOutput::new(rf_vectors, crf_vectors, true)))
}

/// Applies a trained level to unseen rows: per forest kind, the mean over
/// the F fold models.
pub fn predict_level(level: &CascadeLevel, features: &Matrix) -> Result<LevelOutput> {
    if features.cols() != level.input_width() {
        return Err(Error::DimensionMismatch {
            expected: level.input_width(),
            found: features.cols(),
        });
    }
    Ok(LevelOutput::new(
        fold_mean(&level.rf_fold_models, features),
        fold_mean(&level.crf_fold_models, features),
        false,
    ))
}

fn fold_mean(models: &[Forest], features: &Matrix) -> Matrix {
    let c = models[0].class_count;
    let mut acc = Matrix::zeros(features.rows(), c);
    for model in models {
        let p = model.predict_matrix(features);
        for (a, v) in acc.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *a += v;
        }
    }
    let k = models.len() as f64;
    for a in acc.as_mut_slice() {
        *a /= k;
    }
    acc
}

/// Next-level input: `original ++ rf_vector ++ crf_vector` per row, width
/// `d + 2C`. Augmentation always starts from the original features, so the
/// width is the same at every level.
pub fn augment_features(original: &Matrix, output: &LevelOutput) -> Matrix {
    assert_eq!(
        original.rows(),
        output.len(),
        "augmentation row-count mismatch"
    );
    let c = output.rf_vectors.cols();
    let cols = original.cols() + 2 * c;
    let mut data = Vec::with_capacity(original.rows() * cols);
    for i in 0..original.rows() {
        data.extend_from_slice(original.row(i));
        data.extend_from_slice(output.rf_vectors.row(i));
        data.extend_from_slice(output.crf_vectors.row(i));
    }
    Matrix::from_vec(data, original.rows(), cols)
}
