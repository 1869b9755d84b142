//! Cascade growth: per-level training, the TA schedule, screening strategy
//! dispatch, the stopping rule, and full-model prediction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetView};
use crate::error::{Error, Result};
use crate::level::{predict_level, train_level, CascadeLevel, LevelParams};
use crate::matrix::Matrix;
use crate::rng::mix;
use crate::scanning::{fit_scanner, MultiGrainScanner, ScanConfig};
use crate::screening::{
    binning_threshold, confidence, prefix_threshold, rank_by_confidence, route, ConfidenceRecord,
    Gate, RankedConfidences, ScreeningOutcome,
};

/// Which threshold rule screens instances at each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningStrategy {
    /// Plain cascade: nothing is screened (gcForest).
    None,
    /// Prefix-accuracy threshold (gcForestcs).
    Prefix,
    /// Rank-ordered binning threshold (DBC-Forest).
    Binning,
}

/// How the target accuracy TA is derived from out-of-fold accuracy `a`
/// (`TA = 1 - (1 - a)/2`, halving the error rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaMode {
    /// Recompute from each level's out-of-fold accuracy on its remaining
    /// instances (default).
    HalveErrorPerLevel,
    /// Compute once at level 1 and reuse the value at every later level.
    HalveErrorFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub strategy: ScreeningStrategy,
    pub trees_per_forest: usize,
    pub folds: usize,
    pub bin_size: usize,
    pub ta_mode: TaMode,
    pub max_levels: usize,
    /// Stop growing when fewer instances than this remain; `None` means the
    /// fold count (never raised above it, so per-level CV stays possible).
    pub min_remaining: Option<usize>,
    pub seed: u64,
    pub scanning: Option<ScanConfig>,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            strategy: ScreeningStrategy::Binning,
            trees_per_forest: 50,
            folds: 3,
            bin_size: 100,
            ta_mode: TaMode::HalveErrorPerLevel,
            max_levels: 50,
            min_remaining: None,
            seed: 0,
            scanning: None,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_size < 1 {
            return Err(Error::InvalidConfig("bin_size must be at least 1".into()));
        }
        if self.trees_per_forest < 1 {
            return Err(Error::InvalidConfig(
                "need at least one tree per forest".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig(
                "need at least two folds per level".into(),
            ));
        }
        if self.max_levels < 1 {
            return Err(Error::InvalidConfig("need at least one level".into()));
        }
        Ok(())
    }

    fn effective_min_remaining(&self) -> usize {
        self.min_remaining.unwrap_or(self.folds).max(self.folds)
    }
}

/// The trained cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    /// Levels in training order, each with its screening gate.
    pub levels: Vec<(CascadeLevel, Gate)>,
    pub config: CascadeConfig,
    pub scanner: Option<MultiGrainScanner>,
    pub label_names: Vec<String>,
    /// Width of raw input rows (before any scanning).
    pub feature_count: usize,
    pub class_count: usize,
}

impl CascadeModel {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }
}

/// Per-level training telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    /// 1-based level number.
    pub level_index: usize,
    /// Instances entering the level (before screening).
    pub remaining_count: usize,
    /// Out-of-fold accuracy on those instances.
    pub out_of_fold_accuracy: f64,
    /// Accuracy over all n training instances: frozen predictions for
    /// finalized ones, current out-of-fold predictions for the rest.
    pub cumulative_training_accuracy: f64,
    pub gate: Gate,
}

/// Everything `fit` produces: the model plus training-side instrumentation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: CascadeModel,
    pub diagnostics: Vec<LevelDiagnostics>,
    /// Final (frozen) training prediction per instance.
    pub training_predictions: Vec<usize>,
    /// 1-based level at which each training instance was finalized.
    pub training_exit_levels: Vec<usize>,
    /// Level 1's confidence ranking over the whole training set, for
    /// threshold comparisons.
    pub first_level_records: Vec<ConfidenceRecord>,
}

/// One test-time prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// Confidence of the mean class vector at the exit level.
    pub confidence: f64,
    /// 1-based level whose gate (or terminal position) finalized the
    /// instance.
    pub exit_level: usize,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (c, p) in v.iter().enumerate().skip(1) {
        if *p > v[best] {
            best = c;
        }
    }
    best
}

fn halve_error(accuracy: f64) -> f64 {
    1.0 - (1.0 - accuracy) / 2.0
}

fn apply_strategy(
    strategy: ScreeningStrategy,
    ranked: &RankedConfidences,
    ta: f64,
    bin_size: usize,
) -> ScreeningOutcome {
    match strategy {
        ScreeningStrategy::None => ScreeningOutcome {
            gate: None,
            screened: Vec::new(),
            remaining: ranked.records().iter().map(|r| r.instance_id).collect(),
        },
        ScreeningStrategy::Prefix => prefix_threshold(ranked, ta),
        ScreeningStrategy::Binning => binning_threshold(ranked, bin_size, ta),
    }
}

/// Grows the cascade on `ds`.
///
/// Each level trains on the still-remaining instances, screens the
/// high-confidence ones with frozen out-of-fold predictions, and forwards
/// the rest on re-augmented features. Growth stops when cumulative training
/// accuracy fails to strictly improve, when too few instances remain, or at
/// the level cap; the stopping level is retained and finalizes stragglers.
pub fn fit(ds: &Dataset, config: &CascadeConfig) -> Result<FitResult> {
    config.validate()?;
    let n = ds.len();
    if n < config.folds {
        return Err(Error::TooFewInstances {
            context: "cascade training".into(),
            needed: config.folds,
            found: n,
        });
    }
    assert!(ds.class_count() >= 2, "cascade needs at least two classes");

    let seed = config.seed;
    let (scanner, base) = match &config.scanning {
        Some(sc) => {
            let (scanner, base) = fit_scanner(ds.view(), sc, mix(seed, 1001))?;
            (Some(scanner), base)
        }
        None => (None, ds.features.clone()),
    };
    let c = ds.class_count();
    let level_params = LevelParams {
        folds: config.folds,
        trees_per_forest: config.trees_per_forest,
        feature_subsample: None,
        max_depth: None,
    };

    let mut frozen_pred = vec![usize::MAX; n];
    let mut exit_level = vec![0usize; n];
    let mut frozen_correct = 0usize;
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut current = base.clone();
    let mut levels: Vec<(CascadeLevel, Gate)> = Vec::new();
    let mut diagnostics: Vec<LevelDiagnostics> = Vec::new();
    let mut prev_cumulative: Option<f64> = None;
    let mut fixed_ta: Option<f64> = None;
    let mut first_level_records: Vec<ConfidenceRecord> = Vec::new();

    for level_index in 1..=config.max_levels {
        let labels: Vec<usize> = remaining.iter().map(|&i| ds.labels[i]).collect();
        let view = DatasetView {
            features: &current,
            labels: &labels,
            class_count: c,
        };
        let (level, output) = train_level(
            view,
            &level_params,
            level_index,
            mix(seed, level_index as u64),
        )?;

        let mut records = Vec::with_capacity(remaining.len());
        let mut oof_correct = 0usize;
        for (pos, &id) in remaining.iter().enumerate() {
            let row = output.mean_vectors.row(pos);
            let predicted_class = argmax(row);
            let correct = predicted_class == ds.labels[id];
            oof_correct += correct as usize;
            records.push(ConfidenceRecord {
                instance_id: id,
                confidence: confidence(row),
                correct,
                predicted_class,
            });
        }
        let oof_accuracy = oof_correct as f64 / remaining.len() as f64;
        let ta = match config.ta_mode {
            TaMode::HalveErrorPerLevel => halve_error(oof_accuracy),
            TaMode::HalveErrorFixed => *fixed_ta.get_or_insert_with(|| halve_error(oof_accuracy)),
        };

        let ranked = rank_by_confidence(records);
        if level_index == 1 {
            first_level_records = ranked.records().to_vec();
        }
        let outcome = apply_strategy(config.strategy, &ranked, ta, config.bin_size);
        let (finalized, forwarded) = route(&ranked, &outcome);
        for (rec, &(id, predicted)) in ranked.records().iter().zip(&finalized) {
            debug_assert_eq!(rec.instance_id, id);
            frozen_pred[id] = predicted;
            exit_level[id] = level_index;
            frozen_correct += rec.correct as usize;
        }
        let forwarded_correct = ranked.records()[finalized.len()..]
            .iter()
            .filter(|r| r.correct)
            .count();
        let cumulative = (frozen_correct + forwarded_correct) as f64 / n as f64;

        diagnostics.push(LevelDiagnostics {
            level_index,
            remaining_count: remaining.len(),
            out_of_fold_accuracy: oof_accuracy,
            cumulative_training_accuracy: cumulative,
            gate: outcome.gate,
        });
        levels.push((level, outcome.gate));

        let improved = prev_cumulative.map_or(true, |p| cumulative > p);
        prev_cumulative = Some(cumulative);
        let mut next_remaining = forwarded;
        next_remaining.sort_unstable();

        let stop = !improved
            || next_remaining.is_empty()
            || next_remaining.len() < config.effective_min_remaining()
            || level_index == config.max_levels;
        if stop {
            for rec in &ranked.records()[finalized.len()..] {
                frozen_pred[rec.instance_id] = rec.predicted_class;
                exit_level[rec.instance_id] = level_index;
            }
            break;
        }

        // Next level consumes base features plus this level's two vectors.
        let mut pos_of = vec![0u32; n];
        for (pos, &id) in remaining.iter().enumerate() {
            pos_of[id] = pos as u32;
        }
        let width = base.cols() + 2 * c;
        let mut data = Vec::with_capacity(next_remaining.len() * width);
        for &id in &next_remaining {
            let pos = pos_of[id] as usize;
            data.extend_from_slice(base.row(id));
            data.extend_from_slice(output.rf_vectors.row(pos));
            data.extend_from_slice(output.crf_vectors.row(pos));
        }
        current = Matrix::from_vec(data, next_remaining.len(), width);
        remaining = next_remaining;
    }

    debug_assert!(frozen_pred.iter().all(|&p| p != usize::MAX));
    Ok(FitResult {
        model: CascadeModel {
            levels,
            config: config.clone(),
            scanner,
            label_names: ds.label_names.clone(),
            feature_count: ds.feature_count(),
            class_count: c,
        },
        diagnostics,
        training_predictions: frozen_pred,
        training_exit_levels: exit_level,
        first_level_records,
    })
}

/// Predicts classes, exit confidences, and 1-based exit levels for
/// `features`.
///
/// Instances flow level by level; an instance whose confidence meets its
/// level's gate takes that level's argmax and skips the rest. Instances
/// reaching the last level take its argmax.
pub fn predict(model: &CascadeModel, features: &Matrix) -> Result<Vec<Prediction>> {
    if features.cols() != model.feature_count {
        return Err(Error::DimensionMismatch {
            expected: model.feature_count,
            found: features.cols(),
        });
    }
    let n = features.rows();
    let mut predictions = vec![
        Prediction {
            class: 0,
            confidence: 0.0,
            exit_level: 0
        };
        n
    ];
    if n == 0 {
        return Ok(predictions);
    }
    let base = match &model.scanner {
        Some(s) => s.transform(features)?,
        None => features.clone(),
    };
    let mut active: Vec<usize> = (0..n).collect();
    let mut current = base.clone();
    for (li, (level, gate)) in model.levels.iter().enumerate() {
        let output = predict_level(level, &current)?;
        let last = li + 1 == model.levels.len();
        let mut kept: Vec<usize> = Vec::new();
        for (pos, &id) in active.iter().enumerate() {
            let row = output.mean_vectors.row(pos);
            let conf = confidence(row);
            let exit = last || matches!(gate, Some(g) if conf >= *g);
            if exit {
                predictions[id] = Prediction {
                    class: argmax(row),
                    confidence: conf,
                    exit_level: li + 1,
                };
            } else {
                kept.push(pos);
            }
        }
        if last || kept.is_empty() {
            break;
        }
        let c = model.class_count;
        let width = base.cols() + 2 * c;
        let mut data = Vec::with_capacity(kept.len() * width);
        for &pos in &kept {
            data.extend_from_slice(base.row(active[pos]));
            data.extend_from_slice(output.rf_vectors.row(pos));
            data.extend_from_slice(output.crf_vectors.row(pos));
        }
        current = Matrix::from_vec(data, kept.len(), width);
        active = kept.iter().map(|&pos| active[pos]).collect();
    }
    Ok(predictions)
}

/// `(level, remaining, cumulative accuracy)` rows for plotting.
pub fn training_accuracy_curve(diagnostics: &[LevelDiagnostics]) -> Vec<(usize, usize, f64)> {
    assert!(!diagnostics.is_empty(), "no diagnostics to tabulate");
    diagnostics
        .iter()
        .map(|d| {
            (
                d.level_index,
                d.remaining_count,
                d.cumulative_training_accuracy,
            )
        })
        .collect()
}

/// Diagnostics as CSV with a `none` marker for absent gates.
pub fn diagnostics_csv(diagnostics: &[LevelDiagnostics]) -> String {
    let mut out = String::from("level,remaining,oof_accuracy,cumulative_accuracy,gate\n");
    for d in diagnostics {
        let gate = d.gate.map_or_else(|| "none".to_string(), |g| g.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            d.level_index,
            d.remaining_count,
            d.out_of_fold_accuracy,
            d.cumulative_training_accuracy,
            gate
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;

    fn quick_config(strategy: ScreeningStrategy) -> CascadeConfig {
        CascadeConfig {
            strategy,
            trees_per_forest: 8,
            bin_size: 4,
            seed: 13,
            ..CascadeConfig::default()
        }
    }

    #[test]
    fn separable_blobs_collapse_to_one_level() {
        let ds = make_synthetic(60, 2, 3, 10.0, 1);
        for strategy in [ScreeningStrategy::Prefix, ScreeningStrategy::Binning] {
            let fit = fit(&ds, &quick_config(strategy)).unwrap();
            assert_eq!(fit.model.level_count(), 1, "{strategy:?}");
            assert_eq!(fit.model.levels[0].1, Some(1.0));
            assert!(fit.training_exit_levels.iter().all(|&l| l == 1));
            assert_eq!(fit.diagnostics[0].out_of_fold_accuracy, 1.0);
        }
    }

    #[test]
    fn strategy_none_keeps_every_instance_to_the_end() {
        let ds = make_synthetic(45, 3, 3, 1.5, 7);
        let result = fit(&ds, &quick_config(ScreeningStrategy::None)).unwrap();
        let last = result.model.level_count();
        assert!(result.model.levels.iter().all(|(_, gate)| gate.is_none()));
        assert!(result
            .diagnostics
            .iter()
            .all(|d| d.remaining_count == ds.len()));
        assert!(result.training_exit_levels.iter().all(|&l| l == last));
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = make_synthetic(40, 4, 2, 1.0, 3);
        let a = fit(&ds, &quick_config(ScreeningStrategy::Binning)).unwrap();
        let b = fit(&ds, &quick_config(ScreeningStrategy::Binning)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn later_levels_keep_constant_width() {
        // Weak separation forces multiple levels.
        let ds = make_synthetic(60, 3, 2, 0.8, 5);
        let result = fit(&ds, &quick_config(ScreeningStrategy::None)).unwrap();
        if result.model.level_count() >= 2 {
            let d = ds.feature_count();
            let c = ds.class_count();
            for (level, _) in &result.model.levels[1..] {
                assert_eq!(level.input_width(), d + 2 * c);
            }
        }
    }

    #[test]
    fn exit_levels_and_predictions_cover_every_instance() {
        let ds = make_synthetic(50, 3, 2, 1.2, 11);
        let result = fit(&ds, &quick_config(ScreeningStrategy::Binning)).unwrap();
        let levels = result.model.level_count();
        assert!(result
            .training_exit_levels
            .iter()
            .all(|&l| l >= 1 && l <= levels));
        assert!(result
            .training_predictions
            .iter()
            .all(|&p| p < ds.class_count()));
    }

    #[test]
    fn predict_validates_width_and_assigns_exits() {
        let ds = make_synthetic(30, 4, 3, 8.0, 2);
        let result = fit(&ds, &quick_config(ScreeningStrategy::Binning)).unwrap();
        let preds = predict(&result.model, &ds.features).unwrap();
        assert_eq!(preds.len(), 30);
        let max = result.model.level_count();
        for p in &preds {
            assert!(p.exit_level >= 1 && p.exit_level <= max);
            assert!(p.confidence > 0.0 && p.confidence <= 1.0);
            assert!(p.class < ds.class_count());
        }
        let wrong = make_synthetic(5, 3, 2, 1.0, 0);
        assert!(matches!(
            predict(&result.model, &wrong.features),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn first_level_records_cover_all_instances_in_rank_order() {
        let ds = make_synthetic(24, 3, 2, 1.0, 4);
        let result = fit(&ds, &quick_config(ScreeningStrategy::Binning)).unwrap();
        let records = &result.first_level_records;
        assert_eq!(records.len(), 24);
        assert!(records
            .windows(2)
            .all(|w| w[0].confidence >= w[1].confidence));
        let mut ids: Vec<usize> = records.iter().map(|r| r.instance_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..24).collect::<Vec<_>>());
    }

    #[test]
    fn curve_and_csv_follow_the_diagnostics() {
        let ds = make_synthetic(36, 3, 3, 2.0, 9);
        let result = fit(&ds, &quick_config(ScreeningStrategy::Prefix)).unwrap();
        let curve = training_accuracy_curve(&result.diagnostics);
        assert_eq!(curve.len(), result.diagnostics.len());
        assert_eq!(curve[0].1, 36);
        let csv = diagnostics_csv(&result.diagnostics);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "level,remaining,oof_accuracy,cumulative_accuracy,gate"
        );
        assert_eq!(lines.len(), result.diagnostics.len() + 1);
    }

    #[test]
    fn rejects_invalid_configs() {
        let ds = make_synthetic(10, 2, 2, 1.0, 0);
        for bad in [
            CascadeConfig {
                bin_size: 0,
                ..CascadeConfig::default()
            },
            CascadeConfig {
                folds: 1,
                ..CascadeConfig::default()
            },
            CascadeConfig {
                trees_per_forest: 0,
                ..CascadeConfig::default()
            },
            CascadeConfig {
                max_levels: 0,
                ..CascadeConfig::default()
            },
        ] {
            assert!(fit(&ds, &bad).is_err());
        }
    }
}
