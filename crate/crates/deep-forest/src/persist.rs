//! On-disk model format: versioned JSON with pre-order tree node lists.
//! Loading rebuilds the exact in-memory model, so predictions round-trip
//! bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeConfig, CascadeModel};
use crate::data::FoldAssignment;
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestKind, Tree, TreeNode};
use crate::level::CascadeLevel;
use crate::scanning::{MultiGrainScanner, WindowScanner};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ForestFile {
    pub kind: ForestKind,
    pub trees: Vec<Vec<TreeNode>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WindowFile {
    pub window: usize,
    pub rf_folds: Vec<ForestFile>,
    pub crf_folds: Vec<ForestFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScannerFile {
    pub stride: usize,
    pub feature_count: usize,
    pub windows: Vec<WindowFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LevelFile {
    pub level_index: usize,
    pub gate: Option<f64>,
    pub input_width: usize,
    pub fold_count: usize,
    pub fold_of: Vec<usize>,
    pub rf_folds: Vec<ForestFile>,
    pub crf_folds: Vec<ForestFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub config: CascadeConfig,
    pub class_count: usize,
    pub feature_count: usize,
    pub label_names: Vec<String>,
    pub scanner: Option<ScannerFile>,
    pub levels: Vec<LevelFile>,
}

fn bad(message: String) -> Error {
    Error::ModelFormat(message)
}

fn forest_to_file(forest: &Forest) -> ForestFile {
    ForestFile {
        kind: forest.kind,
        trees: forest.trees.iter().map(Tree::to_preorder).collect(),
    }
}

fn forest_from_file(file: &ForestFile, class_count: usize, feature_count: usize) -> Result<Forest> {
    if file.trees.is_empty() {
        return Err(bad("forest has no trees".into()));
    }
    let trees = file
        .trees
        .iter()
        .map(|nodes| Tree::from_preorder(nodes, class_count, feature_count))
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        kind: file.kind,
        trees,
        class_count,
        feature_count,
    })
}

pub fn to_file(model: &CascadeModel) -> ModelFile {
    let scanner = model.scanner.as_ref().map(|s| ScannerFile {
        stride: s.stride,
        feature_count: s.feature_count,
        windows: s
            .windows
            .iter()
            .map(|w| WindowFile {
                window: w.window,
                rf_folds: w.rf_folds.iter().map(forest_to_file).collect(),
                crf_folds: w.crf_folds.iter().map(forest_to_file).collect(),
            })
            .collect(),
    });
    let levels = model
        .levels
        .iter()
        .map(|(level, gate)| LevelFile {
            level_index: level.level_index,
            gate: *gate,
            input_width: level.input_width(),
            fold_count: level.fold_count(),
            fold_of: level.fold_assignment.assignments().to_vec(),
            rf_folds: level.rf_fold_models.iter().map(forest_to_file).collect(),
            crf_folds: level.crf_fold_models.iter().map(forest_to_file).collect(),
        })
        .collect();
    ModelFile {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        class_count: model.class_count,
        feature_count: model.feature_count,
        label_names: model.label_names.clone(),
        scanner,
        levels,
    }
}

pub fn from_file(file: &ModelFile) -> Result<CascadeModel> {
    if file.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported model format version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    if file.label_names.len() != file.class_count {
        return Err(bad(format!(
            "model lists {} label names for {} classes",
            file.label_names.len(),
            file.class_count
        )));
    }
    if file.levels.is_empty() {
        return Err(bad("model has no levels".into()));
    }
    let c = file.class_count;
    let scanner = file
        .scanner
        .as_ref()
        .map(|s| -> Result<MultiGrainScanner> {
            if s.stride == 0 {
                return Err(bad("scanner stride must be positive".into()));
            }
            let windows = s
                .windows
                .iter()
                .map(|w| -> Result<WindowScanner> {
                    if w.window == 0 || w.window > s.feature_count {
                        return Err(bad(format!("scanner window {} out of range", w.window)));
                    }
                    if w.rf_folds.is_empty() || w.rf_folds.len() != w.crf_folds.len() {
                        return Err(bad(format!(
                            "scanner window {} fold layout is inconsistent",
                            w.window
                        )));
                    }
                    Ok(WindowScanner {
                        window: w.window,
                        rf_folds: w
                            .rf_folds
                            .iter()
                            .map(|f| forest_from_file(f, c, w.window))
                            .collect::<Result<Vec<_>>>()?,
                        crf_folds: w
                            .crf_folds
                            .iter()
                            .map(|f| forest_from_file(f, c, w.window))
                            .collect::<Result<Vec<_>>>()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if windows.is_empty() {
                return Err(bad("scanner has no windows".into()));
            }
            Ok(MultiGrainScanner {
                windows,
                stride: s.stride,
                feature_count: s.feature_count,
                class_count: c,
            })
        })
        .transpose()?;
    let levels = file
        .levels
        .iter()
        .map(|l| -> Result<(CascadeLevel, Option<f64>)> {
            if l.fold_count == 0
                || l.rf_folds.len() != l.fold_count
                || l.crf_folds.len() != l.fold_count
            {
                return Err(bad(format!(
                    "level {} fold layout is inconsistent",
                    l.level_index
                )));
            }
            if l.fold_of.iter().any(|&f| f >= l.fold_count) {
                return Err(bad(format!(
                    "level {} assigns an instance to a missing fold",
                    l.level_index
                )));
            }
            if let Some(g) = l.gate {
                if !g.is_finite() {
                    return Err(bad(format!("level {} gate is not finite", l.level_index)));
                }
            }
            let rf = l
                .rf_folds
                .iter()
                .map(|f| forest_from_file(f, c, l.input_width))
                .collect::<Result<Vec<_>>>()?;
            let crf = l
                .crf_folds
                .iter()
                .map(|f| forest_from_file(f, c, l.input_width))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                CascadeLevel {
                    rf_fold_models: rf,
                    crf_fold_models: crf,
                    fold_assignment: FoldAssignment::from_parts(l.fold_of.clone(), l.fold_count),
                    level_index: l.level_index,
                },
                l.gate,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CascadeModel {
        levels,
        config: file.config.clone(),
        scanner,
        label_names: file.label_names.clone(),
        feature_count: file.feature_count,
        class_count: c,
    })
}

pub fn to_json(model: &CascadeModel) -> String {
    let json =
        serde_json::to_string_pretty(&to_file(model)).expect("model files serialize infallibly");
    json + "\n"
}

pub fn from_json(text: &str) -> Result<CascadeModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    from_file(&file)
}

pub fn save(model: &CascadeModel, path: &Path) -> Result<()> {
    fs::write(path, to_json(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<CascadeModel> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{fit, CascadeConfig, ScreeningStrategy};
    use crate::data::make_synthetic;
    use crate::scanning::ScanConfig;

    fn small_model(scanning: Option<ScanConfig>) -> CascadeModel {
        let ds = make_synthetic(18, 8, 2, 3.0, 7);
        let config = CascadeConfig {
            strategy: ScreeningStrategy::Binning,
            trees_per_forest: 3,
            folds: 2,
            bin_size: 4,
            max_levels: 3,
            scanning,
            seed: 11,
            ..CascadeConfig::default()
        };
        fit(&ds, &config).unwrap().model
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        for scanning in [
            None,
            Some(ScanConfig {
                window_sizes: Some(vec![4]),
                trees_per_forest: 2,
                folds: 2,
                ..ScanConfig::default()
            }),
        ] {
            let model = small_model(scanning);
            let restored = from_json(&to_json(&model)).unwrap();
            let probe = make_synthetic(10, 8, 2, 3.0, 99);
            let a = crate::cascade::predict(&model, &probe.features).unwrap();
            let b = crate::cascade::predict(&restored, &probe.features).unwrap();
            assert_eq!(a, b);
            assert_eq!(restored.level_count(), model.level_count());
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut file = to_file(&small_model(None));
        file.format_version = FORMAT_VERSION + 1;
        assert!(matches!(from_file(&file), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn structural_tampering_is_rejected() {
        let model = small_model(None);

        let mut file = to_file(&model);
        file.levels.clear();
        assert!(matches!(from_file(&file), Err(Error::ModelFormat(_))));

        let mut file = to_file(&model);
        file.label_names.pop();
        assert!(matches!(from_file(&file), Err(Error::ModelFormat(_))));

        let mut file = to_file(&model);
        file.levels[0].rf_folds.pop();
        assert!(matches!(from_file(&file), Err(Error::ModelFormat(_))));

        let mut file = to_file(&model);
        file.levels[0].fold_of[0] = 99;
        assert!(matches!(from_file(&file), Err(Error::ModelFormat(_))));

        let mut file = to_file(&model);
        file.levels[0].gate = Some(f64::NAN);
        assert!(matches!(from_file(&file), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn malformed_json_is_reported() {
        assert!(matches!(from_json("{"), Err(Error::ModelFormat(_))));
    }
}
