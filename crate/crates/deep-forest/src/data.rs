//! Dataset ingestion, stratified fold assignment and synthetic data.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::stream_rng;

/// How the label column of a CSV file is identified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

/// A labelled dataset with dense class ids.
///
/// `labels[i]` indexes into `label_names`; ids are assigned in order of
/// first appearance in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

/// Borrowed view of a dataset, cheap to pass into training functions.
#[derive(Debug, Clone, Copy)]
pub struct DatasetView<'a> {
    pub features: &'a Matrix,
    pub labels: &'a [usize],
    pub class_count: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, label_names: Vec<String>) -> Self {
        assert_eq!(features.rows(), labels.len(), "feature/label row mismatch");
        Dataset {
            features,
            labels,
            label_names,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            features: &self.features,
            labels: &self.labels,
            class_count: self.class_count(),
        }
    }

    /// Row subset in the given order. Class ids and names are preserved even
    /// if a class does not occur in the subset.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
        }
    }
}

impl<'a> DatasetView<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }
}

/// Loads a labelled CSV file.
///
/// All columns except the label column must parse as finite numbers. Labels
/// may be arbitrary strings; they are mapped to dense ids in order of first
/// appearance. At least two distinct classes are required.
pub fn load_csv(path: &Path, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers: Option<Vec<String>> = if has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let mut label_idx: Option<usize> = None;
    let mut width: Option<usize> = None;
    if let Some(h) = &headers {
        width = Some(h.len());
        label_idx = Some(resolve_label_column(&shown, label, h)?);
    } else if let LabelColumn::Name(name) = label {
        return Err(Error::InvalidConfig(format!(
            "label column {name:?} requested by name but the file has no header row"
        )));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut row_no = 0usize;

    for record in reader.records() {
        let record = record?;
        row_no += 1;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::RaggedRow {
                path: shown,
                row: row_no,
                expected: w,
                found: record.len(),
            });
        }
        let li = *label_idx.get_or_insert_with(|| match label {
            LabelColumn::Index(i) => *i,
            LabelColumn::Name(_) => unreachable!("name resolved above"),
        });
        if li >= w {
            return Err(Error::LabelColumnNotFound {
                path: shown,
                column: format!("index {li}"),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if j == li {
                let id = *label_ids.entry(field.to_owned()).or_insert_with(|| {
                    label_names.push(field.to_owned());
                    label_names.len() - 1
                });
                labels.push(id);
            } else {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => data.push(v),
                    _ => {
                        return Err(Error::BadCell {
                            path: shown,
                            row: row_no,
                            column: column_name(&headers, j),
                            value: field.to_owned(),
                        })
                    }
                }
            }
        }
    }

    let w = width.unwrap_or(0);
    if row_no == 0 || w < 2 {
        return Err(Error::EmptyDataset);
    }
    if label_names.len() < 2 {
        return Err(Error::SingleClass);
    }
    let features = Matrix::from_vec(data, row_no, w - 1);
    Ok(Dataset::new(features, labels, label_names))
}

/// Loads a CSV file with no label column: every cell must parse as a finite
/// number.
pub fn load_features_csv(path: &Path, has_header: bool) -> Result<Matrix> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Option<Vec<String>> = if has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    let mut row_no = 0usize;
    for record in reader.records() {
        let record = record?;
        row_no += 1;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::RaggedRow {
                path: shown,
                row: row_no,
                expected: w,
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => {
                    return Err(Error::BadCell {
                        path: shown,
                        row: row_no,
                        column: column_name(&headers, j),
                        value: field.to_owned(),
                    })
                }
            }
        }
    }
    if row_no == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(Matrix::from_vec(data, row_no, width.unwrap_or(0)))
}

fn resolve_label_column(path: &str, label: &LabelColumn, headers: &[String]) -> Result<usize> {
    match label {
        LabelColumn::Index(i) if *i < headers.len() => Ok(*i),
        LabelColumn::Index(i) => Err(Error::LabelColumnNotFound {
            path: path.to_owned(),
            column: format!("index {i}"),
        }),
        LabelColumn::Name(name) => {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::LabelColumnNotFound {
                    path: path.to_owned(),
                    column: name.clone(),
                })
        }
    }
}

fn column_name(headers: &Option<Vec<String>>, j: usize) -> String {
    match headers {
        Some(h) => h[j].clone(),
        None => format!("{}", j + 1),
    }
}

/// Writes a dataset as CSV with headers `f0..f{d-1},label`.
///
/// Feature values use shortest round-trip formatting, so loading the file
/// back reproduces the dataset bit for bit.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for j in 0..dataset.feature_count() {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label\n");
    for (i, row) in dataset.features.iter_rows().enumerate() {
        for v in row {
            let _ = write!(out, "{v},");
        }
        out.push_str(&dataset.label_names[dataset.labels[i]]);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Assignment of instance indices to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    fold_count: usize,
}

impl FoldAssignment {
    pub fn from_parts(fold_of: Vec<usize>, fold_count: usize) -> Self {
        assert!(fold_of.iter().all(|&f| f < fold_count));
        FoldAssignment {
            fold_of,
            fold_count,
        }
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    /// Fold index per instance, aligned with the training rows.
    pub fn assignments(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold_of(&self, instance: usize) -> usize {
        self.fold_of[instance]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.fold_of
    }

    /// Instance indices held out in fold `f`, ascending.
    pub fn members(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == f)
            .collect()
    }

    /// Instance indices used to train fold `f`'s models, ascending.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != f)
            .collect()
    }
}

/// Stratified fold assignment.
///
/// Within each class, member indices are shuffled with a class-specific
/// stream of `seed` and dealt round-robin; the dealing position carries over
/// between classes so every fold is populated whenever `labels.len() >=
/// fold_count`. Per class, fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], fold_count: usize, seed: u64) -> Result<FoldAssignment> {
    if fold_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "fold_count must be at least 2, got {fold_count}"
        )));
    }
    if labels.len() < fold_count {
        return Err(Error::TooFewInstances {
            context: "stratified fold assignment".into(),
            needed: fold_count,
            found: labels.len(),
        });
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let mut fold_of = vec![0usize; labels.len()];
    let mut position = 0usize;
    for c in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut stream_rng(seed, c as u64));
        for i in members {
            fold_of[i] = position % fold_count;
            position += 1;
        }
    }
    Ok(FoldAssignment::from_parts(fold_of, fold_count))
}

/// Balanced Gaussian blobs: class `c` is centred at `separation * c` in
/// every coordinate, unit variance, labels cycle `0..class_count`.
pub fn make_synthetic(
    n: usize,
    features: usize,
    class_count: usize,
    separation: f64,
    seed: u64,
) -> Dataset {
    assert!(class_count >= 2, "need at least two classes");
    assert!(n >= class_count, "need at least one instance per class");
    assert!(features >= 1, "need at least one feature");
    let mut rng = stream_rng(seed, 0);
    let mut data = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % class_count;
        labels.push(c);
        let center = separation * c as f64;
        for _ in 0..features {
            let noise: f64 = rng.sample(StandardNormal);
            data.push(center + noise);
        }
    }
    let label_names = (0..class_count).map(|c| c.to_string()).collect();
    Dataset::new(Matrix::from_vec(data, n, features), labels, label_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_balanced_and_reproducible() {
        let a = make_synthetic(30, 3, 3, 5.0, 42);
        let b = make_synthetic(30, 3, 3, 5.0, 42);
        assert_eq!(a, b);
        for c in 0..3 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 10);
        }
        let c = make_synthetic(30, 3, 3, 5.0, 43);
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn stratified_folds_keep_classes_balanced() {
        let labels = vec![0, 0, 0, 1, 1, 1];
        let folds = stratified_folds(&labels, 3, 7).unwrap();
        for f in 0..3 {
            let members = folds.members(f);
            assert_eq!(members.len(), 2);
            let classes: Vec<usize> = members.iter().map(|&i| labels[i]).collect();
            assert!(classes.contains(&0) && classes.contains(&1));
        }
    }

    #[test]
    fn stratified_folds_partition_all_instances() {
        let labels: Vec<usize> = (0..23).map(|i| i % 4).collect();
        let folds = stratified_folds(&labels, 5, 3).unwrap();
        let mut seen = vec![false; labels.len()];
        for f in 0..5 {
            for i in folds.members(f) {
                assert!(!seen[i], "instance {i} in two folds");
                seen[i] = true;
            }
            assert!(!folds.members(f).is_empty());
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn stratified_folds_reject_tiny_inputs() {
        assert!(matches!(
            stratified_folds(&[0, 1], 3, 0),
            Err(Error::TooFewInstances { .. })
        ));
        assert!(matches!(
            stratified_folds(&[0, 1, 2], 1, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn features_loader_reads_plain_numeric_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4.5\n").unwrap();
        let m = load_features_csv(&path, true).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.row(1), &[3.0, 4.5]);
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(
            load_features_csv(&path, false),
            Err(Error::RaggedRow { .. })
        ));
    }

    #[test]
    fn subset_preserves_class_catalogue() {
        let ds = make_synthetic(12, 2, 4, 1.0, 0);
        let sub = ds.subset(&[0, 4, 8]);
        assert_eq!(sub.class_count(), 4);
        assert_eq!(sub.labels, vec![0, 0, 0]);
        assert_eq!(sub.features.row(1), ds.features.row(4));
    }
}
