//! Model-comparison statistics: paired t statistic, Friedman test with the
//! Iman-Davenport correction, and the Nemenyi critical difference.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Critical value of the paired t statistic at significance 0.05 with 4
/// degrees of freedom (one 5-fold run).
pub const T_CRIT_0_05_4: f64 = 2.132;
/// Critical value of the F distribution at 0.05 with (6, 48) degrees of
/// freedom (7 models over 9 datasets).
pub const F_CRIT_0_05_6_48: f64 = 2.295;
/// Studentized range critical value at 0.1 for 7 models.
pub const Q_CRIT_0_10_7: f64 = 2.693;

/// Accuracy grid with one row per dataset and one column per model, in
/// percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub model_names: Vec<String>,
    pub dataset_names: Vec<String>,
    /// `accuracies[dataset][model]`.
    pub accuracies: Vec<Vec<f64>>,
}

impl AccuracyTable {
    pub fn new(
        model_names: Vec<String>,
        dataset_names: Vec<String>,
        accuracies: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if accuracies.len() != dataset_names.len() {
            return Err(Error::InvalidConfig(format!(
                "accuracy table has {} rows for {} datasets",
                accuracies.len(),
                dataset_names.len()
            )));
        }
        for (name, row) in dataset_names.iter().zip(&accuracies) {
            if row.len() != model_names.len() {
                return Err(Error::InvalidConfig(format!(
                    "dataset {name} has {} accuracies for {} models",
                    row.len(),
                    model_names.len()
                )));
            }
            for &v in row {
                if !(0.0..=100.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "accuracy {v} for dataset {name} is outside [0, 100]"
                    )));
                }
            }
        }
        Ok(AccuracyTable {
            model_names,
            dataset_names,
            accuracies,
        })
    }

    pub fn model_count(&self) -> usize {
        self.model_names.len()
    }

    pub fn dataset_count(&self) -> usize {
        self.dataset_names.len()
    }

    /// Reads a grid written by [`AccuracyTable::write_csv`]: a header of
    /// `dataset,<model>,...` followed by one row per dataset.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let model_names: Vec<String> = reader
            .headers()?
            .iter()
            .skip(1)
            .map(|s| s.to_string())
            .collect();
        let mut dataset_names = Vec::new();
        let mut accuracies = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let mut cells = record.iter();
            let dataset = cells
                .next()
                .ok_or_else(|| Error::InvalidConfig("empty accuracy table row".into()))?
                .to_string();
            let mut row = Vec::with_capacity(model_names.len());
            for (j, cell) in cells.enumerate() {
                let value: f64 = cell.parse().map_err(|_| Error::BadCell {
                    path: path.display().to_string(),
                    row: i + 2,
                    column: model_names
                        .get(j)
                        .cloned()
                        .unwrap_or_else(|| format!("column {}", j + 1)),
                    value: cell.to_string(),
                })?;
                row.push(value);
            }
            dataset_names.push(dataset);
            accuracies.push(row);
        }
        AccuracyTable::new(model_names, dataset_names, accuracies)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["dataset".to_string()];
        header.extend(self.model_names.iter().cloned());
        writer.write_record(&header)?;
        for (name, row) in self.dataset_names.iter().zip(&self.accuracies) {
            let mut record = vec![name.clone()];
            record.extend(row.iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Paired t statistic `|sqrt(n) * mean(D) / sigma(D)|` over the fold-wise
/// differences `D = a - b`, with the population (divide-by-n) deviation.
///
/// Zero deviation reports 0 when the differences are all zero and an
/// infinite statistic otherwise.
pub fn paired_t_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired accuracies differ in length");
    assert!(!a.is_empty(), "paired t statistic needs at least one fold");
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (n.sqrt() * mean / sigma).abs()
    }
}

/// Ranks one dataset row of model accuracies: 1 is the highest accuracy and
/// ties receive the average of the positions they span.
fn rank_row(accuracies: &[f64]) -> Vec<f64> {
    let k = accuracies.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| accuracies[b].total_cmp(&accuracies[a]));
    let mut ranks = vec![0.0; k];
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && accuracies[order[end]] == accuracies[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end, averaged
        let rank = (start + 1 + end) as f64 / 2.0;
        for &model in &order[start..end] {
            ranks[model] = rank;
        }
        start = end;
    }
    ranks
}

/// Per-dataset rank rows (1 = best, average ties). Each row sums to
/// `k(k+1)/2`.
pub fn rank_matrix(table: &AccuracyTable) -> Vec<Vec<f64>> {
    table.accuracies.iter().map(|row| rank_row(row)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Mean rank per model, aligned with `model_names`.
    pub mean_ranks: Vec<f64>,
    /// The chi-square form of the Friedman statistic.
    pub chi_square: f64,
    /// The F-distributed Iman-Davenport statistic
    /// `(N-1) * chi / (N(k-1) - chi)`; infinite when every dataset ranks the
    /// models identically.
    pub statistic: f64,
}

/// Runs the Friedman test over the accuracy grid.
pub fn friedman_test(table: &AccuracyTable) -> Result<FriedmanResult> {
    let n = table.dataset_count();
    let k = table.model_count();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "Friedman test needs at least two datasets, found {n}"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "Friedman test needs at least two models, found {k}"
        )));
    }
    let ranks = rank_matrix(table);
    let mut mean_ranks = vec![0.0; k];
    for row in &ranks {
        for (j, r) in row.iter().enumerate() {
            mean_ranks[j] += r;
        }
    }
    for r in &mut mean_ranks {
        *r /= n as f64;
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let chi_square = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0) * (kf + 1.0) / 4.0);
    let denom = nf * (kf - 1.0) - chi_square;
    let statistic = if denom <= 0.0 {
        f64::INFINITY
    } else {
        (nf - 1.0) * chi_square / denom
    };
    Ok(FriedmanResult {
        mean_ranks,
        chi_square,
        statistic,
    })
}

/// The Iman-Davenport statistic alone.
pub fn friedman_statistic(table: &AccuracyTable) -> Result<f64> {
    Ok(friedman_test(table)?.statistic)
}

/// Nemenyi critical difference `q * sqrt(k(k+1) / (6N))`.
pub fn nemenyi_cd(model_count: usize, dataset_count: usize, q: f64) -> f64 {
    assert!(model_count >= 2, "Nemenyi needs at least two models");
    assert!(dataset_count >= 1, "Nemenyi needs at least one dataset");
    assert!(q > 0.0, "critical value must be positive");
    let k = model_count as f64;
    let n = dataset_count as f64;
    q * (k * (k + 1.0) / (6.0 * n)).sqrt()
}
