//! Confidence-trace files and the prefix-vs-binning threshold comparison.
//!
//! A trace holds one level's ranked confidence records, one instance per
//! row: `id,confidence,correct,predicted`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use deep_forest::screening::{
    binning_threshold, prefix_threshold, rank_by_confidence, ConfidenceRecord,
};

pub const TRACE_HEADER: &str = "id,confidence,correct,predicted";

pub fn write_trace(path: &Path, records: &[ConfidenceRecord]) -> Result<()> {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.instance_id, r.confidence, r.correct as u8, r.predicted_class
        );
    }
    fs::write(path, out).with_context(|| format!("writing trace to {}", path.display()))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<ConfidenceRecord>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading trace from {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == TRACE_HEADER => {}
        other => bail!(
            "trace must start with header {TRACE_HEADER:?}, found {:?}",
            other.unwrap_or("")
        ),
    }
    let mut records = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            bail!(
                "trace row {} has {} fields, expected 4",
                no + 2,
                fields.len()
            );
        }
        let parse_err = |what: &str| format!("trace row {}: bad {what} {:?}", no + 2, fields);
        let instance_id: usize = fields[0].parse().with_context(|| parse_err("id"))?;
        let confidence: f64 = fields[1].parse().with_context(|| parse_err("confidence"))?;
        if !confidence.is_finite() {
            bail!(
                "trace row {}: confidence {} is not finite",
                no + 2,
                confidence
            );
        }
        let correct = match fields[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => bail!("trace row {}: bad correct flag {other:?}", no + 2),
        };
        let predicted_class: usize = fields[3].parse().with_context(|| parse_err("predicted"))?;
        records.push(ConfidenceRecord {
            instance_id,
            confidence,
            correct,
            predicted_class,
        });
    }
    Ok(records)
}

/// Side-by-side outcome of both screening rules on one trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdComparison {
    pub instances: usize,
    pub ta: f64,
    pub bin_size: usize,
    pub prefix_gate: Option<f64>,
    pub prefix_screened: usize,
    pub prefix_accuracy: Option<f64>,
    pub binning_gate: Option<f64>,
    pub binning_screened: usize,
    pub binning_accuracy: Option<f64>,
    /// Incorrect instances screened by the prefix rule but not by binning.
    pub mis_partitioned: usize,
}

pub fn compare_thresholds(
    records: Vec<ConfidenceRecord>,
    ta: f64,
    bin_size: usize,
) -> ThresholdComparison {
    let ranked = rank_by_confidence(records);
    let prefix = prefix_threshold(&ranked, ta);
    let binning = binning_threshold(&ranked, bin_size, ta);
    let accuracy_of = |count: usize| -> Option<f64> {
        if count == 0 {
            return None;
        }
        let correct = ranked.records()[..count]
            .iter()
            .filter(|r| r.correct)
            .count();
        Some(correct as f64 / count as f64)
    };
    // Both screened sets are prefixes of the same ranking, so the set
    // difference is the slice between the two cut points.
    let mis_partitioned = ranked.records()
        [binning.screened.len().min(prefix.screened.len())..prefix.screened.len()]
        .iter()
        .filter(|r| !r.correct)
        .count();
    ThresholdComparison {
        instances: ranked.records().len(),
        ta,
        bin_size,
        prefix_gate: prefix.gate,
        prefix_screened: prefix.screened.len(),
        prefix_accuracy: accuracy_of(prefix.screened.len()),
        binning_gate: binning.gate,
        binning_screened: binning.screened.len(),
        binning_accuracy: accuracy_of(binning.screened.len()),
        mis_partitioned,
    }
}

pub fn render_comparison(c: &ThresholdComparison) -> String {
    let gate = |g: Option<f64>| g.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
    let acc = |a: Option<f64>| a.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "instances: {}  ta: {}  bin size: {}",
        c.instances, c.ta, c.bin_size
    );
    let _ = writeln!(out, "rule     gate      screened  accuracy");
    let _ = writeln!(
        out,
        "prefix   {:<9} {:<9} {}",
        gate(c.prefix_gate),
        c.prefix_screened,
        acc(c.prefix_accuracy)
    );
    let _ = writeln!(
        out,
        "binning  {:<9} {:<9} {}",
        gate(c.binning_gate),
        c.binning_screened,
        acc(c.binning_accuracy)
    );
    let _ = writeln!(out, "mis-partitioned: {}", c.mis_partitioned);
    out
}
