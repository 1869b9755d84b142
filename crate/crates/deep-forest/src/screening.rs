//! Confidence screening: ranking, the prefix and binning threshold rules,
//! and routing of instances into high- and low-confidence regions.

/// Gate value; `None` means no instance is screened at this level.
pub type Gate = Option<f64>;

/// One training instance's out-of-fold result at a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRecord {
    pub instance_id: usize,
    /// Max entry of the instance's mean class vector, in [1/C, 1].
    pub confidence: f64,
    /// Out-of-fold argmax equals the label.
    pub correct: bool,
    pub predicted_class: usize,
}

/// Records sorted by confidence descending, ties by ascending instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedConfidences {
    records: Vec<ConfidenceRecord>,
}

impl RankedConfidences {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in rank order (rank 0 = highest confidence).
    pub fn records(&self) -> &[ConfidenceRecord] {
        &self.records
    }
}

/// A contiguous block of ranks `[start, end)`.
///
/// `accuracy` is filled by [`bin_accuracies`]; [`bin_partition`] leaves it 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub start: usize,
    pub end: usize,
    pub accuracy: f64,
}

impl Bin {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Result of applying a threshold rule to a ranking.
///
/// `screened` and `remaining` hold instance ids in rank order; `screened` is
/// exactly the set of records with confidence >= gate, so it is always a
/// rank prefix (ties at the gate included).
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningOutcome {
    pub gate: Gate,
    pub screened: Vec<usize>,
    pub remaining: Vec<usize>,
}

/// Max entry of a class vector.
pub fn confidence(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "confidence of an empty vector");
    v.iter().cloned().fold(f64::MIN, f64::max)
}

/// Sorts records by confidence descending; ties keep ascending instance id.
pub fn rank_by_confidence(mut records: Vec<ConfidenceRecord>) -> RankedConfidences {
    records.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.instance_id.cmp(&b.instance_id))
    });
    RankedConfidences { records }
}

/// Prefix threshold: `Gate = min{ P_k | L_k >= TA }` where `L_k` is the
/// accuracy of the first `k` ranked instances. No qualifying prefix means no
/// instance is screened.
pub fn prefix_threshold(ranked: &RankedConfidences, ta: f64) -> ScreeningOutcome {
    let mut correct = 0usize;
    let mut gate = None;
    for (k, rec) in ranked.records.iter().enumerate() {
        if rec.correct {
            correct += 1;
        }
        let prefix_accuracy = correct as f64 / (k + 1) as f64;
        // Confidences are non-increasing, so the minimum qualifying P_k is
        // the one at the largest qualifying k.
        if prefix_accuracy >= ta {
            gate = Some(rec.confidence);
        }
    }
    route_by_gate(ranked, gate)
}

/// Splits `[0, n)` into consecutive rank blocks of `bin_size`; when `n` is
/// not divisible, the final bin keeps the remainder (the lowest-confidence
/// instances). Accuracies are left unfilled.
pub fn bin_partition(ranked: &RankedConfidences, bin_size: usize) -> Vec<Bin> {
    assert!(bin_size >= 1, "bin_size must be at least 1");
    let n = ranked.len();
    (0..n)
        .step_by(bin_size)
        .map(|start| Bin {
            start,
            end: (start + bin_size).min(n),
            accuracy: 0.0,
        })
        .collect()
}

/// Fills each bin's accuracy: fraction of correct records in `[start, end)`.
pub fn bin_accuracies(ranked: &RankedConfidences, bins: &[Bin]) -> Vec<Bin> {
    bins.iter()
        .map(|b| Bin {
            accuracy: bin_accuracy(ranked, b),
            ..*b
        })
        .collect()
}

fn bin_accuracy(ranked: &RankedConfidences, b: &Bin) -> f64 {
    assert!(!b.is_empty(), "accuracy of an empty bin");
    let correct = ranked.records[b.start..b.end]
        .iter()
        .filter(|r| r.correct)
        .count();
    correct as f64 / b.len() as f64
}

/// Index of the first bin whose accuracy falls below `ta`, or `None` if all
/// pass. Accuracies are pulled lazily, so no bin after the first failure is
/// ever inspected.
pub fn first_failing_bin(
    bin_count: usize,
    ta: f64,
    mut accuracy_of: impl FnMut(usize) -> f64,
) -> Option<usize> {
    (0..bin_count).find(|&t| accuracy_of(t) < ta)
}

/// Binning threshold: scan bins in rank order; the gate is the confidence of
/// the last instance of the last bin before the first failing bin. If the
/// first bin already fails, nothing is screened; if every bin passes,
/// everything is.
pub fn binning_threshold(ranked: &RankedConfidences, bin_size: usize, ta: f64) -> ScreeningOutcome {
    let bins = bin_partition(ranked, bin_size);
    let failing = first_failing_bin(bins.len(), ta, |t| bin_accuracy(ranked, &bins[t]));
    let gate = match failing {
        Some(0) => None,
        Some(j_plus_1) => Some(ranked.records[bins[j_plus_1 - 1].end - 1].confidence),
        None => ranked.records.last().map(|last| last.confidence),
    };
    route_by_gate(ranked, gate)
}

/// Applies the >= rule: everything with confidence at or above the gate is
/// screened. Equal confidences straddling the nominal cut extend the
/// screened prefix.
fn route_by_gate(ranked: &RankedConfidences, gate: Gate) -> ScreeningOutcome {
    let cut = match gate {
        None => 0,
        Some(g) => ranked.records.partition_point(|r| r.confidence >= g),
    };
    ScreeningOutcome {
        gate,
        screened: ranked.records[..cut]
            .iter()
            .map(|r| r.instance_id)
            .collect(),
        remaining: ranked.records[cut..]
            .iter()
            .map(|r| r.instance_id)
            .collect(),
    }
}

/// Finalizes every screened instance with its current prediction and
/// forwards the rest: `(finalized (id, predicted_class) pairs, forwarded ids)`.
pub fn route(
    ranked: &RankedConfidences,
    outcome: &ScreeningOutcome,
) -> (Vec<(usize, usize)>, Vec<usize>) {
    debug_assert_eq!(
        outcome.screened.len() + outcome.remaining.len(),
        ranked.len(),
        "screening outcome must cover every instance exactly once"
    );
    let finalized = ranked.records[..outcome.screened.len()]
        .iter()
        .map(|r| (r.instance_id, r.predicted_class))
        .collect();
    (finalized, outcome.remaining.clone())
}
