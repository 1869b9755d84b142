//! Randomized equivalence checks of the threshold rules against literal
//! brute-force reimplementations, plus the structural invariants every
//! screening outcome must satisfy.

use deep_forest::{
    bin_partition, binning_threshold, prefix_threshold, rank_by_confidence, route,
    ConfidenceRecord, RankedConfidences,
};
use proptest::prelude::*;

/// Literal prefix rule: the minimum confidence over every qualifying prefix,
/// with no reliance on confidences being sorted.
fn oracle_prefix_gate(ranked: &[ConfidenceRecord], ta: f64) -> Option<f64> {
    let mut gate: Option<f64> = None;
    for k in 1..=ranked.len() {
        let correct = ranked[..k].iter().filter(|r| r.correct).count();
        if correct as f64 / k as f64 >= ta {
            let conf = ranked[k - 1].confidence;
            gate = Some(gate.map_or(conf, |g: f64| g.min(conf)));
        }
    }
    gate
}

/// Literal binning rule: materialize every bin and its accuracy eagerly,
/// then apply the three-way outcome table.
fn oracle_binning_gate(ranked: &[ConfidenceRecord], bin_size: usize, ta: f64) -> Option<f64> {
    let n = ranked.len();
    let mut bins = Vec::new();
    let mut start = 0;
    while start < n {
        bins.push((start, (start + bin_size).min(n)));
        start = (start + bin_size).min(n);
    }
    let accuracies: Vec<f64> = bins
        .iter()
        .map(|&(s, e)| ranked[s..e].iter().filter(|r| r.correct).count() as f64 / (e - s) as f64)
        .collect();
    match accuracies.iter().position(|&a| a < ta) {
        Some(0) => None,
        Some(j) => Some(ranked[bins[j - 1].1 - 1].confidence),
        None => ranked.last().map(|r| r.confidence),
    }
}

fn oracle_screened(ranked: &[ConfidenceRecord], gate: Option<f64>) -> Vec<usize> {
    match gate {
        None => Vec::new(),
        Some(g) => ranked
            .iter()
            .filter(|r| r.confidence >= g)
            .map(|r| r.instance_id)
            .collect(),
    }
}

/// Confidence values drawn from a coarse palette (forcing ties) or the
/// continuous unit interval.
fn confidence_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        (1u32..=12).prop_map(|q| q as f64 / 12.0),
        (0.0f64..1.0).prop_map(|x| 1.0 - x),
    ]
}

fn record_set() -> impl Strategy<Value = Vec<ConfidenceRecord>> {
    prop::collection::vec((confidence_value(), any::<bool>(), 0usize..4), 1..=200).prop_map(
        |items| {
            items
                .into_iter()
                .enumerate()
                .map(
                    |(id, (confidence, correct, predicted_class))| ConfidenceRecord {
                        instance_id: id,
                        confidence,
                        correct,
                        predicted_class,
                    },
                )
                .collect()
        },
    )
}

fn ta_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        (1u32..=10).prop_map(|q| q as f64 / 10.0),
        (0.0f64..1.0).prop_map(|x| 1.0 - x),
    ]
}

fn check_outcome_invariants(ranked: &RankedConfidences, outcome: &deep_forest::ScreeningOutcome) {
    let n = ranked.len();
    assert_eq!(outcome.screened.len() + outcome.remaining.len(), n);
    let in_rank_order: Vec<usize> = ranked.records().iter().map(|r| r.instance_id).collect();
    let mut rejoined = outcome.screened.clone();
    rejoined.extend_from_slice(&outcome.remaining);
    assert_eq!(rejoined, in_rank_order, "screened must be a rank prefix");
    match outcome.gate {
        None => assert!(outcome.screened.is_empty()),
        Some(g) => {
            for r in &ranked.records()[..outcome.screened.len()] {
                assert!(r.confidence >= g);
            }
            for r in &ranked.records()[outcome.screened.len()..] {
                assert!(r.confidence < g);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn prefix_rule_matches_brute_force(records in record_set(), ta in ta_value()) {
        let ranked = rank_by_confidence(records);
        let outcome = prefix_threshold(&ranked, ta);
        prop_assert_eq!(outcome.gate, oracle_prefix_gate(ranked.records(), ta));
        prop_assert_eq!(&outcome.screened, &oracle_screened(ranked.records(), outcome.gate));
        check_outcome_invariants(&ranked, &outcome);
    }

    #[test]
    fn binning_rule_matches_brute_force(
        records in record_set(),
        ta in ta_value(),
        bin_frac in 0.0f64..1.0,
    ) {
        let n = records.len();
        let bin_size = 1 + (bin_frac * (n - 1) as f64) as usize;
        let ranked = rank_by_confidence(records);
        let outcome = binning_threshold(&ranked, bin_size, ta);
        prop_assert_eq!(outcome.gate, oracle_binning_gate(ranked.records(), bin_size, ta));
        prop_assert_eq!(&outcome.screened, &oracle_screened(ranked.records(), outcome.gate));
        check_outcome_invariants(&ranked, &outcome);
    }

    #[test]
    fn ranking_is_a_sorted_permutation(records in record_set()) {
        let mut expected_ids: Vec<usize> = records.iter().map(|r| r.instance_id).collect();
        expected_ids.sort_unstable();
        let ranked = rank_by_confidence(records);
        let mut ids: Vec<usize> = ranked.records().iter().map(|r| r.instance_id).collect();
        for pair in ranked.records().windows(2) {
            prop_assert!(pair[0].confidence >= pair[1].confidence);
            if pair[0].confidence == pair[1].confidence {
                prop_assert!(pair[0].instance_id < pair[1].instance_id);
            }
        }
        ids.sort_unstable();
        prop_assert_eq!(ids, expected_ids);
    }

    #[test]
    fn bins_tile_the_ranking(records in record_set(), bin_frac in 0.0f64..1.0) {
        let n = records.len();
        let bin_size = 1 + (bin_frac * (n - 1) as f64) as usize;
        let ranked = rank_by_confidence(records);
        let bins = bin_partition(&ranked, bin_size);
        prop_assert_eq!(bins.len(), n.div_ceil(bin_size));
        prop_assert_eq!(bins[0].start, 0);
        prop_assert_eq!(bins[bins.len() - 1].end, n);
        for pair in bins.windows(2) {
            prop_assert_eq!(pair[0].end, pair[1].start);
            prop_assert_eq!(pair[0].len(), bin_size);
        }
        prop_assert!(bins[bins.len() - 1].len() <= bin_size);
        prop_assert!(!bins[bins.len() - 1].is_empty());
    }

    #[test]
    fn routing_finalizes_exactly_the_screened_prefix(
        records in record_set(),
        ta in ta_value(),
    ) {
        let ranked = rank_by_confidence(records);
        for outcome in [prefix_threshold(&ranked, ta), binning_threshold(&ranked, 3, ta)] {
            let (finalized, forwarded) = route(&ranked, &outcome);
            prop_assert_eq!(finalized.len() + forwarded.len(), ranked.len());
            let finalized_ids: Vec<usize> = finalized.iter().map(|&(id, _)| id).collect();
            prop_assert_eq!(&finalized_ids, &outcome.screened);
            prop_assert_eq!(&forwarded, &outcome.remaining);
            for (pos, &(id, class)) in finalized.iter().enumerate() {
                let rec = &ranked.records()[pos];
                prop_assert_eq!(id, rec.instance_id);
                prop_assert_eq!(class, rec.predicted_class);
            }
        }
    }
}
