use std::collections::HashSet;

use genolm::design::{
    contribution_scores, fit_kmer_ridge, kmer_counts, quantile_labels, rank_and_select, ActivityBand, ActivityPredictor,
    ActivityRecord, Candidate, DesignError, PromoterClass, SelectionPlan,
};
use genolm::rng::job_rng;
use genolm::seq::NucleotideSequence;
use proptest::prelude::*;
use rand::Rng;

fn random_seq(rng: &mut impl Rng, len: usize) -> NucleotideSequence {
    let bytes: Vec<u8> = (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect();
    NucleotideSequence::from_bytes(&bytes).unwrap()
}

fn record(sequence: NucleotideSequence, activity: f64) -> ActivityRecord {
    ActivityRecord {
        sequence,
        activity,
        promoter_class: PromoterClass::Hk,
    }
}

#[test]
fn ridge_recovers_planted_weights() {
    let mut rng = job_rng(1, 0);
    let k = 2;
    let truth: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let intercept = 0.75;
    let records: Vec<ActivityRecord> = (0..400)
        .map(|_| {
            let len = rng.gen_range(20..80);
            let s = random_seq(&mut rng, len);
            let y = intercept
                + kmer_counts(&s, k)
                    .iter()
                    .zip(&truth)
                    .map(|(&c, w)| c as f64 * w)
                    .sum::<f64>();
            record(s, y)
        })
        .collect();
    let fit = fit_kmer_ridge(&records, k, 0.0).unwrap();
    for (got, want) in fit.weights.iter().zip(&truth) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    assert!((fit.intercept - intercept).abs() < 1e-6);
}

#[test]
fn ridge_shrinks_with_mu() {
    let mut rng = job_rng(2, 0);
    let records: Vec<ActivityRecord> = (0..200)
        .map(|_| {
            let s = random_seq(&mut rng, 60);
            let a = s.as_bytes().iter().filter(|&&b| b == b'A').count() as f64;
            record(s, a + rng.gen_range(-1.0..1.0))
        })
        .collect();
    let norm = |mu| fit_kmer_ridge(&records, 3, mu).unwrap().weights.iter().map(|w| w * w).sum::<f64>();
    let (a, b, c) = (norm(0.1), norm(10.0), norm(1000.0));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn fixed_length_without_penalty_is_singular() {
    let mut rng = job_rng(3, 0);
    let records: Vec<ActivityRecord> = (0..50).map(|i| record(random_seq(&mut rng, 30), i as f64)).collect();
    // k-mer counts of equal-length sequences always sum to the same total
    assert!(matches!(fit_kmer_ridge(&records, 1, 0.0), Err(DesignError::SingularSystem)));
    assert!(fit_kmer_ridge(&records, 1, 0.5).is_ok());
}

#[test]
fn ridge_rejects_bad_parameters() {
    let mut rng = job_rng(4, 0);
    let records: Vec<ActivityRecord> = (0..10).map(|i| record(random_seq(&mut rng, 30), i as f64)).collect();
    assert!(matches!(fit_kmer_ridge(&records, 7, 1.0), Err(DesignError::BadParameter(_))));
    assert!(matches!(fit_kmer_ridge(&records, 2, -1.0), Err(DesignError::BadParameter(_))));
}

#[test]
fn contributions_skip_n_positions() {
    let seq = NucleotideSequence::validate("ACGNNTTA").unwrap();
    let gc = |s: &NucleotideSequence| s.gc_fraction();
    let c = contribution_scores(&gc, &seq);
    assert_eq!(c.len(), 8);
    assert!(c[3].is_none() && c[4].is_none());
    assert!(c.iter().enumerate().all(|(i, x)| (i == 3 || i == 4) || x.is_some()));
}

#[test]
fn selection_is_disjoint_and_ordered() {
    let mut rng = job_rng(5, 0);
    let candidates: Vec<Candidate> = (0..90)
        .map(|i| Candidate {
            sequence: random_seq(&mut rng, 40),
            group: ["high", "mid", "low"][i % 3].to_string(),
        })
        .collect();
    let gc = |s: &NucleotideSequence| s.gc_fraction();
    let report = rank_and_select(&gc, &candidates, &SelectionPlan::by_band(5, 5, 5, 9)).unwrap();
    assert_eq!(report.selected.len(), 15);
    let picked: HashSet<usize> = report.selected.iter().map(|s| s.index).collect();
    assert_eq!(picked.len(), 15);
    let top: Vec<f64> = report.selected.iter().filter(|s| s.category == "top").map(|s| s.score).collect();
    assert!(top.windows(2).all(|w| w[0] >= w[1]));
    let best_high = candidates
        .iter()
        .filter(|c| c.group == "high")
        .map(|c| c.sequence.gc_fraction())
        .fold(f64::MIN, f64::max);
    assert_eq!(top[0], best_high);
    let again = rank_and_select(&gc, &candidates, &SelectionPlan::by_band(5, 5, 5, 9)).unwrap();
    assert_eq!(report, again);
    let other = rank_and_select(&gc, &candidates, &SelectionPlan::by_band(5, 5, 5, 10)).unwrap();
    assert_ne!(
        report.selected.iter().map(|s| s.index).collect::<Vec<_>>(),
        other.selected.iter().map(|s| s.index).collect::<Vec<_>>()
    );
    assert!(matches!(
        rank_and_select(&gc, &candidates, &SelectionPlan::by_band(31, 0, 0, 0)),
        Err(DesignError::PoolTooSmall { .. })
    ));
}

proptest! {
    #[test]
    fn quantile_bands_are_monotone(acts in prop::collection::vec(-100.0f64..100.0, 4..200)) {
        let bands = quantile_labels(&acts).unwrap();
        for i in 0..acts.len() {
            for j in 0..acts.len() {
                if acts[i] < acts[j] {
                    prop_assert!(bands[i] <= bands[j]);
                }
            }
        }
        let n = acts.len();
        let low = bands.iter().filter(|&&b| b == ActivityBand::Low).count();
        let high = bands.iter().filter(|&&b| b == ActivityBand::High).count();
        prop_assert!(low <= n / 4 + 1 && high <= n / 4 + 1);
    }

    #[test]
    fn contributions_of_offset_predictors_agree(seq in "[ACGT]{1,60}", shift in -5.0f64..5.0) {
        let s = NucleotideSequence::validate(&seq).unwrap();
        let f = |x: &NucleotideSequence| x.as_bytes().iter().enumerate().map(|(i, &b)| (i as f64 + 1.0) * b as f64).sum::<f64>();
        let g = move |x: &NucleotideSequence| f(x) + shift;
        let a = contribution_scores(&f, &s);
        let b = contribution_scores(&g, &s);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_predict_is_additive_over_windows(seq in "[ACGT]{6,80}") {
        let mut rng = job_rng(6, 0);
        let records: Vec<ActivityRecord> = (0..60).map(|_| {
            let len = rng.gen_range(20..50);
            let s = random_seq(&mut rng, len);
            let y = rng.gen_range(0.0..1.0);
            record(s, y)
        }).collect();
        let model = fit_kmer_ridge(&records, 3, 1.0).unwrap();
        let s = NucleotideSequence::validate(&seq).unwrap();
        let manual = model.intercept
            + kmer_counts(&s, 3).iter().zip(&model.weights).map(|(&c, w)| c as f64 * w).sum::<f64>();
        prop_assert!((model.predict(&s) - manual).abs() < 1e-9);
    }
}
