use genolm::analytics::{
    auprc, auroc, mcc, pca_project, pearson_r, silhouette, ConfusionCounts, ConfusionMatrix, Distance, EmbeddingSet,
};
use genolm::rng::job_rng;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn planted_set(seed: u64, n: usize, scales: &[f64]) -> EmbeddingSet {
    let mut rng = job_rng(seed, 0);
    let d = scales.len();
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| scales.iter().map(|s| s * rng.gen_range(-1.0..1.0)).collect())
        .collect();
    // rotate so the principal axes are not the coordinate axes
    let q = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
    let vectors = vectors
        .into_iter()
        .map(|v| (&q * nalgebra::DVector::from_vec(v)).iter().copied().collect())
        .collect();
    EmbeddingSet::new((0..n).map(|i| format!("p{i}")).collect(), vec!["x".into(); n], vectors).unwrap()
}

#[test]
fn pca_matches_dense_eigendecomposition() {
    let set = planted_set(11, 300, &[5.0, 3.0, 2.0, 1.0, 0.5, 0.2]);
    let (n, d) = (set.len(), set.dim());
    let x = DMatrix::from_fn(n, d, |i, j| set.vectors[i][j]);
    let mean = x.row_mean();
    let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = xc.transpose() * &xc / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let proj = pca_project(&set, 3).unwrap();
    assert!(!proj.degenerate);
    let total: f64 = eig.eigenvalues.iter().sum();
    for (c, &o) in order.iter().take(3).enumerate() {
        let want = eig.eigenvalues[o];
        assert!((proj.explained_variance[c] - want).abs() < 1e-8 * want, "{} vs {want}", proj.explained_variance[c]);
        assert!((proj.explained_ratio[c] - want / total).abs() < 1e-8);
        let v = eig.eigenvectors.column(o);
        let cos: f64 = proj.components[c].iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        assert!(cos.abs() > 1.0 - 1e-6, "component {c}: |cos| {}", cos.abs());
    }
    for (row, coords) in set.vectors.iter().zip(&proj.coords) {
        for (c, comp) in proj.components.iter().enumerate() {
            let want: f64 = row.iter().zip(comp).zip(mean.iter()).map(|((x, u), m)| (x - m) * u).sum();
            assert!((coords[c] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn pca_reports_rank_deficiency() {
    let vectors: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
    let set = EmbeddingSet::new((0..10).map(|i| i.to_string()).collect(), vec!["a".into(); 10], vectors).unwrap();
    let proj = pca_project(&set, 2).unwrap();
    assert!(proj.degenerate);
    assert!((proj.explained_ratio[0] - 1.0).abs() < 1e-9);
    assert_eq!(proj.explained_variance[1], 0.0);
}

#[test]
fn pca_is_deterministic() {
    let set = planted_set(12, 80, &[3.0, 2.0, 1.0, 0.5]);
    assert_eq!(pca_project(&set, 2).unwrap(), pca_project(&set, 2).unwrap());
}

#[test]
fn silhouette_of_separated_blobs_is_near_one() {
    let mut rng = job_rng(13, 0);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in [0.0, 100.0].iter().enumerate() {
        for _ in 0..30 {
            pts.push(vec![centre + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            labels.push(format!("c{c}"));
        }
    }
    let s = silhouette(&pts, &labels, Distance::Euclidean).unwrap();
    assert!(s > 0.95, "{s}");
}

fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (s1, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (s0, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 1.0;
            wins += if s1 > s0 { 1.0 } else if s1 == s0 { 0.5 } else { 0.0 };
        }
    }
    wins / pairs
}

proptest! {
    #[test]
    fn auroc_matches_pair_counting(
        data in prop::collection::vec((0u8..20, any::<bool>()), 2..120)
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 4.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auroc(&scores, &labels).unwrap();
        prop_assert!((a - brute_auroc(&scores, &labels)).abs() < 1e-12);
        // strictly increasing transforms leave both curves unchanged
        let warped: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp()).collect();
        prop_assert!((auroc(&warped, &labels).unwrap() - a).abs() < 1e-12);
        let p = auprc(&scores, &labels).unwrap();
        prop_assert!((auprc(&warped, &labels).unwrap() - p).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn mcc_is_bounded_and_symmetric(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
        let m = mcc(&ConfusionCounts::new(tp, tn, fp, fn_));
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m));
        // swapping the roles of the two classes
        let swapped = mcc(&ConfusionCounts::new(tn, tp, fn_, fp));
        prop_assert!((m - swapped).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_score_one(
        truth in prop::collection::vec(0u8..3, 1..60)
    ) {
        let labels: Vec<String> = truth.iter().map(|t| format!("c{t}")).collect();
        let cm = ConfusionMatrix::from_labels(&labels, &labels).unwrap();
        prop_assert!((cm.weighted_f1().unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((cm.accuracy().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_is_scale_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 3..50),
        a in 0.1f64..10.0, b in -10.0f64..10.0
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x + i as f64).collect();
        if let Ok(r) = pearson_r(&xs, &ys) {
            let scaled: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
            prop_assert!((pearson_r(&xs, &scaled).unwrap() - r).abs() < 1e-9);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }
}
