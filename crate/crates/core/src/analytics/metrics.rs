use std::collections::BTreeMap;

use serde::Serialize;

use super::AnalyticsError;

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn from_predictions(truth: &[bool], predicted: &[bool]) -> Result<Self, AnalyticsError> {
        check_len(truth.len(), predicted.len())?;
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let [tp, tn, fp, fn_] = [self.tp, self.tn, self.fp, self.fn_].map(|x| x as f64);
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }
}

pub fn mcc(cc: &ConfusionCounts) -> f64 {
    cc.mcc()
}

fn check_len(a: usize, b: usize) -> Result<(), AnalyticsError> {
    if a != b {
        return Err(AnalyticsError::LengthMismatch(a, b));
    }
    Ok(())
}

/// Multi-class confusion matrix; `counts[i][j]` counts true class `i`
/// predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, AnalyticsError> {
        let n = classes.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(AnalyticsError::LengthMismatch(n, counts.len()));
        }
        Ok(Self { classes, counts })
    }

    /// Classes are the sorted union of labels in `truth` and `predicted`.
    pub fn from_labels<S: AsRef<str>>(truth: &[S], predicted: &[S]) -> Result<Self, AnalyticsError> {
        check_len(truth.len(), predicted.len())?;
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for l in truth.iter().chain(predicted) {
            index.entry(l.as_ref()).or_insert(0);
        }
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let n = index.len();
        let mut counts = vec![vec![0u64; n]; n];
        for (t, p) in truth.iter().zip(predicted) {
            counts[index[t.as_ref()]][index[p.as_ref()]] += 1;
        }
        Ok(Self {
            classes: index.keys().map(|s| s.to_string()).collect(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `(precision, recall, support)` for each class.
    pub fn per_class(&self) -> Vec<(f64, f64, u64)> {
        let n = self.classes.len();
        (0..n)
            .map(|i| {
                let support: u64 = self.counts[i].iter().sum();
                let tp = self.counts[i][i] as f64;
                let predicted: u64 = (0..n).map(|r| self.counts[r][i]).sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if support == 0 { 0.0 } else { tp / support as f64 };
                (precision, recall, support)
            })
            .collect()
    }

    pub fn weighted_f1(&self) -> Result<f64, AnalyticsError> {
        weighted_f1_from_stats(&self.per_class())
    }

    pub fn accuracy(&self) -> Result<f64, AnalyticsError> {
        let total = self.total();
        if total == 0 {
            return Err(AnalyticsError::EmptyInput);
        }
        let diag: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        Ok(diag as f64 / total as f64)
    }
}

pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64, AnalyticsError> {
    cm.weighted_f1()
}

/// Support-weighted mean of per-class F1 from `(precision, recall, support)`
/// triples; a class with precision + recall = 0 has F1 = 0.
pub fn weighted_f1_from_stats(stats: &[(f64, f64, u64)]) -> Result<f64, AnalyticsError> {
    let total: u64 = stats.iter().map(|s| s.2).sum();
    if total == 0 {
        return Err(AnalyticsError::EmptyInput);
    }
    Ok(stats
        .iter()
        .map(|&(p, r, n)| {
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            n as f64 / total as f64 * f1
        })
        .sum())
}

pub fn accuracy<T: PartialEq>(truth: &[T], predicted: &[T]) -> Result<f64, AnalyticsError> {
    check_len(truth.len(), predicted.len())?;
    if truth.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(AnalyticsError::TooFewPoints { needed: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), AnalyticsError> {
    check_len(scores.len(), labels.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(AnalyticsError::DegenerateLabels { positives: pos, negatives: neg });
    }
    Ok((pos, neg))
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// their average rank. Higher scores are taken to indicate the positive class.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, AnalyticsError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let avg = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Area under the precision-recall curve as step-wise average precision:
/// Σ (R_t − R_{t−1}) · P_t over distinct score thresholds, high to low.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, AnalyticsError> {
    let (pos, _) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        tp += order[i..=j].iter().filter(|&&k| labels[k]).count();
        seen += j - i + 1;
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}
