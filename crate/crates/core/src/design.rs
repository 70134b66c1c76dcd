//! Cis-regulatory element design: activity bands, prefix-conditioned
//! training data, a k-mer ridge activity predictor, predictor-guided
//! selection and per-base contribution scores.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::job_rng;
use crate::seq::{base_rank, NucleotideSequence, SeqError, BASES};
use crate::tokenize::{TokenizeError, Tokenizer, HIGH, LOW, MID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite activity value")]
    NonFinite,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("prefix token {0:?} is not in the vocabulary")]
    UnknownPrefixToken(String),
    #[error("normal equations are singular; use a positive ridge strength")]
    SingularSystem,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("pool {group} has {available} candidates, {needed} requested")]
    PoolTooSmall {
        group: String,
        needed: usize,
        available: usize,
    },
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Seq(#[from] SeqError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityBand {
    Low,
    Mid,
    High,
}

impl ActivityBand {
    pub fn label(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Mid => "mid",
            Self::High => "high",
        }
    }

    pub fn prefix_token(self) -> &'static str {
        match self {
            Self::Low => LOW,
            Self::Mid => MID,
            Self::High => HIGH,
        }
    }
}

impl fmt::Display for ActivityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ActivityBand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim_start_matches('<').trim_end_matches('>') {
            "low" => Ok(Self::Low),
            "mid" | "medium" => Ok(Self::Mid),
            "high" => Ok(Self::High),
            _ => Err(format!("unknown activity band {s:?}")),
        }
    }
}

/// Which output of a dual-readout assay to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromoterClass {
    Dev,
    Hk,
}

impl FromStr for PromoterClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dev" => Ok(Self::Dev),
            "hk" => Ok(Self::Hk),
            _ => Err(format!("unknown promoter class {s:?} (dev or hk)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRecord {
    pub sequence: NucleotideSequence,
    /// log2 fold change
    pub activity: f64,
    pub promoter_class: PromoterClass,
}

/// One row of a `sequence, dev_activity, hk_activity, split` table.
#[derive(Debug, Clone, PartialEq)]
pub struct StarrRow {
    pub sequence: NucleotideSequence,
    pub dev_activity: f64,
    pub hk_activity: f64,
    pub split: String,
}

impl StarrRow {
    pub fn record(&self, class: PromoterClass) -> ActivityRecord {
        ActivityRecord {
            sequence: self.sequence.clone(),
            activity: match class {
                PromoterClass::Dev => self.dev_activity,
                PromoterClass::Hk => self.hk_activity,
            },
            promoter_class: class,
        }
    }
}

/// Reads the activity table. A header line (starting with `#` or `sequence`)
/// is skipped; the split column may be omitted.
pub fn read_starr_tsv<R: BufRead>(r: R) -> Result<Vec<StarrRow>, DesignError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let bad = |reason: String| DesignError::BadRow { line: i + 1, reason };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("sequence\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(bad(format!("expected 3 or 4 columns, found {}", cols.len())));
        }
        let num = |s: &str| -> Result<f64, DesignError> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("bad activity {s:?}"))),
            }
        };
        out.push(StarrRow {
            sequence: NucleotideSequence::validate(cols[0]).map_err(|e| bad(e.to_string()))?,
            dev_activity: num(cols[1])?,
            hk_activity: num(cols[2])?,
            split: cols.get(3).unwrap_or(&"").to_string(),
        });
    }
    Ok(out)
}

/// Linear-interpolation percentile of sorted data (`p` in [0, 1]).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Top quartile high, bottom quartile low, the rest mid.
///
/// Low means strictly below the 25th percentile and high strictly above the
/// 75th; values equal to a threshold are mid.
pub fn quantile_labels(activities: &[f64]) -> Result<Vec<ActivityBand>, DesignError> {
    if activities.len() < 4 {
        return Err(DesignError::TooFewSamples {
            needed: 4,
            got: activities.len(),
        });
    }
    if activities.iter().any(|a| !a.is_finite()) {
        return Err(DesignError::NonFinite);
    }
    let mut sorted = activities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q25, q75) = (percentile(&sorted, 0.25), percentile(&sorted, 0.75));
    Ok(activities
        .iter()
        .map(|&a| {
            if a < q25 {
                ActivityBand::Low
            } else if a > q75 {
                ActivityBand::High
            } else {
                ActivityBand::Mid
            }
        })
        .collect())
}

/// `[BOS, <band>, tokens(sequence), EOS]` per record.
pub fn build_prefix_dataset(
    records: &[ActivityRecord],
    labels: &[ActivityBand],
    tokenizer: &Tokenizer,
) -> Result<Vec<Vec<u32>>, DesignError> {
    if records.len() != labels.len() {
        return Err(DesignError::LengthMismatch(records.len(), labels.len()));
    }
    let vocab = tokenizer.vocab();
    let special = |name: &str| vocab.id(name).ok_or_else(|| DesignError::UnknownPrefixToken(name.to_string()));
    let bos = special("<bos>")?;
    let eos = special("<eos>")?;
    records
        .iter()
        .zip(labels)
        .map(|(r, band)| {
            let mut ids = vec![bos, special(band.prefix_token())?];
            ids.extend(tokenizer.encode(&r.sequence)?);
            ids.push(eos);
            Ok(ids)
        })
        .collect()
}

/// Anything that maps a sequence to a predicted activity.
pub trait ActivityPredictor: Send + Sync {
    fn predict(&self, seq: &NucleotideSequence) -> f64;
}

impl<F: Fn(&NucleotideSequence) -> f64 + Send + Sync> ActivityPredictor for F {
    fn predict(&self, seq: &NucleotideSequence) -> f64 {
        self(seq)
    }
}

/// Overlapping k-mer counts (length 4^k); windows containing N are skipped.
pub fn kmer_counts(seq: &NucleotideSequence, k: usize) -> Vec<u32> {
    let mut counts = vec![0u32; 1 << (2 * k)];
    for_each_kmer(seq.as_bytes(), k, |code| counts[code] += 1);
    counts
}

fn for_each_kmer(bytes: &[u8], k: usize, mut f: impl FnMut(usize)) {
    let mask = (1usize << (2 * k)) - 1;
    let (mut code, mut valid) = (0usize, 0usize);
    for &b in bytes {
        match base_rank(b) {
            Some(r) => {
                code = ((code << 2) | r) & mask;
                valid += 1;
                if valid >= k {
                    f(code);
                }
            }
            None => valid = 0,
        }
    }
}

/// Ridge regression on k-mer counts: `f(S) = intercept + Σ w_m · count_m(S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmerRidgePredictor {
    pub k: usize,
    pub mu: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl ActivityPredictor for KmerRidgePredictor {
    fn predict(&self, seq: &NucleotideSequence) -> f64 {
        let mut y = self.intercept;
        for_each_kmer(seq.as_bytes(), self.k, |code| y += self.weights[code]);
        y
    }
}

/// Fits the ridge predictor by solving `(XcᵀXc + μI) w = Xcᵀyc` on centered
/// counts and targets; the intercept is not penalized.
pub fn fit_kmer_ridge(records: &[ActivityRecord], k: usize, mu: f64) -> Result<KmerRidgePredictor, DesignError> {
    if !(1..=6).contains(&k) {
        return Err(DesignError::BadParameter(format!("k must be in 1..=6, got {k}")));
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(DesignError::BadParameter(format!("ridge strength must be >= 0, got {mu}")));
    }
    let n = records.len();
    if n < 2 {
        return Err(DesignError::TooFewSamples { needed: 2, got: n });
    }
    if records.iter().any(|r| !r.activity.is_finite()) {
        return Err(DesignError::NonFinite);
    }
    let d = 1usize << (2 * k);
    let sparse: Vec<Vec<(usize, f64)>> = records
        .par_iter()
        .map(|r| {
            kmer_counts(&r.sequence, k)
                .into_iter()
                .enumerate()
                .filter(|&(_, c)| c > 0)
                .map(|(i, c)| (i, c as f64))
                .collect()
        })
        .collect();

    // integer-valued sums, so the parallel reduction order does not matter
    let gram = sparse
        .par_iter()
        .fold(
            || vec![0.0f64; d * d],
            |mut g, row| {
                for &(i, ci) in row {
                    for &(j, cj) in row {
                        g[i * d + j] += ci * cj;
                    }
                }
                g
            },
        )
        .reduce(
            || vec![0.0f64; d * d],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut mean_x = vec![0.0; d];
    for row in &sparse {
        for &(i, c) in row {
            mean_x[i] += c;
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= n as f64);
    let mean_y = records.iter().map(|r| r.activity).sum::<f64>() / n as f64;

    let mut a = DMatrix::from_row_slice(d, d, &gram);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] -= n as f64 * mean_x[i] * mean_x[j];
        }
        a[(i, i)] += mu;
    }
    let mut b = DVector::zeros(d);
    for (row, r) in sparse.iter().zip(records) {
        let yc = r.activity - mean_y;
        for &(i, c) in row {
            b[i] += c * yc;
        }
    }
    // Xcᵀyc = Xᵀy - n·x̄·ȳ, and Σ yc = 0 makes the correction vanish

    let scale = (0..d).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let chol = Cholesky::new(a).ok_or(DesignError::SingularSystem)?;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if scale == 0.0 || min_pivot <= 1e-12 * scale {
        return Err(DesignError::SingularSystem);
    }
    let w = chol.solve(&b);
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = mean_y - weights.iter().zip(&mean_x).map(|(w, m)| w * m).sum::<f64>();
    Ok(KmerRidgePredictor {
        k,
        mu,
        intercept,
        weights,
    })
}

/// Per-position contribution `f(S) - mean over the three substitutions at i`.
/// Positions holding N are `None`. Uses exactly 3·(ACGT positions) + 1
/// predictor calls.
pub fn contribution_scores(predictor: &dyn ActivityPredictor, seq: &NucleotideSequence) -> Vec<Option<f64>> {
    if seq.is_empty() {
        return Vec::new();
    }
    let base = predictor.predict(seq);
    let bytes = seq.as_bytes();
    (0..bytes.len())
        .into_par_iter()
        .map(|i| {
            base_rank(bytes[i])?;
            let mut buf = bytes.to_vec();
            let mut sum = 0.0;
            for &x in BASES.iter().filter(|&&x| x != bytes[i]) {
                buf[i] = x;
                sum += predictor.predict(&NucleotideSequence::from_valid(buf.clone()));
            }
            Some(base - sum / 3.0)
        })
        .collect()
}

pub fn write_profile_tsv<W: Write>(mut w: W, seq: &NucleotideSequence, scores: &[Option<f64>]) -> io::Result<()> {
    writeln!(w, "#pos\tbase\tC")?;
    for (i, (b, c)) in seq.as_bytes().iter().zip(scores).enumerate() {
        match c {
            Some(c) => writeln!(w, "{}\t{}\t{c:.10}", i + 1, *b as char)?,
            None => writeln!(w, "{}\t{}\tNA", i + 1, *b as char)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub sequence: NucleotideSequence,
    /// Generation group, e.g. the prefix band it was sampled under.
    pub group: String,
}

/// How many candidates to take by predicted activity, from which groups
/// (`None` = every candidate).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionPlan {
    pub top: usize,
    pub top_group: Option<String>,
    pub bottom: usize,
    pub bottom_group: Option<String>,
    pub random: usize,
    pub random_group: Option<String>,
    pub seed: u64,
}

impl SelectionPlan {
    /// Top from `high`, bottom from `low`, random from `mid`.
    pub fn by_band(top: usize, bottom: usize, random: usize, seed: u64) -> Self {
        Self {
            top,
            top_group: Some("high".into()),
            bottom,
            bottom_group: Some("low".into()),
            random,
            random_group: Some("mid".into()),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selected {
    pub category: &'static str,
    pub rank: usize,
    pub index: usize,
    pub group: String,
    pub score: f64,
    pub sequence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub pool_size: usize,
    pub selected: Vec<Selected>,
}

/// Scores every candidate, then takes the highest-scoring, lowest-scoring
/// and a seeded random draw, in that order, never reusing a candidate. Equal
/// scores rank the lexicographically smaller sequence first.
pub fn rank_and_select(
    predictor: &dyn ActivityPredictor,
    candidates: &[Candidate],
    plan: &SelectionPlan,
) -> Result<SelectionReport, DesignError> {
    let scores: Vec<f64> = candidates.par_iter().map(|c| predictor.predict(&c.sequence)).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(DesignError::NonFinite);
    }
    let mut used: HashSet<usize> = HashSet::new();
    let mut selected = Vec::new();

    let pool = |group: &Option<String>, used: &HashSet<usize>| -> Vec<usize> {
        (0..candidates.len())
            .filter(|i| !used.contains(i) && group.as_ref().is_none_or(|g| &candidates[*i].group == g))
            .collect()
    };
    let too_small = |group: &Option<String>, needed: usize, available: usize| DesignError::PoolTooSmall {
        group: group.clone().unwrap_or_else(|| "all".into()),
        needed,
        available,
    };
    let scores_ref = &scores;
    let by_score = |desc: bool| {
        move |&a: &usize, &b: &usize| {
            let scores = scores_ref;
            let ord = scores[a].total_cmp(&scores[b]);
            let ord = if desc { ord.reverse() } else { ord };
            ord.then_with(|| candidates[a].sequence.as_str().cmp(candidates[b].sequence.as_str()))
        }
    };

    for (category, n, group, desc) in [
        ("top", plan.top, &plan.top_group, true),
        ("bottom", plan.bottom, &plan.bottom_group, false),
    ] {
        let mut p = pool(group, &used);
        if p.len() < n {
            return Err(too_small(group, n, p.len()));
        }
        p.sort_by(by_score(desc));
        for (rank, &i) in p[..n].iter().enumerate() {
            used.insert(i);
            selected.push(Selected {
                category,
                rank: rank + 1,
                index: i,
                group: candidates[i].group.clone(),
                score: scores[i],
                sequence: candidates[i].sequence.as_str().to_string(),
            });
        }
    }

    let p = pool(&plan.random_group, &used);
    if p.len() < plan.random {
        return Err(too_small(&plan.random_group, plan.random, p.len()));
    }
    let mut rng = job_rng(plan.seed, 0);
    for (rank, j) in index::sample(&mut rng, p.len(), plan.random).into_iter().enumerate() {
        let i = p[j];
        selected.push(Selected {
            category: "random",
            rank: rank + 1,
            index: i,
            group: candidates[i].group.clone(),
            score: scores[i],
            sequence: candidates[i].sequence.as_str().to_string(),
        });
    }
    Ok(SelectionReport {
        pool_size: candidates.len(),
        selected,
    })
}

/// Oligo pool FASTA with `category_rank|group=..|score=..|index=..` headers.
pub fn write_selection_fasta<W: Write>(w: W, report: &SelectionReport) -> io::Result<()> {
    let records: Vec<NucleotideSequence> = report
        .selected
        .iter()
        .map(|s| {
            NucleotideSequence::validate(&s.sequence)
                .expect("selected sequences are valid")
                .with_id(format!(
                    "{}_{}|group={}|score={:.6}|index={}",
                    s.category, s.rank, s.group, s.score, s.index
                ))
        })
        .collect();
    crate::seq::fasta::write_fasta(w, &records)
}
