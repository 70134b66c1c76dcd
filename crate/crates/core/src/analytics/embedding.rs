use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::rng::seeded;
use crate::seq::{base_rank, NucleotideSequence};

/// L1-normalized k-mer frequency vector (length 4^k, A<C<G<T order).
/// Windows containing N are skipped.
pub fn profile_embedding(seq: &NucleotideSequence, k: usize) -> Result<Vec<f64>, AnalyticsError> {
    if !(1..=8).contains(&k) {
        return Err(AnalyticsError::BadK(k));
    }
    let mut counts = vec![0u64; 1 << (2 * k)];
    let mask = (1usize << (2 * k)) - 1;
    let (mut code, mut valid, mut total) = (0usize, 0usize, 0u64);
    for &b in seq.as_bytes() {
        match base_rank(b) {
            Some(r) => {
                code = ((code << 2) | r) & mask;
                valid += 1;
                if valid >= k {
                    counts[code] += 1;
                    total += 1;
                }
            }
            None => valid = 0,
        }
    }
    if total == 0 {
        return Err(AnalyticsError::SequenceTooShort { len: seq.len(), k });
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Labelled vectors of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, labels: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, AnalyticsError> {
        if ids.len() != vectors.len() || labels.len() != vectors.len() {
            return Err(AnalyticsError::LengthMismatch(labels.len(), vectors.len()));
        }
        if let Some(first) = vectors.first() {
            let d = first.len();
            if d == 0 {
                return Err(AnalyticsError::EmptyInput);
            }
            if let Some(i) = vectors.iter().position(|v| v.len() != d) {
                return Err(AnalyticsError::RaggedEmbedding {
                    row: i,
                    expected: d,
                    got: vectors[i].len(),
                });
            }
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(AnalyticsError::NonFinite);
        }
        Ok(Self { ids, labels, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Writes `#id label v_1 .. v_d`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "#id\tlabel")?;
        for j in 1..=self.dim() {
            write!(w, "\tv_{j}")?;
        }
        writeln!(w)?;
        for ((id, label), v) in self.ids.iter().zip(&self.labels).zip(&self.vectors) {
            write!(w, "{id}\t{label}")?;
            for x in v {
                write!(w, "\t{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, AnalyticsError> {
        let (mut ids, mut labels, mut vectors) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in r.lines().enumerate() {
            let bad = |reason: String| AnalyticsError::BadRow { line: i + 1, reason };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(bad("expected id, label and at least one value".into()));
            }
            ids.push(cols[0].to_string());
            labels.push(cols[1].to_string());
            vectors.push(
                cols[2..]
                    .iter()
                    .map(|c| c.trim().parse::<f64>().map_err(|_| bad(format!("bad value {c:?}"))))
                    .collect::<Result<_, _>>()?,
            );
        }
        Self::new(ids, labels, vectors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    /// n rows of `dims` coordinates.
    pub coords: Vec<Vec<f64>>,
    /// Unit-norm principal axes in the input space.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    pub iterations: Vec<usize>,
    /// The covariance rank was below `dims`; missing components are zero.
    pub degenerate: bool,
}

impl Projection {
    pub fn write_tsv<W: Write>(&self, mut w: W, set: &EmbeddingSet) -> io::Result<()> {
        let names = ["x", "y", "z"];
        write!(w, "#id\tlabel")?;
        for j in 0..self.components.len() {
            match names.get(j) {
                Some(n) => write!(w, "\t{n}")?,
                None => write!(w, "\tpc_{}", j + 1)?,
            }
        }
        writeln!(w)?;
        for ((id, label), c) in set.ids.iter().zip(&set.labels).zip(&self.coords) {
            write!(w, "{id}\t{label}")?;
            for x in c {
                write!(w, "\t{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub const PCA_MAX_ITER: usize = 10_000;
const PCA_COS_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Projects onto the top `dims` principal components, found by power
/// iteration on the covariance with deflation of earlier components.
///
/// Each component's largest-magnitude loading is made positive. If the
/// covariance has rank below `dims`, the missing components are zero and
/// `degenerate` is set.
pub fn pca_project(set: &EmbeddingSet, dims: usize) -> Result<Projection, AnalyticsError> {
    let n = set.len();
    if n < 2 || n < dims {
        return Err(AnalyticsError::TooFewPoints {
            needed: dims.max(2),
            got: n,
        });
    }
    let d = set.dim();
    let mut mean = vec![0.0; d];
    for v in &set.vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = set
        .vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let total_var: f64 = centered.iter().map(|r| dot(r, r)).sum::<f64>() / (n - 1) as f64;

    // Cv = Xᵀ(Xv)/(n-1), minus the already-extracted components
    let cov_apply = |v: &[f64], found: &[(Vec<f64>, f64)]| -> Vec<f64> {
        let xv: Vec<f64> = centered.par_iter().map(|r| dot(r, v)).collect();
        // sequential so the summation order, and thus the output, is fixed
        let mut out = vec![0.0; d];
        for (r, &s) in centered.iter().zip(&xv) {
            out.iter_mut().zip(r).for_each(|(a, x)| *a += s * x);
        }
        out.iter_mut().for_each(|x| *x /= (n - 1) as f64);
        for (u, lambda) in found {
            let c = lambda * dot(u, v);
            out.iter_mut().zip(u).for_each(|(o, ui)| *o -= c * ui);
        }
        out
    };

    let mut rng = seeded(0x5043_4131);
    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut iterations = Vec::new();
    let mut degenerate = false;
    let floor = 1e-12 * total_var.max(f64::MIN_POSITIVE);
    for _ in 0..dims {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
        orthogonalize(&mut v, &found);
        normalize(&mut v);
        let mut iters = 0;
        let mut lambda = 0.0;
        while iters < PCA_MAX_ITER {
            iters += 1;
            let mut w = cov_apply(&v, &found);
            orthogonalize(&mut w, &found);
            lambda = normalize(&mut w);
            if lambda <= floor {
                break;
            }
            let cos = dot(&v, &w);
            v = w;
            if cos > 1.0 - PCA_COS_TOL {
                break;
            }
        }
        iterations.push(iters);
        if lambda <= floor || total_var == 0.0 {
            degenerate = true;
            found.push((vec![0.0; d], 0.0));
            continue;
        }
        let lambda = dot(&v, &cov_apply(&v, &found));
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bm), (i, x)| if x.abs() > bm { (i, x.abs()) } else { (bi, bm) });
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        found.push((v, lambda));
    }

    let coords = centered
        .iter()
        .map(|r| found.iter().map(|(u, _)| dot(r, u)).collect())
        .collect();
    let explained_variance: Vec<f64> = found.iter().map(|(_, l)| *l).collect();
    let explained_ratio = explained_variance
        .iter()
        .map(|l| if total_var > 0.0 { l / total_var } else { 0.0 })
        .collect();
    Ok(Projection {
        coords,
        components: found.into_iter().map(|(u, _)| u).collect(),
        explained_variance,
        explained_ratio,
        iterations,
        degenerate,
    })
}

fn orthogonalize(v: &mut [f64], found: &[(Vec<f64>, f64)]) {
    for (u, _) in found {
        let c = dot(u, v);
        v.iter_mut().zip(u).for_each(|(x, ui)| *x -= c * ui);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
            Distance::Cosine => {
                let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot(a, b) / (na * nb)
                }
            }
        }
    }
}

/// Mean silhouette over all points. Points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[String], metric: Distance) -> Result<f64, AnalyticsError> {
    Ok(silhouette_samples(points, labels, metric)?.iter().sum::<f64>() / points.len() as f64)
}

pub fn silhouette_samples(points: &[Vec<f64>], labels: &[String], metric: Distance) -> Result<Vec<f64>, AnalyticsError> {
    if points.len() != labels.len() {
        return Err(AnalyticsError::LengthMismatch(points.len(), labels.len()));
    }
    let mut clusters: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        let next = clusters.len();
        clusters.entry(l.as_str()).or_insert(next);
    }
    if clusters.len() < 2 {
        return Err(AnalyticsError::SingleCluster);
    }
    let assign: Vec<usize> = labels.iter().map(|l| clusters[l.as_str()]).collect();
    let mut sizes = vec![0usize; clusters.len()];
    assign.iter().for_each(|&c| sizes[c] += 1);
    Ok((0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = assign[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; sizes.len()];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[assign[j]] += metric.eval(&points[i], p);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..sizes.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect())
}
