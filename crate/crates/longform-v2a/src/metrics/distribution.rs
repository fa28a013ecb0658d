//! Distribution metrics over ingested embedding and logit sets: Fréchet
//! distance between Gaussian fits, paired KL over classifier logits,
//! inception score, and paired cross-modal cosine similarity.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use nalgebra::{DMatrix, SymmetricEigen};

/// `N×d` embedding vectors from one external model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: DenseTensor<f64>,
    pub source: String,
}

impl EmbeddingSet {
    pub fn new(vectors: DenseTensor<f64>, source: impl Into<String>) -> Result<Self> {
        if vectors.rank() != 2 {
            return Err(Error::Shape(format!(
                "embeddings must be [N×d], got {:?}",
                vectors.shape()
            )));
        }
        if !vectors.all_finite() {
            return Err(Error::Contract("embedding set contains non-finite entries".into()));
        }
        Ok(EmbeddingSet { vectors, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.shape()[1]
    }
}

/// `N×C` classifier logits; rows pair by index across sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSet {
    pub logits: DenseTensor<f64>,
    pub source: String,
}

impl LogitSet {
    pub fn new(logits: DenseTensor<f64>, source: impl Into<String>) -> Result<Self> {
        if logits.rank() != 2 || logits.shape()[1] < 2 {
            return Err(Error::Shape(format!(
                "logits must be [N×C] with C ≥ 2, got {:?}",
                logits.shape()
            )));
        }
        if !logits.all_finite() {
            return Err(Error::Contract("logit set contains non-finite entries".into()));
        }
        Ok(LogitSet { logits, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> usize {
        self.logits.shape()[1]
    }
}

/// Column means of an `N×d` tensor.
fn mean_vec(x: &DenseTensor<f64>) -> Vec<f64> {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let mut mu = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            mu[c] += x.at2(r, c);
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    mu
}

/// Unbiased sample covariance (1/(N−1)), optionally ridge-regularized.
fn covariance(x: &DenseTensor<f64>, mu: &[f64], ridge: f64) -> DMatrix<f64> {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let mut cov = DMatrix::zeros(d, d);
    for r in 0..n {
        for i in 0..d {
            let di = x.at2(r, i) - mu[i];
            for j in 0..d {
                cov[(i, j)] += di * (x.at2(r, j) - mu[j]);
            }
        }
    }
    cov /= (n - 1) as f64;
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    cov
}

/// Gaussian Fréchet distance:
/// `‖μx−μy‖² + Tr(Σx + Σy − 2·(ΣxΣy)^{1/2})`.
///
/// The matrix square root uses the symmetric eigendecomposition of the
/// symmetrized product with eigenvalues clamped at zero; covariances get a
/// 1e-10 ridge when N ≤ d (rank-deficient at desk scale). The result is
/// clamped at zero.
pub fn frechet_distance(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "embedding dims disagree: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Contract(format!(
            "Fréchet distance needs N ≥ 2 on both sides, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d = x.dim();
    let ridge = |n: usize| if n <= d { 1e-10 } else { 0.0 };
    let mx = mean_vec(&x.vectors);
    let my = mean_vec(&y.vectors);
    let cx = covariance(&x.vectors, &mx, ridge(x.len()));
    let cy = covariance(&y.vectors, &my, ridge(y.len()));

    let mean_term: f64 = mx.iter().zip(&my).map(|(a, b)| (a - b) * (a - b)).sum();
    let product = &cx * &cy;
    let sym = (&product + product.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let sqrt_trace: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let fd = mean_term + cx.trace() + cy.trace() - 2.0 * sqrt_trace;
    if !fd.is_finite() {
        let (lmin, lmax) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| (lo.min(l), hi.max(l)));
        return Err(Error::Numeric(format!(
            "Fréchet distance is non-finite (mean term {mean_term}, eigenvalue range [{lmin}, {lmax}])"
        )));
    }
    Ok(fd.max(0.0))
}

/// Row-wise log-softmax with the max subtracted for stability.
fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let logsum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - max - logsum).collect()
}

/// Mean over pairs of `KL(softmax(ref_i) ‖ softmax(gen_i))`, natural log.
pub fn kl_paired(gen: &LogitSet, reference: &LogitSet) -> Result<f64> {
    if gen.logits.shape() != reference.logits.shape() {
        return Err(Error::Shape(format!(
            "paired logit sets must match: {:?} vs {:?}",
            gen.logits.shape(),
            reference.logits.shape()
        )));
    }
    let (n, c) = (gen.len(), gen.classes());
    let mut acc = 0.0;
    for r in 0..n {
        let lg = log_softmax_row(gen.logits.row(r));
        let lr = log_softmax_row(reference.logits.row(r));
        let mut kl = 0.0;
        for j in 0..c {
            let p = lr[j].exp();
            kl += p * (lr[j] - lg[j]);
        }
        acc += kl;
    }
    Ok(acc / n as f64)
}

/// `exp(mean_i KL(p(y|x_i) ‖ p̄))` with `p̄` the mean per-sample softmax.
pub fn inception_score(s: &LogitSet) -> Result<f64> {
    let (n, c) = (s.len(), s.classes());
    if n == 0 {
        return Err(Error::Contract("inception score needs at least one sample".into()));
    }
    let mut probs = Vec::with_capacity(n);
    let mut marginal = vec![0.0; c];
    for r in 0..n {
        let lp = log_softmax_row(s.logits.row(r));
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        for j in 0..c {
            marginal[j] += p[j] / n as f64;
        }
        probs.push((p, lp));
    }
    let mut acc = 0.0;
    for (p, lp) in &probs {
        for j in 0..c {
            if p[j] > 0.0 {
                acc += p[j] * (lp[j] - marginal[j].ln());
            }
        }
    }
    Ok((acc / n as f64).exp())
}

/// Mean paired cosine similarity; zero vectors contribute 0 with a warning.
pub fn ib_score(a: &EmbeddingSet, v: &EmbeddingSet) -> Result<f64> {
    if a.vectors.shape() != v.vectors.shape() {
        return Err(Error::Shape(format!(
            "paired embedding sets must match: {:?} vs {:?}",
            a.vectors.shape(),
            v.vectors.shape()
        )));
    }
    if a.is_empty() {
        return Err(Error::Contract("ib score needs at least one pair".into()));
    }
    let (n, d) = (a.len(), a.dim());
    let mut acc = 0.0;
    for r in 0..n {
        let (ra, rv) = (a.vectors.row(r), v.vectors.row(r));
        let dot: f64 = ra.iter().zip(rv).map(|(x, y)| x * y).sum();
        let na: f64 = ra.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv: f64 = rv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nv == 0.0 {
            log::warn!("ib_score: zero vector in pair {r} of {d}-dim sets; contributing 0");
            continue;
        }
        acc += dot / (na * nv);
    }
    Ok(acc / n as f64)
}
