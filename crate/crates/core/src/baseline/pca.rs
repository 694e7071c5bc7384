//! Principal component analysis by eigendecomposition of the covariance or,
//! when features outnumber samples, of the `n x n` Gram matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigen;
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcaMethod {
    /// Gram route when `d > n`, covariance route otherwise.
    Auto,
    Gram,
    Covariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// Retained components, one orthonormal row each.
    components: Vec<Vec<f64>>,
    /// Covariance eigenvalues, non-increasing, `min(n - 1, d)` of them.
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn from_parts(mean: Vec<f64>, components: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> Result<Self> {
        if components.iter().any(|c| c.len() != mean.len()) {
            return Err(Error::InvalidTensor("PCA component length differs from mean".into()));
        }
        if components.len() > eigenvalues.len() {
            return Err(Error::InvalidTensor(format!(
                "{} components but {} eigenvalues",
                components.len(),
                eigenvalues.len()
            )));
        }
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Retained component count.
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return vec![0.0; self.eigenvalues.len()];
        }
        self.eigenvalues.iter().map(|l| l / total).collect()
    }

    /// Set when the training samples had no variance at all.
    pub fn warning(&self) -> Option<&'static str> {
        self.eigenvalues
            .iter()
            .all(|&l| l == 0.0)
            .then_some("all samples identical; no components retained")
    }

    /// `(x - mean) . components^T`
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::shape("pca_transform", &[x.len()], &[self.mean.len()]));
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(ci, (xi, mi))| ci * (xi - mi))
                    .sum()
            })
            .collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.k() {
            return Err(Error::shape("pca_reconstruct", &[z.len()], &[self.k()]));
        }
        let mut x = self.mean.clone();
        for (zi, c) in z.iter().zip(&self.components) {
            for (xj, cj) in x.iter_mut().zip(c) {
                *xj += zi * cj;
            }
        }
        Ok(x)
    }
}

pub fn pca_fit(samples: &[&[f64]], variance_target: f64) -> Result<PcaModel> {
    pca_fit_with(samples, variance_target, PcaMethod::Auto)
}

pub fn pca_fit_with(samples: &[&[f64]], variance_target: f64, method: PcaMethod) -> Result<PcaModel> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TrainingData(format!("PCA needs at least 2 samples, got {n}")));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::TrainingData("PCA samples are empty".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::shape("pca_fit sample", &[bad.len()], &[d]));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Config(format!("variance target {variance_target} outside (0, 1]")));
    }

    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.iter()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let denom = (n - 1) as f64;
    let use_gram = match method {
        PcaMethod::Auto => d > n,
        PcaMethod::Gram => true,
        PcaMethod::Covariance => false,
    };
    let keep = (n - 1).min(d);

    let (mut eigenvalues, basis) = if use_gram {
        let centered = |i: usize| -> Vec<f64> { samples[i].iter().zip(&mean).map(|(x, m)| x - m).collect() };
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            let ci = centered(i);
            for j in 0..=i {
                let g: f64 = ci
                    .iter()
                    .zip(samples[j].iter().zip(&mean))
                    .map(|(a, (x, m))| a * (x - m))
                    .sum::<f64>()
                    / denom;
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let eig = symmetric_eigen(&gram, n)?;
        (eig.values.clone(), Basis::Gram(eig))
    } else {
        let mut cov = vec![0.0; d * d];
        for s in samples {
            let c: Vec<f64> = s.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..d {
                for j in 0..=i {
                    cov[i * d + j] += c[i] * c[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = cov[i * d + j] / denom;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        let eig = symmetric_eigen(&cov, d)?;
        (eig.values.clone(), Basis::Covariance(eig))
    };
    eigenvalues.truncate(keep);
    let top = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    // Rounding in the mean leaves variance of order eps^2 |x|^2 even when
    // every sample is identical.
    let magnitude = samples
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = (top * RANK_TOLERANCE).max(magnitude * magnitude * 1e-28);
    for l in &mut eigenvalues {
        if *l <= floor {
            *l = 0.0;
        }
    }
    let rank = eigenvalues.iter().take_while(|&&l| l > 0.0).count();
    let total: f64 = eigenvalues.iter().sum();

    let mut k = 0;
    if total > 0.0 {
        let mut cum = 0.0;
        while k < rank {
            cum += eigenvalues[k];
            k += 1;
            if cum / total >= variance_target - 1e-12 {
                break;
            }
        }
    }

    let mut components: Vec<Vec<f64>> = match basis {
        Basis::Covariance(eig) => (0..k).map(|j| eig.vector(j)).collect(),
        Basis::Gram(eig) => {
            let mut comps = Vec::with_capacity(k);
            for j in 0..k {
                let u = eig.vector(j);
                let norm = libm::sqrt(denom * eig.values[j]);
                let mut v = vec![0.0; d];
                for (ui, s) in u.iter().zip(samples) {
                    let w = ui / norm;
                    for ((vk, x), m) in v.iter_mut().zip(s.iter()).zip(&mean) {
                        *vk += w * (x - m);
                    }
                }
                comps.push(v);
            }
            // Two passes of modified Gram-Schmidt remove the round-off that
            // the division by small singular values amplifies.
            for _ in 0..2 {
                orthonormalize(&mut comps);
            }
            comps
        }
    };
    for c in &mut components {
        normalize_sign(c);
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

enum Basis {
    Gram(super::eigen::SymmetricEigen),
    Covariance(super::eigen::SymmetricEigen),
}

fn orthonormalize(rows: &mut [Vec<f64>]) {
    for i in 0..rows.len() {
        let (done, rest) = rows.split_at_mut(i);
        let v = &mut rest[0];
        for u in done.iter() {
            let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (vk, uk) in v.iter_mut().zip(u) {
                *vk -= dot * uk;
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        for vk in v.iter_mut() {
            *vk /= norm;
        }
    }
}

/// Flips `v` so its largest-magnitude coordinate (first on ties) is positive.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}
