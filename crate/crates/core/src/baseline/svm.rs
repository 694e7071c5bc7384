//! Soft-margin SVM trained by sequential minimal optimization with
//! second-order working-set selection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping tolerance on the maximal KKT violating pair.
pub const KKT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    Linear,
    /// `exp(-gamma * |x - z|^2)`
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::exp(-gamma * d2)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Config(format!("RBF gamma {gamma} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    kernel: Kernel,
    c: f64,
    support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    dual_coef: Vec<f64>,
    bias: f64,
}

/// Solver diagnostics that are not needed for prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmFit {
    pub model: SvmModel,
    /// One multiplier per training point, support vectors or not.
    pub alphas: Vec<f64>,
    pub iterations: usize,
    /// Largest violation of the optimality conditions over training points.
    pub kkt_residual: f64,
    /// Dual objective after every iteration, when requested.
    pub objective_trace: Vec<f64>,
}

impl SvmModel {
    pub fn from_parts(
        kernel: Kernel,
        c: f64,
        support_vectors: Vec<Vec<f64>>,
        dual_coef: Vec<f64>,
        bias: f64,
    ) -> Result<Self> {
        if support_vectors.len() != dual_coef.len() {
            return Err(Error::InvalidTensor("support vector and coefficient counts differ".into()));
        }
        if let Some(first) = support_vectors.first() {
            if support_vectors.iter().any(|s| s.len() != first.len()) {
                return Err(Error::InvalidTensor("support vectors differ in length".into()));
            }
        }
        Ok(Self {
            kernel,
            c,
            support_vectors,
            dual_coef,
            bias,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    pub fn dual_coef(&self) -> &[f64] {
        &self.dual_coef
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn n_features(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// `f(x) = sum_i alpha_i y_i K(x_i, x) + b`
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.n_features() {
            if x.len() != d {
                return Err(Error::shape("svm_decision", &[x.len()], &[d]));
            }
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(s, a)| a * self.kernel.eval(s, x))
            .sum::<f64>()
            + self.bias)
    }

    /// Sign of the decision; zero maps to `+1`.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision(x)? >= 0.0 { 1 } else { -1 })
    }
}

pub fn svm_fit(features: &[&[f64]], labels: &[i8], kernel: Kernel, c: f64) -> Result<SvmModel> {
    Ok(svm_fit_detailed(features, labels, kernel, c, false)?.model)
}

pub fn svm_fit_detailed(
    features: &[&[f64]],
    labels: &[i8],
    kernel: Kernel,
    c: f64,
    trace: bool,
) -> Result<SvmFit> {
    let n = features.len();
    if n != labels.len() {
        return Err(Error::shape("svm_fit labels", &[labels.len()], &[n]));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::TrainingData(format!("SVM label {bad} is not -1 or +1")));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::TrainingData("SVM training needs both classes".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("SVM penalty C={c} must be positive")));
    }
    kernel.validate()?;
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::shape("svm_fit feature", &[bad.len()], &[d]));
    }

    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(features[i], features[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut alpha = vec![0.0; n];
    // Gradient of the dual objective (minimisation form): G = Q alpha - 1.
    let mut g = vec![-1.0; n];
    let max_iter = 10_000_000usize.max(100 * n);
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut objective_trace = Vec::new();
    let mut iterations = 0;

    loop {
        // First index: maximal violator in the "up" set.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * g[t] >= gmax {
                gmax = -y[t] * g[t];
                i_sel = t;
            }
        }
        // Second index: largest objective decrease in the "low" set.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let i = i_sel;
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let yg = y[t] * g[t];
                if yg >= gmax2 {
                    gmax2 = yg;
                }
                let grad_diff = gmax + yg;
                if grad_diff > 0.0 {
                    let quad = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if gmax + gmax2 < KKT_TOLERANCE || j_sel == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual: gmax + gmax2,
            });
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = k[i * n + j];
        if y[i] != y[j] {
            let quad = k[i * n + i] + k[j * n + j] + 2.0 * y[i] * y[j] * kij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = k[i * n + i] + k[j * n + j] - 2.0 * y[i] * y[j] * kij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[t * n + i] * di + y[j] * k[t * n + j] * dj);
        }
        if trace {
            objective_trace.push(dual_objective(&alpha, &g));
        }
    }

    // Bias: average over free vectors, else the midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let bias = -rho;

    let kkt_residual = (0..n)
        .map(|t| {
            // y f(x_t) - 1 = G_t + y_t b
            let m = g[t] + y[t] * bias;
            if lower(alpha[t]) {
                (-m).max(0.0)
            } else if upper(alpha[t]) {
                m.max(0.0)
            } else {
                m.abs()
            }
        })
        .fold(0.0, f64::max);

    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(features[t].to_vec());
            dual_coef.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmFit {
        model: SvmModel {
            kernel,
            c,
            support_vectors,
            dual_coef,
            bias,
        },
        alphas: alpha,
        iterations,
        kkt_residual,
        objective_trace,
    })
}

/// `sum(alpha) - alpha^T Q alpha / 2`, written with `G = Q alpha - 1`.
fn dual_objective(alpha: &[f64], g: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(g).map(|(a, gt)| a * (gt - 1.0)).sum::<f64>()
}
