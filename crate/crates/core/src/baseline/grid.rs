//! Exhaustive `(C, gamma)` search scored by stratified inner-fold accuracy.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::svm::{svm_fit, Kernel};
use crate::error::{Error, Result};
use crate::eval::stratified_kfold;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

impl KernelKind {
    pub fn kernel(self, gamma: Option<f64>) -> Kernel {
        match self {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Rbf => Kernel::Rbf {
                gamma: gamma.unwrap_or(1.0),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub c: f64,
    /// `None` for the linear kernel.
    pub gamma: Option<f64>,
    /// Mean inner-fold accuracy; `None` when the grid has a single cell and
    /// nothing was evaluated.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: GridCell,
    /// Every evaluated cell in ascending `(C, gamma)` order.
    pub cells: Vec<GridCell>,
}

fn ascending(grid: &[f64], what: &str) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{what} grid is empty")));
    }
    if let Some(bad) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("{what} grid value {bad} must be positive")));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Ties go to the smaller C, then the smaller gamma.
pub fn grid_search(
    features: &[&[f64]],
    labels: &[i8],
    kind: KernelKind,
    c_grid: &[f64],
    gamma_grid: &[f64],
    inner_folds: usize,
    seed: u64,
) -> Result<GridResult> {
    let cs = ascending(c_grid, "C")?;
    let gammas: Vec<Option<f64>> = match kind {
        KernelKind::Linear => alloc::vec![None],
        KernelKind::Rbf => ascending(gamma_grid, "gamma")?.into_iter().map(Some).collect(),
    };
    if cs.len() * gammas.len() == 1 {
        let cell = GridCell {
            c: cs[0],
            gamma: gammas[0],
            score: None,
        };
        return Ok(GridResult {
            best: cell,
            cells: alloc::vec![cell],
        });
    }

    let binary: Vec<u8> = labels.iter().map(|&y| u8::from(y > 0)).collect();
    let plan = stratified_kfold(&binary, inner_folds, seed)?;
    let mut cells = Vec::with_capacity(cs.len() * gammas.len());
    let mut best: Option<GridCell> = None;
    for &c in &cs {
        for &gamma in &gammas {
            let kernel = kind.kernel(gamma);
            let mut total = 0.0;
            for f in 0..plan.k() {
                let train = plan.train_indices(f);
                let xs: Vec<&[f64]> = train.iter().map(|&i| features[i]).collect();
                let ys: Vec<i8> = train.iter().map(|&i| labels[i]).collect();
                let model = svm_fit(&xs, &ys, kernel, c)?;
                let test = plan.test_indices(f);
                let mut correct = 0usize;
                for &i in test {
                    if model.predict(features[i])? == labels[i] {
                        correct += 1;
                    }
                }
                total += correct as f64 / test.len() as f64;
            }
            let cell = GridCell {
                c,
                gamma,
                score: Some(total / plan.k() as f64),
            };
            cells.push(cell);
            if best.is_none_or(|b| cell.score > b.score) {
                best = Some(cell);
            }
        }
    }
    Ok(GridResult {
        best: best.expect("grid is non-empty"),
        cells,
    })
}
