//! Per-map PCA followed by an SVM on the concatenated projections.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::grid::{grid_search, GridResult, KernelKind};
use super::pca::{pca_fit, PcaModel};
use super::svm::{svm_fit, SvmModel};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmSettings {
    pub kernel: KernelKind,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub variance_target: f64,
    pub inner_folds: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            c_grid: alloc::vec![0.01, 0.1, 1.0, 10.0, 100.0],
            gamma_grid: alloc::vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            variance_target: 0.95,
            inner_folds: 4,
        }
    }
}

impl SvmSettings {
    pub fn linear() -> Self {
        Self {
            kernel: KernelKind::Linear,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmPipeline {
    pcas: Vec<PcaModel>,
    svm: SvmModel,
}

fn map_slices(sample: &Tensor) -> Result<Vec<&[f64]>> {
    let (c, [d, h, w]) = sample.volume_dims("svm pipeline sample")?;
    Ok(sample.data().chunks_exact(d * h * w).take(c).collect())
}

/// One PCA per input map, each fitted on that map's voxels across `samples`.
pub fn fit_map_pcas(samples: &[&Tensor], variance_target: f64) -> Result<Vec<PcaModel>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::TrainingData("no samples".into()))?;
    let shape = first.shape();
    if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
        return Err(Error::shape("svm pipeline sample", bad.shape(), shape));
    }
    let per_sample: Vec<Vec<&[f64]>> = samples.iter().map(|s| map_slices(s)).collect::<Result<_>>()?;
    (0..shape[0])
        .map(|m| {
            let rows: Vec<&[f64]> = per_sample.iter().map(|maps| maps[m]).collect();
            pca_fit(&rows, variance_target)
        })
        .collect()
}

/// Concatenation of each map's PCA projection.
pub fn map_features(pcas: &[PcaModel], sample: &Tensor) -> Result<Vec<f64>> {
    let maps = map_slices(sample)?;
    if maps.len() != pcas.len() {
        return Err(Error::shape("svm pipeline maps", &[maps.len()], &[pcas.len()]));
    }
    let mut out = Vec::new();
    for (pca, m) in pcas.iter().zip(maps) {
        out.extend(pca.transform(m)?);
    }
    Ok(out)
}

fn signed(labels: &[u8]) -> Result<Vec<i8>> {
    labels
        .iter()
        .map(|&y| match y {
            0 => Ok(-1),
            1 => Ok(1),
            _ => Err(Error::TrainingData(format!("label {y} is not 0 or 1"))),
        })
        .collect()
}

impl SvmPipeline {
    pub fn from_parts(pcas: Vec<PcaModel>, svm: SvmModel) -> Self {
        Self { pcas, svm }
    }

    /// Fits PCA on `samples`, picks `(C, gamma)` by inner-fold grid search
    /// on the projections, then refits the SVM on all of them.
    pub fn fit(samples: &[&Tensor], labels: &[u8], settings: &SvmSettings, seed: u64) -> Result<(Self, GridResult)> {
        if samples.len() != labels.len() {
            return Err(Error::shape("svm pipeline labels", &[labels.len()], &[samples.len()]));
        }
        let ys = signed(labels)?;
        let pcas = fit_map_pcas(samples, settings.variance_target)?;
        let feats: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| map_features(&pcas, s))
            .collect::<Result<_>>()?;
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        let grid = grid_search(
            &refs,
            &ys,
            settings.kernel,
            &settings.c_grid,
            &settings.gamma_grid,
            settings.inner_folds,
            seed,
        )?;
        let svm = svm_fit(&refs, &ys, settings.kernel.kernel(grid.best.gamma), grid.best.c)?;
        Ok((Self { pcas, svm }, grid))
    }

    pub fn pcas(&self) -> &[PcaModel] {
        &self.pcas
    }

    pub fn svm(&self) -> &SvmModel {
        &self.svm
    }

    pub fn decision(&self, sample: &Tensor) -> Result<f64> {
        self.svm.decision(&map_features(&self.pcas, sample)?)
    }

    /// Monotone squashing of the decision value; it is not calibrated.
    pub fn predict_proba(&self, sample: &Tensor) -> Result<f64> {
        Ok(sigmoid(self.decision(sample)?))
    }

    pub fn predict(&self, sample: &Tensor) -> Result<u8> {
        Ok(u8::from(self.decision(sample)? >= 0.0))
    }
}
