//! TOML run configuration for `crossval`.

use std::fs;
use std::path::{Path, PathBuf};

use brainvox_core::arch::ArchSpec;
use brainvox_core::baseline::{KernelKind, SvmSettings};
use brainvox_core::eval::CvSettings;
use brainvox_core::nn::InceptionWidths;
use brainvox_core::pool::PoolSpec;
use brainvox_core::resample::ResampleMethod;
use brainvox_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths resolve against the config file's directory.
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub family: Option<String>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub arch: ArchOverrides,
    #[serde(default)]
    pub train: TrainConfig,
    /// Candidate learning rates for the inner loop; empty keeps
    /// `train.learning_rate`.
    #[serde(default)]
    pub learning_rates: Vec<f64>,
    #[serde(default)]
    pub svm: SvmOverrides,
    #[serde(default)]
    pub cv: CvSettings,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Trilinear,
    Box2,
}

impl From<Method> for ResampleMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Trilinear => ResampleMethod::Trilinear,
            Method::Box2 => ResampleMethod::Box2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Target extents in NIfTI axis order; omitted keeps the input grid.
    pub downsample: Option<[usize; 3]>,
    #[serde(default)]
    pub method: Method,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchOverrides {
    pub multi_channel: Option<bool>,
    pub conv_filters: Option<Vec<usize>>,
    pub stem_filters: Option<usize>,
    pub inception: Option<InceptionWidths>,
    pub dense_units: Option<usize>,
    pub kernel: Option<usize>,
    pub pool: Option<PoolSpec>,
    pub pool_after_block: Option<bool>,
}

impl ArchOverrides {
    pub fn apply(&self, mut arch: ArchSpec) -> ArchSpec {
        if let Some(v) = self.multi_channel {
            arch.multi_channel = v;
        }
        if let Some(v) = &self.conv_filters {
            arch.conv_filters = v.clone();
        }
        if let Some(v) = self.stem_filters {
            arch.stem_filters = v;
        }
        if let Some(v) = self.inception {
            arch.inception = v;
        }
        if let Some(v) = self.dense_units {
            arch.dense_units = v;
        }
        if let Some(v) = self.kernel {
            arch.kernel = v;
        }
        if let Some(v) = self.pool {
            arch.pool = v;
        }
        if let Some(v) = self.pool_after_block {
            arch.pool_after_block = v;
        }
        arch
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmOverrides {
    pub c_grid: Option<Vec<f64>>,
    pub gamma_grid: Option<Vec<f64>>,
    pub variance_target: Option<f64>,
    pub inner_folds: Option<usize>,
}

/// The model family a run trains.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyChoice {
    Cnn(ArchSpec),
    Svm(SvmSettings),
    Constant(u8),
}

pub const FAMILY_NAMES: &str = "seq1, seq2, seq3, inception1, inception2, incres1, incres2, svm-linear, svm-rbf, constant, constant0";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Resolves the family. The CNN input extent is filled in once the data
    /// are loaded.
    pub fn family(&self) -> Result<FamilyChoice> {
        let name = self
            .family
            .as_deref()
            .ok_or_else(|| Error::Config("no model family given".into()))?;
        if let Some(arch) = ArchSpec::named(name) {
            let arch = self.arch.apply(arch);
            arch.validate()?;
            return Ok(FamilyChoice::Cnn(arch));
        }
        let svm = |kernel| {
            let d = SvmSettings::default();
            let o = &self.svm;
            SvmSettings {
                kernel,
                c_grid: o.c_grid.clone().unwrap_or(d.c_grid),
                gamma_grid: o.gamma_grid.clone().unwrap_or(d.gamma_grid),
                variance_target: o.variance_target.unwrap_or(d.variance_target),
                inner_folds: o.inner_folds.unwrap_or(d.inner_folds),
            }
        };
        match name {
            "svm-linear" => Ok(FamilyChoice::Svm(svm(KernelKind::Linear))),
            "svm-rbf" => Ok(FamilyChoice::Svm(svm(KernelKind::Rbf))),
            "constant" | "constant1" => Ok(FamilyChoice::Constant(1)),
            "constant0" => Ok(FamilyChoice::Constant(0)),
            other => Err(Error::Config(format!("unknown family {other:?}; expected one of {FAMILY_NAMES}"))),
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.cv.validate()?;
        if self.manifest.is_none() {
            return Err(Error::Config("no manifest given".into()));
        }
        if self.out.is_none() {
            return Err(Error::Config("no output directory given".into()));
        }
        if let Some(e) = self.data.downsample {
            if e.contains(&0) {
                return Err(Error::Config(format!("downsample extents {e:?} must be positive")));
            }
        }
        if self.learning_rates.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return Err(Error::Config(format!("learning rates {:?} must be >= 0", self.learning_rates)));
        }
        let s = &self.svm;
        if let Some(v) = s.variance_target {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("variance target {v} outside (0, 1]")));
            }
        }
        for (name, grid) in [("c_grid", &s.c_grid), ("gamma_grid", &s.gamma_grid)] {
            if let Some(g) = grid {
                if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config(format!("{name} {g:?} must be non-empty and positive")));
                }
            }
        }
        if s.inner_folds.is_some_and(|k| k < 2) {
            return Err(Error::Config("svm inner folds must be at least 2".into()));
        }
        self.family().map(|_| ())
    }
}
