use alloc::borrow::Cow;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::protocol::{Classifier, ModelFamily, TrainView};
use crate::arch::ArchSpec;
use crate::baseline::{Kernel, SvmPipeline, SvmSettings};
use crate::error::Result;
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::train::{fit, TrainConfig, TrainedModel};

/// Always answers the same class. For exercising the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstantFamily {
    pub class: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstantModel {
    pub class: u8,
}

impl Classifier for ConstantModel {
    fn predict_proba(&self, _x: &Tensor) -> Result<f64> {
        Ok(f64::from(self.class))
    }
}

impl ModelFamily for ConstantFamily {
    type Model = ConstantModel;
    type Hyper = ();

    fn name(&self) -> String {
        format!("constant{}", self.class)
    }

    fn candidates(&self) -> Vec<()> {
        alloc::vec![()]
    }

    fn fit(&self, train: &TrainView<'_>, _hyper: &(), _seed: u64) -> Result<ConstantModel> {
        // Reads the labels so the access log reflects a real fit.
        let _ = train.labels();
        Ok(ConstantModel { class: self.class })
    }
}

/// A CNN architecture trained with a fixed recipe; the inner loop picks
/// the learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnFamily {
    pub arch: ArchSpec,
    pub train: TrainConfig,
    /// Empty means just `train.learning_rate`.
    pub learning_rates: Vec<f64>,
}

impl Classifier for TrainedModel {
    fn predict_proba(&self, x: &Tensor) -> Result<f64> {
        TrainedModel::predict_proba(self, x)
    }
}

impl ModelFamily for CnnFamily {
    type Model = TrainedModel;
    type Hyper = f64;

    fn name(&self) -> String {
        self.arch.name()
    }

    fn describe(&self, _model: &TrainedModel, lr: &f64) -> String {
        format!("lr={lr}")
    }

    fn candidates(&self) -> Vec<f64> {
        if self.learning_rates.is_empty() {
            alloc::vec![self.train.learning_rate]
        } else {
            self.learning_rates.clone()
        }
    }

    /// Network initialisation and shuffling draw from separate streams of
    /// `seed`.
    fn fit(&self, train: &TrainView<'_>, lr: &f64, seed: u64) -> Result<TrainedModel> {
        let network = self.arch.build(derive_seed(seed, 0))?;
        let inputs: Vec<Cow<'_, Tensor>> = train
            .samples()
            .into_iter()
            .map(|s| self.arch.prepare_input(s))
            .collect::<Result<_>>()?;
        let labels = train.labels();
        let pairs: Vec<(&Tensor, u8)> = inputs.iter().map(|c| c.as_ref()).zip(labels).collect();
        let config = TrainConfig {
            learning_rate: *lr,
            seed: derive_seed(seed, 1),
            batch_size: self.train.batch_size.min(pairs.len()),
            ..self.train.clone()
        };
        Ok(fit(network, &pairs, &config)?.with_arch(self.arch.clone()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmFamily {
    pub settings: SvmSettings,
}

impl Classifier for SvmPipeline {
    fn predict_proba(&self, x: &Tensor) -> Result<f64> {
        SvmPipeline::predict_proba(self, x)
    }

    fn predict(&self, x: &Tensor) -> Result<u8> {
        SvmPipeline::predict(self, x)
    }
}

impl ModelFamily for SvmFamily {
    type Model = SvmPipeline;
    type Hyper = ();

    fn name(&self) -> String {
        format!("svm-{:?}", self.settings.kernel).to_lowercase()
    }

    /// `(C, gamma)` selection happens inside `fit` by grid search.
    fn candidates(&self) -> Vec<()> {
        alloc::vec![()]
    }

    fn fit(&self, train: &TrainView<'_>, _hyper: &(), seed: u64) -> Result<SvmPipeline> {
        let samples = train.samples();
        let labels = train.labels();
        Ok(SvmPipeline::fit(&samples, &labels, &self.settings, seed)?.0)
    }

    fn describe(&self, model: &SvmPipeline, _hyper: &()) -> String {
        let svm = model.svm();
        match svm.kernel() {
            Kernel::Rbf { gamma } => format!("C={} gamma={gamma}", svm.c()),
            Kernel::Linear => format!("C={}", svm.c()),
        }
    }
}
