//! Binary cross-entropy, optimizers and the mini-batch training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Network, Param};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

/// Decision threshold; a probability exactly at the threshold is class 1.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 50,
            optimizer: Optimizer::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.batch_size > n_samples {
            return Err(Error::Config(format!(
                "batch size {} must be in 1..={n_samples}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        match self.optimizer {
            Optimizer::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::Config(format!("momentum {momentum} outside [0, 1)")))
            }
            Optimizer::Adam { beta1, beta2, epsilon }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 =>
            {
                Err(Error::Config(format!("invalid Adam settings {:?}", self.optimizer)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bce {
    pub loss: f64,
    /// `d loss / d logit = sigmoid(logit) - label`.
    pub grad_logit: f64,
}

/// Cross-entropy of a sigmoid output, evaluated from the logit as
/// `max(z, 0) - z y + ln(1 + e^{-|z|})`, which never takes `ln 0`.
pub fn bce_with_logit(logit: f64, label: u8) -> Bce {
    let y = f64::from(label);
    let loss = logit.max(0.0) - logit * y + libm::log1p(libm::exp(-logit.abs()));
    Bce {
        loss,
        grad_logit: sigmoid(logit) - y,
    }
}

/// Cross-entropy from a probability in (0, 1).
pub fn bce_loss(probability: f64, label: u8) -> Bce {
    let y = f64::from(label);
    let loss = -(y * libm::log(probability) + (1.0 - y) * libm::log(1.0 - probability));
    Bce {
        loss,
        grad_logit: probability - y,
    }
}

pub fn mean_bce(logits: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_with_logit(z, y).loss)
        .sum();
    total / logits.len() as f64
}

/// A network frozen after training, with what produced it.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    network: Network,
    arch: Option<ArchSpec>,
    config: TrainConfig,
    loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn from_parts(
        network: Network,
        arch: Option<ArchSpec>,
        config: TrainConfig,
        loss_history: Vec<f64>,
    ) -> Self {
        Self {
            network,
            arch,
            config,
            loss_history,
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn arch(&self) -> Option<&ArchSpec> {
        self.arch.as_ref()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Mean training loss of each epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    pub fn with_arch(mut self, arch: ArchSpec) -> Self {
        self.arch = Some(arch);
        self
    }

    /// Probability of class 1. Three-map subject tensors are reduced to the
    /// GM map for single-channel architectures.
    pub fn predict_proba(&self, sample: &Tensor) -> Result<f64> {
        match &self.arch {
            Some(arch) => self.network.predict_proba(arch.prepare_input(sample)?.as_ref()),
            None => self.network.predict_proba(sample),
        }
    }

    pub fn predict(&self, sample: &Tensor, threshold: f64) -> Result<u8> {
        Ok(u8::from(self.predict_proba(sample)? >= threshold))
    }
}

struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: i32,
}

impl OptimizerState {
    fn new(params: &[&mut Param]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.value.len()]).collect::<Vec<_>>();
        Self {
            first: zeros(),
            second: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, params: Vec<&mut Param>, lr: f64, opt: &Optimizer) {
        self.t += 1;
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            let grads = p.grad.data().to_vec();
            let values = p.value.data_mut();
            match *opt {
                Optimizer::Sgd { momentum } => {
                    for ((w, g), vel) in values.iter_mut().zip(&grads).zip(m.iter_mut()) {
                        *vel = momentum * *vel + g;
                        *w -= lr * *vel;
                    }
                }
                Optimizer::Adam { beta1, beta2, epsilon } => {
                    let c1 = 1.0 - libm::pow(beta1, f64::from(self.t));
                    let c2 = 1.0 - libm::pow(beta2, f64::from(self.t));
                    for (((w, g), mv), vv) in values.iter_mut().zip(&grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mv = beta1 * *mv + (1.0 - beta1) * g;
                        *vv = beta2 * *vv + (1.0 - beta2) * g * g;
                        let m_hat = *mv / c1;
                        let v_hat = *vv / c2;
                        *w -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
                    }
                }
            }
        }
    }
}

/// Trains `network` on `(input, label)` pairs by minimising the mean batch
/// cross-entropy. Runs `epochs * ceil(n / batch_size)` optimizer steps; the
/// visiting order is reshuffled each epoch from `config.seed`.
pub fn fit(mut network: Network, data: &[(&Tensor, u8)], config: &TrainConfig) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::TrainingData("empty training set".into()));
    }
    if let Some((_, y)) = data.iter().find(|(_, y)| *y > 1) {
        return Err(Error::TrainingData(format!("label {y} is not 0 or 1")));
    }
    config.validate(data.len())?;

    let mut state = OptimizerState::new(&network.params_mut());
    let mut rng = rng_from_seed(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            network.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = data[i];
                let z = network.forward_logit(x)?;
                let bce = bce_with_logit(z, y);
                if !bce.loss.is_finite() {
                    return Err(Error::Diverged { step, loss: bce.loss });
                }
                epoch_loss += bce.loss;
                network.backward_logit(bce.grad_logit * scale)?;
            }
            state.step(network.params_mut(), config.learning_rate, &config.optimizer);
            step += 1;
        }
        history.push(epoch_loss / data.len() as f64);
    }
    network.clear_cache();
    Ok(TrainedModel::from_parts(network, None, config.clone(), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_parameters, Layer};

    fn logistic(inputs: usize) -> Network {
        Network::new(
            vec![Layer::flatten(), Layer::dense(inputs, 1), Layer::sigmoid()],
            &[1, 1, 1, inputs],
        )
        .unwrap()
    }

    #[test]
    fn midpoint_loss_is_ln2() {
        for y in [0, 1] {
            let b = bce_loss(0.5, y);
            assert!((b.loss - core::f64::consts::LN_2).abs() < 1e-15);
            let c = bce_with_logit(0.0, y);
            assert!((c.loss - core::f64::consts::LN_2).abs() < 1e-15);
        }
        assert_eq!(bce_with_logit(0.0, 1).grad_logit, -0.5);
    }

    #[test]
    fn logit_form_is_stable_at_extremes() {
        let b = bce_with_logit(-1000.0, 1);
        assert!((b.loss - 1000.0).abs() < 1e-9);
        assert!(bce_with_logit(1000.0, 1).loss.abs() < 1e-300);
        assert!(bce_with_logit(1000.0, 0).loss.is_finite());
    }

    #[test]
    fn batch_mean_matches_naive_sum() {
        let logits = [0.3, -2.0, 5.5, 0.0, -0.7];
        let labels = [1, 0, 1, 1, 0];
        let mut naive = 0.0;
        for (&z, &y) in logits.iter().zip(&labels) {
            let p = 1.0 / (1.0 + libm::exp(-z));
            naive += -(f64::from(y) * libm::log(p) + (1.0 - f64::from(y)) * libm::log(1.0 - p));
        }
        naive /= logits.len() as f64;
        assert!((mean_bce(&logits, &labels) - naive).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut net = logistic(3);
        init_parameters(&mut net, 5);
        let before: Vec<Tensor> = net.params().iter().map(|p| p.value.clone()).collect();
        let x = Tensor::new(&[1, 1, 1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        let data = [(&x, 1u8), (&x, 0u8)];
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 1,
            epochs: 3,
            ..TrainConfig::default()
        };
        let model = fit(net, &data, &cfg).unwrap();
        let after: Vec<Tensor> = model.network().params().iter().map(|p| p.value.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn one_sgd_step_matches_closed_form() {
        let mut net = logistic(2);
        init_parameters(&mut net, 11);
        let w0 = net.params()[0].value.data().to_vec();
        let x = Tensor::new(&[1, 1, 1, 2], vec![0.8, -1.5]).unwrap();
        let z = w0[0] * 0.8 + w0[1] * -1.5;
        let p = 1.0 / (1.0 + libm::exp(-z));
        let lr = 0.1;
        let cfg = TrainConfig {
            learning_rate: lr,
            batch_size: 1,
            epochs: 1,
            optimizer: Optimizer::Sgd { momentum: 0.0 },
            seed: 0,
            shuffle: false,
        };
        let model = fit(net, &[(&x, 1)], &cfg).unwrap();
        let w1 = model.network().params()[0].value.data();
        let b1 = model.network().params()[1].value.data()[0];
        assert!((w1[0] - (w0[0] - lr * (p - 1.0) * 0.8)).abs() < 1e-14);
        assert!((w1[1] - (w0[1] - lr * (p - 1.0) * -1.5)).abs() < 1e-14);
        assert!((b1 - (-lr * (p - 1.0))).abs() < 1e-14);
    }

    #[test]
    fn first_adam_step_is_normalized() {
        let mut net = logistic(1);
        init_parameters(&mut net, 2);
        let w0 = net.params()[0].value.data()[0];
        let x = Tensor::new(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let p = 1.0 / (1.0 + libm::exp(-(w0 * 2.0)));
        let g = (p - 0.0) * 2.0;
        let lr = 0.01;
        let cfg = TrainConfig {
            learning_rate: lr,
            batch_size: 1,
            epochs: 1,
            shuffle: false,
            ..TrainConfig::default()
        };
        let model = fit(net, &[(&x, 0)], &cfg).unwrap();
        let w1 = model.network().params()[0].value.data()[0];
        // m_hat = g and v_hat = g^2 on the first step.
        let expected = w0 - lr * g / (libm::sqrt(g * g) + 1e-8);
        assert!((w1 - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_batch_and_labels() {
        let net = logistic(1);
        let x = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(net.clone(), &[(&x, 1)], &cfg), Err(Error::Config(_))));
        let cfg = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(net, &[(&x, 2)], &cfg), Err(Error::TrainingData(_))));
    }

    #[test]
    fn diverging_training_is_reported() {
        let mut net = logistic(1);
        init_parameters(&mut net, 0);
        let x = Tensor::new(&[1, 1, 1, 1], vec![1e300]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            batch_size: 1,
            epochs: 5,
            optimizer: Optimizer::Sgd { momentum: 0.0 },
            seed: 0,
            shuffle: false,
        };
        assert!(matches!(
            fit(net, &[(&x, 1), (&x, 0)], &cfg),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn threshold_ties_go_to_class_one() {
        let net = logistic(1);
        let model = TrainedModel::from_parts(net, None, TrainConfig::default(), vec![]);
        let x = Tensor::new(&[1, 1, 1, 1], vec![3.0]).unwrap();
        // All-zero parameters give exactly 0.5.
        assert_eq!(model.predict_proba(&x).unwrap(), 0.5);
        assert_eq!(model.predict(&x, DEFAULT_THRESHOLD).unwrap(), 1);
    }
}
