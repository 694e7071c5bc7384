use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::ensemble::Ensemble;
use super::folds::{stratified_kfold, FoldPlan};
use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

/// Labeled subjects sharing one input shape.
#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<Tensor>,
    labels: Vec<u8>,
    ids: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Tensor>, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        if samples.len() != labels.len() || ids.len() != labels.len() {
            return Err(Error::shape(
                "dataset",
                &[samples.len(), ids.len()],
                &[labels.len()],
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::TrainingData(format!("label {bad} is not 0 or 1")));
        }
        if let Some(first) = samples.first() {
            if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.shape() != first.shape()) {
                return Err(Error::TrainingData(format!(
                    "subject {} has shape {:?}, expected {:?}",
                    ids[i],
                    s.shape(),
                    first.shape()
                )));
            }
        }
        Ok(Self { samples, labels, ids })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn sample(&self, i: usize) -> &Tensor {
        &self.samples[i]
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }
}

/// Records which dataset indices were read while fitting.
#[derive(Debug)]
pub struct AccessLog {
    touched: RefCell<Vec<bool>>,
}

impl AccessLog {
    pub fn new(n: usize) -> Self {
        Self {
            touched: RefCell::new(vec![false; n]),
        }
    }

    fn record(&self, i: usize) {
        self.touched.borrow_mut()[i] = true;
    }

    pub fn touched(&self) -> Vec<usize> {
        self.touched
            .borrow()
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| t.then_some(i))
            .collect()
    }
}

/// The only handle a model family gets on training data. Every read goes
/// through the log.
#[derive(Clone, Copy)]
pub struct TrainView<'a> {
    data: &'a Dataset,
    indices: &'a [usize],
    log: &'a AccessLog,
}

impl<'a> TrainView<'a> {
    pub fn new(data: &'a Dataset, indices: &'a [usize], log: &'a AccessLog) -> Self {
        Self { data, indices, log }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn sample(&self, j: usize) -> &'a Tensor {
        let i = self.indices[j];
        self.log.record(i);
        &self.data.samples[i]
    }

    pub fn label(&self, j: usize) -> u8 {
        let i = self.indices[j];
        self.log.record(i);
        self.data.labels[i]
    }

    pub fn labels(&self) -> Vec<u8> {
        (0..self.len()).map(|j| self.label(j)).collect()
    }

    pub fn samples(&self) -> Vec<&'a Tensor> {
        (0..self.len()).map(|j| self.sample(j)).collect()
    }

    /// Dataset indices behind view positions, without touching the data.
    pub fn global_indices(&self, positions: &[usize]) -> Vec<usize> {
        positions.iter().map(|&j| self.indices[j]).collect()
    }

    pub fn with_indices<'b>(&self, indices: &'b [usize]) -> TrainView<'b>
    where
        'a: 'b,
    {
        TrainView {
            data: self.data,
            indices,
            log: self.log,
        }
    }
}

pub trait Classifier {
    fn predict_proba(&self, x: &Tensor) -> Result<f64>;

    /// Class 1 when the probability reaches one half.
    fn predict(&self, x: &Tensor) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= 0.5))
    }
}

pub trait ModelFamily {
    type Model: Classifier;
    type Hyper: Clone + Debug;

    fn name(&self) -> String;

    /// Configurations compared by the inner loop; a single entry skips it.
    fn candidates(&self) -> Vec<Self::Hyper>;

    fn fit(&self, train: &TrainView<'_>, hyper: &Self::Hyper, seed: u64) -> Result<Self::Model>;

    /// What the fold reports as its selected configuration.
    fn describe(&self, _model: &Self::Model, hyper: &Self::Hyper) -> String {
        format!("{hyper:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSettings {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            outer_folds: 5,
            inner_folds: 4,
            repeats: 10,
            seed: 0,
        }
    }
}

impl CvSettings {
    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 3 || self.outer_folds % 2 == 0 {
            return Err(Error::Config(format!(
                "outer folds must be odd and at least 3 so ensemble votes cannot tie, got {}",
                self.outer_folds
            )));
        }
        if self.inner_folds < 2 {
            return Err(Error::Config(format!("inner folds must be at least 2, got {}", self.inner_folds)));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub predictions: Vec<u8>,
    pub metrics: Metrics,
    /// Dataset indices read while selecting and fitting this fold's model.
    pub touched: Vec<usize>,
    pub hyper: String,
    /// Inner-loop mean accuracy per candidate, in candidate order.
    pub inner_scores: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CvRun<M> {
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub models: Vec<M>,
    /// Per-fold metric means, confusion counts summed.
    pub mean: Metrics,
}

impl<M> CvRun<M> {
    /// Metrics from the summed confusion counts, AUC left as the fold mean.
    pub fn pooled(&self) -> Metrics {
        Metrics::from_confusion(self.mean.confusion, self.mean.auc)
    }
}

fn accuracy_on<M: Classifier>(model: &M, view: &TrainView<'_>) -> Result<f64> {
    let mut correct = 0;
    for j in 0..view.len() {
        if model.predict(view.sample(j))? == view.label(j) {
            correct += 1;
        }
    }
    Ok(correct as f64 / view.len() as f64)
}

fn run_fold<F: ModelFamily>(
    data: &Dataset,
    family: &F,
    plan: &FoldPlan,
    fold: usize,
    settings: &CvSettings,
    seed: u64,
) -> Result<(FoldResult, F::Model)> {
    let train_idx = plan.train_indices(fold);
    let log = AccessLog::new(data.len());
    let view = TrainView::new(data, &train_idx, &log);

    let candidates = family.candidates();
    if candidates.is_empty() {
        return Err(Error::Config(format!("{} offers no configurations", family.name())));
    }
    let mut inner_scores = Vec::new();
    let mut best = 0;
    if candidates.len() > 1 {
        let inner = stratified_kfold(&view.labels(), settings.inner_folds, derive_seed(seed, 100 + fold as u64))?;
        for (c, hyper) in candidates.iter().enumerate() {
            let mut total = 0.0;
            for f in 0..inner.k() {
                let fit_idx = view.global_indices(&inner.train_indices(f));
                let eval_idx = view.global_indices(inner.test_indices(f));
                let fit_seed = derive_seed(seed, 10_000 + (fold * 1000 + c * 10 + f) as u64);
                let model = family.fit(&view.with_indices(&fit_idx), hyper, fit_seed)?;
                total += accuracy_on(&model, &view.with_indices(&eval_idx))?;
            }
            let score = total / inner.k() as f64;
            if inner_scores.is_empty() || score > inner_scores[best] {
                best = c;
            }
            inner_scores.push(score);
        }
    }
    let hyper = &candidates[best];
    let model = family.fit(&view, hyper, derive_seed(seed, 1 + fold as u64))?;

    let touched = log.touched();
    let test = plan.test_indices(fold);
    if let Some(i) = touched.iter().find(|i| test.binary_search(i).is_ok()) {
        return Err(Error::Internal(format!("held-out sample {i} was read during fitting")));
    }
    let mut probabilities = Vec::with_capacity(test.len());
    let mut predictions = Vec::with_capacity(test.len());
    for &i in test {
        probabilities.push(model.predict_proba(data.sample(i))?);
        predictions.push(model.predict(data.sample(i))?);
    }
    let labels: Vec<u8> = test.iter().map(|&i| data.labels[i]).collect();
    let metrics = Metrics::compute(&predictions, &probabilities, &labels)?;
    Ok((
        FoldResult {
            fold,
            test_indices: test.to_vec(),
            probabilities,
            predictions,
            metrics,
            touched,
            hyper: family.describe(&model, hyper),
            inner_scores,
        },
        model,
    ))
}

/// Outer stratified k-fold with inner-fold model selection on each outer
/// training portion.
pub fn nested_cv<F: ModelFamily>(data: &Dataset, family: &F, settings: &CvSettings, seed: u64) -> Result<CvRun<F::Model>> {
    settings.validate()?;
    let plan = stratified_kfold(data.labels(), settings.outer_folds, seed)?;
    let mut folds = Vec::with_capacity(plan.k());
    let mut models = Vec::with_capacity(plan.k());
    for f in 0..plan.k() {
        let (result, model) = run_fold(data, family, &plan, f, settings, seed).map_err(|e| e.in_fold(f))?;
        folds.push(result);
        models.push(model);
    }
    let per_fold: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
    Ok(CvRun {
        plan,
        folds,
        models,
        mean: Metrics::mean(&per_fold),
    })
}

#[derive(Clone, Debug)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub mean: Metrics,
}

#[derive(Clone, Debug)]
pub struct RepeatOutcome<M> {
    pub repeats: Vec<RepeatSummary>,
    /// Mean over repeats of each repeat's mean metrics.
    pub mean: Metrics,
    pub best_repeat: usize,
    pub ensemble: Ensemble<M>,
}

/// Runs `settings.repeats` nested CVs with seeds derived from
/// `settings.seed` and keeps the fold models of the most accurate repeat
/// (earliest on ties).
pub fn repeat_and_average<F: ModelFamily>(data: &Dataset, family: &F, settings: &CvSettings) -> Result<RepeatOutcome<F::Model>> {
    settings.validate()?;
    let mut repeats = Vec::with_capacity(settings.repeats);
    let mut best: Option<(usize, f64, Vec<F::Model>)> = None;
    for r in 0..settings.repeats {
        let seed = derive_seed(settings.seed, r as u64);
        let run = nested_cv(data, family, settings, seed)?;
        let acc = run.mean.accuracy;
        if best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
            best = Some((r, acc, run.models));
        }
        repeats.push(RepeatSummary {
            repeat: r,
            seed,
            folds: run.folds,
            mean: run.mean,
        });
    }
    let (best_repeat, _, models) = best.expect("at least one repeat");
    let means: Vec<Metrics> = repeats.iter().map(|r| r.mean).collect();
    Ok(RepeatOutcome {
        mean: Metrics::mean(&means),
        best_repeat,
        ensemble: Ensemble::new(models, best_repeat)?,
        repeats,
    })
}
