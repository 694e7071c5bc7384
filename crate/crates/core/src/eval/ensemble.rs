use alloc::format;
use alloc::vec::Vec;

use super::metrics::{roc_auc, Metrics};
use super::protocol::{Classifier, Dataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fold models from one repeat, combined by majority vote.
#[derive(Clone, Debug)]
pub struct Ensemble<M> {
    members: Vec<M>,
    repeat: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vote {
    pub class: u8,
    /// Share of members voting for `class`.
    pub fraction: f64,
    /// Share of members voting for class 1; the ensemble's ranking score.
    pub positive_fraction: f64,
    /// Mean member probability of class 1.
    pub mean_proba: f64,
}

impl<M> Ensemble<M> {
    /// The member count must be odd so a vote cannot tie.
    pub fn new(members: Vec<M>, repeat: usize) -> Result<Self> {
        if members.len() % 2 == 0 {
            return Err(Error::Config(format!(
                "ensemble needs an odd number of members, got {}",
                members.len()
            )));
        }
        Ok(Self { members, repeat })
    }

    pub fn members(&self) -> &[M] {
        &self.members
    }

    pub fn into_members(self) -> Vec<M> {
        self.members
    }

    pub fn repeat(&self) -> usize {
        self.repeat
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn map<N>(self, f: impl FnMut(M) -> N) -> Ensemble<N> {
        Ensemble {
            members: self.members.into_iter().map(f).collect(),
            repeat: self.repeat,
        }
    }
}

/// Majority of hard votes.
pub fn tally(votes: &[u8]) -> (u8, f64) {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    let class = u8::from(2 * ones > votes.len());
    let agree = if class == 1 { ones } else { votes.len() - ones };
    (class, agree as f64 / votes.len() as f64)
}

impl<M: Classifier> Ensemble<M> {
    pub fn vote(&self, x: &Tensor) -> Result<Vote> {
        let mut votes = Vec::with_capacity(self.members.len());
        let mut proba = 0.0;
        for m in &self.members {
            let p = m.predict_proba(x)?;
            proba += p;
            votes.push(m.predict(x)?);
        }
        let (class, fraction) = tally(&votes);
        let ones = votes.iter().filter(|&&v| v == 1).count();
        Ok(Vote {
            class,
            fraction,
            positive_fraction: ones as f64 / votes.len() as f64,
            mean_proba: proba / votes.len() as f64,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TestOutcome {
    pub votes: Vec<Vote>,
    /// AUC ranks subjects by the share of positive votes.
    pub metrics: Metrics,
    /// AUC ranking by mean member probability instead; NaN if undefined.
    pub mean_proba_auc: f64,
}

pub fn independent_test<M: Classifier>(ensemble: &Ensemble<M>, data: &Dataset) -> Result<TestOutcome> {
    let votes: Vec<Vote> = data
        .samples()
        .iter()
        .map(|x| ensemble.vote(x))
        .collect::<Result<_>>()?;
    let predictions: Vec<u8> = votes.iter().map(|v| v.class).collect();
    let scores: Vec<f64> = votes.iter().map(|v| v.positive_fraction).collect();
    let metrics = Metrics::compute(&predictions, &scores, data.labels())?;
    let probas: Vec<f64> = votes.iter().map(|v| v.mean_proba).collect();
    let mean_proba_auc = roc_auc(&probas, data.labels()).unwrap_or(f64::NAN);
    Ok(TestOutcome {
        votes,
        metrics,
        mean_proba_auc,
    })
}
