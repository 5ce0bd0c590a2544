//! Supervised multi-label learners and the self-prediction-gain reward.
//!
//! Anything implementing [`Learner`] can be driven by the harness. Two
//! reference models ship here: multi-label logistic regression and a
//! one-hidden-layer perceptron. Both expose their parameters as one flat
//! vector so that generic code (SGD, finite-difference checks,
//! serialization) never needs to know the layout.

mod logistic;
mod mlp;
mod params;

use std::collections::BTreeSet;

pub use logistic::LogisticRegression;
pub use mlp::{Perceptron, DEFAULT_HIDDEN_UNITS};
pub use params::{load_params, save_params, ParamShape, ParamsSidecar};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` inside the loss.
pub const PROB_FLOOR: f64 = 1e-7;

/// One instance as seen by a learner: features and the indices of the
/// classes it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub labels: &'a [usize],
}

#[derive(Debug, Clone, Default)]
pub struct Batch<'a> {
    pub examples: Vec<Example<'a>>,
}

impl<'a> Batch<'a> {
    pub fn new(examples: Vec<Example<'a>>) -> Self {
        Batch { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// A multi-label model with a differentiable loss.
pub trait Learner: Clone {
    fn num_classes(&self) -> usize;

    fn feature_dim(&self) -> usize;

    /// Per-class probabilities in `[0, 1]`.
    fn predict(&self, features: &[f64]) -> Result<Vec<f64>>;

    /// Flat parameter vector.
    fn parameters(&self) -> Vec<f64>;

    /// Copy of `self` with the given flat parameters.
    fn with_parameters(&self, params: &[f64]) -> Result<Self>;

    /// Named blocks making up the flat parameter vector, in order.
    fn shapes(&self) -> Vec<ParamShape>;

    fn kind(&self) -> &'static str;

    /// Gradient of [`Learner::loss`] with respect to the flat parameters.
    fn gradient(&self, batch: &Batch<'_>) -> Result<Vec<f64>>;

    /// Mean over instances of the summed per-class binary cross-entropy.
    fn loss(&self, batch: &Batch<'_>) -> Result<f64> {
        check_batch(self, batch)?;
        let mut total = 0.0;
        for ex in &batch.examples {
            let probs = self.predict(ex.features)?;
            total += bce(&probs, ex.labels);
        }
        Ok(total / batch.len() as f64)
    }

    /// Plain gradient step `params - learning_rate * grad`.
    fn sgd_update(&self, batch: &Batch<'_>, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::contract(format!(
                "learning rate must be nonnegative, got {learning_rate}"
            )));
        }
        let grad = self.gradient(batch)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        let params: Vec<f64> = self
            .parameters()
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - learning_rate * g)
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite parameters after update".into()));
        }
        self.with_parameters(&params)
    }
}

/// Summed binary cross-entropy of one instance against its label set.
pub(crate) fn bce(probs: &[f64], labels: &[usize]) -> f64 {
    let mut positive = vec![false; probs.len()];
    for &l in labels {
        positive[l] = true;
    }
    probs
        .iter()
        .zip(&positive)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

pub(crate) fn check_batch<L: Learner + ?Sized>(learner: &L, batch: &Batch<'_>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::contract("batch must not be empty"));
    }
    for ex in &batch.examples {
        if ex.features.len() != learner.feature_dim() {
            return Err(Error::DimensionMismatch {
                what: "batch features",
                expected: learner.feature_dim(),
                actual: ex.features.len(),
            });
        }
        if let Some(&l) = ex.labels.iter().find(|&&l| l >= learner.num_classes()) {
            return Err(Error::contract(format!(
                "label index {l} out of range for {} classes",
                learner.num_classes()
            )));
        }
    }
    Ok(())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss before and after one update, plus the updated learner.
#[derive(Debug, Clone)]
pub struct Gain<L> {
    pub reward: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub updated: L,
}

/// Self prediction gain: validation loss before an update on `train`
/// minus validation loss after it, on the same validation batch.
pub fn self_prediction_gain<L: Learner>(
    learner: &L,
    train: &Batch<'_>,
    val: &Batch<'_>,
    learning_rate: f64,
) -> Result<Gain<L>> {
    let loss_before = learner.loss(val)?;
    let updated = learner.sgd_update(train, learning_rate)?;
    let loss_after = updated.loss(val)?;
    Ok(Gain {
        reward: loss_before - loss_after,
        loss_before,
        loss_after,
        updated,
    })
}

/// Indices of classes whose probability reaches `threshold`.
pub fn predict_labels<L: Learner>(
    learner: &L,
    features: &[f64],
    threshold: f64,
) -> Result<BTreeSet<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::contract(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(labels_above(&learner.predict(features)?, threshold))
}

pub(crate) fn labels_above(scores: &[f64], threshold: f64) -> BTreeSet<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Either built-in learner, chosen at runtime.
#[derive(Debug, Clone)]
pub enum AnyLearner {
    Logistic(LogisticRegression),
    Perceptron(Perceptron),
}

macro_rules! dispatch {
    ($self:ident, $l:ident => $e:expr) => {
        match $self {
            AnyLearner::Logistic($l) => $e,
            AnyLearner::Perceptron($l) => $e,
        }
    };
}

impl Learner for AnyLearner {
    fn num_classes(&self) -> usize {
        dispatch!(self, l => l.num_classes())
    }

    fn feature_dim(&self) -> usize {
        dispatch!(self, l => l.feature_dim())
    }

    fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, l => l.predict(features))
    }

    fn parameters(&self) -> Vec<f64> {
        dispatch!(self, l => l.parameters())
    }

    fn with_parameters(&self, params: &[f64]) -> Result<Self> {
        Ok(match self {
            AnyLearner::Logistic(l) => AnyLearner::Logistic(l.with_parameters(params)?),
            AnyLearner::Perceptron(l) => AnyLearner::Perceptron(l.with_parameters(params)?),
        })
    }

    fn shapes(&self) -> Vec<ParamShape> {
        dispatch!(self, l => l.shapes())
    }

    fn kind(&self) -> &'static str {
        dispatch!(self, l => l.kind())
    }

    fn gradient(&self, batch: &Batch<'_>) -> Result<Vec<f64>> {
        dispatch!(self, l => l.gradient(batch))
    }

    fn loss(&self, batch: &Batch<'_>) -> Result<f64> {
        dispatch!(self, l => l.loss(batch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_maximum_entropy() {
        let loss = bce(&[0.5, 0.5, 0.5], &[1]);
        assert!((loss - 3.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let loss = bce(&[0.0, 1.0, 0.0], &[1]);
        let bound = 3.0 * -(1.0 - PROB_FLOOR).ln();
        assert!(loss >= 0.0 && loss <= bound + 1e-15, "{loss}");
    }

    #[test]
    fn labels_above_threshold() {
        assert!(labels_above(&[0.0, 0.0], 0.5).is_empty());
        assert_eq!(labels_above(&[0.1, 0.9, 0.2], 0.5).into_iter().collect::<Vec<_>>(), vec![1]);
        assert_eq!(labels_above(&[0.4, 0.6], 0.5).into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
