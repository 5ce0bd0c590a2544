use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{check_batch, sigmoid, Batch, Learner, ParamShape};
use crate::error::{Error, Result};

/// Independent per-class logistic regressions over a shared feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    num_classes: usize,
    feature_dim: usize,
    /// Row-major `num_classes x feature_dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    pub learning_rate: f64,
}

impl LogisticRegression {
    pub fn zeros(num_classes: usize, feature_dim: usize, learning_rate: f64) -> Self {
        LogisticRegression {
            num_classes,
            feature_dim,
            weights: vec![0.0; num_classes * feature_dim],
            biases: vec![0.0; num_classes],
            learning_rate,
        }
    }

    /// Gaussian initialization with standard deviation `scale`.
    pub fn random<R: Rng + ?Sized>(
        num_classes: usize,
        feature_dim: usize,
        learning_rate: f64,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut m = Self::zeros(num_classes, feature_dim, learning_rate);
        m.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        m.biases.iter_mut().for_each(|b| *b = normal.sample(rng));
        m
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.feature_dim)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

impl Learner for LogisticRegression {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "instance features",
                expected: self.feature_dim,
                actual: features.len(),
            });
        }
        Ok(self.logits(features).into_iter().map(sigmoid).collect())
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.biases);
        p
    }

    fn with_parameters(&self, params: &[f64]) -> Result<Self> {
        let nw = self.weights.len();
        if params.len() != nw + self.num_classes {
            return Err(Error::DimensionMismatch {
                what: "logistic parameters",
                expected: nw + self.num_classes,
                actual: params.len(),
            });
        }
        Ok(LogisticRegression {
            weights: params[..nw].to_vec(),
            biases: params[nw..].to_vec(),
            ..self.clone()
        })
    }

    fn shapes(&self) -> Vec<ParamShape> {
        vec![
            ParamShape::new("weights", self.num_classes, self.feature_dim),
            ParamShape::new("biases", self.num_classes, 1),
        ]
    }

    fn kind(&self) -> &'static str {
        "logistic"
    }

    /// The gradient of the logit-space cross-entropy, `(p - y) x`. It agrees
    /// with the clamped loss wherever no probability is clamped.
    fn gradient(&self, batch: &Batch<'_>) -> Result<Vec<f64>> {
        check_batch(self, batch)?;
        let (c, f) = (self.num_classes, self.feature_dim);
        let mut grad = vec![0.0; c * f + c];
        let mut residual = vec![0.0; c];
        for ex in &batch.examples {
            for (r, z) in residual.iter_mut().zip(self.logits(ex.features)) {
                *r = sigmoid(z);
            }
            for &l in ex.labels {
                residual[l] -= 1.0;
            }
            for (k, &r) in residual.iter().enumerate() {
                let row = &mut grad[k * f..(k + 1) * f];
                row.iter_mut().zip(ex.features).for_each(|(g, x)| *g += r * x);
                grad[c * f + k] += r;
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::learner::{self_prediction_gain, Example};

    fn batch<'a>(xs: &'a [Vec<f64>], ys: &'a [Vec<usize>]) -> Batch<'a> {
        Batch::new(
            xs.iter()
                .zip(ys)
                .map(|(x, y)| Example {
                    features: x,
                    labels: y,
                })
                .collect(),
        )
    }

    #[test]
    fn zero_model_loss_is_max_entropy() {
        let m = LogisticRegression::zeros(4, 2, 0.1);
        let xs = vec![vec![1.0, -2.0], vec![0.5, 0.5]];
        let ys = vec![vec![0], vec![3]];
        let loss = m.loss(&batch(&xs, &ys)).unwrap();
        assert!((loss - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = LogisticRegression::random(3, 4, 0.1, 0.8, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4).collect())
            .collect();
        let ys = vec![vec![0], vec![1, 2], vec![], vec![2], vec![0, 1, 2]];
        let mut expected = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            for k in 0..3 {
                let mut z = m.biases()[k];
                for j in 0..4 {
                    z += m.weights()[k * 4 + j] * x[j];
                }
                let p = (1.0 / (1.0 + (-z).exp())).clamp(1e-7, 1.0 - 1e-7);
                let target = if y.contains(&k) { 1.0 } else { 0.0 };
                expected += -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
            }
        }
        expected /= 5.0;
        let loss = m.loss(&batch(&xs, &ys)).unwrap();
        assert!((loss - expected).abs() < 1e-10, "{loss} vs {expected}");
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = LogisticRegression::random(3, 2, 0.1, 0.5, &mut rng);
        let xs = vec![vec![1.0, 2.0]];
        let ys = vec![vec![1]];
        let b = batch(&xs, &ys);
        assert_eq!(m.sgd_update(&b, 0.0).unwrap(), m);
        let gain = self_prediction_gain(&m, &b, &b, 0.0).unwrap();
        assert_eq!(gain.reward, 0.0);
    }

    #[test]
    fn small_step_decreases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = LogisticRegression::random(5, 3, 1e-3, 0.5, &mut rng);
        let xs = vec![vec![0.3, -1.0, 0.8], vec![1.1, 0.2, -0.4], vec![-0.5, 0.5, 0.5]];
        let ys = vec![vec![0, 2], vec![4], vec![1]];
        let b = batch(&xs, &ys);
        let next = m.sgd_update(&b, 1e-3).unwrap();
        assert!(next.loss(&b).unwrap() < m.loss(&b).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = LogisticRegression::zeros(2, 3, 0.1);
        let xs = vec![vec![1.0, 2.0]];
        let ys = vec![vec![0]];
        assert!(matches!(
            m.loss(&batch(&xs, &ys)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.loss(&Batch::default()).is_err());
        assert!(m.predict(&[1.0]).is_err());
    }
}
