use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{check_batch, sigmoid, Batch, Learner, ParamShape};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN_UNITS: usize = 64;

/// One tanh hidden layer feeding per-class sigmoid outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Perceptron {
    num_classes: usize,
    feature_dim: usize,
    hidden: usize,
    /// `hidden x feature_dim`, row-major.
    w_in: Vec<f64>,
    b_in: Vec<f64>,
    /// `num_classes x hidden`, row-major.
    w_out: Vec<f64>,
    b_out: Vec<f64>,
    pub learning_rate: f64,
}

impl Perceptron {
    /// Glorot-style Gaussian weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        num_classes: usize,
        feature_dim: usize,
        hidden: usize,
        learning_rate: f64,
        rng: &mut R,
    ) -> Self {
        let n_in = Normal::new(0.0, (1.0 / feature_dim.max(1) as f64).sqrt()).expect("finite");
        let n_out = Normal::new(0.0, (1.0 / hidden.max(1) as f64).sqrt()).expect("finite");
        Perceptron {
            num_classes,
            feature_dim,
            hidden,
            w_in: (0..hidden * feature_dim).map(|_| n_in.sample(rng)).collect(),
            b_in: vec![0.0; hidden],
            w_out: (0..num_classes * hidden).map(|_| n_out.sample(rng)).collect(),
            b_out: vec![0.0; num_classes],
            learning_rate,
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h: Vec<f64> = self
            .w_in
            .chunks_exact(self.feature_dim)
            .zip(&self.b_in)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).tanh())
            .collect();
        let p = self
            .w_out
            .chunks_exact(self.hidden)
            .zip(&self.b_out)
            .map(|(row, b)| sigmoid(row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b))
            .collect();
        (h, p)
    }

    fn param_len(&self) -> usize {
        self.w_in.len() + self.b_in.len() + self.w_out.len() + self.b_out.len()
    }
}

impl Learner for Perceptron {
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
        Ok(self.forward(features).1)
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_len());
        p.extend_from_slice(&self.w_in);
        p.extend_from_slice(&self.b_in);
        p.extend_from_slice(&self.w_out);
        p.extend_from_slice(&self.b_out);
        p
    }

    fn with_parameters(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.param_len() {
            return Err(Error::DimensionMismatch {
                what: "perceptron parameters",
                expected: self.param_len(),
                actual: params.len(),
            });
        }
        let mut rest = params;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        Ok(Perceptron {
            w_in: take(self.w_in.len()),
            b_in: take(self.b_in.len()),
            w_out: take(self.w_out.len()),
            b_out: take(self.b_out.len()),
            ..self.clone()
        })
    }

    fn shapes(&self) -> Vec<ParamShape> {
        vec![
            ParamShape::new("hidden_weights", self.hidden, self.feature_dim),
            ParamShape::new("hidden_biases", self.hidden, 1),
            ParamShape::new("output_weights", self.num_classes, self.hidden),
            ParamShape::new("output_biases", self.num_classes, 1),
        ]
    }

    fn kind(&self) -> &'static str {
        "perceptron"
    }

    fn gradient(&self, batch: &Batch<'_>) -> Result<Vec<f64>> {
        check_batch(self, batch)?;
        let (c, f, hd) = (self.num_classes, self.feature_dim, self.hidden);
        let mut g_w_in = vec![0.0; hd * f];
        let mut g_b_in = vec![0.0; hd];
        let mut g_w_out = vec![0.0; c * hd];
        let mut g_b_out = vec![0.0; c];
        let mut delta_h = vec![0.0; hd];

        for ex in &batch.examples {
            let (h, mut dz) = self.forward(ex.features);
            for &l in ex.labels {
                dz[l] -= 1.0;
            }
            delta_h.iter_mut().for_each(|d| *d = 0.0);
            for (k, &d) in dz.iter().enumerate() {
                let w_row = &self.w_out[k * hd..(k + 1) * hd];
                let g_row = &mut g_w_out[k * hd..(k + 1) * hd];
                for j in 0..hd {
                    g_row[j] += d * h[j];
                    delta_h[j] += d * w_row[j];
                }
                g_b_out[k] += d;
            }
            for j in 0..hd {
                let da = delta_h[j] * (1.0 - h[j] * h[j]);
                let g_row = &mut g_w_in[j * f..(j + 1) * f];
                g_row.iter_mut().zip(ex.features).for_each(|(g, x)| *g += da * x);
                g_b_in[j] += da;
            }
        }

        let n = batch.len() as f64;
        let mut grad = g_w_in;
        grad.extend(g_b_in);
        grad.extend(g_w_out);
        grad.extend(g_b_out);
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(grad)
    }
}
