//! Time-varying Gaussian process posterior over the reward surface.
//!
//! Observations are `(embedding, reward, timestep)` triples. The covariance
//! between two observations is the kernel similarity of their embeddings
//! multiplied by `(1 - epsilon)^(|t_i - t_j| / 2)`, so stale rewards lose
//! influence as training moves on. The posterior at `(w, t)` is
//!
//! ```text
//! mean     = k_t(w)^T (K + sigma_f^2 I)^-1 r
//! variance = k(w, w) - k_t(w)^T (K + sigma_f^2 I)^-1 k_t(w)
//! ```
//!
//! The regularized Gram matrix is kept as a Cholesky factor that is extended
//! by one column per observation and shrunk by one column when the history
//! window evicts its oldest entry.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, Embedding, KernelConfig};

/// Jitter ladder tried when the regularized Gram matrix fails to factor.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
/// Negative variances smaller than this in magnitude are rounding residue.
const VARIANCE_RESIDUE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub kernel: KernelConfig,
    pub epsilon: f64,
    pub noise_sigma_f: f64,
    pub window_cap: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            kernel: KernelConfig::default(),
            epsilon: 0.01,
            noise_sigma_f: 0.1,
            window_cap: 500,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        kernel::check_epsilon(self.epsilon)?;
        if !(self.noise_sigma_f > 0.0 && self.noise_sigma_f.is_finite()) {
            return Err(Error::contract(format!(
                "noise_sigma_f must be positive, got {}",
                self.noise_sigma_f
            )));
        }
        if self.window_cap == 0 {
            return Err(Error::contract("window_cap must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub embedding: Embedding,
    pub reward: f64,
    pub timestep: u64,
    /// Arm the observation came from, kept for run artifacts.
    pub class_id: Option<String>,
}

/// One line of the audit trail written next to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub class_id: Option<String>,
    pub timestep: u64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorEstimate {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorEstimate {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky<f64, Dyn>,
    /// Extra diagonal mass on top of `sigma_f^2` needed to factor.
    jitter: f64,
    /// `(K + (sigma_f^2 + jitter) I)^-1 r`
    alpha: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct GpState {
    config: GpConfig,
    history: VecDeque<Observation>,
    factor: Option<Factor>,
}

impl GpState {
    pub fn new(config: GpConfig) -> Result<Self> {
        config.validate()?;
        Ok(GpState {
            config,
            history: VecDeque::new(),
            factor: None,
        })
    }

    pub fn config(&self) -> &GpConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &Observation> {
        self.history.iter()
    }

    pub fn last_timestep(&self) -> Option<u64> {
        self.history.back().map(|o| o.timestep)
    }

    /// Diagonal jitter currently folded into the factorization.
    pub fn jitter(&self) -> f64 {
        self.factor.as_ref().map_or(0.0, |f| f.jitter)
    }

    pub fn records(&self) -> Vec<HistoryRecord> {
        self.history
            .iter()
            .map(|o| HistoryRecord {
                class_id: o.class_id.clone(),
                timestep: o.timestep,
                reward: o.reward,
            })
            .collect()
    }

    pub fn records_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.records())?)
    }

    /// Functional update: a new state with the observation appended.
    pub fn observe(&self, w: &Embedding, reward: f64, t: u64) -> Result<GpState> {
        let mut next = self.clone();
        next.push(w.clone(), reward, t, None)?;
        Ok(next)
    }

    /// In-place variant of [`GpState::observe`] that also tags the
    /// observation with the arm it came from.
    pub fn push(
        &mut self,
        w: Embedding,
        reward: f64,
        t: u64,
        class_id: Option<String>,
    ) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::contract(format!("reward must be finite, got {reward}")));
        }
        if let Some(last) = self.last_timestep() {
            if t <= last {
                return Err(Error::contract(format!(
                    "observation timestep {t} does not follow last timestep {last}"
                )));
            }
        }
        if let Some(first) = self.history.front() {
            if first.embedding.dim() != w.dim() {
                return Err(Error::DimensionMismatch {
                    what: "observed embedding",
                    expected: first.embedding.dim(),
                    actual: w.dim(),
                });
            }
        }

        let column = self.append_column(&w, t)?;
        self.history.push_back(Observation {
            embedding: w,
            reward,
            timestep: t,
            class_id,
        });

        let mut chol = match self.factor.take() {
            Some(f) => extend(f.chol, column, f.jitter).map(|c| (c, f.jitter)),
            None => None,
        };
        if chol.is_none() {
            chol = Some(self.factorize_from_scratch()?);
        }
        let (mut chol, jitter) = chol.expect("factor computed above");

        if self.history.len() > self.config.window_cap {
            self.history.pop_front();
            chol = chol.remove_column(0);
        }

        let rewards = DVector::from_iterator(self.history.len(), self.history.iter().map(|o| o.reward));
        let alpha = chol.solve(&rewards);
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite GP weights after update".into()));
        }
        self.factor = Some(Factor {
            chol,
            jitter,
            alpha,
        });
        Ok(())
    }

    /// New column of the regularized Gram matrix for an observation at
    /// `(w, t)` appended after the current history. The last entry carries
    /// the diagonal without jitter.
    fn append_column(&self, w: &Embedding, t: u64) -> Result<DVector<f64>> {
        let n = self.history.len();
        let cfg = &self.config;
        let mut col = DVector::zeros(n + 1);
        for (i, o) in self.history.iter().enumerate() {
            col[i] = cfg.kernel.eval(&o.embedding, w)?
                * kernel::discount_unchecked(cfg.epsilon, t - o.timestep);
        }
        col[n] = cfg.kernel.output_scale + cfg.noise_sigma_f.powi(2);
        Ok(col)
    }

    fn factorize_from_scratch(&self) -> Result<(Cholesky<f64, Dyn>, f64)> {
        let pairs: Vec<(&Embedding, u64)> =
            self.history.iter().map(|o| (&o.embedding, o.timestep)).collect();
        let mut system = kernel::build_gram(&self.config.kernel, &pairs, self.config.epsilon)?;
        let n = system.nrows();
        for i in 0..n {
            system[(i, i)] += self.config.noise_sigma_f.powi(2);
        }
        factor_with_jitter(system)
    }

    pub fn posterior(&self, w: &Embedding, t: u64) -> Result<PosteriorEstimate> {
        Ok(self.posterior_many(std::slice::from_ref(w), t)?[0])
    }

    /// Posterior at every query embedding for timestep `t`, sharing one
    /// triangular solve across all queries.
    pub fn posterior_many<E>(&self, queries: &[E], t: u64) -> Result<Vec<PosteriorEstimate>>
    where
        E: AsRef<Embedding>,
    {
        let prior = self.config.kernel.output_scale;
        let Some(factor) = &self.factor else {
            return Ok(vec![
                PosteriorEstimate {
                    mean: 0.0,
                    variance: prior,
                };
                queries.len()
            ]);
        };
        let last = self.last_timestep().expect("factor implies history");
        if t < last {
            return Err(Error::contract(format!(
                "posterior queried at timestep {t} before last observation {last}"
            )));
        }
        let n = self.history.len();
        let dim = self.history[0].embedding.dim();
        let discounts: Vec<f64> = self
            .history
            .iter()
            .map(|o| kernel::discount_unchecked(self.config.epsilon, t - o.timestep))
            .collect();

        let mut cross = DMatrix::zeros(n, queries.len());
        for (j, q) in queries.iter().enumerate() {
            let q = q.as_ref();
            if q.dim() != dim {
                return Err(Error::DimensionMismatch {
                    what: "posterior query",
                    expected: dim,
                    actual: q.dim(),
                });
            }
            for (i, o) in self.history.iter().enumerate() {
                cross[(i, j)] = self.config.kernel.eval(&o.embedding, q)? * discounts[i];
            }
        }

        let means = cross.tr_mul(&factor.alpha);
        let l = factor.chol.l_dirty();
        if !l.solve_lower_triangular_mut(&mut cross) {
            return Err(Error::Numerical("singular Cholesky factor".into()));
        }

        let mut out = Vec::with_capacity(queries.len());
        for j in 0..queries.len() {
            let explained = cross.column(j).norm_squared();
            let mut variance = prior - explained;
            if variance < 0.0 {
                if variance < -VARIANCE_RESIDUE {
                    return Err(Error::Numerical(format!(
                        "negative posterior variance {variance:e}"
                    )));
                }
                variance = 0.0;
            }
            let mean = means[j];
            if !mean.is_finite() || !variance.is_finite() {
                return Err(Error::Numerical("non-finite posterior".into()));
            }
            out.push(PosteriorEstimate { mean, variance });
        }
        Ok(out)
    }
}

impl AsRef<Embedding> for Embedding {
    fn as_ref(&self) -> &Embedding {
        self
    }
}

/// Append `column` (whose last entry is the unjittered diagonal) to the
/// factor. `None` when the new pivot is not positive.
fn extend(chol: Cholesky<f64, Dyn>, mut column: DVector<f64>, jitter: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = chol.l_dirty().nrows();
    column[n] += jitter;
    let grown = chol.insert_column(n, column);
    let pivot = grown.l_dirty()[(n, n)];
    (pivot.is_finite() && pivot > 0.0).then_some(grown)
}

/// Factor an SPD system, escalating diagonal jitter from 1e-10 by factors
/// of ten up to 1e-4.
fn factor_with_jitter(system: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(system.clone()) {
        return Ok((c, 0.0));
    }
    let n = system.nrows();
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut trial = system.clone();
        for i in 0..n {
            trial[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(trial) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    let diag = system.diagonal();
    Err(Error::NotPositiveDefinite {
        size: n,
        jitter: JITTER_MAX,
        min_diagonal: diag.min(),
        max_diagonal: diag.max(),
    })
}
