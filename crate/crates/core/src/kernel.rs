//! Similarity kernels over class embeddings and the time discount that
//! modulates them.
//!
//! Every kernel here is stationary: it depends on the Euclidean distance
//! `r = |x - y|` only, and `k(x, x)` equals the configured output scale.
//! Historical observations are additionally discounted by
//! `(1 - epsilon)^(gap / 2)` where `gap` is the number of timesteps
//! separating them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-dimension class embedding with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("embedding must have at least one entry"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "embedding entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-norm copy. The zero vector is returned unchanged.
    pub fn normalized(&self) -> Embedding {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        Embedding(self.0.iter().map(|v| v / n).collect())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

/// Half-integer smoothness orders with closed-form Matérn kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternNu {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    FiveHalves,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum KernelFamily {
    Matern { nu: MaternNu },
    SquaredExponential,
}

impl Default for KernelFamily {
    fn default() -> Self {
        KernelFamily::Matern {
            nu: MaternNu::FiveHalves,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub output_scale: f64,
    /// Compare embeddings after projecting them to unit norm.
    pub normalize: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: KernelFamily::default(),
            lengthscale: 1.0,
            output_scale: 1.0,
            normalize: true,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::contract(format!(
                "kernel lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::contract(format!(
                "kernel output_scale must be positive, got {}",
                self.output_scale
            )));
        }
        Ok(())
    }

    /// Kernel value as a function of distance.
    pub fn at_distance(&self, r: f64) -> f64 {
        let s = r / self.lengthscale;
        let shape = match self.family {
            KernelFamily::Matern { nu: MaternNu::Half } => (-s).exp(),
            KernelFamily::Matern {
                nu: MaternNu::ThreeHalves,
            } => {
                let a = 3f64.sqrt() * s;
                (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern {
                nu: MaternNu::FiveHalves,
            } => {
                let a = 5f64.sqrt() * s;
                (1.0 + a + a * a / 3.0) * (-a).exp()
            }
            KernelFamily::SquaredExponential => (-0.5 * s * s).exp(),
        };
        self.output_scale * shape
    }

    /// Distance between two embeddings under this configuration.
    pub fn distance(&self, x: &Embedding, y: &Embedding) -> Result<f64> {
        if x.dim() != y.dim() {
            return Err(Error::contract(format!(
                "kernel arguments differ in dimension: {} vs {}",
                x.dim(),
                y.dim()
            )));
        }
        let sq: f64 = if self.normalize {
            let (nx, ny) = (x.norm(), y.norm());
            let sx = if nx > 0.0 { 1.0 / nx } else { 1.0 };
            let sy = if ny > 0.0 { 1.0 / ny } else { 1.0 };
            x.0.iter()
                .zip(&y.0)
                .map(|(a, b)| (a * sx - b * sy).powi(2))
                .sum()
        } else {
            x.0.iter().zip(&y.0).map(|(a, b)| (a - b).powi(2)).sum()
        };
        Ok(sq.sqrt())
    }

    pub fn eval(&self, x: &Embedding, y: &Embedding) -> Result<f64> {
        Ok(self.at_distance(self.distance(x, y)?))
    }
}

/// `k(x, y)` for a validated configuration.
pub fn kernel_eval(config: &KernelConfig, x: &Embedding, y: &Embedding) -> Result<f64> {
    config.validate()?;
    config.eval(x, y)
}

/// `(1 - epsilon)^(gap / 2)`.
pub fn time_discount(epsilon: f64, gap: u64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(discount_unchecked(epsilon, gap))
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::contract(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    Ok(())
}

pub(crate) fn discount_unchecked(epsilon: f64, gap: u64) -> f64 {
    if gap == 0 {
        return 1.0;
    }
    (1.0 - epsilon).powf(gap as f64 / 2.0)
}

/// Time-discounted Gram matrix over a history of `(embedding, timestep)`
/// pairs: entry `(i, j)` is `k(w_i, w_j) * (1 - epsilon)^(|t_i - t_j| / 2)`.
pub fn build_gram(
    config: &KernelConfig,
    history: &[(&Embedding, u64)],
    epsilon: f64,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    check_epsilon(epsilon)?;
    if history.is_empty() {
        return Err(Error::NoObservations("Gram matrix needs at least one entry"));
    }
    let n = history.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        gram[(i, i)] = config.output_scale;
        for j in 0..i {
            let (wi, ti) = history[i];
            let (wj, tj) = history[j];
            let v = config.eval(wi, wj)? * discount_unchecked(epsilon, ti.abs_diff(tj));
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}

/// Similarity of `w`, queried at timestep `t`, to every historical entry:
/// entry `i` is `k(w_i, w) * (1 - epsilon)^((t - t_i) / 2)`.
pub fn build_query_vector(
    config: &KernelConfig,
    history: &[(&Embedding, u64)],
    w: &Embedding,
    t: u64,
    epsilon: f64,
) -> Result<DVector<f64>> {
    config.validate()?;
    check_epsilon(epsilon)?;
    if history.is_empty() {
        return Err(Error::NoObservations("query vector needs at least one entry"));
    }
    let mut out = DVector::zeros(history.len());
    for (i, &(wi, ti)) in history.iter().enumerate() {
        if ti > t {
            return Err(Error::contract(format!(
                "query timestep {t} precedes history timestep {ti}"
            )));
        }
        out[i] = config.eval(wi, w)? * discount_unchecked(epsilon, t - ti);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn raw(family: KernelFamily) -> KernelConfig {
        KernelConfig {
            family,
            lengthscale: 1.0,
            output_scale: 1.0,
            normalize: false,
        }
    }

    const HALF: KernelFamily = KernelFamily::Matern { nu: MaternNu::Half };

    #[test]
    fn zero_distance_gives_output_scale() {
        let x = emb(&[0.3, -1.2, 4.0]);
        for family in [
            HALF,
            KernelFamily::Matern {
                nu: MaternNu::ThreeHalves,
            },
            KernelFamily::default(),
            KernelFamily::SquaredExponential,
        ] {
            assert_eq!(kernel_eval(&raw(family), &x, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn matern_half_closed_form() {
        let v = kernel_eval(&raw(HALF), &emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])).unwrap();
        assert_close(v, (-1.0f64).exp(), 1e-15);
        assert_close(v, 0.36788, 1e-5);
    }

    #[test]
    fn squared_exponential_closed_form() {
        let cfg = raw(KernelFamily::SquaredExponential);
        let v = kernel_eval(&cfg, &emb(&[0.0, 0.0]), &emb(&[0.0, 2.0])).unwrap();
        assert_close(v, 0.13534, 1e-5);
    }

    #[test]
    fn matern_higher_orders_match_textbook_forms() {
        let r = 0.7;
        let a3 = 3f64.sqrt() * r;
        let a5 = 5f64.sqrt() * r;
        let cfg3 = raw(KernelFamily::Matern {
            nu: MaternNu::ThreeHalves,
        });
        let cfg5 = raw(KernelFamily::default());
        assert_close(cfg3.at_distance(r), (1.0 + a3) * (-a3).exp(), 1e-15);
        assert_close(
            cfg5.at_distance(r),
            (1.0 + a5 + 5.0 * r * r / 3.0) * (-a5).exp(),
            1e-15
        );
    }

    #[test]
    fn dimension_mismatch_names_both_dimensions() {
        let err = kernel_eval(&raw(HALF), &emb(&[1.0]), &emb(&[1.0, 2.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('1') && msg.contains('2'), "{msg}");
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = raw(HALF);
        cfg.lengthscale = 0.0;
        assert!(kernel_eval(&cfg, &emb(&[1.0]), &emb(&[1.0])).is_err());
        cfg.lengthscale = 1.0;
        cfg.output_scale = -1.0;
        assert!(kernel_eval(&cfg, &emb(&[1.0]), &emb(&[1.0])).is_err());
    }

    #[test]
    fn normalization_compares_directions() {
        let cfg = KernelConfig {
            normalize: true,
            ..raw(HALF)
        };
        assert_eq!(
            kernel_eval(&cfg, &emb(&[2.0, 0.0]), &emb(&[5.0, 0.0])).unwrap(),
            1.0
        );
        let v = kernel_eval(&cfg, &emb(&[3.0, 0.0]), &emb(&[0.0, 0.5])).unwrap();
        assert_close(v, (-(2f64.sqrt())).exp(), 1e-15);
    }

    #[test]
    fn discount_examples() {
        assert_eq!(time_discount(0.0, 7).unwrap(), 1.0);
        assert_eq!(time_discount(1.0, 1).unwrap(), 0.0);
        assert_eq!(time_discount(1.0, 0).unwrap(), 1.0);
        assert_close(time_discount(0.01, 2).unwrap(), 0.99, 1e-15);
        assert!(time_discount(-0.1, 1).is_err());
        assert!(time_discount(1.5, 1).is_err());
    }

    #[test]
    fn gram_examples() {
        let cfg = raw(HALF);
        let a = emb(&[0.2, 0.4]);
        let g = build_gram(&cfg, &[(&a, 1)], 0.3).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_eq!(g[(0, 0)], 1.0);

        let g = build_gram(&cfg, &[(&a, 1), (&a, 3)], 0.0).unwrap();
        assert!(g.iter().all(|&v| v == 1.0));

        let g = build_gram(&cfg, &[(&a, 1), (&a, 3)], 0.19).unwrap();
        assert_close(g[(0, 1)], 0.81, 1e-12);
        assert_close(g[(1, 0)], 0.81, 1e-12);

        assert!(matches!(
            build_gram(&cfg, &[], 0.0),
            Err(Error::NoObservations(_))
        ));
    }

    #[test]
    fn query_vector_examples() {
        let cfg = raw(HALF);
        let w = emb(&[1.0, 1.0]);
        let q = build_query_vector(&cfg, &[(&w, 2)], &w, 5, 0.0).unwrap();
        assert_eq!(q.as_slice(), &[1.0]);

        let other = emb(&[0.0, 1.0]);
        let q = build_query_vector(&cfg, &[(&w, 1), (&other, 2)], &w, 3, 1.0).unwrap();
        assert!(q.iter().all(|&v| v == 0.0));

        let q = build_query_vector(&cfg, &[(&w, 1), (&other, 2)], &w, 3, 0.0).unwrap();
        assert_close(q[0], 1.0, 1e-15);
        assert_close(q[1], (-1.0f64).exp(), 1e-15);

        assert!(build_query_vector(&cfg, &[(&w, 4)], &w, 3, 0.0).is_err());
    }

    fn family_strategy() -> impl Strategy<Value = KernelFamily> {
        prop_oneof![
            Just(HALF),
            Just(KernelFamily::Matern {
                nu: MaternNu::ThreeHalves
            }),
            Just(KernelFamily::default()),
            Just(KernelFamily::SquaredExponential),
        ]
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_bounded(
            family in family_strategy(),
            xs in prop::collection::vec(-3.0f64..3.0, 4),
            ys in prop::collection::vec(-3.0f64..3.0, 4),
            scale in 0.1f64..5.0,
            ell in 0.1f64..5.0,
            normalize: bool,
        ) {
            let cfg = KernelConfig { family, lengthscale: ell, output_scale: scale, normalize };
            let (x, y) = (emb(&xs), emb(&ys));
            let kxy = kernel_eval(&cfg, &x, &y).unwrap();
            let kyx = kernel_eval(&cfg, &y, &x).unwrap();
            prop_assert_eq!(kxy, kyx);
            prop_assert!(kxy >= 0.0 && kxy <= scale);
            prop_assert_eq!(kernel_eval(&cfg, &x, &x).unwrap(), scale);
        }

        #[test]
        fn kernel_monotone_in_distance(family in family_strategy(), r1 in 0.0f64..10.0, dr in 0.0f64..10.0) {
            let cfg = raw(family);
            prop_assert!(cfg.at_distance(r1 + dr) <= cfg.at_distance(r1));
        }

        #[test]
        fn discount_monotone(eps in 0.0f64..=1.0, deps in 0.0f64..=1.0, gap in 0u64..200, dgap in 0u64..200) {
            let e2 = (eps + deps).min(1.0);
            let d = time_discount(eps, gap).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!(time_discount(eps, gap + dgap).unwrap() <= d);
            prop_assert!(time_discount(e2, gap).unwrap() <= d);
        }

        #[test]
        fn regularized_gram_is_positive_definite(
            family in family_strategy(),
            points in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..25),
            eps in 0.0f64..=1.0,
            sigma_f in 0.01f64..1.0,
        ) {
            let embs: Vec<_> = points.into_iter().map(|p| emb(&p)).collect();
            let hist: Vec<_> = embs.iter().enumerate().map(|(i, e)| (e, 2 * i as u64 + 1)).collect();
            let gram = build_gram(&raw(family), &hist, eps).unwrap();
            let n = gram.nrows();
            for i in 0..n {
                prop_assert_eq!(gram[(i, i)], 1.0);
                for j in 0..n {
                    prop_assert!((gram[(i, j)] - gram[(j, i)]).abs() <= 1e-12);
                }
            }
            let reg = gram + DMatrix::identity(n, n) * (sigma_f * sigma_f);
            prop_assert!(reg.cholesky().is_some());
        }
    }
}
