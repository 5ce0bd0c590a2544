//! Seeded synthetic benchmark with learnable and pure-noise classes.
//!
//! Clean classes are Gaussian clouds around random unit prototypes. Each
//! noise class tags a uniformly sampled subset of the clean pool with an
//! extra out-of-vocabulary label, so its members carry no information about
//! that label beyond membership itself.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Instance, LabeledDataset, Split};
use crate::bandit::{Arm, ArmSet};
use crate::error::{Error, Result};
use crate::kernel::Embedding;

pub const CLEAN_PREFIX: &str = "topic_";
pub const NOISE_PREFIX: &str = "noise_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_clean_classes: usize,
    pub num_noise_classes: usize,
    pub instances_per_class: usize,
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub prototype_noise_sigma: f64,
    /// Derive clean-class embeddings from their feature prototypes. When
    /// false every embedding is an independent random unit vector.
    pub coupled_embeddings: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_clean_classes: 20,
            num_noise_classes: 20,
            instances_per_class: 200,
            feature_dim: 32,
            embedding_dim: 8,
            prototype_noise_sigma: 0.25,
            coupled_embeddings: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_clean_classes", self.num_clean_classes),
            ("instances_per_class", self.instances_per_class),
            ("feature_dim", self.feature_dim),
            ("embedding_dim", self.embedding_dim),
        ] {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be at least 1")));
            }
        }
        if self.feature_dim < self.embedding_dim {
            return Err(Error::contract(format!(
                "feature_dim {} is smaller than embedding_dim {}",
                self.feature_dim, self.embedding_dim
            )));
        }
        if !(self.prototype_noise_sigma > 0.0 && self.prototype_noise_sigma.is_finite()) {
            return Err(Error::contract("prototype_noise_sigma must be positive"));
        }
        Ok(())
    }
}

pub fn clean_class_id(i: usize) -> String {
    format!("{CLEAN_PREFIX}{i:03}")
}

pub fn noise_class_id(i: usize) -> String {
    format!("{NOISE_PREFIX}{i:03}")
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: LabeledDataset,
    pub arms: ArmSet,
    pub clean_classes: BTreeSet<String>,
}

impl SyntheticData {
    pub fn embeddings(&self) -> BTreeMap<String, Embedding> {
        self.arms
            .arms()
            .iter()
            .map(|a| (a.class_id.clone(), a.embedding.clone()))
            .collect()
    }
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Split sizes for `n` instances: about 70/15/15, with at least one
/// validation instance whenever `n >= 2`.
fn split_sizes(n: usize) -> [usize; 3] {
    let mut train = (0.70 * n as f64).round() as usize;
    let mut val = (0.15 * n as f64).round() as usize;
    let mut test = n - train - val;
    if val == 0 && n >= 2 {
        if test > 0 {
            test -= 1;
        } else {
            train -= 1;
        }
        val = 1;
    }
    [train, val, test]
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.prototype_noise_sigma).expect("validated sigma");
    let sizes = split_sizes(config.instances_per_class);

    let mut rows: Vec<(Instance, Split)> = Vec::new();
    let mut arms = Vec::new();
    let mut clean_classes = BTreeSet::new();
    let mut pool: [Vec<usize>; 3] = Default::default();

    for c in 0..config.num_clean_classes {
        let id = clean_class_id(c);
        let prototype = unit_vector(config.feature_dim, &mut rng);
        let mut splits: Vec<Split> = Split::ALL
            .iter()
            .zip(sizes)
            .flat_map(|(&s, n)| std::iter::repeat_n(s, n))
            .collect();
        splits.shuffle(&mut rng);
        for (k, split) in splits.into_iter().enumerate() {
            let features = prototype.iter().map(|p| p + noise.sample(&mut rng)).collect();
            pool[split as usize].push(rows.len());
            rows.push((
                Instance {
                    id: format!("{id}_{k:04}"),
                    features,
                    labels: vec![id.clone()],
                },
                split,
            ));
        }
        let embedding = if config.coupled_embeddings {
            Embedding::new(prototype[..config.embedding_dim].to_vec())?.normalized()
        } else {
            Embedding::new(unit_vector(config.embedding_dim, &mut rng))?
        };
        arms.push(Arm {
            class_id: id.clone(),
            embedding,
        });
        clean_classes.insert(id);
    }

    for j in 0..config.num_noise_classes {
        let id = noise_class_id(j);
        for (slot, &want) in sizes.iter().enumerate() {
            let members = &pool[slot];
            if want > members.len() {
                return Err(Error::contract(format!(
                    "noise class needs {want} {} instances but the clean pool has {}",
                    Split::ALL[slot],
                    members.len()
                )));
            }
            let mut chosen: Vec<usize> = index::sample(&mut rng, members.len(), want)
                .into_iter()
                .map(|k| members[k])
                .collect();
            chosen.sort_unstable();
            for i in chosen {
                rows[i].0.labels.push(id.clone());
            }
        }
        arms.push(Arm {
            class_id: id,
            embedding: Embedding::new(unit_vector(config.embedding_dim, &mut rng))?,
        });
    }

    Ok(SyntheticData {
        dataset: LabeledDataset::new(rows)?,
        arms: ArmSet::new(arms)?,
        clean_classes,
    })
}
