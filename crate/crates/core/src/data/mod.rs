//! Multi-label datasets, per-class batch sampling, the synthetic noisy-class
//! generator and embedding files.

mod embeddings;
mod jsonl;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use embeddings::{load_embeddings, parse_embeddings, write_embeddings};
pub use jsonl::{load_dataset, parse_dataset, write_dataset};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData};

use crate::error::{Error, Result};
use crate::learner::{Batch, Example};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub features: Vec<f64>,
    pub labels: Vec<String>,
}

/// Instances with multi-label targets, each assigned to exactly one split,
/// plus a per-class, per-split index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    instances: Vec<Instance>,
    splits: Vec<Split>,
    /// Sorted class ids; a class's position here is its output index.
    classes: Vec<String>,
    class_pos: BTreeMap<String, usize>,
    /// Output indices of each instance's labels.
    label_idx: Vec<Vec<usize>>,
    /// `by_class[c][split]` lists instance indices.
    by_class: Vec<[Vec<usize>; 3]>,
    feature_dim: usize,
}

impl LabeledDataset {
    /// Build the class index and check the dataset invariants: a shared
    /// feature dimension, unique instance ids and at least one train and one
    /// validation instance per class.
    pub fn new(rows: Vec<(Instance, Split)>) -> Result<Self> {
        let Some((first, _)) = rows.first() else {
            return Err(Error::Data("dataset has no instances".into()));
        };
        let feature_dim = first.features.len();
        if feature_dim == 0 {
            return Err(Error::Data("instances must have at least one feature".into()));
        }

        let mut ids = std::collections::HashSet::new();
        let mut class_pos: BTreeMap<String, usize> = BTreeMap::new();
        for (inst, _) in &rows {
            if inst.features.len() != feature_dim {
                return Err(Error::Data(format!(
                    "instance `{}` has {} features, expected {feature_dim}",
                    inst.id,
                    inst.features.len()
                )));
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("instance `{}` has non-finite features", inst.id)));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Data(format!("duplicate instance id `{}`", inst.id)));
            }
            for l in &inst.labels {
                class_pos.entry(l.clone()).or_insert(0);
            }
        }
        let classes: Vec<String> = class_pos.keys().cloned().collect();
        for (i, c) in classes.iter().enumerate() {
            class_pos.insert(c.clone(), i);
        }

        let mut by_class = vec![[Vec::new(), Vec::new(), Vec::new()]; classes.len()];
        let mut label_idx = Vec::with_capacity(rows.len());
        let mut instances = Vec::with_capacity(rows.len());
        let mut splits = Vec::with_capacity(rows.len());
        for (i, (inst, split)) in rows.into_iter().enumerate() {
            let mut idx: Vec<usize> = inst.labels.iter().map(|l| class_pos[l]).collect();
            idx.sort_unstable();
            idx.dedup();
            for &c in &idx {
                by_class[c][split.slot()].push(i);
            }
            label_idx.push(idx);
            instances.push(inst);
            splits.push(split);
        }

        let lacking: Vec<String> = classes
            .iter()
            .zip(&by_class)
            .filter(|(_, s)| s[Split::Train.slot()].is_empty() || s[Split::Val.slot()].is_empty())
            .map(|(c, _)| c.clone())
            .collect();
        if !lacking.is_empty() {
            return Err(Error::ClassesWithoutData(lacking));
        }

        Ok(LabeledDataset {
            instances,
            splits,
            classes,
            class_pos,
            label_idx,
            by_class,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, class_id: &str) -> Option<usize> {
        self.class_pos.get(class_id).copied()
    }

    pub fn instance(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn label_indices(&self, i: usize) -> &[usize] {
        &self.label_idx[i]
    }

    /// Indices of every instance in `split`.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Instances of `class_id` in `split`.
    pub fn class_split(&self, class_id: &str, split: Split) -> Result<&[usize]> {
        let c = self
            .class_index(class_id)
            .ok_or_else(|| Error::UnknownClass(class_id.to_owned()))?;
        Ok(&self.by_class[c][split.slot()])
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            features: &self.instances[i].features,
            labels: &self.label_idx[i],
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<'_> {
        Batch::new(indices.iter().map(|&i| self.example(i)).collect())
    }

    /// `batch_size` instance indices drawn uniformly with replacement from
    /// `class_id`'s instances in `split`.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        class_id: &str,
        split: Split,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let pool = self.class_split(class_id, split)?;
        if pool.is_empty() {
            return Err(Error::EmptySplit {
                class: class_id.to_owned(),
                split: split.name(),
            });
        }
        if batch_size == 0 {
            return Err(Error::contract("batch size must be positive"));
        }
        Ok((0..batch_size)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        class_id: &str,
        split: Split,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Batch<'_>> {
        let idx = self.sample_indices(class_id, split, batch_size, rng)?;
        Ok(self.batch(&idx))
    }

    /// Classes ordered by number of training instances, most frequent first;
    /// ties by class id.
    pub fn classes_by_frequency(&self) -> Vec<String> {
        let mut order: Vec<(usize, &String)> = self
            .classes
            .iter()
            .zip(&self.by_class)
            .map(|(c, s)| (s[Split::Train.slot()].len(), c))
            .collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        order.into_iter().map(|(_, c)| c.clone()).collect()
    }
}
