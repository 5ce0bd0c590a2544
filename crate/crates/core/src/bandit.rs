//! UCB arm selection over the class set and pull bookkeeping.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpState;
use crate::kernel::Embedding;

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub class_id: String,
    pub embedding: Embedding,
}

impl AsRef<Embedding> for Arm {
    fn as_ref(&self) -> &Embedding {
        &self.embedding
    }
}

/// The classes a bandit may pull, each with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    arms: Vec<Arm>,
}

impl ArmSet {
    pub fn new(arms: Vec<Arm>) -> Result<Self> {
        let mut seen = HashSet::new();
        for arm in &arms {
            if !seen.insert(arm.class_id.as_str()) {
                return Err(Error::contract(format!(
                    "duplicate class id `{}` in arm set",
                    arm.class_id
                )));
            }
        }
        if let Some(first) = arms.first() {
            let dim = first.embedding.dim();
            if let Some(bad) = arms.iter().find(|a| a.embedding.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    what: "arm embedding",
                    expected: dim,
                    actual: bad.embedding.dim(),
                });
            }
        }
        Ok(ArmSet { arms })
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Embedding)>,
        S: Into<String>,
    {
        ArmSet::new(
            pairs
                .into_iter()
                .map(|(id, embedding)| Arm {
                    class_id: id.into(),
                    embedding,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn get(&self, class_id: &str) -> Option<&Arm> {
        self.arms.iter().find(|a| a.class_id == class_id)
    }

    pub fn class_ids(&self) -> impl Iterator<Item = &str> {
        self.arms.iter().map(|a| a.class_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pull {
    pub timestep: u64,
    pub class_id: String,
    pub reward: f64,
}

/// Every pull of a run, in timestep order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PullHistory {
    pulls: Vec<Pull>,
}

impl PullHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pulls(&self) -> &[Pull] {
        &self.pulls
    }

    pub fn len(&self) -> usize {
        self.pulls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulls.is_empty()
    }

    /// Functional append; see [`PullHistory::push`].
    pub fn record_pull(&self, t: u64, class_id: &str, reward: f64) -> Result<PullHistory> {
        let mut next = self.clone();
        next.push(t, class_id, reward)?;
        Ok(next)
    }

    pub fn push(&mut self, t: u64, class_id: &str, reward: f64) -> Result<()> {
        if let Some(last) = self.pulls.last() {
            if t <= last.timestep {
                return Err(Error::contract(format!(
                    "pull timestep {t} does not follow {}",
                    last.timestep
                )));
            }
        }
        self.pulls.push(Pull {
            timestep: t,
            class_id: class_id.to_owned(),
            reward,
        });
        Ok(())
    }

    /// Pulls per class. Only classes pulled at least once appear; use
    /// [`PullHistory::pull_counts_over`] to include zero entries.
    pub fn pull_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for p in &self.pulls {
            *counts.entry(p.class_id.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn pull_counts_over<'a>(
        &self,
        classes: impl IntoIterator<Item = &'a str>,
    ) -> BTreeMap<String, u64> {
        let mut counts: BTreeMap<String, u64> =
            classes.into_iter().map(|c| (c.to_owned(), 0)).collect();
        for p in &self.pulls {
            *counts.entry(p.class_id.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestep", "class_id", "reward"])?;
        for p in &self.pulls {
            // `{:?}` on f64 prints the shortest string that round-trips.
            w.write_record([
                p.timestep.to_string(),
                p.class_id.clone(),
                format!("{:?}", p.reward),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<pull history>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut history = PullHistory::new();
        for row in r.deserialize() {
            let p: Pull = row?;
            history.push(p.timestep, &p.class_id, p.reward)?;
        }
        Ok(history)
    }
}

/// UCB score `mu + sqrt(beta) * sigma` of every arm at timestep `t`.
pub fn ucb_scores(gp: &GpState, arms: &ArmSet, beta: f64, t: u64) -> Result<Vec<f64>> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::contract(format!("beta must be nonnegative, got {beta}")));
    }
    let root_beta = beta.sqrt();
    Ok(gp
        .posterior_many(arms.arms(), t)?
        .into_iter()
        .map(|p| p.mean + root_beta * p.std_dev())
        .collect())
}

/// Index of the arm with the largest UCB score. Exact ties go to the arm
/// pulled least often in `history`, then to the smallest class id.
pub fn select_arm(
    gp: &GpState,
    arms: &ArmSet,
    beta: f64,
    t: u64,
    history: &PullHistory,
) -> Result<usize> {
    if arms.is_empty() {
        return Err(Error::contract("cannot select from an empty arm set"));
    }
    let scores = ucb_scores(gp, arms, beta, t)?;
    let counts = history.pull_counts();
    Ok(argmax_with_ties(arms, &scores, &counts))
}

pub(crate) fn argmax_with_ties(arms: &ArmSet, scores: &[f64], counts: &BTreeMap<String, u64>) -> usize {
    let count = |i: usize| counts.get(&arms.arms[i].class_id).copied().unwrap_or(0);
    let mut best = 0;
    for i in 1..scores.len() {
        let better = match scores[i].total_cmp(&scores[best]) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => match count(i).cmp(&count(best)) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => arms.arms[i].class_id < arms.arms[best].class_id,
            },
        };
        if better {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gp::GpConfig;
    use crate::kernel::KernelConfig;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn gp_config() -> GpConfig {
        GpConfig {
            kernel: KernelConfig {
                normalize: false,
                ..KernelConfig::default()
            },
            epsilon: 0.0,
            noise_sigma_f: 0.1,
            window_cap: 100,
        }
    }

    #[test]
    fn empty_history_picks_smallest_id() {
        let arms = ArmSet::from_pairs([
            ("zebra", emb(&[1.0, 0.0])),
            ("apple", emb(&[0.0, 1.0])),
            ("mango", emb(&[1.0, 1.0])),
        ])
        .unwrap();
        let gp = GpState::new(gp_config()).unwrap();
        let i = select_arm(&gp, &arms, 2.0, 1, &PullHistory::new()).unwrap();
        assert_eq!(arms.arms()[i].class_id, "apple");
    }

    #[test]
    fn ties_prefer_least_pulled() {
        let arms = ArmSet::from_pairs([("a", emb(&[0.0])), ("b", emb(&[5.0]))]).unwrap();
        let gp = GpState::new(gp_config()).unwrap();
        let history = PullHistory::new().record_pull(1, "a", 0.0).unwrap();
        let i = select_arm(&gp, &arms, 1.0, 2, &history).unwrap();
        assert_eq!(arms.arms()[i].class_id, "b");
    }

    #[test]
    fn zero_beta_exploits_mean() {
        let a = emb(&[0.0, 0.0]);
        let b = emb(&[10.0, 0.0]);
        let arms = ArmSet::from_pairs([("A", a.clone()), ("B", b.clone())]).unwrap();
        let mut gp = GpState::new(gp_config()).unwrap();
        gp.push(a, 0.9, 1, None).unwrap();
        gp.push(b, 0.1, 2, None).unwrap();
        let i = select_arm(&gp, &arms, 0.0, 3, &PullHistory::new()).unwrap();
        assert_eq!(arms.arms()[i].class_id, "A");
    }

    #[test]
    fn matches_per_arm_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let arms = ArmSet::from_pairs((0..5).map(|i| {
            (
                format!("arm{i}"),
                emb(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
            )
        }))
        .unwrap();
        let mut gp = GpState::new(GpConfig {
            epsilon: 0.05,
            ..gp_config()
        })
        .unwrap();
        let mut history = PullHistory::new();
        for t in 1..=12 {
            let i = rng.random_range(0..5);
            let arm = &arms.arms()[i];
            let r = rng.random_range(-0.5..1.0);
            gp.push(arm.embedding.clone(), r, t, None).unwrap();
            history.push(t, &arm.class_id, r).unwrap();
        }
        let beta: f64 = 1.7;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, arm) in arms.arms().iter().enumerate() {
            let p = gp.posterior(&arm.embedding, 13).unwrap();
            let ucb = p.mean + beta.sqrt() * p.variance.sqrt();
            if ucb > best.0 {
                best = (ucb, i);
            }
        }
        assert_eq!(select_arm(&gp, &arms, beta, 13, &history).unwrap(), best.1);
        // Repeated calls agree.
        assert_eq!(select_arm(&gp, &arms, beta, 13, &history).unwrap(), best.1);
    }

    #[test]
    fn empty_arm_set_rejected() {
        let arms = ArmSet::new(vec![]).unwrap();
        let gp = GpState::new(gp_config()).unwrap();
        assert!(matches!(
            select_arm(&gp, &arms, 1.0, 1, &PullHistory::new()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn arm_set_invariants() {
        assert!(ArmSet::from_pairs([("a", emb(&[1.0])), ("a", emb(&[2.0]))]).is_err());
        assert!(ArmSet::from_pairs([("a", emb(&[1.0])), ("b", emb(&[2.0, 1.0]))]).is_err());
    }

    #[test]
    fn record_and_count() {
        let h = PullHistory::new();
        assert!(h.pull_counts().is_empty());
        let h = h.record_pull(1, "A", 0.3).unwrap();
        assert_eq!(h.len(), 1);
        let h = h.record_pull(2, "A", -0.1).unwrap().record_pull(3, "B", 9.0).unwrap();
        let counts = h.pull_counts_over(["A", "B", "C"]);
        assert_eq!(counts["A"], 2);
        assert_eq!(counts["B"], 1);
        assert_eq!(counts["C"], 0);
        assert_eq!(counts.values().sum::<u64>(), h.len() as u64);

        let mut other = PullHistory::new();
        for (t, c, _) in [(1, "A", 0.0), (2, "A", 0.0), (3, "B", 0.0)] {
            other.push(t, c, 123.0).unwrap();
        }
        assert_eq!(other.pull_counts(), h.pull_counts());
        assert!(h.record_pull(3, "A", 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut h = PullHistory::new();
        h.push(1, "cat", 0.1 + 0.2).unwrap();
        h.push(4, "dog,with comma", -1e-17).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestep,class_id,reward\n"));
        assert_eq!(PullHistory::read_csv(&buf[..]).unwrap(), h);
    }

    #[test]
    fn scaling_scores_keeps_argmax() {
        let arms = ArmSet::from_pairs([("a", emb(&[0.0])), ("b", emb(&[1.0])), ("c", emb(&[2.0]))]).unwrap();
        let scores = [0.3, 1.2, -0.4];
        let counts = BTreeMap::new();
        let base = argmax_with_ties(&arms, &scores, &counts);
        for c in [0.01, 3.0, 1e6] {
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            assert_eq!(argmax_with_ties(&arms, &scaled, &counts), base);
        }
    }
}
