//! Class rankings from pull counts, normalized Kendall tau distance and the
//! convergence rule built on it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bandit::PullHistory;
use crate::error::{Error, Result};

pub const DEFAULT_INTERVAL: u64 = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Classes ordered by (mean) pull count, descending, ties by class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    order: Vec<String>,
    counts: BTreeMap<String, f64>,
}

impl Ranking {
    /// Rank from real-valued scores (mean pull counts).
    pub fn from_scores(scores: BTreeMap<String, f64>) -> Ranking {
        let mut order: Vec<String> = scores.keys().cloned().collect();
        // The map iterates in id order and the sort is stable, so equal
        // scores stay lexicographic.
        order.sort_by(|a, b| scores[b].total_cmp(&scores[a]));
        Ranking {
            order,
            counts: scores,
        }
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn counts(&self) -> &BTreeMap<String, f64> {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn top(&self, k: usize) -> &[String] {
        &self.order[..k.min(self.order.len())]
    }

    /// 1-based rank of every class.
    pub fn positions(&self) -> HashMap<&str, usize> {
        self.order
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i + 1))
            .collect()
    }

    /// `rank,class_id,<count_header>` rows. Counts are written in integer
    /// form when they are whole numbers.
    pub fn write_csv<W: Write>(&self, w: W, count_header: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["rank", "class_id", count_header])?;
        for (i, c) in self.order.iter().enumerate() {
            let v = self.counts[c];
            let s = if v.fract() == 0.0 && v.abs() < 1e15 {
                format!("{}", v as i64)
            } else {
                format!("{v:?}")
            };
            w.write_record([(i + 1).to_string(), c.clone(), s])?;
        }
        w.flush().map_err(|e| Error::io("<ranking>", e))?;
        Ok(())
    }
}

pub fn rank_by_pulls(counts: &BTreeMap<String, u64>) -> Ranking {
    Ranking::from_scores(counts.iter().map(|(c, &n)| (c.clone(), n as f64)).collect())
}

/// Fraction of class pairs ordered differently by the two rankings.
pub fn kendall_distance(r1: &Ranking, r2: &Ranking) -> Result<f64> {
    let n = r1.len();
    if n < 2 {
        return Err(Error::contract(format!(
            "Kendall distance needs at least two classes, got {n}"
        )));
    }
    if r1.counts.len() != r2.counts.len() || r1.counts.keys().ne(r2.counts.keys()) {
        return Err(Error::contract("rankings cover different class sets"));
    }
    let p2 = r2.positions();
    // Walking r1 in rank order, pair (i, j) with i before j is discordant
    // when r2 places j first.
    let second: Vec<usize> = r1.order.iter().map(|c| p2[c.as_str()]).collect();
    let mut discordant = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            if second[i] > second[j] {
                discordant += 1;
            }
        }
    }
    Ok(discordant as f64 / (n * (n - 1) / 2) as f64)
}

/// Whether the latest snapshot is within `threshold` Kendall distance of the
/// snapshot taken `interval` rounds earlier.
pub fn converged(history: &[(u64, Ranking)], interval: u64, threshold: f64) -> Result<bool> {
    if interval == 0 {
        return Err(Error::contract("ranking interval must be at least 1"));
    }
    let Some((latest_round, latest)) = history.last() else {
        return Ok(false);
    };
    let Some(target) = latest_round.checked_sub(interval) else {
        return Ok(false);
    };
    let Some((_, earlier)) = history.iter().rev().find(|(r, _)| *r == target) else {
        return Ok(false);
    };
    Ok(kendall_distance(earlier, latest)? <= threshold)
}

/// Rank classes by their pull count averaged over runs.
pub fn average_ranking<'a>(
    runs: &[PullHistory],
    classes: impl IntoIterator<Item = &'a str>,
) -> Result<Ranking> {
    if runs.is_empty() {
        return Err(Error::contract("average ranking needs at least one run"));
    }
    let class_set: BTreeSet<&str> = classes.into_iter().collect();
    let mut totals: BTreeMap<String, f64> =
        class_set.iter().map(|c| ((*c).to_owned(), 0.0)).collect();
    for (s, run) in runs.iter().enumerate() {
        for (c, n) in run.pull_counts() {
            match totals.get_mut(&c) {
                Some(t) => *t += n as f64,
                None => {
                    return Err(Error::contract(format!(
                        "run {s} pulled `{c}`, which is outside the class set"
                    )))
                }
            }
        }
    }
    let s = runs.len() as f64;
    totals.values_mut().for_each(|t| *t /= s);
    Ok(Ranking::from_scores(totals))
}

/// `|top-k ∩ targets| / min(k, |targets|)`.
pub fn recall_at_k(ranking: &Ranking, targets: &BTreeSet<String>, k: usize) -> f64 {
    let denom = k.min(targets.len());
    if denom == 0 {
        return 0.0;
    }
    let hits = ranking.top(k).iter().filter(|c| targets.contains(*c)).count();
    hits as f64 / denom as f64
}
