//! The training loop, its baselines, evaluation and multi-run orchestration.

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    DataSource, LearnerConfig, LearnerKind, RunConfig, Strategy, SYNTHETIC_EMBEDDINGS,
};
pub use report::{
    emit_report, read_pull_counts, write_f1_csv, ReportFormat, PARAMS_FILE, PULL_HISTORY_FILE,
};

use crate::bandit::{select_arm, Arm, ArmSet, PullHistory};
use crate::data::{
    generate_synthetic, load_dataset, load_embeddings, LabeledDataset, Split,
};
use crate::error::{Error, Result};
use crate::gp::{GpState, HistoryRecord};
use crate::learner::{
    predict_labels, self_prediction_gain, AnyLearner, Learner, LogisticRegression, Perceptron,
};
use crate::ranking::{average_ranking, converged, rank_by_pulls, Ranking};

// Independent generator streams derived from the run seed.
const STREAM_BATCHES: u64 = 1;
const STREAM_STRATEGY: u64 = 2;
const STREAM_INIT: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A dataset with one arm per class, arms in the dataset's class order.
#[derive(Debug, Clone)]
pub struct Workload {
    pub dataset: LabeledDataset,
    pub arms: ArmSet,
    /// Learnable classes, known only for generated data.
    pub clean_classes: Option<BTreeSet<String>>,
}

impl Workload {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let (dataset, generated, clean_classes) = match &config.data {
            DataSource::Dataset(path) => (load_dataset(path)?, None, None),
            DataSource::Synthetic(s) => {
                let d = generate_synthetic(s)?;
                (d.dataset.clone(), Some(d.embeddings()), Some(d.clean_classes))
            }
        };
        let embeddings = if config.embeddings == SYNTHETIC_EMBEDDINGS {
            generated.ok_or_else(|| {
                Error::Config("embeddings = \"synthetic\" needs a synthetic data source".into())
            })?
        } else {
            load_embeddings(Path::new(&config.embeddings))?
        };
        let missing: Vec<String> = dataset
            .classes()
            .iter()
            .filter(|c| !embeddings.contains_key(*c))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "no embedding for classes: {}",
                missing.join(", ")
            )));
        }
        let arms = ArmSet::new(
            dataset
                .classes()
                .iter()
                .map(|c| Arm {
                    class_id: c.clone(),
                    embedding: embeddings[c].clone(),
                })
                .collect(),
        )?;
        Ok(Workload {
            dataset,
            arms,
            clean_classes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub round: u64,
    pub class_id: String,
    pub reward: f64,
    pub loss_before: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassF1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassF1 {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub strategy: Strategy,
    pub seed: u64,
    pub pulls: PullHistory,
    /// One entry per executed round.
    pub rewards: Vec<RewardRecord>,
    /// Cumulative pull-count rankings taken every `ranking_interval` rounds.
    pub snapshots: Vec<(u64, Ranking)>,
    pub learner: AnyLearner,
    pub class_ids: Vec<String>,
    pub f1: BTreeMap<String, ClassF1>,
    pub convergence_round: Option<u64>,
    pub final_ranking: Ranking,
    /// Classes by training frequency, the order baseline F1 tables use.
    pub frequency_order: Vec<String>,
    /// Bandit only.
    pub gp_history: Vec<HistoryRecord>,
}

impl RunArtifacts {
    pub fn rounds(&self) -> u64 {
        self.rewards.len() as u64
    }

    /// Mean F1 over `classes`.
    pub fn macro_f1<'a>(&self, classes: impl IntoIterator<Item = &'a String>) -> f64 {
        let (sum, n) = classes
            .into_iter()
            .filter_map(|c| self.f1.get(c))
            .fold((0.0, 0usize), |(s, n), f| (s + f.f1, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

pub fn initial_learner(config: &RunConfig, num_classes: usize, feature_dim: usize) -> AnyLearner {
    let lr = config.learner.learning_rate;
    match config.learner.kind {
        LearnerKind::Logistic => {
            AnyLearner::Logistic(LogisticRegression::zeros(num_classes, feature_dim, lr))
        }
        LearnerKind::Perceptron => {
            let mut rng = stream(config.seed, STREAM_INIT);
            AnyLearner::Perceptron(Perceptron::new(
                num_classes,
                feature_dim,
                config.learner.hidden_units,
                lr,
                &mut rng,
            ))
        }
    }
}

pub fn run_training(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let workload = Workload::load(config)?;
    run_on(&workload, config)
}

/// [`run_training`] against an already loaded workload.
pub fn run_on(workload: &Workload, config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let dataset = &workload.dataset;
    let arms = &workload.arms;
    let classes: Vec<String> = dataset.classes().to_vec();
    let frequency_order = dataset.classes_by_frequency();
    let round_robin: Vec<usize> = match config.strategy {
        Strategy::FrequencyTopN(n) => frequency_order
            .iter()
            .take(n)
            .map(|c| dataset.class_index(c).expect("class from dataset"))
            .collect(),
        _ => Vec::new(),
    };

    let mut batch_rng = stream(config.seed, STREAM_BATCHES);
    let mut strategy_rng = stream(config.seed, STREAM_STRATEGY);
    let mut learner = initial_learner(config, classes.len(), dataset.feature_dim());
    let mut gp = GpState::new(config.gp_config())?;
    let mut pulls = PullHistory::new();
    let mut rewards = Vec::new();
    let mut snapshots: Vec<(u64, Ranking)> = Vec::new();
    let mut convergence_round = None;
    let lr = config.learner.learning_rate;
    let interval = config.ranking_interval;

    for t in 1..=config.max_rounds {
        let abort = |e: Error| Error::RunAborted {
            round: t,
            source: Box::new(e),
        };
        let k = match config.strategy {
            Strategy::Bandit => select_arm(&gp, arms, config.beta, t, &pulls).map_err(abort)?,
            Strategy::Uniform => strategy_rng.random_range(0..arms.len()),
            Strategy::FrequencyTopN(_) => round_robin[(t as usize - 1) % round_robin.len()],
        };
        let arm = &arms.arms()[k];
        let class = arm.class_id.as_str();
        let train = dataset
            .sample_batch(class, Split::Train, config.train_batch_size, &mut batch_rng)
            .map_err(abort)?;
        let val = dataset
            .sample_batch(class, Split::Val, config.val_batch_size, &mut batch_rng)
            .map_err(abort)?;
        let gain = self_prediction_gain(&learner, &train, &val, lr).map_err(abort)?;
        learner = gain.updated;
        pulls.push(t, class, gain.reward).map_err(abort)?;
        rewards.push(RewardRecord {
            round: t,
            class_id: class.to_owned(),
            reward: gain.reward,
            loss_before: gain.loss_before,
            loss_after: gain.loss_after,
        });
        if config.strategy.is_bandit() {
            gp.push(arm.embedding.clone(), gain.reward, t, Some(class.to_owned()))
                .map_err(abort)?;
        }
        if t % interval == 0 {
            let counts = pulls.pull_counts_over(classes.iter().map(String::as_str));
            snapshots.push((t, rank_by_pulls(&counts)));
            if config.strategy.is_bandit()
                && config.stop_on_convergence
                && converged(&snapshots, interval, config.convergence_threshold).map_err(abort)?
            {
                convergence_round = Some(t);
                break;
            }
        }
    }

    let f1 = per_class_f1(&learner, dataset, config.prediction_threshold)?;
    let final_ranking = rank_by_pulls(&pulls.pull_counts_over(classes.iter().map(String::as_str)));
    Ok(RunArtifacts {
        strategy: config.strategy,
        seed: config.seed,
        pulls,
        rewards,
        snapshots,
        learner,
        class_ids: classes,
        f1,
        convergence_round,
        final_ranking,
        frequency_order,
        gp_history: gp.records(),
    })
}

/// Outcome of [`run_multi`]: per-run results in seed order plus the ranking
/// by mean pull count over the runs that completed.
#[derive(Debug)]
pub struct MultiRun {
    pub runs: Vec<Result<RunArtifacts>>,
    pub average: Ranking,
}

pub fn run_multi(config: &RunConfig, runs: usize) -> Result<MultiRun> {
    config.validate()?;
    let workload = Workload::load(config)?;
    run_multi_on(&workload, config, runs)
}

pub fn run_multi_on(workload: &Workload, config: &RunConfig, runs: usize) -> Result<MultiRun> {
    if runs == 0 {
        return Err(Error::Config("number of runs must be at least 1".into()));
    }
    let results: Vec<Result<RunArtifacts>> = (0..runs as u64)
        .map(|s| {
            let c = RunConfig {
                seed: config.seed.wrapping_add(s),
                ..config.clone()
            };
            run_on(workload, &c)
        })
        .collect();
    let histories: Vec<PullHistory> = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|a| a.pulls.clone())
        .collect();
    if histories.is_empty() {
        // Every run failed: surface the first failure.
        return Err(results.into_iter().find_map(Result::err).expect("runs >= 1"));
    }
    let average = average_ranking(
        &histories,
        workload.dataset.classes().iter().map(String::as_str),
    )?;
    Ok(MultiRun {
        runs: results,
        average,
    })
}

/// Precision, recall and F1 per class over the test split. Zero
/// denominators give 0.
pub fn per_class_f1<L: Learner>(
    learner: &L,
    dataset: &LabeledDataset,
    threshold: f64,
) -> Result<BTreeMap<String, ClassF1>> {
    let test = dataset.split_indices(Split::Test);
    if test.is_empty() {
        return Err(Error::EmptySplit {
            class: "<all>".into(),
            split: Split::Test.name(),
        });
    }
    let c = dataset.num_classes();
    let (mut tp, mut fp, mut fn_) = (vec![0; c], vec![0; c], vec![0; c]);
    for i in test {
        let predicted = predict_labels(learner, &dataset.instance(i).features, threshold)?;
        let actual: BTreeSet<usize> = dataset.label_indices(i).iter().copied().collect();
        for &k in predicted.intersection(&actual) {
            tp[k] += 1;
        }
        for &k in predicted.difference(&actual) {
            fp[k] += 1;
        }
        for &k in actual.difference(&predicted) {
            fn_[k] += 1;
        }
    }
    Ok(dataset
        .classes()
        .iter()
        .enumerate()
        .map(|(k, id)| (id.clone(), ClassF1::from_counts(tp[k], fp[k], fn_[k])))
        .collect())
}
