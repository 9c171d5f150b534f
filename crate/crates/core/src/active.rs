//! Pool-based, batch-mode active learning.
//!
//! Each round trains a fresh classifier on the (optionally under-sampled)
//! labeled set, scores the unlabeled pool with an acquisition function and
//! sends the `B` most informative rows to the oracle.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mlp::{self, LabeledDataset, MlpError, MlpModel, Posterior, TrainConfig};
use crate::powerflow::SolvabilityLabel;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionStrategy {
    Random,
    LeastConfident,
    Margin,
    Entropy,
}

impl AcquisitionStrategy {
    pub const ALL: [AcquisitionStrategy; 4] = [
        AcquisitionStrategy::Random,
        AcquisitionStrategy::LeastConfident,
        AcquisitionStrategy::Margin,
        AcquisitionStrategy::Entropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionStrategy::Random => "random",
            AcquisitionStrategy::LeastConfident => "least_confident",
            AcquisitionStrategy::Margin => "margin",
            AcquisitionStrategy::Entropy => "entropy",
        }
    }
}

impl fmt::Display for AcquisitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AcquisitionStrategy::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown strategy '{s}' (expected random, least_confident, margin or entropy)"))
    }
}

/// Informativeness of each posterior; higher is queried first.
///
/// `seed` only feeds the `Random` strategy, which draws one uniform score per
/// row.
pub fn score(strategy: AcquisitionStrategy, posteriors: &[Posterior], seed: u64) -> Vec<f64> {
    match strategy {
        AcquisitionStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            posteriors.iter().map(|_| rng.random::<f64>()).collect()
        }
        AcquisitionStrategy::LeastConfident => posteriors
            .iter()
            .map(|p| -p.0[0].max(p.0[1]))
            .collect(),
        AcquisitionStrategy::Margin => posteriors
            .iter()
            .map(|p| -(p.0[1] - p.0[0]).abs())
            .collect(),
        AcquisitionStrategy::Entropy => posteriors
            .iter()
            .map(|p| {
                -p.0
                    .iter()
                    .filter(|&&q| q > 0.0)
                    .map(|&q| q * q.ln())
                    .sum::<f64>()
            })
            .collect(),
    }
}

/// Positions of the `b` highest scores; equal scores go to the lower pool
/// index first.
pub fn top_b(scores: &[f64], pool_indices: &[usize], b: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .total_cmp(&scores[i])
            .then(pool_indices[i].cmp(&pool_indices[j]))
    });
    order.truncate(b);
    order.into_iter().map(|k| pool_indices[k]).collect()
}

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("iteration {iteration}: oracle failed on pool row {pool_index}: {message}")]
    Oracle {
        iteration: usize,
        pool_index: usize,
        message: String,
    },
    #[error("pool exhausted: need {needed} unlabeled rows, {available} left")]
    PoolExhausted { needed: usize, available: usize },
    #[error("labeled set contains a single class")]
    SingleClass,
    #[error("iteration {iteration}: {source}")]
    Train {
        iteration: usize,
        #[source]
        source: MlpError,
    },
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("invalid active learning config: {0}")]
    Config(String),
}

/// Failure reported by an [`Oracle`] for one pool row.
#[derive(Debug, Clone)]
pub struct OracleError {
    pub pool_index: usize,
    pub message: String,
}

/// Labeling authority for rows of the training pool.
pub trait Oracle {
    /// Labels for the given pool rows, in order.
    fn label(&self, pool_indices: &[usize]) -> Result<Vec<SolvabilityLabel>, OracleError>;
}

impl<F> Oracle for F
where
    F: Fn(&[usize]) -> Result<Vec<SolvabilityLabel>, OracleError>,
{
    fn label(&self, pool_indices: &[usize]) -> Result<Vec<SolvabilityLabel>, OracleError> {
        self(pool_indices)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ALConfig {
    pub initial_size: usize,
    /// Query batch size `B`.
    pub batch_size: usize,
    /// Cap on acquisition rounds.
    pub max_iterations: usize,
    pub stop_window: usize,
    /// Stop once the mean test accuracy over the last `stop_window` rounds
    /// exceeds this.
    pub stop_accuracy: f64,
    pub undersample: bool,
    pub seed: u64,
}

impl Default for ALConfig {
    fn default() -> Self {
        ALConfig {
            initial_size: 100,
            batch_size: 10,
            max_iterations: 30,
            stop_window: 4,
            stop_accuracy: 0.95,
            undersample: true,
            seed: 0,
        }
    }
}

impl ALConfig {
    pub fn check(&self) -> Result<(), ActiveError> {
        if self.initial_size == 0 || self.batch_size == 0 || self.max_iterations == 0 || self.stop_window == 0 {
            return Err(ActiveError::Config("all counts must be at least 1".into()));
        }
        if !(self.stop_accuracy > 0.0 && self.stop_accuracy <= 1.0) {
            return Err(ActiveError::Config(format!(
                "stop_accuracy must lie in (0, 1], got {}",
                self.stop_accuracy
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub pool_index: usize,
    pub label: SolvabilityLabel,
    pub iteration: usize,
}

/// Metrics of one train-and-evaluate round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub labels_consumed: usize,
    pub raw_labeled: usize,
    pub undersampled: usize,
    pub test_accuracy: f64,
}

/// Evolving labeled/unlabeled partition of the pool.
#[derive(Debug, Clone)]
pub struct ALState {
    /// Labeled pool rows in the order they were labeled.
    pub labeled: Vec<usize>,
    pub labels: Vec<SolvabilityLabel>,
    is_labeled: Vec<bool>,
    pub acquisitions: Vec<Acquisition>,
    pub history: Vec<IterationRecord>,
}

impl ALState {
    pub fn new(pool_size: usize) -> Self {
        ALState {
            labeled: Vec::new(),
            labels: Vec::new(),
            is_labeled: vec![false; pool_size],
            acquisitions: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn pool_size(&self) -> usize {
        self.is_labeled.len()
    }

    pub fn is_labeled(&self, pool_index: usize) -> bool {
        self.is_labeled[pool_index]
    }

    /// Unlabeled pool rows in ascending order.
    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.is_labeled.len()).filter(|&i| !self.is_labeled[i]).collect()
    }

    /// Move `rows` from the unlabeled to the labeled set.
    ///
    /// Panics if a row is already labeled or the lengths differ.
    pub fn add_labeled(&mut self, rows: &[usize], labels: &[SolvabilityLabel]) {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        for (&i, &l) in rows.iter().zip(labels) {
            assert!(!self.is_labeled[i], "pool row {i} labeled twice");
            self.is_labeled[i] = true;
            self.labeled.push(i);
            self.labels.push(l);
        }
    }

    pub fn labeled_dataset(&self, pool: ArrayView2<'_, f64>) -> LabeledDataset {
        LabeledDataset {
            features: pool.select(Axis(0), &self.labeled),
            labels: self.labels.clone(),
        }
    }
}

/// Pick the `b` most informative unlabeled rows under `model`.
pub fn acquire_batch(
    strategy: AcquisitionStrategy,
    state: &ALState,
    pool: ArrayView2<'_, f64>,
    model: &MlpModel,
    b: usize,
    seed: u64,
) -> Result<Vec<usize>, ActiveError> {
    let unlabeled = state.unlabeled();
    if unlabeled.len() < b {
        return Err(ActiveError::PoolExhausted {
            needed: b,
            available: unlabeled.len(),
        });
    }
    let posteriors = if strategy == AcquisitionStrategy::Random {
        vec![Posterior([0.5, 0.5]); unlabeled.len()]
    } else {
        model.posteriors(pool.select(Axis(0), &unlabeled).view())?
    };
    Ok(top_b(&score(strategy, &posteriors, seed), &unlabeled, b))
}

/// Randomly drop majority-class rows down to the minority count. Returns the
/// balanced dataset and the kept row positions (ascending).
pub fn undersample(data: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, Vec<usize>), ActiveError> {
    let counts = data.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(ActiveError::SingleClass);
    }
    let (major, minor_count) = if counts[0] > counts[1] {
        (SolvabilityLabel::NonSolvable, counts[1])
    } else {
        (SolvabilityLabel::Solvable, counts[0])
    };
    let majority: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == major).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; data.len()];
    for i in (0..data.len()).filter(|&i| data.labels[i] != major) {
        keep[i] = true;
    }
    for k in rand::seq::index::sample(&mut rng, majority.len(), minor_count) {
        keep[majority[k]] = true;
    }
    let rows: Vec<usize> = (0..data.len()).filter(|&i| keep[i]).collect();
    Ok((data.select(&rows), rows))
}

pub struct ALResult {
    pub model: MlpModel,
    pub history: Vec<IterationRecord>,
    pub acquisitions: Vec<Acquisition>,
    pub labels_consumed: usize,
    /// Pool rows of the random initial set.
    pub initial: Vec<usize>,
    /// Whether the accuracy rule (rather than the iteration cap) ended the run.
    pub stopped_by_accuracy: bool,
    pub state: ALState,
}

fn oracle_call(
    oracle: &dyn Oracle,
    rows: &[usize],
    iteration: usize,
) -> Result<Vec<SolvabilityLabel>, ActiveError> {
    let labels = oracle.label(rows).map_err(|e| ActiveError::Oracle {
        iteration,
        pool_index: e.pool_index,
        message: e.message,
    })?;
    if labels.len() != rows.len() {
        return Err(ActiveError::Oracle {
            iteration,
            pool_index: rows.first().copied().unwrap_or(0),
            message: format!("oracle returned {} labels for {} rows", labels.len(), rows.len()),
        });
    }
    Ok(labels)
}

/// Run the active learning loop.
///
/// `pool` holds normalized feature rows; the oracle is addressed by pool
/// row index. `test` is a pre-labeled held-out set. Sub-seeds for the
/// initial draw, under-sampling, training and random scoring all derive
/// from `al_cfg.seed` and `train_cfg.seed`, so runs that differ only in
/// strategy share the initial set and the round-0 model.
pub fn run(
    pool: ArrayView2<'_, f64>,
    test: &LabeledDataset,
    oracle: &dyn Oracle,
    strategy: AcquisitionStrategy,
    al_cfg: &ALConfig,
    train_cfg: &TrainConfig,
) -> Result<ALResult, ActiveError> {
    al_cfg.check()?;
    train_cfg.check()?;
    let n = pool.nrows();
    if al_cfg.initial_size > n {
        return Err(ActiveError::PoolExhausted {
            needed: al_cfg.initial_size,
            available: n,
        });
    }
    if test.is_empty() {
        return Err(ActiveError::Config("test set is empty".into()));
    }

    let mut state = ALState::new(n);
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(al_cfg.seed, "initial", 0));
    let initial = rand::seq::index::sample(&mut init_rng, n, al_cfg.initial_size).into_vec();
    let labels = oracle_call(oracle, &initial, 0)?;
    state.add_labeled(&initial, &labels);

    let mut iteration = 0;
    loop {
        let raw = state.labeled_dataset(pool);
        let train_set = if al_cfg.undersample {
            undersample(&raw, derive_seed(al_cfg.seed, "undersample", iteration as u64))?.0
        } else {
            raw
        };
        let cfg = TrainConfig {
            seed: derive_seed(train_cfg.seed, "train", iteration as u64),
            ..train_cfg.clone()
        };
        let model = mlp::train(&train_set, &cfg).map_err(|source| match source {
            MlpError::SingleClass => ActiveError::SingleClass,
            source => ActiveError::Train { iteration, source },
        })?;
        let accuracy = model.accuracy(test)?;
        state.history.push(IterationRecord {
            iteration,
            labels_consumed: state.labeled.len(),
            raw_labeled: state.labeled.len(),
            undersampled: train_set.len(),
            test_accuracy: accuracy,
        });
        log::debug!(
            "{strategy} iteration {iteration}: {} labels, {} trained, accuracy {accuracy:.4}",
            state.labeled.len(),
            train_set.len()
        );

        let w = al_cfg.stop_window;
        let h = &state.history;
        let by_accuracy = h.len() >= w
            && h[h.len() - w..].iter().map(|r| r.test_accuracy).sum::<f64>() / w as f64 > al_cfg.stop_accuracy;
        if by_accuracy || iteration >= al_cfg.max_iterations {
            return Ok(ALResult {
                model,
                history: state.history.clone(),
                acquisitions: state.acquisitions.clone(),
                labels_consumed: state.labeled.len(),
                initial,
                stopped_by_accuracy: by_accuracy,
                state,
            });
        }

        let batch = acquire_batch(
            strategy,
            &state,
            pool,
            &model,
            al_cfg.batch_size,
            derive_seed(al_cfg.seed, "random_scores", iteration as u64),
        )?;
        iteration += 1;
        let labels = oracle_call(oracle, &batch, iteration)?;
        state.add_labeled(&batch, &labels);
        state
            .acquisitions
            .extend(batch.iter().zip(&labels).map(|(&pool_index, &label)| Acquisition {
                pool_index,
                label,
                iteration,
            }));
    }
}
