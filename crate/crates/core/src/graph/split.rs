//! Train / validation / test partitions over labeled nodes.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, MultiRelationGraph, NodeId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<NodeId>,
    pub valid: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl DatasetSplit {
    /// Checks disjointness, range, and that train/valid carry labels.
    pub fn validate(&self, graph: &MultiRelationGraph) -> Result<()> {
        let n = graph.num_nodes();
        let mut seen = HashSet::with_capacity(self.train.len() + self.valid.len() + self.test.len());
        for (name, ids) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for &v in ids {
                if v >= n {
                    return Err(Error::InvalidSplit(format!("{name} node {v} out of range ({n} nodes)")));
                }
                if !seen.insert(v) {
                    return Err(Error::InvalidSplit(format!("node {v} appears in more than one split")));
                }
                if name != "test" && !graph.labels()[v].is_labeled() {
                    return Err(Error::InvalidSplit(format!("{name} node {v} is unlabeled")));
                }
            }
        }
        Ok(())
    }
}

/// Fractions of the labeled pool; the test share is whatever remains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.4,
            valid: 0.2,
        }
    }
}

impl SplitRatios {
    /// Validation and test keep the default 1:2 proportion of the non-training share.
    pub fn with_train(train: f64) -> Self {
        Self {
            train,
            valid: (1.0 - train) / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.train > 0.0 && self.valid >= 0.0 && self.train + self.valid < 1.0 + 1e-12;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "split ratios train={} valid={} must be positive and sum to at most 1",
                self.train, self.valid
            )))
        }
    }
}

/// Stratified split of the labeled nodes.
///
/// Each class is shuffled independently and its members are spread evenly over
/// `[0, 1)`; the merged order is cut at `⌊train·M⌋` and `⌊(train+valid)·M⌋`,
/// where `M` is the number of labeled nodes. Split sizes are therefore exact on
/// the whole pool and each class is represented proportionally to within one node.
pub fn stratified_split(labels: &[Label], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize, NodeId)> = Vec::new();
    for (class, target) in [Label::Benign, Label::Fraud].into_iter().enumerate() {
        let mut members: Vec<NodeId> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == target)
            .map(|(v, _)| v)
            .collect();
        members.shuffle(&mut rng);
        let m = members.len() as f64;
        keyed.extend(
            members
                .into_iter()
                .enumerate()
                .map(|(k, v)| ((k as f64 + 0.5) / m, class, v)),
        );
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let total = keyed.len();
    let n_train = floor_count(ratios.train, total);
    let n_train_valid = floor_count(ratios.train + ratios.valid, total).max(n_train);
    let order: Vec<NodeId> = keyed.into_iter().map(|(_, _, v)| v).collect();
    Ok(DatasetSplit {
        train: order[..n_train].to_vec(),
        valid: order[n_train..n_train_valid].to_vec(),
        test: order[n_train_valid..].to_vec(),
    })
}

fn floor_count(ratio: f64, total: usize) -> usize {
    (((ratio * total as f64) + 1e-9).floor() as usize).min(total)
}

/// Time-ordered split: labeled nodes with `time ≤ t_min + cut·(t_max − t_min)`
/// form the training pool (a stratified `valid_fraction` of which is held out
/// for validation); later labeled nodes are the test set.
pub fn temporal_split(
    times: &[i64],
    labels: &[Label],
    cut: f64,
    valid_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if times.len() != labels.len() || times.is_empty() {
        return Err(Error::InvalidInput("times and labels must be non-empty and aligned".into()));
    }
    if !(0.0..=1.0).contains(&cut) || !(0.0..1.0).contains(&valid_fraction) {
        return Err(Error::InvalidInput(format!(
            "cut={cut} must be in [0,1] and valid_fraction={valid_fraction} in [0,1)"
        )));
    }
    let t_min = *times.iter().min().unwrap() as f64;
    let t_max = *times.iter().max().unwrap() as f64;
    let boundary = t_min + cut * (t_max - t_min);
    let mut early = vec![Label::Unlabeled; labels.len()];
    let mut test = Vec::new();
    for (v, (&t, &l)) in times.iter().zip(labels).enumerate() {
        if !l.is_labeled() {
            continue;
        }
        if (t as f64) <= boundary {
            early[v] = l;
        } else {
            test.push(v);
        }
    }
    let pool = stratified_split(
        &early,
        SplitRatios {
            train: 1.0 - valid_fraction,
            valid: valid_fraction,
        },
        seed,
    )?;
    let mut valid = pool.valid;
    valid.extend(pool.test);
    Ok(DatasetSplit {
        train: pool.train,
        valid,
        test,
    })
}
