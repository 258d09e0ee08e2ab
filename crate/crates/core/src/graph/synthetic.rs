//! Planted two-class graphs with camouflaged fraudsters.
//!
//! Benign and fraud nodes draw features from class-specific Gaussians and link
//! mostly within their class. Each fraud node additionally reaches out to random
//! benign nodes (relation camouflage), a fraction of labels is hidden, and test
//! nodes can have their features shifted to simulate a train/test covariate shift.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{stratified_split, Adjacency, DatasetSplit, Label, MultiRelationGraph, NodeId, Relation, SplitRatios};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_nodes: usize,
    pub feature_dim: usize,
    /// Leading feature dimensions whose mean differs between classes.
    pub informative_dims: usize,
    /// Euclidean distance between the two class means.
    pub class_separation: f64,
    pub fraud_ratio: f64,
    /// Expected camouflage edges per fraud node, relative to `edges_per_node`.
    pub camouflage_ratio: f64,
    /// Fraction of nodes whose label is hidden.
    pub hidden_label_ratio: f64,
    pub num_relations: usize,
    /// Edges initiated by each node in each relation.
    pub edges_per_node: usize,
    /// Probability that an initiated edge ignores class and picks a uniform node.
    pub edge_noise: f64,
    /// Offset added to every feature of every test node.
    pub test_shift: f64,
    pub split: SplitRatios,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_nodes: 2_000,
            feature_dim: 16,
            informative_dims: 8,
            class_separation: 1.5,
            fraud_ratio: 0.1,
            camouflage_ratio: 0.3,
            hidden_label_ratio: 0.3,
            num_relations: 2,
            edges_per_node: 3,
            edge_noise: 0.05,
            test_shift: 0.0,
            split: SplitRatios::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.num_nodes < 20 {
            return fail(format!("num_nodes must be >= 20, got {}", self.num_nodes));
        }
        if !(self.fraud_ratio > 0.0 && self.fraud_ratio < 0.5) {
            return fail(format!("fraud_ratio must be in (0, 0.5), got {}", self.fraud_ratio));
        }
        if !(0.0..=1.0).contains(&self.camouflage_ratio) {
            return fail(format!("camouflage_ratio must be in [0, 1], got {}", self.camouflage_ratio));
        }
        if !(0.0..1.0).contains(&self.hidden_label_ratio) {
            return fail(format!("hidden_label_ratio must be in [0, 1), got {}", self.hidden_label_ratio));
        }
        if !(0.0..=1.0).contains(&self.edge_noise) {
            return fail(format!("edge_noise must be in [0, 1], got {}", self.edge_noise));
        }
        if self.feature_dim == 0 || self.informative_dims > self.feature_dim {
            return fail(format!(
                "need 0 < feature_dim and informative_dims <= feature_dim, got {} / {}",
                self.feature_dim, self.informative_dims
            ));
        }
        if self.num_relations == 0 {
            return fail("num_relations must be >= 1".into());
        }
        if !self.class_separation.is_finite() || !self.test_shift.is_finite() {
            return fail("class_separation and test_shift must be finite".into());
        }
        self.split.validate()
    }

    pub fn num_fraud(&self) -> usize {
        (self.fraud_ratio * self.num_nodes as f64).round() as usize
    }
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(MultiRelationGraph, DatasetSplit)> {
    config.validate()?;
    let n = config.num_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut truth = vec![Label::Benign; n];
    for &v in &order[..config.num_fraud()] {
        truth[v] = Label::Fraud;
    }
    let fraud: Vec<NodeId> = (0..n).filter(|&v| truth[v] == Label::Fraud).collect();
    let benign: Vec<NodeId> = (0..n).filter(|&v| truth[v] == Label::Benign).collect();

    let mean_offset = if config.informative_dims > 0 {
        config.class_separation / (config.informative_dims as f64).sqrt()
    } else {
        0.0
    };
    let mut features = Tensor::zeros(n, config.feature_dim);
    for v in 0..n {
        let is_fraud = truth[v] == Label::Fraud;
        for (d, x) in features.row_mut(v).iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = if is_fraud && d < config.informative_dims { z + mean_offset } else { z };
        }
    }

    let mut relations = Vec::with_capacity(config.num_relations);
    for r in 0..config.num_relations {
        let mut edges = Vec::with_capacity(n * config.edges_per_node);
        for v in 0..n {
            let same_class = if truth[v] == Label::Fraud { &fraud } else { &benign };
            for _ in 0..config.edges_per_node {
                let u = if rng.gen::<f64>() < config.edge_noise {
                    rng.gen_range(0..n)
                } else {
                    same_class[rng.gen_range(0..same_class.len())]
                };
                edges.push((v, u));
                if truth[v] == Label::Fraud && rng.gen::<f64>() < config.camouflage_ratio {
                    edges.push((v, benign[rng.gen_range(0..benign.len())]));
                }
            }
        }
        relations.push(Relation {
            name: format!("relation_{r}"),
            adjacency: Adjacency::from_edges(n, &edges, true)?,
            symmetric: true,
        });
    }

    let mut labels = truth;
    let n_hidden = (config.hidden_label_ratio * n as f64).round() as usize;
    order.shuffle(&mut rng);
    for &v in &order[..n_hidden] {
        labels[v] = Label::Unlabeled;
    }

    let split = stratified_split(&labels, config.split, rng.gen())?;
    if config.test_shift != 0.0 {
        for &v in &split.test {
            for x in features.row_mut(v) {
                *x += config.test_shift;
            }
        }
    }

    let graph = MultiRelationGraph::new(features, labels, relations)?;
    Ok((graph, split))
}
