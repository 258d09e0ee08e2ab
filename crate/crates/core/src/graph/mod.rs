//! Multi-relation transaction graphs: data model, construction and ingestion.
//!
//! A [`MultiRelationGraph`] holds one feature row and one label per node plus
//! `R ≥ 1` relations, each stored as a compressed sorted neighbor index. The
//! graph is immutable once built and can be shared freely across threads.

mod io;
mod split;
mod synthetic;
mod temporal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use io::{
    load_generic_graph, load_transactions_csv, write_generic_graph, ColumnMapping, GenericGraphFiles,
};
pub use split::{stratified_split, temporal_split, DatasetSplit, SplitRatios};
pub use synthetic::{generate_synthetic, SynthConfig};
pub use temporal::{
    build_temporal_graph, build_temporal_graph_with, TemporalGraphConfig, TransactionRecord,
    CATEGORY_BUCKETS,
};

pub type NodeId = usize;

/// Observed label state of a node. `Unlabeled` is a state of its own, never
/// conflated with benign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Fraud,
    Unlabeled,
}

impl Label {
    /// Row index into the label-embedding table.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Fraud => 1,
            Label::Unlabeled => 2,
        }
    }

    pub fn from_code(code: i64) -> Label {
        match code {
            0 => Label::Benign,
            1 => Label::Fraud,
            _ => Label::Unlabeled,
        }
    }

    /// `Some(0.0 | 1.0)` for labeled nodes.
    pub fn target(self) -> Option<f64> {
        match self {
            Label::Benign => Some(0.0),
            Label::Fraud => Some(1.0),
            Label::Unlabeled => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

/// Compressed neighbor index: `neighbors(v) = targets[offsets[v]..offsets[v+1]]`,
/// each list sorted ascending and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    /// Builds from per-node neighbor lists; lists are sorted and deduplicated here.
    pub fn from_lists(num_nodes: usize, mut lists: Vec<Vec<NodeId>>) -> Result<Self> {
        if lists.len() != num_nodes {
            return Err(Error::InvalidInput(format!(
                "{} neighbor lists for {num_nodes} nodes",
                lists.len()
            )));
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for (v, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &u in list.iter() {
                if u >= num_nodes {
                    return Err(Error::IndexError(format!(
                        "neighbor {u} of node {v} out of range for {num_nodes} nodes"
                    )));
                }
                targets.push(u as u32);
            }
            offsets.push(targets.len());
        }
        Ok(Self { offsets, targets })
    }

    /// Builds from an edge list. With `symmetric`, each `(a, b)` also inserts `(b, a)`.
    /// Self loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(NodeId, NodeId)], symmetric: bool) -> Result<Self> {
        let mut degree = vec![0usize; num_nodes];
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::IndexError(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            if a == b {
                continue;
            }
            degree[a] += 1;
            if symmetric {
                degree[b] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..num_nodes].to_vec();
        let mut targets = vec![0u32; *offsets.last().unwrap()];
        for &(a, b) in edges {
            if a == b {
                continue;
            }
            targets[cursor[a]] = b as u32;
            cursor[a] += 1;
            if symmetric {
                targets[cursor[b]] = a as u32;
                cursor[b] += 1;
            }
        }
        // sort + dedup each list, compacting in place
        let mut write = 0;
        let mut new_offsets = Vec::with_capacity(num_nodes + 1);
        new_offsets.push(0);
        for v in 0..num_nodes {
            let (start, end) = (offsets[v], offsets[v + 1]);
            targets[start..end].sort_unstable();
            let mut prev: Option<u32> = None;
            for i in start..end {
                let t = targets[i];
                if prev != Some(t) {
                    targets[write] = t;
                    write += 1;
                    prev = Some(t);
                }
            }
            new_offsets.push(write);
        }
        targets.truncate(write);
        targets.shrink_to_fit();
        Ok(Self {
            offsets: new_offsets,
            targets,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Number of stored (directed) entries.
    pub fn num_entries(&self) -> usize {
        self.targets.len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn to_lists(&self) -> Vec<Vec<NodeId>> {
        (0..self.num_nodes())
            .map(|v| self.neighbors(v).iter().map(|&u| u as usize).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub name: String,
    pub adjacency: Adjacency,
    /// Undirected relations store every edge in both directions.
    pub symmetric: bool,
}

impl Relation {
    /// Distinct edges: undirected edges counted once.
    pub fn num_edges(&self) -> usize {
        if self.symmetric {
            self.adjacency.num_entries() / 2
        } else {
            self.adjacency.num_entries()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiRelationGraph {
    features: Tensor,
    labels: Vec<Label>,
    relations: Vec<Relation>,
}

impl MultiRelationGraph {
    pub fn new(features: Tensor, labels: Vec<Label>, relations: Vec<Relation>) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if relations.is_empty() {
            return Err(Error::InvalidInput("graph needs at least one relation".into()));
        }
        for rel in &relations {
            if rel.adjacency.num_nodes() != n {
                return Err(Error::InvalidInput(format!(
                    "relation `{}` covers {} nodes, graph has {n}",
                    rel.name,
                    rel.adjacency.num_nodes()
                )));
            }
        }
        if !features.is_finite() {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            relations,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    #[inline]
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    #[inline]
    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    #[inline]
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relation_names(&self) -> Vec<&str> {
        self.relations.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn num_edges(&self) -> usize {
        self.relations.iter().map(Relation::num_edges).sum()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Label vector with only the `visible` nodes' labels kept; every other node
    /// reads as unlabeled. This is what the model is allowed to see.
    pub fn observed_labels(&self, visible: &[NodeId]) -> Vec<Label> {
        let mut out = vec![Label::Unlabeled; self.num_nodes()];
        for &v in visible {
            out[v] = self.labels[v];
        }
        out
    }

    /// A copy with feature rows replaced. Used for covariate-shift experiments.
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.relations.clone())
    }
}
