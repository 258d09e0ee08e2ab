//! Transaction-log → temporal multi-relation graph.
//!
//! Every transaction becomes a node. Three relations link a transaction to the
//! most recent *earlier* transactions that share its cardholder, its merchant or
//! its location, within a time window. Edges point newer → older, so a node
//! only ever aggregates from its past.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Adjacency, Label, MultiRelationGraph, NodeId, Relation};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default width of the hashed one-hot blocks for `txn_type` and `location`.
pub const CATEGORY_BUCKETS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub txn_id: u64,
    /// Seconds.
    pub time: i64,
    pub source: String,
    pub target: String,
    pub amount: f64,
    pub location: String,
    pub txn_type: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalGraphConfig {
    /// Maximum age difference (inclusive) between linked transactions, seconds.
    pub window: i64,
    pub max_neighbors: usize,
    pub category_buckets: usize,
}

impl Default for TemporalGraphConfig {
    fn default() -> Self {
        Self {
            window: 86_400,
            max_neighbors: 8,
            category_buckets: CATEGORY_BUCKETS,
        }
    }
}

pub(crate) const RELATION_NAMES: [&str; 3] = ["same_source", "same_target", "same_location"];

pub fn build_temporal_graph(
    records: &[TransactionRecord],
    window: i64,
    max_neighbors: usize,
) -> Result<MultiRelationGraph> {
    build_temporal_graph_with(
        records,
        &TemporalGraphConfig {
            window,
            max_neighbors,
            category_buckets: CATEGORY_BUCKETS,
        },
    )
}

pub fn build_temporal_graph_with(
    records: &[TransactionRecord],
    config: &TemporalGraphConfig,
) -> Result<MultiRelationGraph> {
    validate_records(records, config)?;
    let n = records.len();

    let keys: [fn(&TransactionRecord) -> &str; 3] = [
        |r| r.source.as_str(),
        |r| r.target.as_str(),
        |r| r.location.as_str(),
    ];
    let mut relations = Vec::with_capacity(3);
    let mut prev_same_source = vec![None; n];
    for (rel_idx, key) in keys.iter().enumerate() {
        let mut lists: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for group in group_chronologically(records, *key) {
            for (pos, &i) in group.iter().enumerate() {
                if rel_idx == 0 && pos > 0 {
                    prev_same_source[i] = Some(group[pos - 1]);
                }
                let t_i = records[i].time;
                for &j in group[..pos].iter().rev().take(config.max_neighbors) {
                    if t_i - records[j].time > config.window {
                        break;
                    }
                    lists[i].push(j);
                }
            }
        }
        relations.push(Relation {
            name: RELATION_NAMES[rel_idx].to_string(),
            adjacency: Adjacency::from_lists(n, lists)?,
            symmetric: false,
        });
    }

    let features = encode_features(records, &prev_same_source, config.category_buckets)?;
    let labels = records.iter().map(|r| r.label).collect();
    MultiRelationGraph::new(features, labels, relations)
}

fn validate_records(records: &[TransactionRecord], config: &TemporalGraphConfig) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidInput("empty transaction list".into()));
    }
    if config.window <= 0 {
        return Err(Error::InvalidInput(format!("window must be > 0, got {}", config.window)));
    }
    if config.max_neighbors == 0 {
        return Err(Error::InvalidInput("max_neighbors must be >= 1".into()));
    }
    if config.category_buckets == 0 {
        return Err(Error::InvalidInput("category_buckets must be >= 1".into()));
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.txn_id) {
            return Err(Error::DuplicateId(r.txn_id));
        }
        if !(r.amount >= 0.0) || !r.amount.is_finite() {
            return Err(Error::InvalidInput(format!(
                "transaction {} has invalid amount {}",
                r.txn_id, r.amount
            )));
        }
    }
    Ok(())
}

/// Node indices grouped by key, each group ordered by `(time, txn_id)`.
fn group_chronologically<'a>(
    records: &'a [TransactionRecord],
    key: fn(&TransactionRecord) -> &str,
) -> Vec<Vec<NodeId>> {
    let mut groups: HashMap<&'a str, Vec<NodeId>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(key(r)).or_default().push(i);
    }
    let mut out: Vec<Vec<NodeId>> = groups.into_values().collect();
    for g in &mut out {
        g.sort_by_key(|&i| (records[i].time, records[i].txn_id));
    }
    out
}

/// Layout: `[amount | one-hot(type) | one-hot(location) | gap to previous same-source]`.
fn encode_features(
    records: &[TransactionRecord],
    prev_same_source: &[Option<NodeId>],
    buckets: usize,
) -> Result<Tensor> {
    let width = 2 + 2 * buckets;
    let mut features = Tensor::zeros(records.len(), width);
    for (i, r) in records.iter().enumerate() {
        let row = features.row_mut(i);
        row[0] = r.amount;
        row[1 + bucket_of(&r.txn_type, buckets)] = 1.0;
        row[1 + buckets + bucket_of(&r.location, buckets)] = 1.0;
        row[width - 1] = prev_same_source[i].map_or(0.0, |j| (r.time - records[j].time) as f64);
    }
    Ok(features)
}

/// FNV-1a, stable across platforms and runs.
pub(crate) fn bucket_of(value: &str, buckets: usize) -> usize {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in value.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    (hash % buckets as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, time: i64, src: &str, dst: &str, loc: &str) -> TransactionRecord {
        TransactionRecord {
            txn_id: id,
            time,
            source: src.into(),
            target: dst.into(),
            amount: 10.0 * id as f64,
            location: loc.into(),
            txn_type: "pos".into(),
            label: Label::Benign,
        }
    }

    #[test]
    fn same_source_within_window_links_newer_to_older() {
        let recs = vec![rec(1, 100, "a", "m1", "x"), rec(2, 200, "a", "m2", "y")];
        let g = build_temporal_graph(&recs, 3600, 4).unwrap();
        let src = &g.relations()[0].adjacency;
        assert_eq!(src.neighbors(1), &[0]);
        assert!(src.neighbors(0).is_empty());
        assert_eq!(g.relations()[1].adjacency.num_entries(), 0);
        assert_eq!(g.relations()[2].adjacency.num_entries(), 0);
    }

    #[test]
    fn outside_window_has_no_edges() {
        let recs = vec![rec(1, 0, "a", "m", "x"), rec(2, 10_000, "a", "m", "x")];
        let g = build_temporal_graph(&recs, 3600, 4).unwrap();
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn keeps_only_most_recent_neighbors() {
        let recs: Vec<_> = (0..6).map(|i| rec(i, i as i64 * 10, "a", &format!("m{i}"), &format!("l{i}"))).collect();
        let g = build_temporal_graph(&recs, 3600, 2).unwrap();
        assert_eq!(g.relations()[0].adjacency.neighbors(5), &[3, 4]);
        assert_eq!(g.relations()[0].adjacency.max_degree(), 2);
    }

    #[test]
    fn features_encode_amount_categories_and_gap() {
        let recs = vec![rec(1, 100, "a", "m", "x"), rec(2, 160, "a", "m", "x")];
        let g = build_temporal_graph(&recs, 3600, 4).unwrap();
        let f = g.features();
        assert_eq!(f.cols(), 2 + 2 * CATEGORY_BUCKETS);
        assert_eq!(f.get(0, 0), 10.0);
        assert_eq!(f.get(1, f.cols() - 1), 60.0);
        assert_eq!(f.get(0, f.cols() - 1), 0.0);
        assert_eq!(f.row(1).iter().filter(|&&v| v == 1.0).count(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_temporal_graph(&[], 10, 1), Err(Error::InvalidInput(_))));
        let dup = vec![rec(1, 0, "a", "m", "x"), rec(1, 5, "b", "m", "x")];
        assert!(matches!(build_temporal_graph(&dup, 10, 1), Err(Error::DuplicateId(1))));
        let one = vec![rec(1, 0, "a", "m", "x")];
        assert!(build_temporal_graph(&one, 0, 1).is_err());
        assert!(build_temporal_graph(&one, 10, 0).is_err());
    }

    #[test]
    fn equal_timestamps_order_by_txn_id() {
        let recs = vec![rec(7, 50, "a", "m", "x"), rec(3, 50, "a", "m", "x")];
        let g = build_temporal_graph(&recs, 10, 4).unwrap();
        // txn 3 precedes txn 7
        assert_eq!(g.relations()[0].adjacency.neighbors(0), &[1]);
        assert!(g.relations()[0].adjacency.neighbors(1).is_empty());
    }
}
