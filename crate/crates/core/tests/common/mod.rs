//! Slow, obviously-correct reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use catgnn::graph::{Label, TransactionRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Neighbor lists by scanning every pair: `j` is a neighbor of `i` in a
/// relation when they share the key, `j` comes strictly before `i` in
/// `(time, txn_id)` order and `t_i − t_j ≤ window`; only the `max_neighbors`
/// latest such `j` are kept. Lists are returned sorted by node index.
pub fn brute_temporal_neighbors(records: &[TransactionRecord], window: i64, max_neighbors: usize) -> Vec<Vec<Vec<usize>>> {
    let keys: [fn(&TransactionRecord) -> &str; 3] = [|r| &r.source, |r| &r.target, |r| &r.location];
    keys.iter()
        .map(|key| {
            (0..records.len())
                .map(|i| {
                    let ri = &records[i];
                    let mut earlier: Vec<usize> = (0..records.len())
                        .filter(|&j| {
                            let rj = &records[j];
                            j != i
                                && key(rj) == key(ri)
                                && (rj.time, rj.txn_id) < (ri.time, ri.txn_id)
                                && ri.time - rj.time <= window
                        })
                        .collect();
                    earlier.sort_by_key(|&j| std::cmp::Reverse((records[j].time, records[j].txn_id)));
                    earlier.truncate(max_neighbors);
                    earlier.sort_unstable();
                    earlier
                })
                .collect()
        })
        .collect()
}

/// Random transactions over small key alphabets so that collisions are common.
pub fn random_records(n: usize, seed: u64) -> Vec<TransactionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u64> = (0..n as u64 * 3).collect();
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng);
    (0..n)
        .map(|k| TransactionRecord {
            txn_id: ids[k],
            time: rng.gen_range(0..20_000),
            source: format!("card{}", rng.gen_range(0..6)),
            target: format!("shop{}", rng.gen_range(0..5)),
            amount: rng.gen_range(0.0..500.0),
            location: format!("loc{}", rng.gen_range(0..4)),
            txn_type: format!("t{}", rng.gen_range(0..3)),
            label: match rng.gen_range(0..3) {
                0 => Label::Fraud,
                1 => Label::Benign,
                _ => Label::Unlabeled,
            },
        })
        .collect()
}

/// AUC by comparing every (positive, negative) pair, ties worth one half.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// AP as the mean, over positives, of precision at that positive's rank. An
/// item ranks ahead of another if its score is higher, or equal with a lower
/// input index.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let ahead = |a: usize, b: usize| scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut total = 0.0;
    for &i in &positives {
        let rank = 1 + (0..labels.len()).filter(|&j| ahead(j, i)).count();
        let hits = 1 + positives.iter().filter(|&&j| ahead(j, i)).count();
        total += hits as f64 / rank as f64;
    }
    total / positives.len() as f64
}

/// Unweighted mean of the two per-class F1 scores, predicting fraud when the
/// score reaches `threshold`. A class with no predictions or no members gets
/// precision or recall 0, and F1 is 0 when both are 0.
pub fn brute_f1_macro(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let f1_for = |class: bool| {
        let tp = (0..labels.len()).filter(|&i| predicted[i] == class && labels[i] == class).count() as f64;
        let pred = predicted.iter().filter(|&&p| p == class).count() as f64;
        let real = labels.iter().filter(|&&y| y == class).count() as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if real > 0.0 { tp / real } else { 0.0 };
        if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        }
    };
    (f1_for(true) + f1_for(false)) / 2.0
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
