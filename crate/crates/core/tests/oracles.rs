mod common;

use catgnn::graph::{build_temporal_graph, Label, TransactionRecord};
use catgnn::metrics::{average_precision, f1_macro, roc_auc, DEFAULT_THRESHOLD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_ap, brute_auc, brute_f1_macro, brute_temporal_neighbors, random_records};

fn rec(id: u64, time: i64, src: &str, dst: &str, loc: &str) -> TransactionRecord {
    TransactionRecord {
        txn_id: id,
        time,
        source: src.into(),
        target: dst.into(),
        amount: 1.0,
        location: loc.into(),
        txn_type: "pos".into(),
        label: Label::Benign,
    }
}

fn assert_matches_oracle(records: &[TransactionRecord], window: i64, cap: usize) {
    let graph = build_temporal_graph(records, window, cap).unwrap();
    let expected = brute_temporal_neighbors(records, window, cap);
    assert_eq!(graph.num_relations(), 3);
    for (r, rel) in graph.relations().iter().enumerate() {
        for (v, want) in expected[r].iter().enumerate() {
            let got: Vec<usize> = rel.adjacency.neighbors(v).iter().map(|&u| u as usize).collect();
            assert_eq!(&got, want, "relation {r}, node {v}");
        }
    }
}

#[test]
fn five_record_fixture_matches_all_pairs_scan() {
    let records = vec![
        rec(1, 0, "a", "m1", "x"),
        rec(2, 1000, "a", "m2", "x"),
        rec(3, 2000, "b", "m1", "y"),
        rec(4, 3000, "a", "m1", "x"),
        rec(5, 7000, "a", "m1", "y"),
    ];
    assert_matches_oracle(&records, 3600, 2);
    let g = build_temporal_graph(&records, 3600, 2).unwrap();
    // record 4 sees both earlier "a" records within the hour and the cap of 2
    assert_eq!(g.relations()[0].adjacency.neighbors(3), &[0, 1]);
    // record 5 is more than an hour after everything else
    assert!(g.relations().iter().all(|r| r.adjacency.neighbors(4).is_empty()));
}

#[test]
fn window_excludes_distant_pairs() {
    let records = vec![rec(1, 0, "a", "m", "x"), rec(2, 100, "a", "m", "x")];
    assert_eq!(build_temporal_graph(&records, 50, 4).unwrap().num_edges(), 0);
    assert_eq!(build_temporal_graph(&records, 100, 4).unwrap().num_edges(), 3);
}

#[test]
fn random_record_sets_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let n = rng.gen_range(1..=200);
        let window = rng.gen_range(1..8_000);
        let cap = rng.gen_range(1..6);
        assert_matches_oracle(&random_records(n, 1000 + case), window, cap);
    }
}

#[test]
fn metrics_agree_with_brute_force_on_small_labelings() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..=8usize {
        for mask in 0u32..(1 << n) {
            let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let has_pos = labels.iter().any(|&y| y);
            let has_neg = labels.iter().any(|&y| !y);
            for _ in 0..20 {
                // coarse grid so ties are frequent
                let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
                if has_pos && has_neg {
                    assert!((roc_auc(&scores, &labels).unwrap() - brute_auc(&scores, &labels)).abs() <= 1e-12);
                }
                if has_pos {
                    assert!((average_precision(&scores, &labels).unwrap() - brute_ap(&scores, &labels)).abs() <= 1e-12);
                }
                let f1 = f1_macro(&scores, &labels, DEFAULT_THRESHOLD).unwrap();
                assert!((f1 - brute_f1_macro(&scores, &labels, DEFAULT_THRESHOLD)).abs() <= 1e-12);
            }
        }
    }
}
