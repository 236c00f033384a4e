use std::collections::HashSet;

use isserlis::pairings::{
    enumerate_pair_partitions, pair_partition_count, paired_index_tuples, PairPartition,
};
use num_bigint::BigUint;
use proptest::prelude::*;

fn is_canonical(p: &PairPartition, n: usize) -> bool {
    let mut seen = vec![false; n];
    for &(l, r) in p.pairs() {
        if l >= r || r >= n || seen[l] || seen[r] {
            return false;
        }
        seen[l] = true;
        seen[r] = true;
    }
    let sorted = p.pairs().windows(2).all(|w| w[0].0 < w[1].0);
    let first = p.pairs().first().map_or(true, |&(l, _)| l == 0);
    seen.iter().all(|&s| s) && sorted && first
}

#[test]
fn enumeration_is_complete_and_distinct_up_to_twelve() {
    for n in (0..=12).step_by(2) {
        let mut seen = HashSet::new();
        for p in enumerate_pair_partitions(n) {
            assert!(is_canonical(&p, n), "{p} is not canonical");
            assert!(seen.insert(p));
        }
        assert_eq!(BigUint::from(seen.len()), pair_partition_count(n));
    }
}

#[test]
fn enumeration_of_sixteen_counts_and_stays_canonical() {
    let mut count = 0u64;
    let mut previous: Option<PairPartition> = None;
    for p in enumerate_pair_partitions(16) {
        // canonical order is strictly increasing in the pair sequence, which
        // implies distinctness without a two-million entry set
        if let Some(prev) = &previous {
            assert!(prev < &p);
        }
        count += 1;
        if count % 4099 == 0 {
            assert!(is_canonical(&p, 16));
        }
        previous = Some(p);
    }
    assert_eq!(count, 2_027_025);
}

#[test]
fn odd_sizes_are_empty() {
    for n in (1..=15).step_by(2) {
        assert_eq!(enumerate_pair_partitions(n).count(), 0);
        assert_eq!(pair_partition_count(n), BigUint::from(0u32));
    }
}

#[test]
fn count_recurrence() {
    for k in 1..=8usize {
        assert_eq!(
            pair_partition_count(2 * k),
            pair_partition_count(2 * k - 2) * (2 * k - 1)
        );
    }
}

fn partition_strategy() -> impl Strategy<Value = PairPartition> {
    (1usize..=4)
        .prop_flat_map(|k| Just((0..2 * k).collect::<Vec<usize>>()).prop_shuffle())
        .prop_map(|perm| {
            let pairs = perm.chunks(2).map(|c| (c[0], c[1])).collect();
            PairPartition::new(pairs).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paired_tuples_match_brute_force_filter(p in partition_strategy(), d in 1usize..=4) {
        let n = p.positions();
        let mut oracle: Vec<Vec<usize>> = Vec::new();
        let total = d.pow(n as u32);
        for code in 0..total {
            let mut t = vec![0; n];
            let mut c = code;
            for slot in t.iter_mut().rev() {
                *slot = c % d;
                c /= d;
            }
            if p.pairs().iter().all(|&(l, r)| t[l] == t[r]) {
                oracle.push(t);
            }
        }
        // lexicographic in the pair representatives (positions l of each pair)
        oracle.sort_by_key(|t| p.pairs().iter().map(|&(l, _)| t[l]).collect::<Vec<_>>());
        let got: Vec<Vec<usize>> = paired_index_tuples(&p, d).map(|t| t.0).collect();
        prop_assert_eq!(got.len(), d.pow(p.len() as u32));
        prop_assert_eq!(got, oracle);
    }
}
