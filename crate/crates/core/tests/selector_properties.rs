//! Greedy selection, distractor choice, and test clustering checked against
//! brute-force searches on small random matrices.

use std::collections::HashSet;

use hypocompass::model::ErrorVector;
use hypocompass::selector::{cluster_tests, select_distractors, select_practice, BehaviorMatrix, GreedyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> BehaviorMatrix {
    let bits: Vec<Vec<u8>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..2u8)).collect()).collect();
    BehaviorMatrix::from_bits(&bits).unwrap()
}

fn hamming(a: &ErrorVector, b: &ErrorVector) -> usize {
    a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count()
}

fn min_pairwise(vectors: &[&ErrorVector]) -> usize {
    let mut best = usize::MAX;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            best = best.min(hamming(vectors[i], vectors[j]));
        }
    }
    best
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect()).collect()
}

fn distinct_vectors(m: &BehaviorMatrix) -> Vec<ErrorVector> {
    let mut seen = HashSet::new();
    m.rows().iter().filter(|(_, v)| seen.insert(v.clone())).map(|(_, v)| v.clone()).collect()
}

#[test]
fn greedy_practice_against_brute_force() {
    let mut instances = 0;
    let mut attained = 0;
    let mut compared = 0;
    for seed in 0..400u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(2..=6);
        let cols = rng.random_range(1..=6);
        let m = random_matrix(&mut rng, rows, cols);
        let distinct = distinct_vectors(&m);
        for n in 1..=distinct.len() {
            instances += 1;
            let picked = select_practice(&m, n, &GreedyConfig::default()).unwrap();
            assert_eq!(picked.len(), n);
            let vectors: Vec<&ErrorVector> = picked.iter().map(|id| m.vector(id).unwrap()).collect();
            assert_eq!(vectors.iter().collect::<HashSet<_>>().len(), n, "duplicate vectors selected (seed {seed})");
            if n < 2 {
                continue;
            }
            let greedy = min_pairwise(&vectors);
            let optimum =
                subsets(distinct.len(), n).iter().map(|s| min_pairwise(&s.iter().map(|&i| &distinct[i]).collect::<Vec<_>>())).max().unwrap();
            compared += 1;
            assert!(greedy <= optimum);
            // Farthest-point traversal is a 2-approximation of max-min dispersion.
            assert!(2 * greedy >= optimum, "seed {seed}: greedy {greedy}, optimum {optimum}");
            if n == 2 {
                // The seed has the most failures; the second pick is its farthest row.
                let seed_vec = vectors[0];
                let best_from_seed = distinct.iter().map(|v| hamming(seed_vec, v)).max().unwrap();
                assert_eq!(greedy, best_from_seed);
            }
            if greedy == optimum {
                attained += 1;
            }
        }
        // Asking for every distinct vector returns all of them.
        let all = select_practice(&m, distinct.len(), &GreedyConfig::default()).unwrap();
        let got: HashSet<_> = all.iter().map(|id| m.vector(id).unwrap().clone()).collect();
        assert_eq!(got, distinct.iter().cloned().collect());
        assert!(select_practice(&m, distinct.len() + 1, &GreedyConfig::default()).is_err());
    }
    assert!(instances >= 200);
    println!("greedy attained the brute-force max-min on {attained}/{compared} instances");
}

#[test]
fn distractors_match_brute_force_nearest_nonzero() {
    for seed in 0..400u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(2..=6);
        let cols = rng.random_range(1..=6);
        let m = random_matrix(&mut rng, rows, cols);
        let practice = rng.random_range(0..rows);
        let pid = m.rows()[practice].0.clone();
        let target = m.rows()[practice].1.clone();
        let others: Vec<usize> = (0..rows).filter(|&i| i != practice && hamming(&m.rows()[i].1, &target) > 0).collect();
        for k in 1..=rows {
            let got = select_distractors(&m, &pid, k, &HashSet::new());
            if others.len() < k {
                assert!(got.is_err());
                continue;
            }
            // Among all k-subsets of non-identical rows, take the one whose
            // sorted (distance, index) list is lexicographically smallest.
            let key = |s: &Vec<usize>| {
                let mut v: Vec<(usize, usize)> = s.iter().map(|&i| (hamming(&m.rows()[others[i]].1, &target), others[i])).collect();
                v.sort();
                v
            };
            let best = subsets(others.len(), k).into_iter().map(|s| key(&s)).min().unwrap();
            let expected: Vec<String> = best.iter().map(|&(_, i)| m.rows()[i].0.clone()).collect();
            assert_eq!(got.unwrap(), expected, "seed {seed}, k {k}");
        }
    }
}

/// Naive average linkage recomputed from leaf members at each step.
/// Returns merge heights, or `None` when a step has tied minima.
fn naive_average_linkage(cols: &[ErrorVector]) -> Option<Vec<f64>> {
    let d = |a: &ErrorVector, b: &ErrorVector| (hamming(a, b) as f64).sqrt();
    let mut clusters: Vec<Vec<usize>> = (0..cols.len()).map(|i| vec![i]).collect();
    let mut heights = Vec::new();
    while clusters.len() > 1 {
        let mut scored = Vec::new();
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += d(&cols[i], &cols[j]);
                    }
                }
                scored.push((sum / (clusters[a].len() * clusters[b].len()) as f64, a, b));
            }
        }
        scored.sort_by(|x, y| x.0.total_cmp(&y.0));
        if scored.len() > 1 && (scored[1].0 - scored[0].0).abs() < 1e-9 {
            return None;
        }
        let (h, a, b) = scored[0];
        heights.push(h);
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }
    Some(heights)
}

#[test]
fn average_linkage_matches_naive_recomputation() {
    let mut checked = 0;
    for seed in 0..2000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(3..=8);
        let cols = rng.random_range(2..=6);
        let m = random_matrix(&mut rng, rows, cols);
        let tree = cluster_tests(&m).unwrap();
        let heights = tree.heights();
        assert!(heights.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        for k in 1..=cols {
            let labels = tree.flat_clusters(k);
            assert_eq!(labels.iter().collect::<HashSet<_>>().len(), k);
        }
        if let Some(expected) = naive_average_linkage(&m.columns()) {
            checked += 1;
            for (a, b) in heights.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-9, "seed {seed}: {heights:?} vs {expected:?}");
            }
        }
    }
    assert!(checked >= 100, "only {checked} tie-free instances");
}

/// Every 2-partition of the columns; returns those whose groups are internally
/// identical.
fn zero_spread_partitions(cols: &[ErrorVector]) -> Vec<Vec<usize>> {
    let n = cols.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) - 1 {
        if mask & 1 == 0 {
            continue;
        }
        let labels: Vec<usize> = (0..n).map(|i| if mask >> i & 1 == 1 { 0 } else { 1 }).collect();
        let ok = (0..n).all(|i| (0..n).all(|j| labels[i] != labels[j] || cols[i] == cols[j]));
        if ok {
            out.push(labels);
        }
    }
    out
}

#[test]
fn two_column_groups_are_separated_exactly() {
    // Columns 0 and 2 behave alike, as do 1 and 3.
    let m = BehaviorMatrix::from_bits(&[vec![1, 0, 1, 0], vec![1, 1, 1, 1], vec![0, 1, 0, 1]]).unwrap();
    let expected = zero_spread_partitions(&m.columns());
    assert_eq!(expected.len(), 1);
    let tree = cluster_tests(&m).unwrap();
    assert_eq!(tree.flat_clusters(2), expected[0]);

    // Column order does not change the partition found.
    for perm in [[3usize, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1], [0, 3, 1, 2]] {
        let bits: Vec<Vec<u8>> =
            m.rows().iter().map(|(_, v)| perm.iter().map(|&j| v.0[j] as u8).collect()).collect();
        let permuted = BehaviorMatrix::from_bits(&bits).unwrap();
        let labels = cluster_tests(&permuted).unwrap().flat_clusters(2);
        let original = tree.flat_clusters(2);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(labels[a] == labels[b], original[perm[a]] == original[perm[b]]);
            }
        }
    }
}
