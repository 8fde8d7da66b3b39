//! Average-linkage agglomerative clustering of test columns.

use serde::{Deserialize, Serialize};

use super::{BehaviorMatrix, SelectorError};

/// One merge step. Leaves are numbered `0..n`; the cluster created by merge
/// `k` is numbered `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestClusterTree {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

/// Clusters the columns of `matrix` (one per reference test) by average
/// linkage over Euclidean distance. Ties go to the pair created earliest.
pub fn cluster_tests(matrix: &BehaviorMatrix) -> Result<TestClusterTree, SelectorError> {
    let n = matrix.n_cols();
    if n < 2 {
        return Err(SelectorError::TooFewColumns(n));
    }
    let cols = matrix.columns();

    // Sum of pairwise leaf distances between active clusters, indexed by
    // cluster number. Average linkage is sum / (size_a * size_b).
    let total = 2 * n - 1;
    let mut sums = vec![vec![0.0f64; total]; total];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cols[i].distance(&cols[j]);
            sums[i][j] = d;
            sums[j][i] = d;
        }
    }
    let mut size = vec![1usize; total];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    let mut last_height = 0.0f64;

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let h = sums[a][b] / (size[a] * size[b]) as f64;
                if best.is_none_or(|(bh, _, _)| h < bh) {
                    best = Some((h, a, b));
                }
            }
        }
        let (mut height, a, b) = best.expect("at least two active clusters");
        // Average linkage is monotone; absorb rounding noise.
        if height < last_height && last_height - height < 1e-9 {
            height = last_height;
        }
        last_height = height;
        let new = n + step;
        size[new] = size[a] + size[b];
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let s = sums[a][c] + sums[b][c];
            sums[new][c] = s;
            sums[c][new] = s;
        }
        active.push(new);
        merges.push(Merge { left: a.min(b), right: a.max(b), height, size: size[new] });
    }
    Ok(TestClusterTree { n_leaves: n, merges })
}

impl TestClusterTree {
    /// Cluster label per leaf after applying all merges but the last `k - 1`.
    /// Labels are numbered by first appearance in leaf order.
    pub fn flat_clusters(&self, k: usize) -> Vec<usize> {
        let k = k.clamp(1, self.n_leaves);
        self.labels(self.n_leaves - k)
    }

    /// Cluster label per leaf after applying every merge at or below `height`.
    pub fn flat_clusters_at(&self, height: f64) -> Vec<usize> {
        let applied = self.merges.iter().take_while(|m| m.height <= height).count();
        self.labels(applied)
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    fn labels(&self, applied: usize) -> Vec<usize> {
        let n = self.n_leaves;
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (step, m) in self.merges.iter().take(applied).enumerate() {
            let new = n + step;
            let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
            parent[l] = new;
            parent[r] = new;
        }
        let mut label_of_root = std::collections::HashMap::new();
        (0..n)
            .map(|leaf| {
                let root = find(&mut parent, leaf);
                let next = label_of_root.len();
                *label_of_root.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Leaf indices grouped by flat cluster.
    pub fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); k];
        for (leaf, &l) in labels.iter().enumerate() {
            out[l].push(leaf);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[u8]]) -> BehaviorMatrix {
        BehaviorMatrix::from_bits(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_columns_merge_at_zero() {
        let tree = cluster_tests(&m(&[&[1, 1, 1], &[0, 0, 0]])).unwrap();
        assert!(tree.heights().iter().all(|&h| h == 0.0));
        assert_eq!(tree.flat_clusters_at(0.5), vec![0, 0, 0]);
        assert_eq!(tree.flat_clusters(1), vec![0, 0, 0]);
    }

    #[test]
    fn two_columns_single_merge() {
        let tree = cluster_tests(&m(&[&[1, 0], &[1, 1]])).unwrap();
        assert_eq!(tree.merges, vec![Merge { left: 0, right: 1, height: 1.0, size: 2 }]);
    }

    #[test]
    fn too_few_columns() {
        assert_eq!(cluster_tests(&m(&[&[1]])), Err(SelectorError::TooFewColumns(1)));
    }

    #[test]
    fn known_average_linkage_heights() {
        // Columns: c0=(1,0), c1=(1,0), c2=(0,1), c3=(0,0)
        // d(c0,c1)=0, d(c0,c2)=d(c1,c2)=sqrt2, d(c0,c3)=d(c1,c3)=1, d(c2,c3)=1
        let tree = cluster_tests(&m(&[&[1, 1, 0, 0], &[0, 0, 1, 0]])).unwrap();
        assert_eq!((tree.merges[0].left, tree.merges[0].right, tree.merges[0].height), (0, 1, 0.0));
        // {0,1} vs 3 = 1, 2 vs 3 = 1, {0,1} vs 2 = sqrt2: tie at 1 goes to the first pair found.
        assert_eq!((tree.merges[1].left, tree.merges[1].right), (2, 3));
        assert!((tree.merges[1].height - 1.0).abs() < 1e-12);
        let last = (2.0f64.sqrt() * 2.0 + 2.0) / 4.0;
        assert!((tree.merges[2].height - last).abs() < 1e-12);
        assert_eq!(tree.flat_clusters(2), vec![0, 0, 1, 1]);
    }
}
