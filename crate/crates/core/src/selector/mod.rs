//! Picks practice codes, distractors, and test clusters from error vectors.
//!
//! Everything here is a pure function over a [`BehaviorMatrix`]. Distances
//! are Euclidean over 0/1 error vectors; since the squared distance between
//! two such vectors is their Hamming distance, comparisons are done on
//! integers and ties always go to the lowest row index.

mod hac;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::ErrorVector;

pub use hac::{cluster_tests, Merge, TestClusterTree};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectorError {
    #[error("row {row} has {len} entries, expected {expected}")]
    NotRectangular { row: String, len: usize, expected: usize },
    #[error("need {needed} behaviorally distinct codes, only {available} available")]
    InsufficientDistinctRows { needed: usize, available: usize },
    #[error("need {needed} distractor candidates for {practice}, only {available} available")]
    InsufficientCandidates { practice: String, needed: usize, available: usize },
    #[error("unknown code id {0}")]
    UnknownCode(String),
    #[error("codes {0} and {1} behave identically")]
    IdenticalBehavior(String, String),
    #[error("clustering needs at least 2 test columns, got {0}")]
    TooFewColumns(usize),
    #[error("invalid selector configuration: {0}")]
    Config(String),
}

/// Codes × tests pass/fail matrix. Rows are code error vectors; columns are
/// test behavior vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorMatrix {
    rows: Vec<(String, ErrorVector)>,
    n_cols: usize,
}

impl BehaviorMatrix {
    pub fn new(rows: Vec<(String, ErrorVector)>, n_cols: usize) -> Result<Self, SelectorError> {
        for (id, v) in &rows {
            if v.len() != n_cols {
                return Err(SelectorError::NotRectangular { row: id.clone(), len: v.len(), expected: n_cols });
            }
        }
        Ok(BehaviorMatrix { rows, n_cols })
    }

    /// Builds a matrix from bit rows, naming rows `r0`, `r1`, ...
    pub fn from_bits(rows: &[Vec<u8>]) -> Result<Self, SelectorError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        Self::new(rows.iter().enumerate().map(|(i, r)| (format!("r{i}"), ErrorVector::from_bits(r))).collect(), n_cols)
    }

    pub fn rows(&self) -> &[(String, ErrorVector)] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.rows.iter().position(|(r, _)| r == id)
    }

    pub fn vector(&self, id: &str) -> Option<&ErrorVector> {
        self.rows.iter().find(|(r, _)| r == id).map(|(_, v)| v)
    }

    /// Column `j` as a vector over rows.
    pub fn column(&self, j: usize) -> ErrorVector {
        ErrorVector(self.rows.iter().map(|(_, v)| v.0[j]).collect())
    }

    pub fn columns(&self) -> Vec<ErrorVector> {
        (0..self.n_cols).map(|j| self.column(j)).collect()
    }

    /// Keeps only the rows whose id satisfies `keep`.
    pub fn retain(&self, keep: impl Fn(&str) -> bool) -> BehaviorMatrix {
        BehaviorMatrix { rows: self.rows.iter().filter(|(id, _)| keep(id)).cloned().collect(), n_cols: self.n_cols }
    }

    /// Number of distinct vectors among the rows.
    pub fn distinct_rows(&self) -> usize {
        self.rows.iter().map(|(_, v)| v).collect::<HashSet<_>>().len()
    }
}

/// Drops rows that pass every test.
pub fn filter_buggy(matrix: &BehaviorMatrix) -> BehaviorMatrix {
    BehaviorMatrix { rows: matrix.rows.iter().filter(|(_, v)| !v.is_zero()).cloned().collect(), n_cols: matrix.n_cols }
}

/// How the first practice code is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedySeed {
    /// The row failing the most tests.
    #[default]
    MaxNorm,
    FirstRow,
}

/// How distances to already-picked rows are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Min,
    Sum,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    pub seed: GreedySeed,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub n_practice: usize,
    pub m_distractors: usize,
    pub greedy: GreedyConfig,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig { n_practice: 3, m_distractors: 2, greedy: GreedyConfig::default() }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<(), SelectorError> {
        if self.n_practice == 0 {
            return Err(SelectorError::Config("n_practice must be positive".into()));
        }
        if self.m_distractors == 0 {
            return Err(SelectorError::Config("m_distractors must be positive".into()));
        }
        Ok(())
    }

    /// Codes needed in total: practice codes plus their distractors.
    pub fn codes_needed(&self) -> usize {
        self.n_practice + self.n_practice * self.m_distractors
    }
}

/// Greedy max-min selection of `n` behaviorally distinct rows.
///
/// Seeds with the configured row, then repeatedly adds the row whose
/// aggregated distance to the rows already picked is largest. Rows whose
/// vector duplicates an earlier row are never candidates, so the output
/// vectors are pairwise distinct.
pub fn select_practice(matrix: &BehaviorMatrix, n: usize, config: &GreedyConfig) -> Result<Vec<String>, SelectorError> {
    let mut seen = HashSet::new();
    let unique: Vec<usize> = (0..matrix.rows.len()).filter(|&i| seen.insert(&matrix.rows[i].1)).collect();
    if unique.len() < n {
        return Err(SelectorError::InsufficientDistinctRows { needed: n, available: unique.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let vec_of = |i: usize| &matrix.rows[i].1;

    let seed = match config.seed {
        GreedySeed::FirstRow => unique[0],
        GreedySeed::MaxNorm => {
            let mut best = unique[0];
            for &i in &unique[1..] {
                if vec_of(i).failures() > vec_of(best).failures() {
                    best = i;
                }
            }
            best
        }
    };
    let mut picked = vec![seed];
    while picked.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for &i in &unique {
            if picked.contains(&i) {
                continue;
            }
            let score = match config.aggregate {
                Aggregate::Min => picked.iter().map(|&p| vec_of(i).hamming(vec_of(p))).min().unwrap_or(0) as f64,
                Aggregate::Sum => picked.iter().map(|&p| vec_of(i).distance(vec_of(p))).sum(),
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        picked.push(best.expect("enough unique rows remain").0);
    }
    Ok(picked.into_iter().map(|i| matrix.rows[i].0.clone()).collect())
}

/// The `m` rows nearest to the practice row at non-zero distance, nearest
/// first, skipping `exclude`.
pub fn select_distractors(matrix: &BehaviorMatrix, practice_id: &str, m: usize, exclude: &HashSet<String>) -> Result<Vec<String>, SelectorError> {
    let target = matrix.vector(practice_id).ok_or_else(|| SelectorError::UnknownCode(practice_id.to_string()))?;
    let mut candidates: Vec<(usize, usize)> = matrix
        .rows
        .iter()
        .enumerate()
        .filter(|(_, (id, _))| id != practice_id && !exclude.contains(id))
        .map(|(i, (_, v))| (v.hamming(target), i))
        .filter(|&(d, _)| d > 0)
        .collect();
    if candidates.len() < m {
        return Err(SelectorError::InsufficientCandidates { practice: practice_id.to_string(), needed: m, available: candidates.len() });
    }
    candidates.sort_unstable();
    Ok(candidates.into_iter().take(m).map(|(_, i)| matrix.rows[i].0.clone()).collect())
}

/// Reference-input indices where the two codes' pass/fail bits differ.
pub fn discriminating_inputs(matrix: &BehaviorMatrix, practice_id: &str, distractor_id: &str) -> Result<Vec<usize>, SelectorError> {
    let a = matrix.vector(practice_id).ok_or_else(|| SelectorError::UnknownCode(practice_id.to_string()))?;
    let b = matrix.vector(distractor_id).ok_or_else(|| SelectorError::UnknownCode(distractor_id.to_string()))?;
    let diff: Vec<usize> = (0..a.len()).filter(|&i| a.0[i] != b.0[i]).collect();
    if diff.is_empty() {
        return Err(SelectorError::IdenticalBehavior(practice_id.to_string(), distractor_id.to_string()));
    }
    Ok(diff)
}

/// A full selection: practice codes in greedy order, each with its
/// distractors. Distractors are not shared between practice codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub practice: Vec<String>,
    pub distractors: HashMap<String, Vec<String>>,
}

/// Runs practice selection over `practice_pool` and distractor selection
/// over `distractor_pool`. `forbidden_pairs` lists (practice, candidate)
/// pairs that must not be linked, e.g. because their explanations coincide.
pub fn select_all(
    practice_pool: &BehaviorMatrix,
    distractor_pool: &BehaviorMatrix,
    config: &SelectorConfig,
    forbidden_pairs: &HashSet<(String, String)>,
) -> Result<Selection, SelectorError> {
    config.validate()?;
    let practice = select_practice(&filter_buggy(practice_pool), config.n_practice, &config.greedy)?;
    let pool = filter_buggy(distractor_pool);
    // The practice rows must be visible to distractor selection even if the
    // caller's distractor pool omits them.
    let mut rows = pool.rows.clone();
    for id in &practice {
        if pool.index_of(id).is_none() {
            rows.push((id.clone(), practice_pool.vector(id).expect("picked from pool").clone()));
        }
    }
    let pool = BehaviorMatrix::new(rows, practice_pool.n_cols)?;
    let mut used: HashSet<String> = practice.iter().cloned().collect();
    let mut distractors = HashMap::new();
    for p in &practice {
        let mut exclude = used.clone();
        exclude.extend(forbidden_pairs.iter().filter(|(a, _)| a == p).map(|(_, b)| b.clone()));
        let chosen = select_distractors(&pool, p, config.m_distractors, &exclude)?;
        used.extend(chosen.iter().cloned());
        distractors.insert(p.clone(), chosen);
    }
    Ok(Selection { practice, distractors })
}
