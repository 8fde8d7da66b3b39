//! Picks practice codes and distractors from a small hand-written behavior
//! matrix, then clusters the test inputs.
//!
//! ```text
//! cargo run -p hypocompass --example select_codes
//! ```

use std::collections::HashSet;

use hypocompass::selector::{cluster_tests, discriminating_inputs, select_all, BehaviorMatrix, SelectorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // One row per candidate code, one column per test input; 1 marks a failure.
    let matrix = BehaviorMatrix::from_bits(&[
        vec![1, 1, 0, 0, 0, 0],
        vec![1, 1, 1, 0, 0, 0],
        vec![0, 0, 0, 1, 1, 0],
        vec![0, 0, 0, 0, 1, 1],
        vec![0, 0, 0, 0, 0, 0],
        vec![1, 0, 0, 0, 0, 1],
        vec![0, 1, 1, 1, 0, 0],
    ])?;
    let config = SelectorConfig { n_practice: 2, m_distractors: 2, ..Default::default() };
    let selection = select_all(&matrix, &matrix, &config, &HashSet::new())?;

    for practice in &selection.practice {
        println!("practice {practice}: {}", matrix.vector(practice).unwrap());
        for distractor in &selection.distractors[practice] {
            let inputs = discriminating_inputs(&matrix, practice, distractor)?;
            println!("  distractor {distractor}: {} (tell apart with inputs {inputs:?})", matrix.vector(distractor).unwrap());
        }
    }

    let tree = cluster_tests(&matrix)?;
    println!("merge heights: {:?}", tree.heights());
    for (label, group) in hypocompass::selector::TestClusterTree::groups(&tree.flat_clusters(3)).iter().enumerate() {
        println!("cluster {label}: inputs {group:?}");
    }
    Ok(())
}
