//! Runs the generation pipeline offline against the recorded completions in
//! `fixtures/replay`, approves every step, finalizes the suite and prints the
//! per-material report.
//!
//! ```text
//! cargo run -p hypocompass --example replay_pipeline [exercise-id]
//! ```

use std::path::PathBuf;

use hypocompass::harness::{CachedExecutor, HarnessConfig, PythonHarness};
use hypocompass::model::parse_exercise;
use hypocompass::pipeline::{finalize, metric_report, FinalizeOptions, Pipeline, PipelineConfig, ReplayBackend, TemplateSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let name = std::env::args().nth(1).unwrap_or_else(|| "remove_extras".into());
    let exercise = parse_exercise(&std::fs::read_to_string(fixtures.join("exercises").join(format!("{name}.json")))?)?;

    let backend = ReplayBackend::new(fixtures.join("replay"));
    let exec = CachedExecutor::new(PythonHarness::new(HarnessConfig::default())?);
    let pipeline = Pipeline::new(&backend, &exec, TemplateSet::builtin());
    let mut draft = pipeline.generate(exercise, PipelineConfig::default())?;
    let summary = pipeline.approve_all(&mut draft, "example")?;
    println!("{} steps, {} candidate codes, {summary:?}", draft.steps.len(), draft.codes.len());

    let finalized = finalize(&draft, &FinalizeOptions::default())?;
    for code in &finalized.suite.practice_codes {
        println!("{} {:?}: {}", code.id, code.agent_name, code.error_vector);
    }
    if let Some(clusters) = &finalized.clusters {
        println!("test clusters: {:?}", clusters.groups);
    }
    for notice in &finalized.notices {
        println!("notice: {notice}");
    }
    println!("\n{}", metric_report(&[&draft]));
    Ok(())
}
