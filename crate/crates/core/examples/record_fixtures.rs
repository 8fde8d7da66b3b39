//! Regenerates `fixtures/replay/` by running the full pipeline for every
//! canned exercise through a recording backend, and writes the finalized
//! suites to `fixtures/suites/`.
//!
//! ```text
//! cargo run -p hypocompass --example record_fixtures
//! ```

use std::path::PathBuf;

use hypocompass::harness::{CachedExecutor, HarnessConfig, PythonHarness};
use hypocompass::model::{parse_exercise, serialize_suite};
use hypocompass::pipeline::{finalize, CannedBackend, FinalizeOptions, Pipeline, PipelineConfig, RecordingBackend, TemplateSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = fixtures.join("replay");
    let suites = fixtures.join("suites");
    std::fs::create_dir_all(&suites)?;
    if out.exists() {
        for entry in std::fs::read_dir(&out)? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "json") {
                std::fs::remove_file(path)?;
            }
        }
    }

    let canned = CannedBackend::load(&fixtures.join("exercises"), &fixtures.join("canned"))?;
    let recorder = RecordingBackend::new(canned, &out)?;
    let exec = CachedExecutor::new(PythonHarness::new(HarnessConfig::default())?);
    let pipeline = Pipeline::new(&recorder, &exec, TemplateSet::builtin());

    for name in ["first_num_greater_than", "remove_extras"] {
        let exercise = parse_exercise(&std::fs::read_to_string(fixtures.join("exercises").join(format!("{name}.json")))?)?;
        let mut draft = pipeline.generate(exercise, PipelineConfig::default())?;
        let summary = pipeline.approve_all(&mut draft, "recorder")?;
        println!("{name}: {} steps, {summary:?}", draft.steps.len());
        let finalized = finalize(&draft, &FinalizeOptions::default())?;
        std::fs::write(suites.join(format!("{name}.json")), serialize_suite(&finalized.suite))?;
    }
    let count = std::fs::read_dir(&out)?.count();
    println!("{count} fixtures in {}", out.display());
    Ok(())
}
