#![allow(dead_code)]

use std::path::PathBuf;

use hypocompass::harness::{CachedExecutor, HarnessConfig, PythonHarness};
use hypocompass::model::{parse_exercise, Exercise};
use hypocompass::pipeline::CannedBackend;

/// Resolves from any crate in the workspace, so other crates' tests can
/// include this module by path.
pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn exercise(name: &str) -> Exercise {
    let path = fixtures().join("exercises").join(format!("{name}.json"));
    parse_exercise(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub const ALL_EXERCISES: [&str; 6] = ["first_num_greater_than", "remove_extras", "num_smaller", "sort_age", "top_k", "swap_keys_values"];

pub fn harness() -> CachedExecutor<PythonHarness> {
    CachedExecutor::new(PythonHarness::new(HarnessConfig::default()).unwrap())
}

pub fn canned() -> CannedBackend {
    CannedBackend::load(&fixtures().join("exercises"), &fixtures().join("canned")).unwrap()
}

pub const EARLY_RETURN_BUGGY: &str = "def first_num_greater_than(numbers_list, key):
    for i in range(len(numbers_list)):
        if numbers_list[i] > key:
            return numbers_list[i]
        else:
            return None
";

/// One process-wide cached harness so that integration tests in the same
/// binary share execution results.
pub fn shared_harness() -> &'static CachedExecutor<PythonHarness> {
    static CELL: std::sync::OnceLock<CachedExecutor<PythonHarness>> = std::sync::OnceLock::new();
    CELL.get_or_init(harness)
}

pub fn suite(name: &str) -> hypocompass::model::PracticeSuite {
    let path = fixtures().join("suites").join(format!("{name}.json"));
    hypocompass::model::parse_suite(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// The default two-exercise plan built from the checked-in suites.
pub fn default_plan() -> Vec<hypocompass::tutor::PlanEntry> {
    ["first_num_greater_than", "remove_extras"]
        .into_iter()
        .map(|name| hypocompass::tutor::PlanEntry { suite_id: name.to_string(), suite: suite(name) })
        .collect()
}
