//! Session statistics computed from the event log alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::events::{EventKind, SessionEvent};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Time from the first to the last event.
    pub total_seconds: f64,
    /// Time spent per phase, keyed by phase name.
    pub phase_seconds: BTreeMap<String, f64>,
    pub tests_written: usize,
    pub tests_rejected: usize,
    pub categories_created: usize,
    /// Distinct `(exercise, category)` pairs holding an accepted test.
    pub categories_used: usize,
    pub code_runs: usize,
    pub hints_shown: usize,
    pub agents_resolved: usize,
    /// Wrong explanation picks per agent display name.
    pub wrong_explanations: BTreeMap<String, u32>,
}

pub fn session_metrics(events: &[SessionEvent]) -> SessionMetrics {
    let mut m = SessionMetrics::default();
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return m;
    };
    m.total_seconds = (last.time_ms.saturating_sub(first.time_ms)) as f64 / 1000.0;

    let mut phase: Option<String> = None;
    let mut exercise = 0u64;
    let mut previous = first.time_ms;
    let mut used = BTreeSet::new();
    for event in events {
        if let Some(p) = &phase {
            *m.phase_seconds.entry(p.clone()).or_default() += (event.time_ms.saturating_sub(previous)) as f64 / 1000.0;
        }
        previous = event.time_ms;
        let str_field = |key: &str| event.payload.get(key).and_then(|v| v.as_str()).map(str::to_string);
        match event.kind {
            EventKind::PhaseChange => {
                phase = str_field("to");
                if let Some(e) = event.payload.get("exercise").and_then(|v| v.as_u64()) {
                    exercise = e;
                }
                if let Some(p) = &phase {
                    m.phase_seconds.entry(p.clone()).or_default();
                }
            }
            EventKind::TestAdded => {
                m.tests_written += 1;
                if let Some(c) = str_field("category_id") {
                    used.insert((exercise, c));
                }
            }
            EventKind::TestRejected => m.tests_rejected += 1,
            EventKind::CategoryCreated => m.categories_created += 1,
            EventKind::CodeRun => m.code_runs += 1,
            EventKind::HintShown => {
                if !event.payload.get("hint").is_none_or(|h| h.is_null()) {
                    m.hints_shown += 1;
                }
            }
            EventKind::AgentResolved => m.agents_resolved += 1,
            EventKind::ExplanationSelected => {
                let agent = str_field("agent").unwrap_or_default();
                let counter = m.wrong_explanations.entry(agent).or_default();
                if event.payload.get("correct").and_then(|v| v.as_bool()) == Some(false) {
                    *counter += 1;
                }
            }
            EventKind::FixApplied | EventKind::ConfusionSent | EventKind::ConfirmRejected => {}
        }
    }
    m.categories_used = used.len();
    m
}
