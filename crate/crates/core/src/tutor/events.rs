//! Session commands and the append-only event log.

use serde::{Deserialize, Serialize};

use crate::literal::{Literal, TestInput};

/// A student action. Every successful command is recorded on the event it
/// produced so that a log can be replayed into a fresh session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    AddTest { input: TestInput, claimed_output: Literal, category_id: String },
    CreateCategory { name: String },
    StartDebugging,
    RunSuite,
    RequestHint,
    SelectExplanation { choice_id: String },
    ConfirmResolved,
    NextExercise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TestAdded,
    TestRejected,
    CategoryCreated,
    CodeRun,
    ExplanationSelected,
    FixApplied,
    ConfusionSent,
    HintShown,
    AgentResolved,
    /// A confirmation attempt while the code still fails.
    ConfirmRejected,
    PhaseChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub time_ms: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub payload: serde_json::Value,
}

/// One JSON record per line.
pub fn events_to_jsonl(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn events_from_jsonl(text: &str) -> Result<Vec<SessionEvent>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
