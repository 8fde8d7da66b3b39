//! The generation draft: every LLM step for one exercise together with its
//! verification state.

use serde::{Deserialize, Serialize};

use super::parse::ExplanationFix;
use super::templates::{Message, TemplateId};
use crate::model::{ErrorVector, Exercise, SuiteError, VerificationState, VerificationStatus, FORMAT_VERSION};
use crate::patch::SnippetEdit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Buggy codes to over-generate.
    pub buggy_count: usize,
    /// Upper bound on iterative-refinement rounds for buggy codes.
    pub max_buggy_rounds: usize,
    /// Re-samples after a parse failure.
    pub max_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { buggy_count: 24, max_buggy_rounds: 8, max_retries: 2 }
    }
}

/// What a step is about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subject {
    Exercise,
    ReferenceInput { index: usize },
    Code { code_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepOutput {
    Categories { names: Vec<String> },
    TestHint { text: String },
    BuggyCode { source: String, error_vector: ErrorVector },
    ExplanationFix { pairs: Vec<ExplanationFix> },
    SnippetEdit {
        edit: SnippetEdit,
        /// Buggy source with the edit applied; absent if the snippet was not found.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        applied_source: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_vector: Option<ErrorVector>,
    },
    FixedCode { source: String, error_vector: ErrorVector },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepFlag {
    /// No usable value could be parsed, even after re-sampling.
    ParseFailure,
    /// The code passes every reference input.
    CorrectCode,
    /// More than one bug listed for a code; edit down to one pair or accept
    /// it as distractor-only material.
    NeedsEdit,
    SnippetNotFound,
    /// The fixed code changes more than the snippet edit does.
    OverFix,
    /// The fix leaves at least one reference input failing, or changes nothing.
    UnderFix,
}

impl StepFlag {
    /// Flags that prevent approving a step as-is.
    pub fn blocks_approval(self) -> bool {
        matches!(self, StepFlag::ParseFailure | StepFlag::SnippetNotFound | StepFlag::OverFix | StepFlag::UnderFix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStep {
    pub id: String,
    pub template: TemplateId,
    pub subject: Subject,
    /// Conversation of the final model call, including earlier model turns.
    pub messages: Vec<Message>,
    pub raw_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<StepOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<StepFlag>,
    pub status: VerificationStatus,
    /// Model latency summed over the calls that produced this step.
    pub wall_ms: u64,
    pub attempts: u32,
}

impl GenerationStep {
    pub fn is_pending(&self) -> bool {
        self.status.state == VerificationState::Pending
    }

    pub fn is_accepted(&self) -> bool {
        self.status.is_accepted()
    }

    pub fn blocking_flags(&self) -> Vec<StepFlag> {
        self.flags.iter().copied().filter(|f| f.blocks_approval()).collect()
    }

    /// Text the instructor signed off on: the edit if any, else the raw output.
    pub fn final_text(&self) -> &str {
        self.edited_output.as_deref().unwrap_or(&self.raw_output)
    }
}

/// One model call of the iterative buggy-code chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuggyRound {
    pub round: usize,
    pub messages: Vec<Message>,
    pub raw_output: String,
    pub wall_ms: u64,
    pub attempts: u32,
}

/// Links a candidate buggy code to the steps generated for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCode {
    pub id: String,
    pub step_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_step: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet_step: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_step: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_id: Option<String>,
    pub message: String,
}

/// Generation state for one exercise, written to disk between CLI commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteDraft {
    pub format_version: u32,
    pub exercise: Exercise,
    pub config: PipelineConfig,
    pub steps: Vec<GenerationStep>,
    #[serde(default)]
    pub buggy_rounds: Vec<BuggyRound>,
    #[serde(default)]
    pub buggy_done: bool,
    pub codes: Vec<CandidateCode>,
    #[serde(default)]
    pub log: Vec<LogEntry>,
}

impl SuiteDraft {
    pub fn new(exercise: Exercise, config: PipelineConfig) -> Self {
        SuiteDraft {
            format_version: FORMAT_VERSION,
            exercise,
            config,
            steps: Vec::new(),
            buggy_rounds: Vec::new(),
            buggy_done: false,
            codes: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn step(&self, id: &str) -> Option<&GenerationStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    pub(crate) fn step_mut(&mut self, id: &str) -> Option<&mut GenerationStep> {
        self.steps.iter_mut().find(|s| s.id == id)
    }

    pub fn pending_steps(&self) -> impl Iterator<Item = &GenerationStep> {
        self.steps.iter().filter(|s| s.is_pending())
    }

    pub fn is_fully_verified(&self) -> bool {
        self.buggy_done && self.steps.iter().all(|s| !s.is_pending())
    }

    pub fn code(&self, id: &str) -> Option<&CandidateCode> {
        self.codes.iter().find(|c| c.id == id)
    }

    pub(crate) fn next_step_id(&self) -> String {
        format!("step-{:04}", self.steps.len() + 1)
    }

    pub(crate) fn next_code_id(&self) -> String {
        format!("code-{:02}", self.codes.len() + 1)
    }

    /// Source of a candidate code as accepted (or currently staged).
    pub fn code_source(&self, code_id: &str) -> Option<&str> {
        let code = self.code(code_id)?;
        match &self.step(&code.step_id)?.parsed {
            Some(StepOutput::BuggyCode { source, .. }) => Some(source),
            _ => None,
        }
    }

    pub fn code_vector(&self, code_id: &str) -> Option<&ErrorVector> {
        let code = self.code(code_id)?;
        match &self.step(&code.step_id)?.parsed {
            Some(StepOutput::BuggyCode { error_vector, .. }) => Some(error_vector),
            _ => None,
        }
    }

    pub(crate) fn log(&mut self, step_id: Option<&str>, message: impl Into<String>) {
        let message = message.into();
        tracing::info!(step = step_id.unwrap_or("-"), "{message}");
        self.log.push(LogEntry { step_id: step_id.map(str::to_string), message });
    }
}

pub fn serialize_draft(draft: &SuiteDraft) -> String {
    crate::model::to_document(draft)
}

pub fn parse_draft(document: &str) -> Result<SuiteDraft, SuiteError> {
    let draft: SuiteDraft = crate::model::from_json_with_path(document)?;
    if draft.format_version != FORMAT_VERSION {
        return Err(SuiteError::Invariant(vec![crate::model::Violation::new(
            "format_version",
            format!("unsupported version {}", draft.format_version),
        )]));
    }
    Ok(draft)
}
