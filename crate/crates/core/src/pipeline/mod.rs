//! LLM generation pipeline: prompt chains, parsing, mechanical validation,
//! and per-step human verification.
//!
//! [`Pipeline::advance`] creates every step whose inputs are ready. Steps
//! that depend on earlier material (explanations on codes, fixes on
//! explanations) only appear once that material has been approved or
//! edited, so an instructor's edit is what flows downstream.

pub mod backend;
pub mod canned;
pub mod draft;
pub mod finalize;
pub mod parse;
pub mod report;
pub mod templates;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use backend::{
    BackendConfig, BackendError, BackendSpec, Completion, CompletionRequest, LiveBackend, LlmBackend, RecordingBackend, ReplayBackend,
    ScriptedBackend,
};
pub use canned::{CannedBackend, CannedBug, CannedExercise};
pub use draft::{
    parse_draft, serialize_draft, BuggyRound, CandidateCode, GenerationStep, LogEntry, PipelineConfig, StepFlag, StepOutput,
    Subject, SuiteDraft,
};
pub use finalize::{finalize, ClusterReport, FinalizeError, FinalizeOptions, Finalized};
pub use parse::{ExplanationFix, ParseError, HINT_STEM};
pub use report::{metric_report, MetricReport, MetricRow};
pub use templates::{Message, ModelTier, PromptTemplate, Role, TemplateError, TemplateId, TemplateSet, MODEL_TURN};

use crate::harness::{Executor, HarnessError, LoadCheck, Oracle};
use crate::literal::TestInput;
use crate::model::{ErrorVector, Exercise, VerificationState, VerificationStatus, Violation};
use crate::patch::{normalize_source, SnippetEdit};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("exercise description is empty")]
    EmptyDescription,
    #[error("invalid exercise: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidExercise(Vec<Violation>),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("unknown step {0}")]
    UnknownStep(String),
    #[error("step {step} is already {state:?}")]
    NotPending { step: String, state: VerificationState },
    #[error("step {step} cannot be approved as-is: {flags:?}")]
    Blocked { step: String, flags: Vec<StepFlag> },
    #[error("edit of step {step} rejected: {message}")]
    InvalidEdit { step: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum VerifyAction {
    Approve,
    Edit { text: String },
    Reject,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproveAllSummary {
    pub approved: usize,
    pub rejected: usize,
    /// Steps generated downstream of the approvals.
    pub generated: usize,
}

/// Model outputs of one chain run.
#[derive(Debug, Clone)]
struct ChainRun {
    /// Conversation sent with the final call.
    messages: Vec<Message>,
    /// The final model turn.
    output: String,
    wall_ms: u64,
}

/// A chain run after parsing, with retry bookkeeping.
struct Attempted<T> {
    run: ChainRun,
    parsed: Result<T, ParseError>,
    attempts: u32,
    wall_ms: u64,
}

pub struct Pipeline<'a> {
    backend: &'a dyn LlmBackend,
    exec: &'a dyn Executor,
    templates: TemplateSet,
}

impl<'a> Pipeline<'a> {
    pub fn new(backend: &'a dyn LlmBackend, exec: &'a dyn Executor, templates: TemplateSet) -> Self {
        Pipeline { backend, exec, templates }
    }

    /// Validates the exercise, stores its reference outputs, and returns an
    /// empty draft.
    pub fn start(&self, mut exercise: Exercise, config: PipelineConfig) -> Result<SuiteDraft, PipelineError> {
        if exercise.description.trim().is_empty() {
            return Err(PipelineError::EmptyDescription);
        }
        let violations = exercise.check();
        if !violations.is_empty() {
            return Err(PipelineError::InvalidExercise(violations));
        }
        exercise.reference_outputs = Oracle::compute(&exercise, self.exec)?.into_outputs();
        Ok(SuiteDraft::new(exercise, config))
    }

    /// `start` followed by `advance`.
    pub fn generate(&self, exercise: Exercise, config: PipelineConfig) -> Result<SuiteDraft, PipelineError> {
        let mut draft = self.start(exercise, config)?;
        self.advance(&mut draft)?;
        Ok(draft)
    }

    /// Creates every step whose prerequisites are satisfied. Returns the
    /// number of new steps.
    pub fn advance(&self, draft: &mut SuiteDraft) -> Result<usize, PipelineError> {
        let before = draft.steps.len();
        if !draft.steps.iter().any(|s| s.template == TemplateId::CategoryHint) {
            let step = self.gen_category_hints(draft)?;
            draft.steps.push(step);
        }
        for index in 0..draft.exercise.reference_inputs.len() {
            let exists = draft.steps.iter().any(|s| s.template == TemplateId::TestCaseHint && s.subject == Subject::ReferenceInput { index });
            if !exists {
                let step = self.gen_test_case_hint(draft, index)?;
                draft.steps.push(step);
            }
        }
        if !draft.buggy_done {
            self.gen_buggy_codes(draft)?;
        }
        for i in 0..draft.codes.len() {
            let code = draft.codes[i].clone();
            let code_step = draft.step(&code.step_id).expect("code steps exist");
            let ready = code_step.is_accepted() && draft.code_vector(&code.id).is_some_and(|v| !v.is_zero());
            if ready && code.explanation_step.is_none() {
                let step = self.gen_explanation_fix(draft, &code.id)?;
                draft.codes[i].explanation_step = Some(step.id.clone());
                draft.steps.push(step);
            }
            let code = draft.codes[i].clone();
            if let (Some(expl), None) = (&code.explanation_step, &code.snippet_step) {
                let step = draft.step(expl).expect("explanation step exists");
                if let (true, Some(StepOutput::ExplanationFix { pairs })) = (step.is_accepted(), &step.parsed) {
                    if pairs.len() == 1 {
                        let instruction = pairs[0].fix.clone();
                        let step = self.gen_snippet_edit(draft, &code.id, &instruction)?;
                        draft.codes[i].snippet_step = Some(step.id.clone());
                        draft.steps.push(step);
                    }
                }
            }
            let code = draft.codes[i].clone();
            if let (Some(snip), None) = (&code.snippet_step, &code.fixed_step) {
                let step = draft.step(snip).expect("snippet step exists");
                if let (true, Some(StepOutput::SnippetEdit { edit, applied_source: Some(applied), .. })) = (step.is_accepted(), &step.parsed) {
                    let (edit, applied) = (edit.clone(), applied.clone());
                    let step = self.gen_fixed_code(draft, &code.id, &edit, &applied)?;
                    draft.codes[i].fixed_step = Some(step.id.clone());
                    draft.steps.push(step);
                }
            }
        }
        Ok(draft.steps.len() - before)
    }

    /// Runs a template as a chain: each `{llm_output}` assistant turn is
    /// filled by a model call on the conversation so far, then the final
    /// call answers the last user turn.
    fn run_chain(&self, template: &PromptTemplate, rendered: Vec<Message>, sample: u32) -> Result<ChainRun, BackendError> {
        let mut conversation = Vec::with_capacity(rendered.len());
        let mut wall_ms = 0;
        for message in rendered {
            if message.role == Role::Assistant && message.text == MODEL_TURN {
                let completion = self.call(template, &conversation, sample)?;
                wall_ms += completion.latency_ms;
                conversation.push(Message::new(Role::Assistant, completion.text));
            } else {
                conversation.push(message);
            }
        }
        let completion = self.call(template, &conversation, sample)?;
        wall_ms += completion.latency_ms;
        Ok(ChainRun { messages: conversation, output: completion.text, wall_ms })
    }

    fn call(&self, template: &PromptTemplate, messages: &[Message], sample: u32) -> Result<Completion, BackendError> {
        let request = CompletionRequest {
            messages: messages.to_vec(),
            model_tier: template.model_tier,
            temperature: template.temperature,
            sample,
        };
        self.backend.complete(&request)
    }

    /// Runs `attempt(sample)` until `parse` succeeds or retries run out.
    fn with_retries<T>(
        &self,
        retries: u32,
        attempt: impl Fn(u32) -> Result<ChainRun, BackendError>,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<Attempted<T>, BackendError> {
        let mut wall_ms = 0;
        let mut sample = 0;
        loop {
            let run = attempt(sample)?;
            wall_ms += run.wall_ms;
            let parsed = parse(&run.output);
            if parsed.is_ok() || sample >= retries {
                return Ok(Attempted { run, parsed, attempts: sample + 1, wall_ms });
            }
            tracing::debug!(sample, "re-sampling after parse failure");
            sample += 1;
        }
    }

    fn vars<'v>(&self, exercise: &Exercise, extra: &[(&'v str, String)]) -> BTreeMap<&'v str, String> {
        let mut vars = BTreeMap::from([("problem_description", exercise.description.trim().to_string())]);
        for (k, v) in extra {
            vars.insert(*k, v.clone());
        }
        vars
    }

    fn new_step<T>(draft: &SuiteDraft, template: TemplateId, subject: Subject, result: Attempted<T>) -> (GenerationStep, Option<T>) {
        let (parsed, parse_error) = match result.parsed {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.0)),
        };
        let step = GenerationStep {
            id: draft.next_step_id(),
            template,
            subject,
            messages: result.run.messages,
            raw_output: result.run.output,
            edited_output: None,
            parsed: None,
            flags: if parse_error.is_some() { vec![StepFlag::ParseFailure] } else { Vec::new() },
            parse_error,
            status: VerificationStatus::pending(),
            wall_ms: result.wall_ms,
            attempts: result.attempts,
        };
        (step, parsed)
    }

    /// Three test categories for the exercise.
    pub fn gen_category_hints(&self, draft: &SuiteDraft) -> Result<GenerationStep, PipelineError> {
        let template = self.templates.get(TemplateId::CategoryHint);
        let rendered = template.render(&self.vars(&draft.exercise, &[]))?;
        let result = self.with_retries(draft.config.max_retries, |s| self.run_chain(template, rendered.clone(), s), parse::parse_categories)?;
        let (mut step, parsed) = Self::new_step(draft, TemplateId::CategoryHint, Subject::Exercise, result);
        step.parsed = parsed.map(|names| StepOutput::Categories { names });
        Ok(step)
    }

    /// Descriptive hint for one reference input.
    pub fn gen_test_case_hint(&self, draft: &SuiteDraft, index: usize) -> Result<GenerationStep, PipelineError> {
        let exercise = &draft.exercise;
        let test_case = describe_test_case(exercise, &exercise.reference_inputs[index], index);
        let template = self.templates.get(TemplateId::TestCaseHint);
        let rendered = template.render(&self.vars(exercise, &[("test_case", test_case)]))?;
        let result = self.with_retries(draft.config.max_retries, |s| self.run_chain(template, rendered.clone(), s), parse::parse_test_hint)?;
        let (mut step, parsed) = Self::new_step(draft, TemplateId::TestCaseHint, Subject::ReferenceInput { index }, result);
        step.parsed = parsed.map(|text| StepOutput::TestHint { text });
        Ok(step)
    }

    /// Over-generates buggy codes through iterative refinement rounds. Each
    /// kept code becomes its own step; unloadable and duplicate codes are
    /// dropped with a log entry.
    pub fn gen_buggy_codes(&self, draft: &mut SuiteDraft) -> Result<(), PipelineError> {
        let target = draft.config.buggy_count.max(1);
        let template = self.templates.get(TemplateId::BuggyCode).clone();
        let vars = self.vars(&draft.exercise, &[]);
        let refine = template.render_refine(&vars)?;
        let exercise = draft.exercise.clone();
        let oracle = Oracle::for_exercise(&exercise, self.exec)?;
        let function_name = draft.exercise.function_name.clone();
        let mut conversation = template.render(&vars)?;
        let mut seen: Vec<String> = draft.codes.iter().filter_map(|c| draft.code_source(&c.id)).map(normalize_source).collect();

        for round in draft.buggy_rounds.len()..draft.config.max_buggy_rounds.max(1) {
            if round > 0 {
                let previous = &draft.buggy_rounds[round - 1];
                conversation = previous.messages.clone();
                conversation.push(Message::new(Role::Assistant, previous.raw_output.clone()));
                match &refine {
                    Some(text) => conversation.push(Message::new(Role::User, text.clone())),
                    None => break,
                }
            }
            let result = self.with_retries(
                draft.config.max_retries,
                |s| self.run_chain(&template, conversation.clone(), s),
                |text| {
                    let blocks = parse::extract_code_blocks(text, &function_name);
                    if blocks.is_empty() {
                        Err(ParseError("no code blocks found".into()))
                    } else {
                        Ok(blocks)
                    }
                },
            )?;
            let blocks = result.parsed.unwrap_or_default();
            let round_record = BuggyRound {
                round,
                messages: result.run.messages.clone(),
                raw_output: result.run.output.clone(),
                wall_ms: result.wall_ms,
                attempts: result.attempts,
            };
            draft.buggy_rounds.push(round_record);
            if blocks.is_empty() {
                draft.log(None, format!("buggy-code round {round}: no code found after {} attempts", result.attempts));
            }
            let codes_before = draft.codes.len();
            let per_code_ms = result.wall_ms / blocks.len().max(1) as u64;
            for block in blocks {
                if draft.codes.len() >= target {
                    draft.log(None, format!("buggy-code round {round}: extra code beyond the requested {target} ignored"));
                    break;
                }
                let source = parse::strip_comments(&block);
                let key = normalize_source(&source);
                if seen.contains(&key) {
                    draft.log(None, format!("buggy-code round {round}: duplicate code dropped"));
                    continue;
                }
                seen.push(key);
                match self.exec.load(&source, &function_name)? {
                    LoadCheck::Loaded => {}
                    LoadCheck::Failed { error, message } => {
                        draft.log(None, format!("buggy-code round {round}: code does not load ({error}: {message}), discarded"));
                        continue;
                    }
                    LoadCheck::Timeout => {
                        draft.log(None, format!("buggy-code round {round}: loading timed out, discarded"));
                        continue;
                    }
                }
                let error_vector = oracle.error_vector(&source, self.exec)?;
                let code_id = draft.next_code_id();
                let step = GenerationStep {
                    id: draft.next_step_id(),
                    template: TemplateId::BuggyCode,
                    subject: Subject::Code { code_id: code_id.clone() },
                    messages: result.run.messages.clone(),
                    raw_output: block,
                    edited_output: None,
                    flags: if error_vector.is_zero() { vec![StepFlag::CorrectCode] } else { Vec::new() },
                    parsed: Some(StepOutput::BuggyCode { source, error_vector }),
                    parse_error: None,
                    status: VerificationStatus::pending(),
                    wall_ms: per_code_ms,
                    attempts: result.attempts,
                };
                draft.codes.push(CandidateCode {
                    id: code_id,
                    step_id: step.id.clone(),
                    explanation_step: None,
                    snippet_step: None,
                    fixed_step: None,
                });
                draft.steps.push(step);
            }
            if draft.codes.len() >= target {
                break;
            }
            if draft.codes.len() == codes_before {
                draft.log(None, format!("buggy-code round {round} added no new code; stopping refinement"));
                break;
            }
        }
        if draft.codes.len() < target {
            draft.log(None, format!("buggy-code generation stopped with {} of {target} codes", draft.codes.len()));
        }
        draft.buggy_done = true;
        Ok(())
    }

    /// Explanation and fix instruction for an approved code with a non-zero
    /// error vector.
    pub fn gen_explanation_fix(&self, draft: &SuiteDraft, code_id: &str) -> Result<GenerationStep, PipelineError> {
        let source = draft.code_source(code_id).ok_or_else(|| PipelineError::UnknownStep(code_id.to_string()))?;
        let template = self.templates.get(TemplateId::ExplanationFix);
        let rendered = template.render(&self.vars(&draft.exercise, &[("buggy_code", source.to_string())]))?;
        let result = self.with_retries(draft.config.max_retries, |s| self.run_chain(template, rendered.clone(), s), parse::parse_explanations)?;
        let (mut step, parsed) = Self::new_step(draft, TemplateId::ExplanationFix, Subject::Code { code_id: code_id.to_string() }, result);
        if let Some(pairs) = parsed {
            step.flags = explanation_flags(&pairs);
            step.parsed = Some(StepOutput::ExplanationFix { pairs });
        }
        Ok(step)
    }

    /// First fix step: instruction to snippet pair, then mechanically applied
    /// and checked against the reference inputs.
    pub fn gen_snippet_edit(&self, draft: &SuiteDraft, code_id: &str, instruction: &str) -> Result<GenerationStep, PipelineError> {
        let source = draft.code_source(code_id).ok_or_else(|| PipelineError::UnknownStep(code_id.to_string()))?.to_string();
        let template = self.templates.get(TemplateId::FixTranslateStep1);
        let vars = self.vars(&draft.exercise, &[("buggy_code", source.clone()), ("explanation", instruction.to_string())]);
        let rendered = template.render(&vars)?;
        let result = self.with_retries(draft.config.max_retries, |s| self.run_chain(template, rendered.clone(), s), parse::parse_snippet_edit)?;
        let (mut step, parsed) = Self::new_step(draft, TemplateId::FixTranslateStep1, Subject::Code { code_id: code_id.to_string() }, result);
        if let Some(edit) = parsed {
            let (output, flags) = self.check_snippet(&draft.exercise, &source, edit)?;
            step.parsed = Some(output);
            step.flags = flags;
        }
        Ok(step)
    }

    /// Second fix step: snippet pair to full fixed program, gated against
    /// the mechanically applied edit.
    pub fn gen_fixed_code(&self, draft: &SuiteDraft, code_id: &str, edit: &SnippetEdit, applied: &str) -> Result<GenerationStep, PipelineError> {
        let source = draft.code_source(code_id).ok_or_else(|| PipelineError::UnknownStep(code_id.to_string()))?.to_string();
        let template = self.templates.get(TemplateId::FixTranslateStep2);
        let vars = self.vars(&draft.exercise, &[("buggy_code", source), ("snippet_edit", format_snippet_edit(edit))]);
        let rendered = template.render(&vars)?;
        let result = self.with_retries(draft.config.max_retries, |s| self.run_chain(template, rendered.clone(), s), parse::parse_fixed_code)?;
        let (mut step, parsed) = Self::new_step(draft, TemplateId::FixTranslateStep2, Subject::Code { code_id: code_id.to_string() }, result);
        if let Some(fixed) = parsed {
            let (output, flags) = self.check_fixed(&draft.exercise, applied, fixed)?;
            step.parsed = Some(output);
            step.flags = flags;
        }
        Ok(step)
    }

    fn check_snippet(&self, exercise: &Exercise, source: &str, edit: SnippetEdit) -> Result<(StepOutput, Vec<StepFlag>), PipelineError> {
        let Some(applied) = edit.apply(source) else {
            return Ok((StepOutput::SnippetEdit { edit, applied_source: None, error_vector: None }, vec![StepFlag::SnippetNotFound]));
        };
        let vector = Oracle::for_exercise(exercise, self.exec)?.error_vector(&applied, self.exec)?;
        let flags = if edit.is_noop() || !vector.is_zero() { vec![StepFlag::UnderFix] } else { Vec::new() };
        Ok((StepOutput::SnippetEdit { edit, applied_source: Some(applied), error_vector: Some(vector) }, flags))
    }

    fn check_fixed(&self, exercise: &Exercise, applied: &str, fixed: String) -> Result<(StepOutput, Vec<StepFlag>), PipelineError> {
        let vector = Oracle::for_exercise(exercise, self.exec)?.error_vector(&fixed, self.exec)?;
        let flags = fix_gate(applied, &fixed, &vector).into_iter().collect();
        Ok((StepOutput::FixedCode { source: fixed, error_vector: vector }, flags))
    }

    /// Applies an instructor decision to a pending step.
    pub fn verify_step(
        &self,
        draft: &mut SuiteDraft,
        step_id: &str,
        action: VerifyAction,
        instructor: &str,
        edit_seconds: Option<f64>,
    ) -> Result<VerificationStatus, PipelineError> {
        let step = draft.step(step_id).ok_or_else(|| PipelineError::UnknownStep(step_id.to_string()))?;
        if !step.is_pending() {
            return Err(PipelineError::NotPending { step: step_id.to_string(), state: step.status.state });
        }
        let editor = Some(instructor.to_string());
        let action = match action {
            VerifyAction::Edit { text } if text == step.raw_output => VerifyAction::Approve,
            other => other,
        };
        let status = match action {
            VerifyAction::Approve => {
                let blocking = step.blocking_flags();
                if !blocking.is_empty() {
                    return Err(PipelineError::Blocked { step: step_id.to_string(), flags: blocking });
                }
                VerificationStatus { state: VerificationState::Approved, editor, edit_seconds }
            }
            VerifyAction::Reject => VerificationStatus { state: VerificationState::Rejected, editor, edit_seconds },
            VerifyAction::Edit { text } => {
                let (parsed, flags) = self.reparse(draft, step, &text)?;
                let blocking: Vec<StepFlag> = flags.iter().copied().filter(|f| f.blocks_approval()).collect();
                if !blocking.is_empty() {
                    return Err(PipelineError::InvalidEdit { step: step_id.to_string(), message: format!("edited text still fails checks: {blocking:?}") });
                }
                let step = draft.step_mut(step_id).expect("checked above");
                step.edited_output = Some(text);
                step.parsed = Some(parsed);
                step.flags = flags;
                step.parse_error = None;
                VerificationStatus { state: VerificationState::Edited, editor, edit_seconds }
            }
        };
        let step = draft.step_mut(step_id).expect("checked above");
        step.status = status.clone();
        if status.state == VerificationState::Rejected {
            draft.log(Some(step_id), "rejected by instructor");
        }
        Ok(status)
    }

    /// Approves every pending step that can be approved as-is, rejects the
    /// rest, and advances until nothing new is generated.
    pub fn approve_all(&self, draft: &mut SuiteDraft, instructor: &str) -> Result<ApproveAllSummary, PipelineError> {
        let mut summary = ApproveAllSummary::default();
        loop {
            let pending: Vec<(String, bool)> = draft.pending_steps().map(|s| (s.id.clone(), s.blocking_flags().is_empty())).collect();
            for (id, approvable) in &pending {
                if *approvable {
                    self.verify_step(draft, id, VerifyAction::Approve, instructor, None)?;
                    summary.approved += 1;
                } else {
                    self.verify_step(draft, id, VerifyAction::Reject, instructor, None)?;
                    summary.rejected += 1;
                }
            }
            let created = self.advance(draft)?;
            summary.generated += created;
            if created == 0 && pending.is_empty() {
                return Ok(summary);
            }
        }
    }

    /// Parses and validates instructor-edited text for a step.
    fn reparse(&self, draft: &SuiteDraft, step: &GenerationStep, text: &str) -> Result<(StepOutput, Vec<StepFlag>), PipelineError> {
        let invalid = |message: String| PipelineError::InvalidEdit { step: step.id.clone(), message };
        let code_id = match &step.subject {
            Subject::Code { code_id } => Some(code_id.as_str()),
            _ => None,
        };
        let exercise = &draft.exercise;
        match step.template {
            TemplateId::CategoryHint => {
                let names = parse::parse_categories(text).map_err(|e| invalid(e.0))?;
                Ok((StepOutput::Categories { names }, Vec::new()))
            }
            TemplateId::TestCaseHint => {
                let text = parse::parse_test_hint(text).map_err(|e| invalid(e.0))?;
                Ok((StepOutput::TestHint { text }, Vec::new()))
            }
            TemplateId::BuggyCode => {
                let source = match parse::extract_code_blocks(text, &exercise.function_name).into_iter().next() {
                    Some(block) => parse::strip_comments(&block),
                    None => return Err(invalid(format!("no definition of {} found", exercise.function_name))),
                };
                match self.exec.load(&source, &exercise.function_name)? {
                    LoadCheck::Loaded => {}
                    LoadCheck::Failed { error, message } => return Err(invalid(format!("code does not load: {error}: {message}"))),
                    LoadCheck::Timeout => return Err(invalid("loading timed out".into())),
                }
                let error_vector = Oracle::for_exercise(exercise, self.exec)?.error_vector(&source, self.exec)?;
                let flags = if error_vector.is_zero() { vec![StepFlag::CorrectCode] } else { Vec::new() };
                Ok((StepOutput::BuggyCode { source, error_vector }, flags))
            }
            TemplateId::ExplanationFix => {
                let pairs = parse::parse_explanations(text).map_err(|e| invalid(e.0))?;
                Ok((explanation_output(&pairs), explanation_flags(&pairs)))
            }
            TemplateId::FixTranslateStep1 => {
                let edit = parse::parse_snippet_edit(text).map_err(|e| invalid(e.0))?;
                let source = code_id.and_then(|c| draft.code_source(c)).ok_or_else(|| invalid("step has no code".into()))?;
                self.check_snippet(exercise, source, edit)
            }
            TemplateId::FixTranslateStep2 => {
                let fixed = parse::parse_fixed_code(text).map_err(|e| invalid(e.0))?;
                let applied = code_id
                    .and_then(|c| draft.code(c))
                    .and_then(|c| c.snippet_step.as_deref())
                    .and_then(|s| draft.step(s))
                    .and_then(|s| match &s.parsed {
                        Some(StepOutput::SnippetEdit { applied_source: Some(a), .. }) => Some(a.clone()),
                        _ => None,
                    })
                    .ok_or_else(|| invalid("step has no applied snippet edit".into()))?;
                self.check_fixed(exercise, &applied, fixed)
            }
        }
    }
}

fn explanation_output(pairs: &[ExplanationFix]) -> StepOutput {
    StepOutput::ExplanationFix { pairs: pairs.to_vec() }
}

fn explanation_flags(pairs: &[ExplanationFix]) -> Vec<StepFlag> {
    if pairs.len() > 1 {
        vec![StepFlag::NeedsEdit]
    } else {
        Vec::new()
    }
}

/// Soundness gate for a fixed program: it must equal the mechanically edited
/// source (up to trailing whitespace) and pass every reference input.
pub fn fix_gate(applied: &str, fixed: &str, fixed_vector: &ErrorVector) -> Option<StepFlag> {
    if !fixed_vector.is_zero() {
        Some(StepFlag::UnderFix)
    } else if normalize_source(applied) != normalize_source(fixed) {
        Some(StepFlag::OverFix)
    } else {
        None
    }
}

/// The snippet pair in the format the fix prompts use.
pub fn format_snippet_edit(edit: &SnippetEdit) -> String {
    format!("{{original code snippet: \"\"{}\"\" -> edited code snippet: \"\"{}\"\"}}", edit.old_snippet, edit.new_snippet)
}

/// `f(args) == expected` for prompts.
pub fn describe_test_case(exercise: &Exercise, input: &TestInput, index: usize) -> String {
    let call = input.call_expr(&exercise.function_name);
    match exercise.reference_outputs.get(index) {
        Some(output) => format!("{call} == {}", output.to_python()),
        None => call,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::SnippetEdit;

    #[test]
    fn gate_flags() {
        let zero = ErrorVector::from_bits(&[0, 0]);
        let bad = ErrorVector::from_bits(&[0, 1]);
        assert_eq!(fix_gate("a\n", "a\n", &zero), None);
        assert_eq!(fix_gate("a\n", "a  \n\n", &zero), None);
        assert_eq!(fix_gate("a\n", "b\n", &zero), Some(StepFlag::OverFix));
        assert_eq!(fix_gate("a\n", "a\n", &bad), Some(StepFlag::UnderFix));
    }

    #[test]
    fn snippet_format_round_trips() {
        let edit = SnippetEdit::new("numbers_list[i] <= key", "numbers_list[i] > key");
        assert_eq!(parse::parse_snippet_edit(&format_snippet_edit(&edit)).unwrap(), edit);
    }
}
