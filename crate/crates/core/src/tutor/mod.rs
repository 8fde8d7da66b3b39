//! The student-facing session: building a test suite, then helping a queue
//! of agents find and fix the bug in their code.

mod events;
mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use events::{events_from_jsonl, events_to_jsonl, Command, EventKind, SessionEvent};
pub use metrics::{session_metrics, SessionMetrics};

use crate::harness::{Executor, HarnessError, Oracle, Outcome};
use crate::literal::{Literal, TestInput};
use crate::model::{Author, CategoryOrigin, ErrorVector, PracticeSuite, TestCase, TestCategory};
use crate::patch::{line_diff, unified_diff, DiffLine};

/// Exercises in a session when the caller does not choose.
pub const DEFAULT_PLAN_EXERCISES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SuiteBuilding,
    Debugging,
    ExerciseDone,
    SessionDone,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::SuiteBuilding => "suite_building",
            Phase::Debugging => "debugging",
            Phase::ExerciseDone => "exercise_done",
            Phase::SessionDone => "session_done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub suite_id: String,
    pub suite: PracticeSuite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Agent,
    Student,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogMessage {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationOption {
    pub id: String,
    pub text: String,
    pub code_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub code_id: String,
    pub display_name: String,
    pub original_source: String,
    pub current_source: String,
    pub dialog: Vec<DialogMessage>,
    /// The explanation pool in this session's shuffled order.
    pub options: Vec<ExplanationOption>,
    /// The correct explanation was chosen and its fix applied.
    pub fixed: bool,
    pub resolved: bool,
    pub wrong_explanation_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TutorSession {
    pub id: String,
    pub student_id: String,
    pub seed: u64,
    pub exercise_plan: Vec<PlanEntry>,
    pub exercise_index: usize,
    pub phase: Phase,
    pub categories: Vec<TestCategory>,
    pub user_suite: Vec<TestCase>,
    pub queue: Vec<AgentState>,
    pub active_agent: usize,
    pub event_log: Vec<SessionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum TestFeedback {
    Accepted { index: usize },
    /// The claimed output is wrong for this input. The expected value is
    /// deliberately withheld.
    Rejected { input: TestInput, message: String },
    Duplicate { existing: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRun {
    pub index: usize,
    pub input: TestInput,
    pub expected: Literal,
    pub actual: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub agent: String,
    pub results: Vec<TestRun>,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum HintOutcome {
    Hint { input_index: usize, text: String, message: String },
    NoHint { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ExplanationOutcome {
    FixApplied { before: String, after: String, diff: Vec<DiffLine>, message: String },
    Confusion { message: String, input_index: usize, input: TestInput },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ConfirmOutcome {
    /// The agent is resolved; `next_agent` is the newly active agent, if any.
    Advanced { resolved: String, next_agent: Option<String>, phase: Phase },
    Rejected { failing: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    Test(TestFeedback),
    Category { id: String },
    Phase { phase: Phase },
    Run(RunReport),
    Hint(HintOutcome),
    Explanation(ExplanationOutcome),
    Confirm(ConfirmOutcome),
}

#[derive(Debug, thiserror::Error)]
pub enum TutorError {
    #[error("the exercise plan is empty")]
    EmptyPlan,
    #[error("suite {0} is not verified")]
    UnverifiedSuite(String),
    #[error("suite {0} has no practice codes")]
    NoAgents(String),
    #[error("{op} is not allowed during {}", .phase.name())]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("unknown test category {0}")]
    UnknownCategory(String),
    #[error("invalid test input: {0}")]
    InvalidInput(String),
    #[error("the test suite is empty")]
    EmptySuite,
    #[error("unknown explanation choice {0}")]
    UnknownChoice(String),
    #[error("this agent's code has already been fixed")]
    AlreadyFixed,
    #[error("fix could not be applied: {0}")]
    FixFailed(String),
    #[error("event log does not start a session")]
    BadLog,
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl TutorError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            TutorError::EmptyPlan => "empty_plan",
            TutorError::UnverifiedSuite(_) => "unverified_suite",
            TutorError::NoAgents(_) => "no_agents",
            TutorError::WrongPhase { .. } => "wrong_phase",
            TutorError::UnknownCategory(_) => "unknown_category",
            TutorError::InvalidInput(_) => "invalid_input",
            TutorError::EmptySuite => "empty_suite",
            TutorError::UnknownChoice(_) => "unknown_choice",
            TutorError::AlreadyFixed => "already_fixed",
            TutorError::FixFailed(_) => "fix_failed",
            TutorError::BadLog => "bad_log",
            TutorError::Harness(_) => "harness",
        }
    }
}

/// Staged events for one command; committed only if the command succeeds.
struct Pending {
    time_ms: u64,
    command: Option<Command>,
    events: Vec<(EventKind, serde_json::Value)>,
}

impl Pending {
    fn push(&mut self, kind: EventKind, payload: serde_json::Value) {
        self.events.push((kind, payload));
    }
}

impl TutorSession {
    /// Opens a session on the first exercise of `plan`.
    pub fn start(id: &str, student_id: &str, plan: Vec<PlanEntry>, seed: u64, now_ms: u64) -> Result<Self, TutorError> {
        if plan.is_empty() {
            return Err(TutorError::EmptyPlan);
        }
        for entry in &plan {
            if !entry.suite.verified {
                return Err(TutorError::UnverifiedSuite(entry.suite_id.clone()));
            }
            if entry.suite.practice_codes.is_empty() {
                return Err(TutorError::NoAgents(entry.suite_id.clone()));
            }
        }
        let mut session = TutorSession {
            id: id.to_string(),
            student_id: student_id.to_string(),
            seed,
            exercise_plan: plan,
            exercise_index: 0,
            phase: Phase::SuiteBuilding,
            categories: Vec::new(),
            user_suite: Vec::new(),
            queue: Vec::new(),
            active_agent: 0,
            event_log: Vec::new(),
        };
        session.load_exercise(0);
        let mut pending = Pending { time_ms: now_ms, command: None, events: Vec::new() };
        pending.push(EventKind::PhaseChange, session.phase_payload());
        session.commit(pending);
        Ok(session)
    }

    /// Rebuilds a session from its start parameters and event log by
    /// re-running every recorded command.
    pub fn replay(
        id: &str,
        student_id: &str,
        plan: Vec<PlanEntry>,
        seed: u64,
        events: &[SessionEvent],
        exec: &dyn Executor,
    ) -> Result<Self, TutorError> {
        let first = events.first().filter(|e| e.kind == EventKind::PhaseChange && e.command.is_none()).ok_or(TutorError::BadLog)?;
        let mut session = TutorSession::start(id, student_id, plan, seed, first.time_ms)?;
        for event in events {
            if let Some(command) = &event.command {
                session.apply(exec, command.clone(), event.time_ms)?;
            }
        }
        Ok(session)
    }

    pub fn suite(&self) -> &PracticeSuite {
        &self.exercise_plan[self.exercise_index].suite
    }

    pub fn active(&self) -> Option<&AgentState> {
        match self.phase {
            Phase::Debugging | Phase::SuiteBuilding => self.queue.get(self.active_agent),
            _ => None,
        }
    }

    pub fn metrics(&self) -> SessionMetrics {
        session_metrics(&self.event_log)
    }

    /// Runs one command. On error the session is unchanged and nothing is
    /// logged.
    pub fn apply(&mut self, exec: &dyn Executor, command: Command, now_ms: u64) -> Result<Response, TutorError> {
        let time_ms = now_ms.max(self.event_log.last().map_or(0, |e| e.time_ms));
        let mut pending = Pending { time_ms, command: Some(command.clone()), events: Vec::new() };
        let mut next = self.clone();
        let response = match command {
            Command::AddTest { input, claimed_output, category_id } => {
                Response::Test(next.add_test(exec, input, claimed_output, &category_id, &mut pending)?)
            }
            Command::CreateCategory { name } => Response::Category { id: next.create_category(&name, &mut pending)? },
            Command::StartDebugging => {
                next.require(&[Phase::SuiteBuilding], "start_debugging")?;
                next.phase = Phase::Debugging;
                pending.push(EventKind::PhaseChange, next.phase_payload());
                Response::Phase { phase: next.phase }
            }
            Command::RunSuite => Response::Run(next.run_suite(exec, &mut pending)?),
            Command::RequestHint => Response::Hint(next.request_hint(exec, &mut pending)?),
            Command::SelectExplanation { choice_id } => Response::Explanation(next.select_explanation(exec, &choice_id, &mut pending)?),
            Command::ConfirmResolved => Response::Confirm(next.confirm_resolved(exec, &mut pending)?),
            Command::NextExercise => {
                next.require(&[Phase::ExerciseDone], "next_exercise")?;
                next.load_exercise(next.exercise_index + 1);
                pending.push(EventKind::PhaseChange, next.phase_payload());
                Response::Phase { phase: next.phase }
            }
        };
        next.commit(pending);
        *self = next;
        Ok(response)
    }

    pub fn add_test_case(
        &mut self,
        exec: &dyn Executor,
        input: TestInput,
        claimed_output: Literal,
        category_id: &str,
        now_ms: u64,
    ) -> Result<TestFeedback, TutorError> {
        match self.apply(exec, Command::AddTest { input, claimed_output, category_id: category_id.to_string() }, now_ms)? {
            Response::Test(f) => Ok(f),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn run_suite_against_agent(&mut self, exec: &dyn Executor, now_ms: u64) -> Result<RunReport, TutorError> {
        match self.apply(exec, Command::RunSuite, now_ms)? {
            Response::Run(r) => Ok(r),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn request_test_hint(&mut self, exec: &dyn Executor, now_ms: u64) -> Result<HintOutcome, TutorError> {
        match self.apply(exec, Command::RequestHint, now_ms)? {
            Response::Hint(h) => Ok(h),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn select_explanation_choice(&mut self, exec: &dyn Executor, choice_id: &str, now_ms: u64) -> Result<ExplanationOutcome, TutorError> {
        match self.apply(exec, Command::SelectExplanation { choice_id: choice_id.to_string() }, now_ms)? {
            Response::Explanation(e) => Ok(e),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn confirm(&mut self, exec: &dyn Executor, now_ms: u64) -> Result<ConfirmOutcome, TutorError> {
        match self.apply(exec, Command::ConfirmResolved, now_ms)? {
            Response::Confirm(c) => Ok(c),
            other => unreachable!("{other:?}"),
        }
    }

    /// Structural invariants that hold after every command.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.exercise_index >= self.exercise_plan.len() {
            out.push("exercise index out of range".to_string());
            return out;
        }
        match self.phase {
            Phase::SuiteBuilding | Phase::Debugging => {
                if self.active_agent >= self.queue.len() {
                    out.push(format!("active agent {} outside queue of {}", self.active_agent, self.queue.len()));
                }
                for (i, agent) in self.queue.iter().enumerate() {
                    if agent.resolved != (i < self.active_agent) {
                        out.push(format!("agent {i} resolved={} with active agent {}", agent.resolved, self.active_agent));
                    }
                }
            }
            Phase::ExerciseDone | Phase::SessionDone => {
                if !self.queue.iter().all(|a| a.resolved) {
                    out.push("exercise finished with unresolved agents".to_string());
                }
                if (self.phase == Phase::SessionDone) != (self.exercise_index + 1 == self.exercise_plan.len()) {
                    out.push("session_done must coincide with the last exercise".to_string());
                }
            }
        }
        let suite = self.suite();
        for agent in &self.queue {
            let bug = suite.code(&agent.code_id).and_then(|c| c.bug.as_ref());
            let expected = if agent.fixed { bug.map(|b| b.fixed_source.as_str()) } else { Some(agent.original_source.as_str()) };
            if expected != Some(agent.current_source.as_str()) {
                out.push(format!("{} has source that no fix produced", agent.display_name));
            }
            if agent.resolved && !agent.fixed {
                out.push(format!("{} resolved without a fix", agent.display_name));
            }
        }
        for test in &self.user_suite {
            if !self.categories.iter().any(|c| Some(&c.id) == test.category_id.as_ref()) {
                out.push("test filed under a missing category".to_string());
            }
        }
        for pair in self.event_log.windows(2) {
            if pair[1].time_ms < pair[0].time_ms {
                out.push(format!("event {} goes back in time", pair[1].seq));
            }
            if pair[1].seq != pair[0].seq + 1 {
                out.push(format!("event {} breaks the sequence", pair[1].seq));
            }
        }
        out
    }

    fn require(&self, allowed: &[Phase], op: &'static str) -> Result<(), TutorError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(TutorError::WrongPhase { op, phase: self.phase })
        }
    }

    fn commit(&mut self, pending: Pending) {
        let mut command = pending.command;
        for (kind, payload) in pending.events {
            let seq = self.event_log.len() as u64;
            self.event_log.push(SessionEvent { seq, time_ms: pending.time_ms, kind, command: command.take(), payload });
        }
    }

    fn phase_payload(&self) -> serde_json::Value {
        json!({ "to": self.phase.name(), "exercise": self.exercise_index, "suite_id": self.exercise_plan[self.exercise_index].suite_id })
    }

    fn load_exercise(&mut self, index: usize) {
        self.exercise_index = index;
        self.phase = Phase::SuiteBuilding;
        self.user_suite.clear();
        self.active_agent = 0;
        let suite = &self.exercise_plan[index].suite;
        self.categories = suite.category_hints.clone();
        let function = suite.exercise.function_name.clone();
        self.queue = suite
            .practice_codes
            .iter()
            .enumerate()
            .map(|(i, code)| {
                let name = code.agent_name.clone().unwrap_or_else(|| format!("Agent {}", i + 1));
                let mut options = Vec::new();
                if let (Some(bug), Some(pool)) = (&code.bug, &code.explanation_pool) {
                    options.push((bug.explanation.clone(), code.id.clone()));
                    for link in &pool.distractors {
                        options.push((link.explanation_text.clone(), link.distractor_code_id.clone()));
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ((index as u64) << 32) ^ i as u64);
                options.shuffle(&mut rng);
                AgentState {
                    code_id: code.id.clone(),
                    display_name: name.clone(),
                    original_source: code.source.clone(),
                    current_source: code.source.clone(),
                    dialog: vec![DialogMessage {
                        speaker: Speaker::Agent,
                        text: format!("Hi, I'm {name}. My {function} does not work and I can't see why. Could you help me?"),
                    }],
                    options: options
                        .into_iter()
                        .enumerate()
                        .map(|(k, (text, code_id))| ExplanationOption { id: format!("opt-{}", k + 1), text, code_id })
                        .collect(),
                    fixed: false,
                    resolved: false,
                    wrong_explanation_count: 0,
                }
            })
            .collect();
    }

    fn add_test(
        &mut self,
        exec: &dyn Executor,
        input: TestInput,
        claimed: Literal,
        category_id: &str,
        pending: &mut Pending,
    ) -> Result<TestFeedback, TutorError> {
        self.require(&[Phase::SuiteBuilding, Phase::Debugging], "add_test_case")?;
        if !self.categories.iter().any(|c| c.id == category_id) {
            return Err(TutorError::UnknownCategory(category_id.to_string()));
        }
        input.validate().map_err(|e| TutorError::InvalidInput(e.to_string()))?;
        claimed.validate().map_err(|e| TutorError::InvalidInput(format!("claimed output: {e}")))?;
        let exercise = &self.suite().exercise;
        let arity = exercise.reference_inputs.first().map_or(input.args.len(), |r| r.args.len());
        if input.args.len() != arity {
            return Err(TutorError::InvalidInput(format!("{} takes {arity} arguments, got {}", exercise.function_name, input.args.len())));
        }
        let call = input.call_expr(&exercise.function_name);
        let base = json!({ "input": input, "claimed_output": claimed, "category_id": category_id, "phase": self.phase.name() });

        if let Some(existing) = self.user_suite.iter().position(|t| t.input.matches(&input)) {
            let mut payload = base;
            payload["duplicate_of"] = json!(existing);
            pending.push(EventKind::TestRejected, payload);
            return Ok(TestFeedback::Duplicate { existing });
        }
        let expected = match Oracle::for_exercise(exercise, exec)?.expected(&input, exec) {
            Ok(v) => v,
            Err(HarnessError::ReferenceFailure { outcome, .. }) => {
                return Err(TutorError::InvalidInput(format!("{call} is not a valid input for this exercise ({outcome})")));
            }
            Err(e) => return Err(e.into()),
        };
        if !claimed.matches(&expected) {
            let message = format!("{call} should not return {}. Check the exercise description again.", claimed.to_python());
            pending.push(EventKind::TestRejected, base);
            return Ok(TestFeedback::Rejected { input, message });
        }
        self.user_suite.push(TestCase { input, expected_output: claimed, category_id: Some(category_id.to_string()), author: Author::Student });
        let index = self.user_suite.len() - 1;
        let mut payload = base;
        payload["index"] = json!(index);
        pending.push(EventKind::TestAdded, payload);
        Ok(TestFeedback::Accepted { index })
    }

    fn create_category(&mut self, name: &str, pending: &mut Pending) -> Result<String, TutorError> {
        self.require(&[Phase::SuiteBuilding, Phase::Debugging], "create_category")?;
        let name = name.trim();
        if name.is_empty() {
            return Err(TutorError::InvalidInput("category name is empty".into()));
        }
        let n = self.categories.iter().filter(|c| c.origin == CategoryOrigin::StudentCreated).count();
        let id = format!("user-{}", n + 1);
        self.categories.push(TestCategory { id: id.clone(), name: name.to_string(), origin: CategoryOrigin::StudentCreated, verification: None });
        pending.push(EventKind::CategoryCreated, json!({ "id": id, "name": name }));
        Ok(id)
    }

    /// Runs the active agent's current code on every user test.
    fn evaluate(&self, exec: &dyn Executor) -> Result<RunReport, TutorError> {
        let agent = &self.queue[self.active_agent];
        let function = &self.suite().exercise.function_name;
        let mut results = Vec::with_capacity(self.user_suite.len());
        for (index, test) in self.user_suite.iter().enumerate() {
            let outcome = exec.run(&agent.current_source, function, &test.input)?.outcome;
            let passed = matches!(&outcome, Outcome::Value { value } if value.matches(&test.expected_output));
            results.push(TestRun { index, input: test.input.clone(), expected: test.expected_output.clone(), actual: outcome.describe(), passed });
        }
        let all_passed = results.iter().all(|r| r.passed);
        Ok(RunReport { agent: agent.display_name.clone(), results, all_passed })
    }

    fn current_vector(&self, exec: &dyn Executor) -> Result<ErrorVector, TutorError> {
        let exercise = &self.suite().exercise;
        Ok(Oracle::for_exercise(exercise, exec)?.error_vector(&self.queue[self.active_agent].current_source, exec)?)
    }

    fn run_suite(&mut self, exec: &dyn Executor, pending: &mut Pending) -> Result<RunReport, TutorError> {
        self.require(&[Phase::Debugging], "run_suite")?;
        if self.user_suite.is_empty() {
            return Err(TutorError::EmptySuite);
        }
        let report = self.evaluate(exec)?;
        let failed: Vec<usize> = report.results.iter().filter(|r| !r.passed).map(|r| r.index).collect();
        let agent = &mut self.queue[self.active_agent];
        agent.dialog.push(DialogMessage {
            speaker: Speaker::Agent,
            text: if failed.is_empty() {
                format!("My code passes all {} tests. Is something still missing?", report.results.len())
            } else {
                format!("My code fails {} of {} tests.", failed.len(), report.results.len())
            },
        });
        pending.push(EventKind::CodeRun, json!({ "agent": report.agent, "failed": failed, "total": report.results.len() }));
        Ok(report)
    }

    fn request_hint(&mut self, exec: &dyn Executor, pending: &mut Pending) -> Result<HintOutcome, TutorError> {
        self.require(&[Phase::Debugging], "request_hint")?;
        let report = self.evaluate(exec)?;
        let vector = self.current_vector(exec)?;
        let suite = self.suite();
        let outcome = if !report.all_passed {
            HintOutcome::NoHint { reason: "your tests already show a failure".into() }
        } else {
            let exercise = &suite.exercise;
            let candidate = vector.failing_indices().into_iter().find_map(|i| {
                let input = &exercise.reference_inputs[i];
                let covered = self.user_suite.iter().any(|t| t.input.matches(input));
                if covered {
                    return None;
                }
                suite.hint_for(input).map(|h| (i, h.text.clone()))
            });
            match candidate {
                Some((input_index, text)) => {
                    let name = &self.queue[self.active_agent].display_name;
                    let message = format!("{name}: My code passes your tests, but I still think something is off. {text}");
                    HintOutcome::Hint { input_index, text, message }
                }
                None => HintOutcome::NoHint { reason: "no missing test case to hint at".into() },
            }
        };
        let agent = &mut self.queue[self.active_agent];
        let payload = match &outcome {
            HintOutcome::Hint { input_index, text, message } => {
                agent.dialog.push(DialogMessage { speaker: Speaker::Agent, text: unprefixed(message, &agent.display_name) });
                json!({ "agent": agent.display_name, "input_index": input_index, "hint": text })
            }
            HintOutcome::NoHint { reason } => json!({ "agent": agent.display_name, "hint": null, "reason": reason }),
        };
        pending.push(EventKind::HintShown, payload);
        Ok(outcome)
    }

    fn select_explanation(&mut self, exec: &dyn Executor, choice_id: &str, pending: &mut Pending) -> Result<ExplanationOutcome, TutorError> {
        self.require(&[Phase::Debugging], "select_explanation")?;
        let suite = self.suite().clone();
        let agent_index = self.active_agent;
        let agent = &self.queue[agent_index];
        let option = agent.options.iter().find(|o| o.id == choice_id).cloned().ok_or_else(|| TutorError::UnknownChoice(choice_id.to_string()))?;
        if agent.fixed {
            return Err(TutorError::AlreadyFixed);
        }
        let code = suite.code(&agent.code_id).ok_or_else(|| TutorError::FixFailed(format!("code {} missing from suite", agent.code_id)))?;
        let name = agent.display_name.clone();
        let correct = option.code_id == agent.code_id;
        let selected = json!({ "agent": name, "choice_id": choice_id, "correct": correct });

        if correct {
            let bug = code.bug.as_ref().ok_or_else(|| TutorError::FixFailed("practice code has no bug record".into()))?;
            let before = agent.current_source.clone();
            let after = bug.snippet_edit.apply(&before).ok_or_else(|| TutorError::FixFailed("snippet not found in the code".into()))?;
            let vector = Oracle::for_exercise(&suite.exercise, exec)?.error_vector(&after, exec)?;
            if !vector.is_zero() {
                return Err(TutorError::FixFailed(format!("fixed code still fails {} reference tests", vector.failures())));
            }
            let diff = line_diff(&before, &after);
            let message = format!("{name}: That makes sense! I changed my code. Can you check whether it works now?");
            let agent = &mut self.queue[agent_index];
            agent.dialog.push(DialogMessage { speaker: Speaker::Student, text: option.text.clone() });
            agent.dialog.push(DialogMessage { speaker: Speaker::Agent, text: unprefixed(&message, &name) });
            agent.current_source = after.clone();
            agent.fixed = true;
            pending.push(EventKind::ExplanationSelected, selected);
            pending.push(EventKind::FixApplied, json!({ "agent": name, "diff": unified_diff(&before, &after, &suite.exercise.function_name) }));
            return Ok(ExplanationOutcome::FixApplied { before, after, diff, message });
        }

        let pool = code.explanation_pool.as_ref().ok_or_else(|| TutorError::FixFailed("practice code has no explanation pool".into()))?;
        let link = pool
            .distractors
            .iter()
            .find(|l| l.distractor_code_id == option.code_id)
            .ok_or_else(|| TutorError::UnknownChoice(choice_id.to_string()))?;
        let input_index = *link.discriminating_inputs.first().ok_or_else(|| TutorError::FixFailed("distractor has no discriminating input".into()))?;
        let input = suite.exercise.reference_inputs[input_index].clone();
        let call = input.call_expr(&suite.exercise.function_name);
        let mine_fails = code.error_vector.0[input_index];
        let excerpt = excerpt(&link.explanation_text);
        let message = if mine_fails {
            format!("{name}: Hmm, I'm not sure. If the problem were that {excerpt}, my code would work for {call}, but it doesn't.")
        } else {
            format!("{name}: Hmm, I'm not sure. If the problem were that {excerpt}, my code would fail {call}, but it gets that one right.")
        };
        let agent = &mut self.queue[agent_index];
        agent.dialog.push(DialogMessage { speaker: Speaker::Student, text: option.text.clone() });
        agent.dialog.push(DialogMessage { speaker: Speaker::Agent, text: unprefixed(&message, &name) });
        agent.wrong_explanation_count += 1;
        pending.push(EventKind::ExplanationSelected, selected);
        pending.push(EventKind::ConfusionSent, json!({ "agent": name, "input_index": input_index, "message": message }));
        Ok(ExplanationOutcome::Confusion { message, input_index, input })
    }

    fn confirm_resolved(&mut self, exec: &dyn Executor, pending: &mut Pending) -> Result<ConfirmOutcome, TutorError> {
        self.require(&[Phase::Debugging], "confirm_resolved")?;
        let vector = self.current_vector(exec)?;
        let name = self.queue[self.active_agent].display_name.clone();
        if !vector.is_zero() {
            let failing = vector.failures();
            self.queue[self.active_agent].dialog.push(DialogMessage {
                speaker: Speaker::Agent,
                text: format!("{name}: I ran the instructor's tests and my code still fails {failing} of them."),
            });
            pending.push(EventKind::ConfirmRejected, json!({ "agent": name, "failing": failing }));
            return Ok(ConfirmOutcome::Rejected { failing });
        }
        let agent = &mut self.queue[self.active_agent];
        agent.resolved = true;
        agent.dialog.push(DialogMessage { speaker: Speaker::Agent, text: "Thank you for your help!".into() });
        pending.push(EventKind::AgentResolved, json!({ "agent": name }));
        if self.active_agent + 1 < self.queue.len() {
            self.active_agent += 1;
            let next = self.queue[self.active_agent].display_name.clone();
            return Ok(ConfirmOutcome::Advanced { resolved: name, next_agent: Some(next), phase: self.phase });
        }
        self.phase = if self.exercise_index + 1 < self.exercise_plan.len() { Phase::ExerciseDone } else { Phase::SessionDone };
        pending.push(EventKind::PhaseChange, self.phase_payload());
        Ok(ConfirmOutcome::Advanced { resolved: name, next_agent: None, phase: self.phase })
    }
}

/// Dialog entries carry the speaker separately, so the name prefix used in
/// outbound messages is dropped.
fn unprefixed(message: &str, name: &str) -> String {
    message.strip_prefix(name).and_then(|m| m.strip_prefix(": ")).unwrap_or(message).to_string()
}

/// First sentence of an explanation, lower-cased and without its period, to
/// fit inside a sentence. A leading identifier such as `IndexError` keeps
/// its case.
fn excerpt(explanation: &str) -> String {
    let first = explanation.split_inclusive(". ").next().unwrap_or(explanation).trim().trim_end_matches('.');
    let word = first.split_whitespace().next().unwrap_or("");
    let mut chars = first.chars();
    match chars.next() {
        Some(c) if !word.chars().skip(1).any(char::is_uppercase) => c.to_lowercase().chain(chars).collect(),
        _ => first.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excerpt_fits_a_sentence() {
        assert_eq!(excerpt("The loop starts at 1. It skips one."), "the loop starts at 1");
        assert_eq!(excerpt("IndexError is raised."), "IndexError is raised");
    }

    #[test]
    fn empty_log_has_zero_metrics() {
        assert_eq!(session_metrics(&[]), SessionMetrics::default());
    }
}
