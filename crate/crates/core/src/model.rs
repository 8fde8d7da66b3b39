//! Practice-suite domain types and the suite document format.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::literal::{Literal, TestInput};
use crate::patch::SnippetEdit;

/// Version written into every suite and draft document.
pub const FORMAT_VERSION: u32 = 1;

/// A programming problem supplied by an instructor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exercise {
    pub id: String,
    pub description: String,
    pub function_name: String,
    pub reference_solution: String,
    pub reference_inputs: Vec<TestInput>,
    /// Outputs of the reference solution, one per reference input. Filled in
    /// by the harness at generation time and stored so that loading a suite
    /// never needs the interpreter.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_outputs: Vec<Literal>,
}

impl Exercise {
    /// Index of the reference input equal to `input`, if any.
    pub fn reference_index(&self, input: &TestInput) -> Option<usize> {
        self.reference_inputs.iter().position(|r| r.matches(input))
    }

    /// Reference test cases built from the stored outputs.
    pub fn reference_cases(&self) -> Vec<TestCase> {
        self.reference_inputs
            .iter()
            .zip(&self.reference_outputs)
            .map(|(input, output)| TestCase {
                input: input.clone(),
                expected_output: output.clone(),
                category_id: None,
                author: Author::Reference,
            })
            .collect()
    }

    /// Structural checks that don't need the interpreter.
    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let at = |field: &str| format!("exercise.{field}");
        if self.id.trim().is_empty() {
            out.push(Violation::new(at("id"), "must not be empty"));
        }
        if self.function_name.trim().is_empty() {
            out.push(Violation::new(at("function_name"), "must not be empty"));
        }
        if self.reference_solution.trim().is_empty() {
            out.push(Violation::new(at("reference_solution"), "must not be empty"));
        }
        if self.reference_inputs.is_empty() {
            out.push(Violation::new(at("reference_inputs"), "at least one reference input is required"));
        }
        for (i, input) in self.reference_inputs.iter().enumerate() {
            if let Err(e) = input.validate() {
                out.push(Violation::new(format!("exercise.reference_inputs[{i}]"), e.to_string()));
            }
            if self.reference_inputs[..i].iter().any(|prev| prev.matches(input)) {
                out.push(Violation::new(
                    format!("exercise.reference_inputs[{i}]"),
                    "duplicates an earlier reference input",
                ));
            }
        }
        if !self.reference_outputs.is_empty() && self.reference_outputs.len() != self.reference_inputs.len() {
            out.push(Violation::new(
                at("reference_outputs"),
                format!(
                    "has {} entries but there are {} reference inputs",
                    self.reference_outputs.len(),
                    self.reference_inputs.len()
                ),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    Reference,
    Student,
    Hint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: TestInput,
    pub expected_output: Literal,
    #[serde(default)]
    pub category_id: Option<String>,
    pub author: Author,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryOrigin {
    LlmGenerated,
    InstructorEdited,
    StudentCreated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCategory {
    pub id: String,
    pub name: String,
    pub origin: CategoryOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationStatus>,
}

/// Pass/fail behavior of one code over the reference inputs; `true` means
/// the code failed (wrong value, error, or timeout) on that input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ErrorVector(pub Vec<bool>);

impl ErrorVector {
    pub fn from_bits(bits: &[u8]) -> Self {
        ErrorVector(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// All inputs pass.
    pub fn is_zero(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn failures(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Number of positions where the two vectors differ, i.e. the squared
    /// Euclidean distance between 0/1 vectors.
    pub fn hamming(&self, other: &ErrorVector) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn distance(&self, other: &ErrorVector) -> f64 {
        (self.hamming(other) as f64).sqrt()
    }

    pub fn failing_indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

impl fmt::Display for ErrorVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(if *b { "1" } else { "0" })?;
        }
        f.write_str("]")
    }
}

impl Serialize for ErrorVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|&b| u8::from(b)))
    }
}

impl<'de> Deserialize<'de> for ErrorVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(deserializer)?;
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(serde::de::Error::custom(format!("error-vector bit must be 0 or 1, got {bad}")));
        }
        Ok(ErrorVector::from_bits(&bits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeRole {
    Practice,
    Distractor,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuggyCode {
    pub id: String,
    pub source: String,
    pub error_vector: ErrorVector,
    pub role: CodeRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug: Option<BugRecord>,
    /// Present on practice codes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_pool: Option<ExplanationPool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugRecord {
    pub explanation: String,
    pub fix_instruction: String,
    pub snippet_edit: SnippetEdit,
    pub fixed_source: String,
    pub verification: VerificationStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationPool {
    /// Id of the practice code whose bug record holds the correct explanation.
    pub correct: String,
    pub distractors: Vec<DistractorLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorLink {
    pub explanation_text: String,
    pub distractor_code_id: String,
    pub discriminating_inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseHint {
    pub input: TestInput,
    pub text: String,
    pub verification: VerificationStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationState {
    Pending,
    Approved,
    Edited,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationStatus {
    pub state: VerificationState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_seconds: Option<f64>,
}

impl VerificationStatus {
    pub fn pending() -> Self {
        VerificationStatus { state: VerificationState::Pending, editor: None, edit_seconds: None }
    }

    pub fn approved(editor: Option<String>) -> Self {
        VerificationStatus { state: VerificationState::Approved, editor, edit_seconds: None }
    }

    /// Approved as-is or approved after an edit.
    pub fn is_accepted(&self) -> bool {
        matches!(self.state, VerificationState::Approved | VerificationState::Edited)
    }
}

/// All verified materials for one exercise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeSuite {
    pub format_version: u32,
    pub exercise: Exercise,
    pub category_hints: Vec<TestCategory>,
    pub test_case_hints: Vec<TestCaseHint>,
    pub practice_codes: Vec<BuggyCode>,
    pub distractor_codes: Vec<BuggyCode>,
    pub provenance: Vec<String>,
    pub verified: bool,
}

impl PracticeSuite {
    pub fn code(&self, id: &str) -> Option<&BuggyCode> {
        self.practice_codes.iter().chain(&self.distractor_codes).find(|c| c.id == id)
    }

    pub fn hint_for(&self, input: &TestInput) -> Option<&TestCaseHint> {
        self.test_case_hints.iter().find(|h| h.input.matches(input))
    }

    /// Every invariant violation in the suite, each tagged with a field path.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.format_version != FORMAT_VERSION {
            out.push(Violation::new(
                "format_version",
                format!("unsupported version {} (expected {FORMAT_VERSION})", self.format_version),
            ));
        }
        out.extend(self.exercise.check());
        let n_inputs = self.exercise.reference_inputs.len();
        if self.exercise.reference_outputs.len() != n_inputs {
            out.push(Violation::new("exercise.reference_outputs", "must hold one output per reference input"));
        }

        let mut category_ids = HashSet::new();
        for (i, cat) in self.category_hints.iter().enumerate() {
            if !category_ids.insert(cat.id.as_str()) {
                out.push(Violation::new(format!("category_hints[{i}].id"), "duplicate category id"));
            }
            if cat.name.trim().is_empty() {
                out.push(Violation::new(format!("category_hints[{i}].name"), "must not be empty"));
            }
            if self.verified && cat.verification.as_ref().is_some_and(|v| !v.is_accepted()) {
                out.push(Violation::new(format!("category_hints[{i}].verification"), "verified suite requires approval"));
            }
        }

        for (i, hint) in self.test_case_hints.iter().enumerate() {
            if hint.text.trim().is_empty() {
                out.push(Violation::new(format!("test_case_hints[{i}].text"), "must not be empty"));
            }
            if self.exercise.reference_index(&hint.input).is_none() {
                out.push(Violation::new(format!("test_case_hints[{i}].input"), "is not a reference input"));
            }
            if self.verified && !hint.verification.is_accepted() {
                out.push(Violation::new(format!("test_case_hints[{i}].verification"), "verified suite requires approval"));
            }
        }

        let mut code_ids = HashSet::new();
        let groups = [("practice_codes", &self.practice_codes, CodeRole::Practice), ("distractor_codes", &self.distractor_codes, CodeRole::Distractor)];
        for (group, codes, role) in groups {
            for (i, code) in codes.iter().enumerate() {
                let at = |field: &str| format!("{group}[{i}].{field}");
                if !code_ids.insert(code.id.as_str()) {
                    out.push(Violation::new(at("id"), "duplicate code id"));
                }
                if code.role != role {
                    out.push(Violation::new(at("role"), format!("expected {role:?}")));
                }
                if code.error_vector.len() != n_inputs {
                    out.push(Violation::new(
                        at("error_vector"),
                        format!("length {} does not match {n_inputs} reference inputs", code.error_vector.len()),
                    ));
                } else if code.error_vector.is_zero() {
                    out.push(Violation::new(at("error_vector"), "a correct code cannot be a practice or distractor code"));
                }
            }
        }

        for (i, code) in self.practice_codes.iter().enumerate() {
            let at = |field: &str| format!("practice_codes[{i}].{field}");
            if self.practice_codes[..i].iter().any(|p| p.error_vector == code.error_vector) {
                out.push(Violation::new(at("error_vector"), "practice codes must be behaviorally distinct"));
            }
            match &code.bug {
                None => out.push(Violation::new(at("bug"), "practice codes need a bug record")),
                Some(bug) => {
                    if !bug.verification.is_accepted() {
                        out.push(Violation::new(at("bug.verification"), "practice bug record must be verified"));
                    }
                    match bug.snippet_edit.apply(&code.source) {
                        None => out.push(Violation::new(at("bug.snippet_edit.old_snippet"), "not found in source")),
                        Some(applied) if applied != bug.fixed_source => {
                            out.push(Violation::new(at("bug.fixed_source"), "differs from the source with the snippet edit applied"))
                        }
                        Some(_) => {}
                    }
                }
            }
            let Some(pool) = &code.explanation_pool else {
                out.push(Violation::new(at("explanation_pool"), "practice codes need an explanation pool"));
                continue;
            };
            if pool.correct != code.id {
                out.push(Violation::new(at("explanation_pool.correct"), "must reference the practice code itself"));
            }
            let correct_text = code.bug.as_ref().map(|b| b.explanation.trim());
            let mut texts: Vec<&str> = correct_text.into_iter().collect();
            for (j, link) in pool.distractors.iter().enumerate() {
                let at = |field: &str| format!("practice_codes[{i}].explanation_pool.distractors[{j}].{field}");
                if texts.contains(&link.explanation_text.trim()) {
                    out.push(Violation::new(at("explanation_text"), "explanations in a pool must be distinct"));
                }
                texts.push(link.explanation_text.trim());
                let Some(distractor) = self.distractor_codes.iter().find(|d| d.id == link.distractor_code_id) else {
                    out.push(Violation::new(at("distractor_code_id"), "unknown distractor code"));
                    continue;
                };
                if distractor.error_vector.len() != code.error_vector.len() {
                    continue;
                }
                let diff: Vec<usize> = (0..code.error_vector.len())
                    .filter(|&k| code.error_vector.0[k] != distractor.error_vector.0[k])
                    .collect();
                if diff.is_empty() {
                    out.push(Violation::new(at("distractor_code_id"), "distractor behaves identically to the practice code"));
                } else if link.discriminating_inputs != diff {
                    out.push(Violation::new(at("discriminating_inputs"), "must list exactly the inputs where behaviors differ"));
                }
            }
        }
        out
    }
}

/// One invariant violation, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant errors: {}", join_violations(.0))]
    Invariant(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Deserializes `T` from JSON, reporting the field path of schema errors.
pub(crate) fn from_json_with_path<T: serde::de::DeserializeOwned>(document: &str) -> Result<T, SuiteError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        SuiteError::Schema { path, message: err.into_inner().to_string() }
    })
}

/// Canonical document for a suite: pretty JSON with a fixed key order and a
/// trailing newline.
pub fn serialize_suite(suite: &PracticeSuite) -> String {
    to_document(suite)
}

pub(crate) fn to_document<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("document types always serialize");
    text.push('\n');
    text
}

/// Parses and validates a suite document.
pub fn parse_suite(document: &str) -> Result<PracticeSuite, SuiteError> {
    let suite: PracticeSuite = from_json_with_path(document)?;
    let violations = suite.violations();
    if violations.is_empty() {
        Ok(suite)
    } else {
        Err(SuiteError::Invariant(violations))
    }
}

/// Parses an exercise file (the `Exercise` encoding) and checks it.
pub fn parse_exercise(document: &str) -> Result<Exercise, SuiteError> {
    let exercise: Exercise = from_json_with_path(document)?;
    let violations = exercise.check();
    if violations.is_empty() {
        Ok(exercise)
    } else {
        Err(SuiteError::Invariant(violations))
    }
}
