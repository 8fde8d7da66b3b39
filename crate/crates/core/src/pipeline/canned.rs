//! An offline backend that answers pipeline prompts from hand-written
//! material, used to author replay fixtures and to test the pipeline
//! without a model.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{BackendError, Completion, CompletionRequest, LlmBackend};
use super::templates::{ModelTier, Role};
use super::format_snippet_edit;
use crate::model::{parse_exercise, Exercise};
use crate::patch::{normalize_source, SnippetEdit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedHint {
    /// First chain turn: free description of the test case.
    pub description: String,
    /// Second chain turn: the one-sentence hint.
    pub hint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedExplanation {
    pub explanation: String,
    pub fix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedBug {
    pub source: String,
    #[serde(default)]
    pub explanations: Vec<CannedExplanation>,
    #[serde(default)]
    pub old_snippet: Option<String>,
    #[serde(default)]
    pub new_snippet: Option<String>,
    /// Verbatim answer to the snippet prompt, replacing the formatted pair.
    #[serde(default)]
    pub snippet_answer: Option<String>,
    /// Verbatim fixed program that deliberately changes more than the snippet.
    #[serde(default)]
    pub overfix_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedExercise {
    pub exercise: String,
    /// Answers per re-sample; later samples reuse the last entry.
    pub categories: Vec<String>,
    pub test_hints: Vec<CannedHint>,
    /// One answer per refinement round; later rounds reuse the last entry.
    pub buggy_rounds: Vec<String>,
    pub bugs: Vec<CannedBug>,
}

pub struct CannedBackend {
    entries: Vec<(Exercise, CannedExercise)>,
}

impl CannedBackend {
    pub fn new(entries: Vec<(Exercise, CannedExercise)>) -> Self {
        CannedBackend { entries }
    }

    /// Reads every `<canned_dir>/<id>.json` with its exercise from
    /// `<exercise_dir>/<id>.json`.
    pub fn load(exercise_dir: &Path, canned_dir: &Path) -> Result<Self, BackendError> {
        let corrupt = |path: &Path, message: String| BackendError::FixtureCorrupt { path: path.display().to_string(), message };
        let mut paths: Vec<_> = std::fs::read_dir(canned_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut entries = Vec::new();
        for path in paths {
            let canned: CannedExercise = serde_json::from_str(&std::fs::read_to_string(&path)?).map_err(|e| corrupt(&path, e.to_string()))?;
            let ex_path = exercise_dir.join(format!("{}.json", canned.exercise));
            let exercise = parse_exercise(&std::fs::read_to_string(&ex_path)?).map_err(|e| corrupt(&ex_path, e.to_string()))?;
            entries.push((exercise, canned));
        }
        Ok(CannedBackend { entries })
    }

    fn by_description(&self, text: &str) -> Option<&(Exercise, CannedExercise)> {
        self.entries.iter().find(|(ex, _)| text.contains(ex.description.trim()))
    }

    fn by_code(&self, code: &str) -> Option<(&Exercise, &CannedBug)> {
        let code = normalize_source(code);
        self.entries
            .iter()
            .find_map(|(ex, canned)| canned.bugs.iter().find(|b| normalize_source(&b.source) == code).map(|b| (ex, b)))
    }

    fn answer(&self, request: &CompletionRequest) -> Option<String> {
        let messages = &request.messages;
        let last = messages.last().filter(|m| m.role == Role::User)?.text.as_str();
        let first_user = messages.iter().find(|m| m.role == Role::User)?.text.as_str();
        let sample = request.sample as usize;

        if last.contains("List three most important aspects") {
            let (_, canned) = self.by_description(last)?;
            return pick(&canned.categories, sample);
        }
        if first_user.contains("Briefly describe this test case") {
            let (exercise, canned) = self.by_description(first_user)?;
            let index = exercise
                .reference_inputs
                .iter()
                .position(|input| first_user.contains(&format!("{} ==", input.call_expr(&exercise.function_name))))?;
            let hint = canned.test_hints.get(index)?;
            return Some(if last.starts_with("Reformat it") { hint.hint.clone() } else { hint.description.clone() });
        }
        if messages.first().is_some_and(|m| m.text.starts_with("You are a novice student")) {
            let (_, canned) = self.by_description(first_user)?;
            let round = messages.iter().filter(|m| m.role == Role::User).count() - 1;
            return pick(&canned.buggy_rounds, round);
        }
        if let Some(rest) = last.strip_prefix("Here's my buggy code: ") {
            let code = rest.split("\nWhat's wrong with my code?").next()?;
            let (_, bug) = self.by_code(code)?;
            let lines: Vec<String> =
                bug.explanations.iter().map(|e| format!("- {{explanation: {}, fix: {}}}", e.explanation, e.fix)).collect();
            return (!lines.is_empty()).then(|| lines.join("\n"));
        }
        if let Some(rest) = last.strip_prefix("Original code: ") {
            let code = rest.split("; Code modification: ").next()?;
            let (_, bug) = self.by_code(code)?;
            if let Some(answer) = &bug.snippet_answer {
                return Some(answer.clone());
            }
            return Some(format_snippet_edit(&SnippetEdit::new(bug.old_snippet.clone()?, bug.new_snippet.clone()?)));
        }
        if let Some(rest) = last.strip_prefix("Old Code:") {
            let code = rest.split("; Instruction:").next()?;
            let (_, bug) = self.by_code(code)?;
            let fixed = match &bug.overfix_answer {
                Some(answer) => answer.clone(),
                None => SnippetEdit::new(bug.old_snippet.clone()?, bug.new_snippet.clone()?).apply(&bug.source)?,
            };
            return Some(format!("```python\n{}```", fixed));
        }
        None
    }
}

fn pick(answers: &[String], index: usize) -> Option<String> {
    answers.get(index.min(answers.len().checked_sub(1)?)).cloned()
}

impl LlmBackend for CannedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let text = self
            .answer(request)
            .ok_or_else(|| BackendError::Transport("canned backend has no answer for this prompt".into()))?;
        // A stable pseudo-latency so that timing reports are not all zero.
        let digest = Sha256::digest(request.key().as_bytes());
        let jitter = u64::from(u16::from_be_bytes([digest[0], digest[1]])) % 4000;
        let base = match request.model_tier {
            ModelTier::Standard => 1500,
            ModelTier::Strong => 6000,
        };
        Ok(Completion { text, latency_ms: base + jitter })
    }
}
