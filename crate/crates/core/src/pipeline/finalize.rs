//! Turns a verified draft into a practice suite by running selection over
//! the accepted material.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::draft::{StepOutput, Subject, SuiteDraft};
use super::templates::TemplateId;
use crate::model::{
    BugRecord, BuggyCode, CategoryOrigin, CodeRole, DistractorLink, ErrorVector, ExplanationPool, PracticeSuite, TestCaseHint,
    TestCategory, VerificationState, VerificationStatus, Violation, FORMAT_VERSION,
};
use crate::selector::{self, cluster_tests, filter_buggy, BehaviorMatrix, SelectorConfig, SelectorError, TestClusterTree};

/// Display names handed to practice codes in queue order.
pub const AGENT_NAMES: [&str; 10] = ["Bob", "Chelsea", "Dave", "Emma", "Felix", "Grace", "Hiro", "Ines", "Jamal", "Kira"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinalizeOptions {
    pub selector: SelectorConfig,
    /// Flat clusters to cut the test dendrogram into.
    pub clusters: usize,
    /// Clustering runs only with at least this many reference tests.
    pub min_tests_for_clustering: usize,
}

impl Default for FinalizeOptions {
    fn default() -> Self {
        FinalizeOptions { selector: SelectorConfig::default(), clusters: 3, min_tests_for_clustering: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub tree: TestClusterTree,
    /// Cluster label per reference input.
    pub labels: Vec<usize>,
    /// Reference-input indices per cluster.
    pub groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finalized {
    pub suite: PracticeSuite,
    pub clusters: Option<ClusterReport>,
    pub notices: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum FinalizeError {
    #[error("selection failed: {0}")]
    Selection(#[from] SelectorError),
    #[error("finalized suite is inconsistent: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Accepted material for one candidate code.
struct Candidate {
    id: String,
    source: String,
    vector: ErrorVector,
    explanation: Option<String>,
    bug: Option<BugRecord>,
    steps: Vec<String>,
}

pub fn finalize(draft: &SuiteDraft, options: &FinalizeOptions) -> Result<Finalized, FinalizeError> {
    options.selector.validate()?;
    let mut notices = Vec::new();
    let mut provenance = BTreeSet::new();

    let mut category_hints = Vec::new();
    if let Some(step) = draft.steps.iter().find(|s| s.template == TemplateId::CategoryHint && s.is_accepted()) {
        if let Some(StepOutput::Categories { names }) = &step.parsed {
            let origin = if step.status.state == VerificationState::Edited { CategoryOrigin::InstructorEdited } else { CategoryOrigin::LlmGenerated };
            for (i, name) in names.iter().enumerate() {
                category_hints.push(TestCategory { id: format!("cat-{}", i + 1), name: name.clone(), origin, verification: Some(step.status.clone()) });
            }
            provenance.insert(step.id.clone());
        }
    }

    let mut hint_steps: Vec<(usize, TestCaseHint, String)> = draft
        .steps
        .iter()
        .filter(|s| s.template == TemplateId::TestCaseHint && s.is_accepted())
        .filter_map(|s| match (&s.subject, &s.parsed) {
            (Subject::ReferenceInput { index }, Some(StepOutput::TestHint { text })) => Some((
                *index,
                TestCaseHint { input: draft.exercise.reference_inputs[*index].clone(), text: text.clone(), verification: s.status.clone() },
                s.id.clone(),
            )),
            _ => None,
        })
        .collect();
    hint_steps.sort_by_key(|(i, _, _)| *i);
    let mut test_case_hints = Vec::new();
    for (_, hint, step) in hint_steps {
        provenance.insert(step);
        test_case_hints.push(hint);
    }

    let candidates = collect_candidates(draft);
    let practice_rows: Vec<(String, ErrorVector)> = candidates.iter().filter(|c| c.bug.is_some()).map(|c| (c.id.clone(), c.vector.clone())).collect();
    let distractor_rows: Vec<(String, ErrorVector)> =
        candidates.iter().filter(|c| c.explanation.is_some()).map(|c| (c.id.clone(), c.vector.clone())).collect();
    let n_cols = draft.exercise.reference_inputs.len();
    let practice_pool = BehaviorMatrix::new(practice_rows, n_cols)?;
    let distractor_pool = BehaviorMatrix::new(distractor_rows, n_cols)?;

    let normalized = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut forbidden = HashSet::new();
    for p in candidates.iter().filter(|c| c.bug.is_some()) {
        let pe = normalized(p.explanation.as_deref().unwrap_or_default());
        for d in candidates.iter().filter(|c| c.id != p.id) {
            if d.explanation.as_deref().is_some_and(|t| normalized(t) == pe) {
                forbidden.insert((p.id.clone(), d.id.clone()));
            }
        }
    }

    let selection = selector::select_all(&practice_pool, &distractor_pool, &options.selector, &forbidden)?;
    let by_id = |id: &str| candidates.iter().find(|c| c.id == id).expect("selected ids come from candidates");
    let mut all_rows = practice_pool.rows().to_vec();
    all_rows.extend(distractor_pool.rows().iter().filter(|(id, _)| practice_pool.index_of(id).is_none()).cloned());
    let matrix = BehaviorMatrix::new(all_rows, n_cols)?;

    let mut practice_codes = Vec::new();
    let mut distractor_codes = Vec::new();
    for (rank, pid) in selection.practice.iter().enumerate() {
        let p = by_id(pid);
        provenance.extend(p.steps.iter().cloned());
        let mut links = Vec::new();
        for did in &selection.distractors[pid] {
            let d = by_id(did);
            provenance.extend(d.steps.iter().cloned());
            links.push(DistractorLink {
                explanation_text: d.explanation.clone().expect("distractor pool requires an explanation"),
                distractor_code_id: d.id.clone(),
                discriminating_inputs: selector::discriminating_inputs(&matrix, pid, did)?,
            });
            distractor_codes.push(BuggyCode {
                id: d.id.clone(),
                source: d.source.clone(),
                error_vector: d.vector.clone(),
                role: CodeRole::Distractor,
                agent_name: None,
                bug: None,
                explanation_pool: None,
            });
        }
        practice_codes.push(BuggyCode {
            id: p.id.clone(),
            source: p.source.clone(),
            error_vector: p.vector.clone(),
            role: CodeRole::Practice,
            agent_name: Some(AGENT_NAMES[rank % AGENT_NAMES.len()].to_string()),
            bug: p.bug.clone(),
            explanation_pool: Some(ExplanationPool { correct: p.id.clone(), distractors: links }),
        });
    }

    let clusters = if n_cols >= options.min_tests_for_clustering.max(2) {
        let buggy = filter_buggy(&BehaviorMatrix::new(
            candidates.iter().map(|c| (c.id.clone(), c.vector.clone())).collect(),
            n_cols,
        )?);
        let tree = cluster_tests(&buggy)?;
        let labels = tree.flat_clusters(options.clusters);
        let groups = TestClusterTree::groups(&labels);
        Some(ClusterReport { k: groups.len(), tree, labels, groups })
    } else {
        notices.push(format!(
            "test clustering skipped: {n_cols} reference tests, at least {} needed",
            options.min_tests_for_clustering
        ));
        None
    };

    let suite = PracticeSuite {
        format_version: FORMAT_VERSION,
        exercise: draft.exercise.clone(),
        category_hints,
        test_case_hints,
        practice_codes,
        distractor_codes,
        provenance: provenance.into_iter().collect(),
        verified: draft.is_fully_verified(),
    };
    let violations = suite.violations();
    if !violations.is_empty() {
        return Err(FinalizeError::Invalid(violations));
    }
    Ok(Finalized { suite, clusters, notices })
}

fn collect_candidates(draft: &SuiteDraft) -> Vec<Candidate> {
    let accepted = |id: &Option<String>| id.as_deref().and_then(|s| draft.step(s)).filter(|s| s.is_accepted());
    let mut out = Vec::new();
    for code in &draft.codes {
        let Some(code_step) = draft.step(&code.step_id).filter(|s| s.is_accepted()) else { continue };
        let Some(StepOutput::BuggyCode { source, error_vector }) = &code_step.parsed else { continue };
        if error_vector.is_zero() {
            continue;
        }
        let mut steps = vec![code_step.id.clone()];
        let mut explanation = None;
        let mut bug = None;
        if let Some(expl_step) = accepted(&code.explanation_step) {
            if let Some(StepOutput::ExplanationFix { pairs }) = &expl_step.parsed {
                steps.push(expl_step.id.clone());
                explanation = pairs.first().map(|p| p.explanation.clone());
                let single = pairs.len() == 1;
                if let (true, Some(snip), Some(fixed)) = (single, accepted(&code.snippet_step), accepted(&code.fixed_step)) {
                    if let (Some(StepOutput::SnippetEdit { edit, applied_source: Some(applied), .. }), Some(StepOutput::FixedCode { .. })) =
                        (&snip.parsed, &fixed.parsed)
                    {
                        steps.push(snip.id.clone());
                        steps.push(fixed.id.clone());
                        bug = Some(BugRecord {
                            explanation: pairs[0].explanation.clone(),
                            fix_instruction: pairs[0].fix.clone(),
                            snippet_edit: edit.clone(),
                            fixed_source: applied.clone(),
                            verification: combined_status(&[&expl_step.status, &snip.status, &fixed.status]),
                        });
                    }
                }
            }
        }
        out.push(Candidate { id: code.id.clone(), source: source.clone(), vector: error_vector.clone(), explanation, bug, steps });
    }
    out
}

/// Edited if any contributing step was edited; edit times add up.
fn combined_status(statuses: &[&VerificationStatus]) -> VerificationStatus {
    let edited = statuses.iter().any(|s| s.state == VerificationState::Edited);
    let seconds: Vec<f64> = statuses.iter().filter_map(|s| s.edit_seconds).collect();
    VerificationStatus {
        state: if edited { VerificationState::Edited } else { VerificationState::Approved },
        editor: statuses.iter().rev().find_map(|s| s.editor.clone()),
        edit_seconds: if seconds.is_empty() { None } else { Some(seconds.iter().sum()) },
    }
}
