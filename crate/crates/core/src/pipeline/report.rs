//! Generation metrics per material type: number of generations, average
//! generation time, success rate, and average instructor edit time.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::draft::{GenerationStep, StepOutput, SuiteDraft};
use super::templates::TemplateId;
use crate::model::VerificationState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub material: String,
    pub generations: usize,
    pub avg_gen_seconds: f64,
    /// `None` until something has been decided.
    pub success_rate: Option<f64>,
    pub avg_edit_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

const GROUPS: [(&str, &[TemplateId]); 5] = [
    ("Test case description hint", &[TemplateId::TestCaseHint]),
    ("Test case category hint", &[TemplateId::CategoryHint]),
    ("Buggy code", &[TemplateId::BuggyCode]),
    ("Bug explanation and fix instruction", &[TemplateId::ExplanationFix]),
    ("Bug fix", &[TemplateId::FixTranslateStep1, TemplateId::FixTranslateStep2]),
];

/// Metrics over one or more drafts.
///
/// Buggy-code success is the share of behaviorally distinct buggy codes
/// among the distinct codes kept; for every other material it is the share
/// of decided steps approved without an edit.
pub fn metric_report(drafts: &[&SuiteDraft]) -> MetricReport {
    let rows = GROUPS
        .iter()
        .map(|(material, templates)| {
            let steps: Vec<&GenerationStep> =
                drafts.iter().flat_map(|d| d.steps.iter()).filter(|s| templates.contains(&s.template)).collect();
            let generations = steps.len();
            let avg_gen_seconds = mean(steps.iter().map(|s| s.wall_ms as f64 / 1000.0)).unwrap_or(0.0);
            let decided: Vec<&&GenerationStep> = steps.iter().filter(|s| !s.is_pending()).collect();
            let success_rate = if templates == &[TemplateId::BuggyCode] {
                buggy_success(drafts)
            } else if decided.is_empty() {
                None
            } else {
                let approved = decided.iter().filter(|s| s.status.state == VerificationState::Approved).count();
                Some(approved as f64 / decided.len() as f64)
            };
            let avg_edit_seconds = mean(decided.iter().map(|s| s.status.edit_seconds.unwrap_or(0.0)));
            MetricRow { material: material.to_string(), generations, avg_gen_seconds, success_rate, avg_edit_seconds }
        })
        .collect();
    MetricReport { rows }
}

fn buggy_success(drafts: &[&SuiteDraft]) -> Option<f64> {
    let mut total = 0;
    let mut distinct = 0;
    for draft in drafts {
        let mut seen = HashSet::new();
        for step in draft.steps.iter().filter(|s| s.template == TemplateId::BuggyCode) {
            if let Some(StepOutput::BuggyCode { error_vector, .. }) = &step.parsed {
                total += 1;
                if !error_vector.is_zero() && seen.insert(error_vector.clone()) {
                    distinct += 1;
                }
            }
        }
    }
    (total > 0).then(|| distinct as f64 / total as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `H:MM:SS`, rounded to the nearest second.
pub fn hms(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    format!("{}:{:02}:{:02}", total / 3600, total / 60 % 60, total % 60)
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| Material | # Generation | Avg. gen time | Success% | Avg. edit time |")?;
        writeln!(f, "|---|---:|---:|---:|---:|")?;
        for row in &self.rows {
            let success = row.success_rate.map_or("-".to_string(), |r| format!("{:.2}%", r * 100.0));
            let edit = row.avg_edit_seconds.map_or("-".to_string(), hms);
            writeln!(f, "| {} | {} | {} | {} | {} |", row.material, row.generations, hms(row.avg_gen_seconds), success, edit)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hms_format() {
        assert_eq!(hms(0.0), "0:00:00");
        assert_eq!(hms(37.4), "0:00:37");
        assert_eq!(hms(216.0), "0:03:36");
        assert_eq!(hms(3725.0), "1:02:05");
    }

    #[test]
    fn empty_report_has_five_rows() {
        let report = metric_report(&[]);
        assert_eq!(report.rows.len(), 5);
        assert!(report.rows.iter().all(|r| r.generations == 0 && r.success_rate.is_none()));
        assert!(report.to_string().starts_with("| Material | # Generation | Avg. gen time | Success% |"));
    }
}
