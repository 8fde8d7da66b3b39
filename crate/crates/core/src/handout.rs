//! Printable markdown version of a verified practice suite.

use std::fmt::Write;

use crate::model::PracticeSuite;
use crate::patch::unified_diff;

#[derive(Debug, thiserror::Error)]
pub enum HandoutError {
    #[error("suite for {0} is not verified; finish verification before exporting")]
    Unverified(String),
}

/// Renders the suite as a markdown handout: the exercise, test categories
/// and hints, each agent's code with its explanation options, and an answer
/// key. Sections without content are left out.
pub fn export_handout(suite: &PracticeSuite) -> Result<String, HandoutError> {
    let exercise = &suite.exercise;
    if !suite.verified {
        return Err(HandoutError::Unverified(exercise.id.clone()));
    }
    let mut out = String::new();
    let _ = writeln!(out, "# Debugging practice: `{}`\n", exercise.function_name);
    let _ = writeln!(out, "## Exercise\n\n{}\n", exercise.description.trim());

    if !suite.category_hints.is_empty() {
        let _ = writeln!(out, "## Test categories\n");
        for category in &suite.category_hints {
            let _ = writeln!(out, "- {}", category.name);
        }
        out.push('\n');
    }
    if !suite.test_case_hints.is_empty() {
        let _ = writeln!(out, "## Test case hints\n");
        for (i, hint) in suite.test_case_hints.iter().enumerate() {
            let _ = writeln!(out, "{}. {}", i + 1, hint.text);
        }
        out.push('\n');
    }

    let mut key = String::new();
    if !suite.practice_codes.is_empty() {
        let _ = writeln!(out, "## Students to help\n");
    }
    for (n, code) in suite.practice_codes.iter().enumerate() {
        let name = code.agent_name.clone().unwrap_or_else(|| format!("Student {}", n + 1));
        let _ = writeln!(out, "### {name}\n\n```python\n{}\n```\n", code.source.trim_end());
        let (Some(bug), Some(pool)) = (&code.bug, &code.explanation_pool) else { continue };

        // Alphabetical order hides which option is correct.
        let mut options: Vec<(&str, Option<&crate::model::DistractorLink>)> = vec![(bug.explanation.as_str(), None)];
        options.extend(pool.distractors.iter().map(|l| (l.explanation_text.as_str(), Some(l))));
        options.sort_by(|a, b| a.0.cmp(b.0));

        let _ = writeln!(out, "Which explanation describes {name}'s bug?\n");
        for (i, (text, _)) in options.iter().enumerate() {
            let _ = writeln!(out, "- ({}) {}", letter(i), text);
        }
        out.push('\n');

        let correct = options.iter().position(|(_, link)| link.is_none()).expect("correct option present");
        let _ = writeln!(key, "### {name}\n\nCorrect: ({}) {}\n\nFix: {}\n", letter(correct), bug.explanation, bug.fix_instruction);
        let diff = unified_diff(&code.source, &bug.fixed_source, &exercise.function_name);
        let _ = writeln!(key, "```diff\n{}\n```\n", diff.trim_end());
        for (i, (_, link)) in options.iter().enumerate() {
            let Some(link) = link else { continue };
            let calls: Vec<String> = link
                .discriminating_inputs
                .iter()
                .filter_map(|&j| exercise.reference_inputs.get(j))
                .map(|input| format!("`{}`", input.call_expr(&exercise.function_name)))
                .collect();
            let _ = writeln!(key, "- ({}) is ruled out by {}", letter(i), calls.join(", "));
        }
        key.push('\n');
    }
    if !key.is_empty() {
        let _ = writeln!(out, "## Answer key\n\n{}", key.trim_end());
    }
    Ok(out)
}

fn letter(i: usize) -> char {
    (b'a' + i as u8) as char
}
