//! Snippet edits, line diffs, and fix-locality checks.

use serde::{Deserialize, Serialize};
use similar::{ChangeTag, TextDiff};

/// An `old -> new` replacement applied to the first occurrence of
/// `old_snippet`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetEdit {
    pub old_snippet: String,
    pub new_snippet: String,
}

impl SnippetEdit {
    pub fn new(old: impl Into<String>, new: impl Into<String>) -> Self {
        SnippetEdit { old_snippet: old.into(), new_snippet: new.into() }
    }

    /// Byte range of the first occurrence of the old snippet.
    pub fn locate(&self, source: &str) -> Option<std::ops::Range<usize>> {
        if self.old_snippet.is_empty() {
            return None;
        }
        source.find(&self.old_snippet).map(|start| start..start + self.old_snippet.len())
    }

    /// `source` with the first occurrence replaced, or `None` if the old
    /// snippet does not occur.
    pub fn apply(&self, source: &str) -> Option<String> {
        let range = self.locate(source)?;
        let mut out = String::with_capacity(source.len() + self.new_snippet.len());
        out.push_str(&source[..range.start]);
        out.push_str(&self.new_snippet);
        out.push_str(&source[range.end..]);
        Some(out)
    }

    /// Zero-based inclusive line span covered by the first occurrence.
    pub fn line_span(&self, source: &str) -> Option<(usize, usize)> {
        let range = self.locate(source)?;
        let first = source[..range.start].matches('\n').count();
        let last = source[..range.end - 1].matches('\n').count();
        Some((first, last.max(first)))
    }

    pub fn is_noop(&self) -> bool {
        self.old_snippet == self.new_snippet
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffTag {
    Equal,
    Delete,
    Insert,
}

/// One line of a line-level diff. Line numbers are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub tag: DiffTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_line: Option<usize>,
    pub text: String,
}

pub fn line_diff(before: &str, after: &str) -> Vec<DiffLine> {
    let diff = TextDiff::from_lines(before, after);
    diff.iter_all_changes()
        .map(|change| DiffLine {
            tag: match change.tag() {
                ChangeTag::Equal => DiffTag::Equal,
                ChangeTag::Delete => DiffTag::Delete,
                ChangeTag::Insert => DiffTag::Insert,
            },
            old_line: change.old_index(),
            new_line: change.new_index(),
            text: change.value().trim_end_matches(['\n', '\r']).to_string(),
        })
        .collect()
}

pub fn unified_diff(before: &str, after: &str, label: &str) -> String {
    TextDiff::from_lines(before, after)
        .unified_diff()
        .context_radius(2)
        .header(&format!("a/{label}"), &format!("b/{label}"))
        .to_string()
}

/// Whether every changed line of `before -> after` lies within the lines
/// covered by the edit's first occurrence in `before`.
pub fn diff_is_local(before: &str, after: &str, edit: &SnippetEdit) -> bool {
    let Some((first, last)) = edit.line_span(before) else {
        return false;
    };
    // Old-side position of the next unchanged line, used to place inserts.
    let mut old_cursor = 0usize;
    for line in line_diff(before, after) {
        match line.tag {
            DiffTag::Equal => old_cursor = line.old_line.map_or(old_cursor, |i| i + 1),
            DiffTag::Delete => {
                let i = line.old_line.unwrap_or(old_cursor);
                if i < first || i > last {
                    return false;
                }
                old_cursor = i + 1;
            }
            DiffTag::Insert => {
                if old_cursor < first || old_cursor > last + 1 {
                    return false;
                }
            }
        }
    }
    true
}

/// Normalizes line endings and trailing whitespace so that model output can
/// be compared with a mechanically edited source.
pub fn normalize_source(source: &str) -> String {
    let mut lines: Vec<&str> = source.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUGGY: &str = "def f(xs, key):\n    for x in xs:\n        if x > key:\n            return x\n        else:\n            return None\n";

    #[test]
    fn apply_replaces_first_occurrence_only() {
        let edit = SnippetEdit::new("x", "y");
        assert_eq!(edit.apply("x x").unwrap(), "y x");
        assert!(SnippetEdit::new("zz", "y").apply("x").is_none());
        assert!(SnippetEdit::new("", "y").apply("x").is_none());
    }

    #[test]
    fn line_span_of_multiline_snippet() {
        let edit = SnippetEdit::new("        else:\n            return None\n", "    return None\n");
        assert_eq!(edit.line_span(BUGGY), Some((4, 5)));
        let single = SnippetEdit::new("x > key", "x >= key");
        assert_eq!(single.line_span(BUGGY), Some((2, 2)));
    }

    #[test]
    fn moving_return_outside_loop_is_local() {
        let edit = SnippetEdit::new("        else:\n            return None\n", "    return None\n");
        let after = edit.apply(BUGGY).unwrap();
        assert!(after.ends_with("            return x\n    return None\n"));
        assert!(diff_is_local(BUGGY, &after, &edit));
        let diff = line_diff(BUGGY, &after);
        assert_eq!(diff.iter().filter(|l| l.tag == DiffTag::Delete).count(), 2);
        assert_eq!(diff.iter().filter(|l| l.tag == DiffTag::Insert).count(), 1);
    }

    #[test]
    fn change_outside_snippet_is_not_local() {
        let edit = SnippetEdit::new("x > key", "x >= key");
        let overfixed = BUGGY.replace("x > key", "x >= key").replace("        else:\n            return None\n", "    return None\n");
        assert!(!diff_is_local(BUGGY, &overfixed, &edit));
    }

    #[test]
    fn normalization_ignores_trailing_whitespace() {
        assert_eq!(normalize_source("a  \r\nb\n\n\n"), "a\nb\n");
        assert_eq!(normalize_source("a\nb"), normalize_source("a\nb\n"));
    }
}
