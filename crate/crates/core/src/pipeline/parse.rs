//! Parsers that turn raw model output into domain values.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::patch::SnippetEdit;

/// Opening words every test-case hint must start with.
pub const HINT_STEM: &str = "Write a test case to cover the scenario where";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ParseError(pub String);

fn fail<T>(msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationFix {
    pub explanation: String,
    pub fix: String,
}

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)]|\(\d+\))\s*").unwrap());

fn strip_wrapping(s: &str) -> &str {
    let s = s.trim();
    let s = s.trim_matches(|c| c == '"' || c == '\'' || c == '`' || c == '*');
    s.trim().trim_end_matches(['.', ',', ';']).trim()
}

/// Exactly three category names of 3-6 words each.
pub fn parse_categories(text: &str) -> Result<Vec<String>, ParseError> {
    let mut items: Vec<String> = text
        .lines()
        .map(|l| LIST_MARKER.replace(l, "").to_string())
        .map(|l| strip_wrapping(&l).to_string())
        .filter(|l| !l.is_empty() && !l.ends_with(':'))
        .collect();
    if items.len() == 1 && items[0].contains(',') {
        items = items[0].split(',').map(|s| strip_wrapping(s).to_string()).filter(|s| !s.is_empty()).collect();
    }
    if items.len() != 3 {
        return fail(format!("expected 3 categories, found {}", items.len()));
    }
    for item in &items {
        let words = item.split_whitespace().count();
        if !(3..=6).contains(&words) {
            return fail(format!("category {item:?} has {words} words, expected 3-6"));
        }
    }
    Ok(items)
}

/// The one-sentence hint beginning with [`HINT_STEM`].
pub fn parse_test_hint(text: &str) -> Result<String, ParseError> {
    let lower = text.to_lowercase();
    let Some(start) = lower.find(&HINT_STEM.to_lowercase()) else {
        return fail("hint does not use the required template");
    };
    let rest = &text[start..];
    let sentence = rest.lines().next().unwrap_or_default();
    let sentence = sentence.trim().trim_end_matches(['"', '\'']).trim();
    let clause = sentence[HINT_STEM.len()..].trim().trim_end_matches(['.', '…']).trim();
    if clause.is_empty() || clause == "..." || clause.chars().all(|c| c == '.') {
        return fail("hint has an empty scenario clause");
    }
    let mut hint = format!("{HINT_STEM} {clause}");
    hint.push('.');
    Ok(hint)
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[a-zA-Z0-9_+-]*[ \t]*\r?\n(.*?)```").unwrap());

/// Code blocks in a model answer: fenced blocks when present, otherwise
/// chunks starting at each top-level `def <function_name>`.
pub fn extract_code_blocks(text: &str, function_name: &str) -> Vec<String> {
    let fenced: Vec<String> = FENCE.captures_iter(text).map(|c| c[1].to_string()).filter(|b| !b.trim().is_empty()).collect();
    if !fenced.is_empty() {
        return fenced.into_iter().map(|b| ensure_newline(b.trim_end())).collect();
    }
    let head = format!("def {function_name}(");
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if line.starts_with(&head) {
            if let Some(b) = current.take() {
                blocks.push(b);
            }
            current = Some(vec![line]);
        } else if let Some(b) = current.as_mut() {
            let is_code = line.is_empty() || line.starts_with([' ', '\t', '#']);
            if is_code {
                b.push(line);
            } else {
                blocks.push(current.take().unwrap());
            }
        }
    }
    if let Some(b) = current {
        blocks.push(b);
    }
    blocks.into_iter().map(|b| ensure_newline(b.join("\n").trim_end())).collect()
}

fn ensure_newline(s: &str) -> String {
    let mut s = s.to_string();
    s.push('\n');
    s
}

/// Removes comments from Python source: comment-only lines are dropped and
/// trailing comments are cut, leaving string literals intact.
pub fn strip_comments(source: &str) -> String {
    let mut out = Vec::new();
    // Open triple-quote delimiter carried across lines.
    let mut in_triple: Option<&str> = None;
    for line in source.lines() {
        let bytes = line.as_bytes();
        let mut i = 0;
        let mut cut = None;
        let mut quote: Option<u8> = None;
        while i < bytes.len() {
            if let Some(delim) = in_triple {
                if line[i..].starts_with(delim) {
                    in_triple = None;
                    i += 3;
                } else {
                    i += 1;
                }
                continue;
            }
            let c = bytes[i];
            match quote {
                Some(q) => {
                    if c == b'\\' {
                        i += 2;
                        continue;
                    }
                    if c == q {
                        quote = None;
                    }
                }
                None => {
                    if line[i..].starts_with("\"\"\"") {
                        in_triple = Some("\"\"\"");
                        i += 3;
                        continue;
                    }
                    if line[i..].starts_with("'''") {
                        in_triple = Some("'''");
                        i += 3;
                        continue;
                    }
                    if c == b'"' || c == b'\'' {
                        quote = Some(c);
                    } else if c == b'#' {
                        cut = Some(i);
                        break;
                    }
                }
            }
            i += 1;
        }
        match cut {
            Some(at) => {
                let kept = line[..at].trim_end();
                if !kept.trim().is_empty() {
                    out.push(kept.to_string());
                }
            }
            None => out.push(line.trim_end().to_string()),
        }
    }
    while out.last().is_some_and(|l| l.is_empty()) {
        out.pop();
    }
    let mut text = out.join("\n");
    text.push('\n');
    text
}

static EXPL_FIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?is)["']?explanation["']?\s*:\s*(.*?)\s*,?\s*["']?fix["']?\s*:\s*(.*)"#).unwrap()
});

/// The bullet list of `{explanation: ..., fix: ...}` entries.
pub fn parse_explanations(text: &str) -> Result<Vec<ExplanationFix>, ParseError> {
    let mut pairs = Vec::new();
    for chunk in brace_groups(text) {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&chunk) {
            if let (Some(e), Some(f)) = (v.get("explanation").and_then(|x| x.as_str()), v.get("fix").and_then(|x| x.as_str())) {
                pairs.push(ExplanationFix { explanation: e.trim().to_string(), fix: f.trim().to_string() });
                continue;
            }
        }
        let inner = chunk.trim().trim_start_matches('{').trim_end_matches('}');
        if let Some(c) = EXPL_FIX.captures(inner) {
            let explanation = strip_wrapping(&c[1]).to_string();
            let fix = strip_wrapping(&c[2]).to_string();
            if !explanation.is_empty() && !fix.is_empty() {
                pairs.push(ExplanationFix { explanation: restore_period(&c[1], explanation), fix: restore_period(&c[2], fix) });
            }
        }
    }
    if pairs.is_empty() {
        // Bullets without braces.
        for line in text.lines() {
            let line = LIST_MARKER.replace(line, "");
            if let Some(c) = EXPL_FIX.captures(&line) {
                let explanation = strip_wrapping(&c[1]).to_string();
                let fix = strip_wrapping(&c[2]).to_string();
                if !explanation.is_empty() && !fix.is_empty() {
                    pairs.push(ExplanationFix { explanation: restore_period(&c[1], explanation), fix: restore_period(&c[2], fix) });
                }
            }
        }
    }
    if pairs.is_empty() {
        return fail("no {explanation, fix} entries found");
    }
    Ok(pairs)
}

/// Keeps a sentence-final period that [`strip_wrapping`] removed.
fn restore_period(raw: &str, stripped: String) -> String {
    let raw = raw.trim().trim_end_matches(['"', '\'', ',']).trim_end();
    if raw.ends_with('.') && !stripped.ends_with('.') {
        format!("{stripped}.")
    } else {
        stripped
    }
}

/// Top-level `{...}` groups, honoring nesting.
fn brace_groups(text: &str) -> Vec<String> {
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    groups.push(text[start..=i].to_string());
                }
            }
            _ => {}
        }
    }
    groups
}

static SNIPPET_LABELED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)original\s+code\s+snippet\s*:\s*(.*?)\s*(?:->|→)\s*edited\s+code\s+snippet\s*:\s*(.*?)\s*\}?\s*$").unwrap()
});

/// The `old -> new` snippet pair.
pub fn parse_snippet_edit(text: &str) -> Result<SnippetEdit, ParseError> {
    let text = text.trim();
    if let Some(edit) = json_snippet(text) {
        return Ok(edit);
    }
    let (old, new) = if let Some(c) = SNIPPET_LABELED.captures(text) {
        (c[1].to_string(), c[2].to_string())
    } else {
        let body = text.trim_start_matches('{').trim_end_matches('}');
        let Some((old, new)) = split_arrow(body) else {
            return fail("no `old -> new` snippet pair found");
        };
        (old.to_string(), new.to_string())
    };
    let old = unquote_snippet(&old);
    let new = unquote_snippet(&new);
    if old.trim().is_empty() {
        return fail("original snippet is empty");
    }
    Ok(SnippetEdit::new(old, new))
}

fn json_snippet(text: &str) -> Option<SnippetEdit> {
    let v: serde_json::Value = serde_json::from_str(text).ok()?;
    let obj = v.as_object()?;
    let find = |needle: &str| obj.iter().find(|(k, _)| k.to_lowercase().contains(needle)).and_then(|(_, v)| v.as_str());
    let old = find("original").or_else(|| find("old"))?;
    let new = find("edited").or_else(|| find("new"))?;
    Some(SnippetEdit::new(old, new))
}

fn split_arrow(body: &str) -> Option<(&str, &str)> {
    for arrow in ["\" -> \"", "\"\" -> \"\"", " -> ", " → ", "->", "→"] {
        if let Some(i) = body.find(arrow) {
            let quote_len = arrow.chars().take_while(|&c| c == '"').count();
            let (old, new) = (&body[..i + quote_len], &body[i + arrow.len() - quote_len..]);
            return Some((old, new));
        }
    }
    None
}

/// Strips the quoting around a snippet while keeping its inner indentation.
fn unquote_snippet(raw: &str) -> String {
    let t = raw.trim_matches(|c: char| c == ',' || c.is_whitespace() && c != ' ');
    let t = t.trim_end();
    let t = t.trim_start_matches(['\n', '\r']);
    let inner = if let Some(c) = FENCE.captures(t) {
        c[1].trim_end_matches('\n').to_string()
    } else {
        let t = t.trim_start();
        let mut s = t;
        for q in ["\"\"", "\"", "`", "'"] {
            if s.len() >= 2 * q.len() && s.starts_with(q) && s.ends_with(q) {
                s = &s[q.len()..s.len() - q.len()];
                break;
            }
        }
        s.to_string()
    };
    if !inner.contains('\n') && inner.contains("\\n") {
        inner.replace("\\n", "\n").replace("\\t", "\t").replace("\\\"", "\"")
    } else {
        inner
    }
}

/// Full fixed program: the first fenced block, or the whole text.
pub fn parse_fixed_code(text: &str) -> Result<String, ParseError> {
    let code = match FENCE.captures(text) {
        Some(c) => c[1].to_string(),
        None => text.to_string(),
    };
    let code = code.trim_end();
    if code.trim().is_empty() {
        return fail("no code in answer");
    }
    Ok(ensure_newline(code.trim_start_matches(['\n', '\r'])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_from_numbered_list() {
        let text = "1. Empty list as input\n2. No number greater than key\n3. \"Greater number appears later\"";
        assert_eq!(
            parse_categories(text).unwrap(),
            vec!["Empty list as input", "No number greater than key", "Greater number appears later"]
        );
        assert!(parse_categories("- one two three\n- four five six").is_err());
        assert!(parse_categories("- a\n- b c d\n- e f g").is_err());
        assert_eq!(parse_categories("Here are the aspects:\n- a b c\n- d e f\n- g h i j").unwrap().len(), 3);
    }

    #[test]
    fn hint_requires_stem_and_clause() {
        let h = parse_test_hint("Sure! Write a test case to cover the scenario where no number in the list is greater than the key.").unwrap();
        assert_eq!(h, "Write a test case to cover the scenario where no number in the list is greater than the key.");
        assert!(parse_test_hint("Write a test case to cover the scenario where ...").is_err());
        assert!(parse_test_hint("Write a test case to cover the scenario where").is_err());
        assert!(parse_test_hint("Test the empty list.").is_err());
    }

    #[test]
    fn code_blocks_fenced_and_bare() {
        let fenced = "Buggy code #1:\n```python\ndef f(x):\n    return x\n```\nBuggy code #2:\n```\ndef f(x):\n    return 0\n```";
        assert_eq!(extract_code_blocks(fenced, "f"), vec!["def f(x):\n    return x\n", "def f(x):\n    return 0\n"]);
        let bare = "Solution 1\ndef f(x):\n    return x\n\nSolution 2\ndef f(x):\n    return 1\n";
        assert_eq!(extract_code_blocks(bare, "f"), vec!["def f(x):\n    return x\n", "def f(x):\n    return 1\n"]);
    }

    #[test]
    fn comments_stripped_strings_kept() {
        let src = "# header\ndef f(x):  # trailing\n    s = '# not a comment'\n    # the operator should actually be >\n    return x  \n";
        assert_eq!(strip_comments(src), "def f(x):\n    s = '# not a comment'\n    return x\n");
        let doc = "def f():\n    \"\"\"doc # kept\n    more\"\"\"\n    return 1 # gone\n";
        assert_eq!(strip_comments(doc), "def f():\n    \"\"\"doc # kept\n    more\"\"\"\n    return 1\n");
    }

    #[test]
    fn explanation_bullets() {
        let text = "- {explanation: The code returns None if the first number is not greater than the key. It doesn't check the rest of the numbers., fix: Move the return None statement outside of the loop.}";
        let pairs = parse_explanations(text).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!(pairs[0].explanation.ends_with("rest of the numbers."), "{:?}", pairs[0]);
        assert_eq!(pairs[0].fix, "Move the return None statement outside of the loop.");

        let json = "- {\"explanation\": \"A\", \"fix\": \"B\"}\n- {\"explanation\": \"C\", \"fix\": \"D\"}";
        assert_eq!(parse_explanations(json).unwrap().len(), 2);
        assert!(parse_explanations("Your code looks fine").is_err());
    }

    #[test]
    fn snippet_pair_formats() {
        let labeled = "{original code snippet: \"\"numbers_list[i] <= key\"\" -> edited code snippet: \"\"numbers_list[i] > key\"\"}";
        assert_eq!(parse_snippet_edit(labeled).unwrap(), SnippetEdit::new("numbers_list[i] <= key", "numbers_list[i] > key"));
        let simple = "{\"numbers_list[i] <= key\" -> \"numbers_list[i] > key\"}";
        assert_eq!(parse_snippet_edit(simple).unwrap(), SnippetEdit::new("numbers_list[i] <= key", "numbers_list[i] > key"));
        let escaped = "{original code snippet: \"\"        else:\\n            return None\"\" -> edited code snippet: \"\"    return None\"\"}";
        assert_eq!(parse_snippet_edit(escaped).unwrap(), SnippetEdit::new("        else:\n            return None", "    return None"));
        let json = r#"{"original code snippet": "a", "edited code snippet": "b"}"#;
        assert_eq!(parse_snippet_edit(json).unwrap(), SnippetEdit::new("a", "b"));
        assert!(parse_snippet_edit("nothing here").is_err());
    }

    #[test]
    fn fixed_code() {
        assert_eq!(parse_fixed_code("```python\ndef f():\n    pass\n```").unwrap(), "def f():\n    pass\n");
        assert_eq!(parse_fixed_code("def f():\n    pass").unwrap(), "def f():\n    pass\n");
        assert!(parse_fixed_code("  ").is_err());
    }
}
