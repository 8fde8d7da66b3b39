//! Prompt templates.
//!
//! Each template is a small text file: `#` comment lines, `@model` and
//! `@temperature` directives, then role sections (`[system]`, `[user]`,
//! `[assistant]`). An assistant section whose whole text is `{llm_output}`
//! marks a model turn inside a chain; any other assistant text is a fixed
//! scripted turn. The optional `[refine]` section is the user turn appended
//! between iterative-refinement rounds. `{name}` placeholders (lowercase
//! identifiers only) are substituted at render time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    CategoryHint,
    TestCaseHint,
    BuggyCode,
    ExplanationFix,
    FixTranslateStep1,
    FixTranslateStep2,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::CategoryHint,
        TemplateId::TestCaseHint,
        TemplateId::BuggyCode,
        TemplateId::ExplanationFix,
        TemplateId::FixTranslateStep1,
        TemplateId::FixTranslateStep2,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::CategoryHint => "category_hint.txt",
            TemplateId::TestCaseHint => "test_case_hint.txt",
            TemplateId::BuggyCode => "buggy_code.txt",
            TemplateId::ExplanationFix => "explanation_fix.txt",
            TemplateId::FixTranslateStep1 => "fix_translate_step1.txt",
            TemplateId::FixTranslateStep2 => "fix_translate_step2.txt",
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            TemplateId::CategoryHint => include_str!("../../templates/category_hint.txt"),
            TemplateId::TestCaseHint => include_str!("../../templates/test_case_hint.txt"),
            TemplateId::BuggyCode => include_str!("../../templates/buggy_code.txt"),
            TemplateId::ExplanationFix => include_str!("../../templates/explanation_fix.txt"),
            TemplateId::FixTranslateStep1 => include_str!("../../templates/fix_translate_step1.txt"),
            TemplateId::FixTranslateStep2 => include_str!("../../templates/fix_translate_step2.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name().trim_end_matches(".txt"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTier {
    Standard,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Message { role, text: text.into() }
    }
}

/// Text of an assistant section that stands for a model turn.
pub const MODEL_TURN: &str = "{llm_output}";

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub model_tier: ModelTier,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub refine: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template {id}: {message}")]
    Malformed { id: TemplateId, message: String },
    #[error("template {id}: no value for placeholder {{{name}}}")]
    MissingVariable { id: TemplateId, name: String },
    #[error("reading template {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

impl PromptTemplate {
    pub fn parse(id: TemplateId, text: &str) -> Result<Self, TemplateError> {
        let malformed = |message: String| TemplateError::Malformed { id, message };
        let mut tier = None;
        let mut temperature = None;
        let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
        for line in text.lines() {
            if sections.is_empty() {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                if let Some(v) = trimmed.strip_prefix("@model") {
                    tier = Some(match v.trim() {
                        "standard" => ModelTier::Standard,
                        "strong" => ModelTier::Strong,
                        other => return Err(malformed(format!("unknown model tier {other}"))),
                    });
                    continue;
                }
                if let Some(v) = trimmed.strip_prefix("@temperature") {
                    temperature = Some(v.trim().parse::<f64>().map_err(|e| malformed(format!("bad temperature: {e}")))?);
                    continue;
                }
            }
            let t = line.trim();
            if t.starts_with('[') && t.ends_with(']') && matches!(t, "[system]" | "[user]" | "[assistant]" | "[refine]") {
                sections.push((t[1..t.len() - 1].to_string(), Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push(line);
            } else {
                return Err(malformed(format!("text before the first section: {line:?}")));
            }
        }
        let mut messages = Vec::new();
        let mut refine = None;
        for (name, body) in sections {
            let text = body.join("\n").trim().to_string();
            match name.as_str() {
                "system" => messages.push(Message::new(Role::System, text)),
                "user" => messages.push(Message::new(Role::User, text)),
                "assistant" => messages.push(Message::new(Role::Assistant, text)),
                "refine" => refine = Some(text),
                _ => unreachable!(),
            }
        }
        if !messages.last().is_some_and(|m| m.role == Role::User) {
            return Err(malformed("the last message must be a user turn".into()));
        }
        Ok(PromptTemplate {
            id,
            model_tier: tier.ok_or_else(|| malformed("missing @model".into()))?,
            temperature: temperature.ok_or_else(|| malformed("missing @temperature".into()))?,
            messages,
            refine,
        })
    }

    /// Substitutes placeholders in every message. The model-turn marker is
    /// left in place for the chain runner.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<Vec<Message>, TemplateError> {
        self.messages
            .iter()
            .map(|m| {
                if m.role == Role::Assistant && m.text == MODEL_TURN {
                    return Ok(m.clone());
                }
                Ok(Message::new(m.role, substitute(self.id, &m.text, vars)?))
            })
            .collect()
    }

    pub fn render_refine(&self, vars: &BTreeMap<&str, String>) -> Result<Option<String>, TemplateError> {
        self.refine.as_deref().map(|t| substitute(self.id, t, vars)).transpose()
    }
}

fn substitute(id: TemplateId, text: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for cap in PLACEHOLDER.captures_iter(text) {
        let whole = cap.get(0).unwrap();
        let name = &cap[1];
        if name == "llm_output" {
            continue;
        }
        let value = vars.get(name).ok_or_else(|| TemplateError::MissingVariable { id, name: name.to_string() })?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// The full template set.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .iter()
            .map(|&id| (id, PromptTemplate::parse(id, id.builtin_text()).expect("builtin templates parse")))
            .collect();
        TemplateSet { templates }
    }

    /// Loads one file per template from `dir`, falling back to the builtin
    /// text for files that are absent.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            let template = if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io { path: path.display().to_string(), source })?;
                PromptTemplate::parse(id, &text)?
            } else {
                PromptTemplate::parse(id, id.builtin_text())?
            };
            templates.insert(id, template);
        }
        Ok(TemplateSet { templates })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parameters() {
        let set = TemplateSet::builtin();
        let expect = [
            (TemplateId::CategoryHint, ModelTier::Standard, 0.3),
            (TemplateId::TestCaseHint, ModelTier::Standard, 0.1),
            (TemplateId::BuggyCode, ModelTier::Standard, 0.7),
            (TemplateId::ExplanationFix, ModelTier::Strong, 0.3),
            (TemplateId::FixTranslateStep1, ModelTier::Standard, 0.3),
            (TemplateId::FixTranslateStep2, ModelTier::Standard, 0.3),
        ];
        for (id, tier, t) in expect {
            let tpl = set.get(id);
            assert_eq!(tpl.model_tier, tier, "{id}");
            assert_eq!(tpl.temperature, t, "{id}");
        }
    }

    #[test]
    fn renders_placeholders_and_keeps_literal_braces() {
        let set = TemplateSet::builtin();
        let vars = BTreeMap::from([("problem_description", "P".to_string()), ("buggy_code", "CODE".to_string())]);
        let msgs = set.get(TemplateId::ExplanationFix).render(&vars).unwrap();
        assert_eq!(msgs.len(), 4);
        assert_eq!(msgs[2], Message::new(Role::Assistant, "Sure, let's take a look at your code."));
        assert!(msgs[3].text.starts_with("Here's my buggy code: CODE\n"));
        assert!(msgs[3].text.contains("{explanation: accurate and concise"));
        assert!(msgs[3].text.contains("List all the unique bugs included, but do not make up bugs"));
    }

    #[test]
    fn chain_marker_survives_render() {
        let set = TemplateSet::builtin();
        let vars = BTreeMap::from([("problem_description", "P".to_string()), ("test_case", "T".to_string())]);
        let msgs = set.get(TemplateId::TestCaseHint).render(&vars).unwrap();
        assert_eq!(msgs[2].text, MODEL_TURN);
        assert!(msgs[3].text.ends_with("Use this template: Write a test case to cover the scenario where ..."));
    }

    #[test]
    fn missing_variable_is_an_error() {
        let set = TemplateSet::builtin();
        let err = set.get(TemplateId::CategoryHint).render(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TemplateError::MissingVariable { ref name, .. } if name == "problem_description"));
    }

    #[test]
    fn refine_section_parsed() {
        let tpl = TemplateSet::builtin().get(TemplateId::BuggyCode).clone();
        assert_eq!(tpl.messages.len(), 2);
        assert!(tpl.refine.unwrap().contains("different common mistakes"));
    }

    #[test]
    fn malformed_templates() {
        assert!(PromptTemplate::parse(TemplateId::CategoryHint, "@model standard\n[user]\nx").is_err());
        assert!(PromptTemplate::parse(TemplateId::CategoryHint, "@model huge\n@temperature 1\n[user]\nx").is_err());
        assert!(PromptTemplate::parse(TemplateId::CategoryHint, "@model standard\n@temperature 1\n[system]\nx").is_err());
    }
}
