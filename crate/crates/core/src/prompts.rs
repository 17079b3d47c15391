//! Prompt templates with `{name}` placeholders.
//!
//! The shipped defaults live in `prompts/` and paraphrase the intended
//! contract of each call; none of them is a verbatim historical prompt.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

pub const RELEVANCE: &str = include_str!("../prompts/relevance.txt");
pub const SYNONYMS: &str = include_str!("../prompts/synonyms.txt");
pub const ENGAGEMENT_SYSTEM: &str = include_str!("../prompts/engagement_system.txt");
pub const ENGAGEMENT_NEUTRAL: &str = include_str!("../prompts/engagement_neutral.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("reading template {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("template {name} is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder { name: String, placeholder: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

fn placeholders(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                out.insert(after[..close].to_string());
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PromptTemplate {
    pub fn new(name: &str, text: impl Into<String>, required: &[&str]) -> Result<Self, PromptError> {
        let text = text.into();
        let found = placeholders(&text);
        if let Some(p) = required.iter().find(|p| !found.contains(**p)) {
            return Err(PromptError::MissingPlaceholder { name: name.to_string(), placeholder: p.to_string() });
        }
        Ok(Self { name: name.to_string(), text })
    }

    pub fn load(path: &Path, required: &[&str]) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
        Self::new(&path.display().to_string(), text, required)
    }

    pub fn relevance() -> Self {
        Self::new("relevance", RELEVANCE, &["digest"]).expect("shipped template")
    }

    pub fn synonyms() -> Self {
        Self::new("synonyms", SYNONYMS, &["term", "fanout"]).expect("shipped template")
    }

    pub fn engagement_system() -> Self {
        Self::new("engagement_system", ENGAGEMENT_SYSTEM, &[]).expect("shipped template")
    }

    pub fn engagement_neutral() -> Self {
        Self::new("engagement_neutral", ENGAGEMENT_NEUTRAL, &[]).expect("shipped template")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes known placeholders in one pass; inserted values are never
    /// re-scanned, and unknown placeholders are left as written.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = after
                .find('}')
                .and_then(|close| vars.iter().find(|(k, _)| *k == &after[..close]).map(|(_, v)| (close, *v)));
            match hit {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out.trim_end().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_single_pass() {
        let t = PromptTemplate::new("t", "a {x} b {y} {z}", &["x"]).unwrap();
        assert_eq!(t.render(&[("x", "{y}"), ("y", "2")]), "a {y} b 2 {z}");
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        assert!(PromptTemplate::new("t", "no slots", &["digest"]).is_err());
    }

    #[test]
    fn shipped_templates_parse() {
        assert!(PromptTemplate::relevance().text().contains("{digest}"));
        let s = PromptTemplate::synonyms().render(&[("term", "sexy chat"), ("fanout", "2")]);
        assert!(s.contains("\"sexy chat\"") && s.contains("up to 2"));
    }
}
