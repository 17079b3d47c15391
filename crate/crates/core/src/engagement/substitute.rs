//! Sensitive-phrase rewriting for model context.
//!
//! Matching is case-insensitive and longest-first. Phrases that begin or end
//! with a Latin letter or digit only match on word edges, so `show` leaves
//! `shower` alone; CJK phrases match anywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rewrites are repeated until the text stops changing, up to this many passes.
const MAX_PASSES: usize = 8;

#[derive(Debug, Error)]
pub enum SubstitutionError {
    #[error("empty sensitive phrase")]
    EmptyPhrase,
    #[error("replacement {replacement:?} for {phrase:?} contains a sensitive phrase")]
    LoopingReplacement { phrase: String, replacement: String },
    #[error("reading substitution table: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing substitution table: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionPair {
    pub phrase: String,
    pub replacement: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct TableFile {
    #[serde(default)]
    pairs: Vec<SubstitutionPair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Compiled {
    folded: Vec<char>,
    replacement: String,
    edge_start: bool,
    edge_end: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionTable {
    pairs: Vec<SubstitutionPair>,
    /// Longest phrase first.
    compiled: Vec<Compiled>,
}

fn fold(s: &str) -> Vec<char> {
    s.chars().flat_map(char::to_lowercase).collect()
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric()
}

impl Default for SubstitutionTable {
    fn default() -> Self {
        let pairs = [
            ("nude video chat", "video chat"),
            ("naked video chat", "video chat"),
            ("nude chat", "chat"),
            ("naked chat", "chat"),
            ("sex chat", "chat"),
            ("nude", "casual"),
            ("naked", "casual"),
            ("sexy", "friendly"),
            ("porn", "content"),
            ("裸聊", "聊天"),
            ("色聊", "聊天"),
            ("裸体", "私人"),
            ("色情", "特别"),
        ];
        Self::new(pairs.iter().map(|(p, r)| SubstitutionPair { phrase: p.to_string(), replacement: r.to_string() }))
            .expect("default table is loop-free")
    }
}

impl SubstitutionTable {
    pub fn new(pairs: impl IntoIterator<Item = SubstitutionPair>) -> Result<Self, SubstitutionError> {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let mut compiled = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let folded = fold(&p.phrase);
            let (Some(first), Some(last)) = (folded.first(), folded.last()) else {
                return Err(SubstitutionError::EmptyPhrase);
            };
            compiled.push(Compiled {
                edge_start: is_word(*first),
                edge_end: is_word(*last),
                folded,
                replacement: p.replacement.clone(),
            });
        }
        // Stable: among equal lengths, earlier pairs win.
        compiled.sort_by_key(|c| std::cmp::Reverse(c.folded.len()));
        let table = Self { pairs, compiled };
        for p in &table.pairs {
            if table.find(&p.replacement).is_some() {
                return Err(SubstitutionError::LoopingReplacement {
                    phrase: p.phrase.clone(),
                    replacement: p.replacement.clone(),
                });
            }
        }
        Ok(table)
    }

    /// Reads a TOML file of `[[pairs]]` tables with `phrase` and `replacement`.
    pub fn load(path: &Path) -> Result<Self, SubstitutionError> {
        let file: TableFile = toml::from_str(&std::fs::read_to_string(path)?)?;
        Self::new(file.pairs)
    }

    pub fn pairs(&self) -> &[SubstitutionPair] {
        &self.pairs
    }

    /// This table followed by `extra`. Used for the softer retry tier.
    pub fn extended(&self, extra: &[SubstitutionPair]) -> Result<Self, SubstitutionError> {
        Self::new(self.pairs.iter().chain(extra).cloned())
    }

    /// Extra rewrites applied after a refusal.
    pub fn softening_pairs() -> Vec<SubstitutionPair> {
        [
            ("private chat", "chat"),
            ("adult", "grown-up"),
            ("explicit", "detailed"),
            ("hot", "nice"),
            ("body", "look"),
            ("show", "session"),
            ("成人", "大人"),
            ("私密", "私下"),
        ]
        .iter()
        .map(|(p, r)| SubstitutionPair { phrase: p.to_string(), replacement: r.to_string() })
        .collect()
    }

    /// Byte range and replacement of the first match, if any.
    fn find(&self, text: &str) -> Option<(usize, usize, &str)> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        for i in 0..chars.len() {
            if let Some((end, rep)) = self.match_at(&chars, i) {
                let start_byte = chars[i].0;
                let end_byte = chars.get(end).map_or(text.len(), |(b, _)| *b);
                return Some((start_byte, end_byte, rep));
            }
        }
        None
    }

    /// Longest phrase matching at char index `i`; returns the char index just past it.
    fn match_at(&self, chars: &[(usize, char)], i: usize) -> Option<(usize, &str)> {
        let prev_word = i > 0 && is_word(chars[i - 1].1);
        'phrases: for c in &self.compiled {
            if c.edge_start && prev_word {
                continue;
            }
            let mut want = c.folded.iter();
            let mut j = i;
            let mut pending: Vec<char> = Vec::new();
            loop {
                if pending.is_empty() {
                    if want.len() == 0 {
                        break;
                    }
                    let Some((_, ch)) = chars.get(j) else { continue 'phrases };
                    pending = ch.to_lowercase().collect();
                    pending.reverse();
                    j += 1;
                }
                match (pending.pop(), want.next()) {
                    (Some(a), Some(b)) if a == *b => {}
                    _ => continue 'phrases,
                }
                if want.len() == 0 && !pending.is_empty() {
                    continue 'phrases;
                }
            }
            if c.edge_end && chars.get(j).is_some_and(|(_, ch)| is_word(*ch)) {
                continue;
            }
            return Some((j, c.replacement.as_str()));
        }
        None
    }

    fn pass(&self, text: &str) -> String {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = String::with_capacity(text.len());
        let mut i = 0;
        while i < chars.len() {
            match self.match_at(&chars, i) {
                Some((end, rep)) => {
                    out.push_str(rep);
                    i = end;
                }
                None => {
                    out.push(chars[i].1);
                    i += 1;
                }
            }
        }
        out
    }

    /// Rewrites every table phrase. Replacements can bring separated words
    /// together (`nude nude chat`), so passes repeat until nothing changes.
    pub fn apply(&self, text: &str) -> String {
        let mut current = text.to_string();
        for _ in 0..MAX_PASSES {
            if self.find(&current).is_none() {
                break;
            }
            current = self.pass(&current);
        }
        current
    }
}
