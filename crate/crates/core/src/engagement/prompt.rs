//! Model context for reply drafting, with progressively softer retry tiers.

use serde::{Deserialize, Serialize};

use super::substitute::{SubstitutionError, SubstitutionTable};
use crate::domain::{ChatMessage, Conversation, Direction};
use crate::llm::{ChatRequest, ChatTurn, Purpose};
use crate::prompts::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTier {
    Standard,
    /// Adds the softening rewrites on top of the base table.
    ExtraSubstitution,
    /// Also hides what the other side wrote, keeping only our own turns.
    StripInbound,
    /// A bare neutral request with no conversation history.
    Minimal,
}

impl PromptTier {
    /// Tier n is used on the n-th consecutive retry.
    pub fn for_retry(retry_counter: u32) -> Self {
        match retry_counter {
            0 => PromptTier::Standard,
            1 => PromptTier::ExtraSubstitution,
            2 => PromptTier::StripInbound,
            _ => PromptTier::Minimal,
        }
    }

    pub fn index(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Clone)]
pub struct DraftPrompts {
    pub system: PromptTemplate,
    pub neutral: PromptTemplate,
    pub table: SubstitutionTable,
    softened: SubstitutionTable,
}

impl Default for DraftPrompts {
    fn default() -> Self {
        Self::new(
            PromptTemplate::engagement_system(),
            PromptTemplate::engagement_neutral(),
            SubstitutionTable::default(),
        )
        .expect("default tables combine")
    }
}

fn inbound_content(m: &ChatMessage, table: &SubstitutionTable) -> String {
    let mut parts = Vec::new();
    if !m.text.trim().is_empty() {
        parts.push(table.apply(&m.text));
    }
    match &m.ocr_text {
        Some(ocr) if !ocr.trim().is_empty() => parts.push(format!("[image text] {}", table.apply(ocr))),
        _ if !m.media.is_empty() => parts.push("[image]".to_string()),
        _ => {}
    }
    parts.join("\n")
}

impl DraftPrompts {
    pub fn new(
        system: PromptTemplate,
        neutral: PromptTemplate,
        table: SubstitutionTable,
    ) -> Result<Self, SubstitutionError> {
        let softened = table.extended(&SubstitutionTable::softening_pairs())?;
        Ok(Self { system, neutral, table, softened })
    }

    pub fn build(&self, conversation: &Conversation, tier: PromptTier) -> ChatRequest {
        if tier == PromptTier::Minimal {
            let turns = vec![
                ChatTurn::system(self.neutral.render(&[])),
                ChatTurn::user("Write the next message."),
            ];
            return ChatRequest::new(Purpose::Draft, turns);
        }
        let table = if tier == PromptTier::Standard { &self.table } else { &self.softened };
        let mut turns = vec![ChatTurn::system(self.system.render(&[]))];
        for m in &conversation.messages {
            match m.direction {
                Direction::Outbound => turns.push(ChatTurn::assistant(m.text.clone())),
                Direction::Inbound if tier == PromptTier::StripInbound => {
                    turns.push(ChatTurn::user("[they replied]"));
                }
                Direction::Inbound => turns.push(ChatTurn::user(inbound_content(m, table))),
            }
        }
        ChatRequest::new(Purpose::Draft, turns)
    }
}

/// Trims whitespace and any quotes the model wrapped around its reply.
pub(crate) fn clean_draft(content: &str) -> String {
    let t = content.trim();
    let t = t
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(t);
    t.trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::msg;
    use crate::domain::Conversation;
    use crate::llm::Role;

    fn conv() -> Conversation {
        let mut c = Conversation::new("c", "a");
        c.messages.push(msg("o1", Direction::Outbound, 1, "Hi, how much do your services cost?", 1));
        c.messages.push(msg("i1", Direction::Inbound, 2, "nude chat 30分钟 300元", 1));
        c
    }

    #[test]
    fn standard_tier_substitutes_inbound() {
        let req = DraftPrompts::default().build(&conv(), PromptTier::Standard);
        assert_eq!(req.messages[0].role, Role::System);
        assert_eq!(req.messages[1].role, Role::Assistant);
        assert_eq!(req.last_user(), "chat 30分钟 300元");
    }

    #[test]
    fn ocr_text_enters_context() {
        let mut c = conv();
        let mut m = msg("i2", Direction::Inbound, 3, "", 1);
        m.media.push(crate::domain::MediaRef {
            media_id: "i2-img1".into(),
            kind: crate::domain::MediaKind::Image,
            person_labels: vec![],
            digest: None,
        });
        m.ocr_text = Some("Alipay: 138****".into());
        c.messages.push(m);
        let req = DraftPrompts::default().build(&c, PromptTier::Standard);
        assert!(req.last_user().contains("Alipay: 138****"));
    }

    #[test]
    fn strip_tier_hides_inbound_text() {
        let req = DraftPrompts::default().build(&conv(), PromptTier::StripInbound);
        assert!(!req.transcript().contains("300元"));
    }

    #[test]
    fn minimal_tier_has_no_history() {
        let req = DraftPrompts::default().build(&conv(), PromptTier::Minimal);
        assert_eq!(req.messages.len(), 2);
        assert!(!req.transcript().contains("services cost"));
    }

    #[test]
    fn tiers_follow_retry_count() {
        assert_eq!(PromptTier::for_retry(0), PromptTier::Standard);
        assert_eq!(PromptTier::for_retry(1), PromptTier::ExtraSubstitution);
        assert_eq!(PromptTier::for_retry(2), PromptTier::StripInbound);
        assert_eq!(PromptTier::for_retry(3), PromptTier::Minimal);
    }

    #[test]
    fn quotes_are_stripped() {
        assert_eq!(clean_draft("  \"ok, how do I pay?\" "), "ok, how do I pay?");
    }
}
