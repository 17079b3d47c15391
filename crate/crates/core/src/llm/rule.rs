use super::{ChatModel, ChatReply, ChatRequest, LlmError, Purpose, Role};

/// Offline stand-in for a hosted model, used by the simulator.
///
/// Synonyms come from a small built-in thesaurus, relevance is a vocabulary
/// check over the digest, and drafts cycle through short casual-customer
/// lines keyed on how many turns we have already sent.
#[derive(Debug, Clone)]
pub struct RuleModel {
    thesaurus: Vec<(String, Vec<String>)>,
    offer_vocabulary: Vec<String>,
    customer_lines: Vec<String>,
}

impl Default for RuleModel {
    fn default() -> Self {
        let thesaurus = vec![
            (
                "nude video chat",
                vec!["naked video chat", "private video chat", "adult video call"],
            ),
            ("sexy chat", vec!["hot chat", "flirty chat", "spicy chat"]),
            ("private chat service", vec!["1v1 chat service", "paid private chat"]),
        ];
        let offer_vocabulary = [
            "pay to chat",
            "video chat",
            "private chat",
            "1v1",
            "分钟",
            "裸聊",
            "私聊",
            "price list",
            "rates",
        ];
        let customer_lines = [
            "ok cool, how long is one session?",
            "sounds good. how do i pay you?",
            "alright, what's the easiest way to pay?",
            "ok i'm ready, send me the payment details",
            "sure, where do i send the money?",
            "got it, how do i pay for it?",
        ];
        Self {
            thesaurus: thesaurus
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.into_iter().map(String::from).collect()))
                .collect(),
            offer_vocabulary: offer_vocabulary.iter().map(|s| s.to_string()).collect(),
            customer_lines: customer_lines.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RuleModel {
    fn synonyms(&self, request: &ChatRequest) -> String {
        let prompt = request.last_user().to_lowercase();
        self.thesaurus
            .iter()
            .find(|(term, _)| prompt.contains(&format!("\"{term}\"")))
            .map(|(_, syns)| syns.join("\n"))
            .unwrap_or_default()
    }

    fn relevance(&self, request: &ChatRequest) -> String {
        let prompt = request.last_user().to_lowercase();
        let digest = prompt.find("channel: @").map_or(prompt.as_str(), |i| &prompt[i..]);
        match self.offer_vocabulary.iter().find(|w| digest.contains(w.as_str())) {
            Some(w) => format!("yes - the channel advertises paid chat services (\"{w}\")"),
            None => "no - nothing suggests paid chat services".to_string(),
        }
    }

    fn draft(&self, request: &ChatRequest) -> String {
        let sent = request
            .messages
            .iter()
            .filter(|t| t.role == Role::Assistant)
            .count();
        let idx = sent.saturating_sub(1) % self.customer_lines.len();
        self.customer_lines[idx].clone()
    }
}

impl ChatModel for RuleModel {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        let content = match request.purpose {
            Purpose::Synonyms => self.synonyms(request),
            Purpose::Relevance => self.relevance(request),
            Purpose::Draft => self.draft(request),
        };
        Ok(ChatReply::text(content))
    }

    fn name(&self) -> &str {
        "rule"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatTurn;

    #[test]
    fn synonyms_for_known_term() {
        let m = RuleModel::default();
        let req = ChatRequest::new(
            Purpose::Synonyms,
            vec![ChatTurn::user("Suggest up to 2 alternatives for \"sexy chat\"")],
        );
        let out = m.complete(&req).unwrap().content;
        assert_eq!(out.lines().count(), 3);
        assert!(out.starts_with("hot chat"));
    }

    #[test]
    fn relevance_is_vocabulary_driven() {
        let m = RuleModel::default();
        let yes = ChatRequest::new(Purpose::Relevance, vec![ChatTurn::user("pay to chat with me")]);
        let no = ChatRequest::new(Purpose::Relevance, vec![ChatTurn::user("braised pork recipe")]);
        assert!(m.complete(&yes).unwrap().content.starts_with("yes"));
        assert!(m.complete(&no).unwrap().content.starts_with("no"));
    }
}
