use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatModel, ChatReply, ChatRequest, LlmError, Purpose};

/// One scripted model behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scripted {
    Reply(String),
    /// Backend-flagged refusal with empty content.
    Refuse,
    /// Refusal carried only in the text; exercises phrase detection.
    RefuseText(String),
    Unavailable,
    /// Returns the whole request transcript, so tests can inspect context.
    Echo,
}

/// Deterministic model that replays per-purpose queues, then falls back.
///
/// Every request is recorded for later inspection.
pub struct ScriptedModel {
    queues: Mutex<BTreeMap<Purpose, VecDeque<Scripted>>>,
    fallbacks: BTreeMap<Purpose, Scripted>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl Default for ScriptedModel {
    fn default() -> Self {
        Self::new()
    }
}

/// On-disk form of a script:
///
/// ```json
/// {"queues": {"draft": [{"reply": "hi"}, "refuse"]}, "fallbacks": {"synonyms": {"reply": ""}}}
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptFile {
    pub queues: BTreeMap<Purpose, Vec<Scripted>>,
    pub fallbacks: BTreeMap<Purpose, Scripted>,
}

impl ScriptedModel {
    pub fn from_script(script: ScriptFile) -> Self {
        let mut m = Self::new();
        for (purpose, steps) in script.queues {
            m = m.push_many(purpose, steps);
        }
        m.fallbacks = script.fallbacks;
        m
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let script: ScriptFile =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::from_script(script))
    }

    pub fn new() -> Self {
        Self {
            queues: Mutex::new(BTreeMap::new()),
            fallbacks: BTreeMap::new(),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn push(self, purpose: Purpose, step: Scripted) -> Self {
        self.queues
            .lock()
            .unwrap()
            .entry(purpose)
            .or_default()
            .push_back(step);
        self
    }

    pub fn push_many(mut self, purpose: Purpose, steps: impl IntoIterator<Item = Scripted>) -> Self {
        for s in steps {
            self = self.push(purpose, s);
        }
        self
    }

    pub fn fallback(mut self, purpose: Purpose, step: Scripted) -> Self {
        self.fallbacks.insert(purpose, step);
        self
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn requests_for(&self, purpose: Purpose) -> Vec<ChatRequest> {
        self.requests()
            .into_iter()
            .filter(|r| r.purpose == purpose)
            .collect()
    }
}

impl ChatModel for ScriptedModel {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        self.requests.lock().unwrap().push(request.clone());
        let step = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&request.purpose)
            .and_then(VecDeque::pop_front)
            .or_else(|| self.fallbacks.get(&request.purpose).cloned())
            .unwrap_or(Scripted::Unavailable);
        match step {
            Scripted::Reply(text) => Ok(ChatReply::text(text)),
            Scripted::Refuse => Ok(ChatReply { content: String::new(), refusal: true }),
            Scripted::RefuseText(text) => Ok(ChatReply::text(text)),
            Scripted::Unavailable => Err(LlmError::Unavailable("scripted outage".into())),
            Scripted::Echo => Ok(ChatReply::text(request.transcript())),
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatTurn;

    #[test]
    fn queue_then_fallback_then_unavailable() {
        let m = ScriptedModel::new()
            .push(Purpose::Draft, Scripted::Reply("one".into()))
            .fallback(Purpose::Draft, Scripted::Echo);
        let req = ChatRequest::new(Purpose::Draft, vec![ChatTurn::user("ctx")]);
        assert_eq!(m.complete(&req).unwrap().content, "one");
        assert_eq!(m.complete(&req).unwrap().content, "ctx");
        let other = ChatRequest::new(Purpose::Relevance, vec![]);
        assert!(matches!(m.complete(&other), Err(LlmError::Unavailable(_))));
        assert_eq!(m.requests().len(), 3);
    }

    #[test]
    fn scripts_parse_from_json() {
        let script: ScriptFile = serde_json::from_str(
            r#"{"queues": {"draft": [{"reply": "hi"}, "refuse"]}, "fallbacks": {"draft": "unavailable"}}"#,
        )
        .unwrap();
        let m = ScriptedModel::from_script(script);
        let req = ChatRequest::new(Purpose::Draft, vec![]);
        assert_eq!(m.complete(&req).unwrap().content, "hi");
        assert!(m.complete(&req).unwrap().refusal);
        assert!(m.complete(&req).is_err());
    }
}
