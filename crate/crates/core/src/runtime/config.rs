use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::analytics::AnalyticsConfig;
use crate::discovery::DiscoveryConfig;
use crate::engagement::EngagementPolicy;
use crate::filter::DEFAULT_DIGEST_BUDGET;
use crate::llm::OpenAiCompatConfig;
use crate::transport::TransportKind;
use crate::vision::PaymentPattern;

/// Everything a run needs, loaded from TOML. Relative paths resolve against
/// the directory of the config file.
///
/// ```toml
/// seed = 7
///
/// [store]
/// path = "events.log"
///
/// [transport]
/// kind = "simnet"
/// scenario = "scenario.json"
///
/// [llm]
/// backend = "rule"
///
/// [engagement]
/// auto_approve = true
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the scenario's own seed when set.
    pub seed: Option<u64>,
    pub store: StoreSection,
    pub transport: TransportSection,
    pub llm: LlmSection,
    pub discovery: DiscoveryConfig,
    pub filter: FilterSection,
    /// Regexes marking a channel post as a service offer.
    pub offer_patterns: Option<Vec<String>>,
    pub engagement: EngagementPolicy,
    /// TOML file of `[[pairs]]` replacing the built-in substitution table.
    pub substitution_table: Option<PathBuf>,
    pub payment_patterns: Option<Vec<PaymentPattern>>,
    pub ocr: OcrSection,
    pub analytics: AnalyticsConfig,
    pub gateway: GatewaySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub path: PathBuf,
    pub fsync: bool,
}

impl Default for StoreSection {
    fn default() -> Self {
        Self { path: PathBuf::from("events.log"), fsync: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub kind: TransportKind,
    /// Simnet scenario file. Without one the built-in reference network is used.
    pub scenario: Option<PathBuf>,
    /// Must be set for `kind = "live"` to be accepted at all.
    pub enable_live: bool,
    pub credentials_env: Option<String>,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self { kind: TransportKind::Simnet, scenario: None, enable_live: false, credentials_env: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackend {
    /// Offline rule-based stand-in.
    #[default]
    Rule,
    /// OpenAI-compatible HTTP endpoint.
    Openai,
    /// Replays a JSON script, for tests and demos.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: LlmBackend,
    pub openai: Option<OpenAiCompatConfig>,
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// Characters of channel text shown to the relevance model.
    pub digest_budget: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { digest_budget: DEFAULT_DIGEST_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcrBackend {
    /// Treats the image payload as its own text; what the simulator sends.
    #[default]
    Identity,
    Tesseract,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrSection {
    pub engine: OcrBackend,
    pub tesseract_binary: Option<String>,
    pub tesseract_languages: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub bind: String,
    /// Environment variable holding the shared bearer token.
    pub token_env: String,
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8787".into(), token_env: "BAITLINE_TOKEN".into() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RuntimeError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, RuntimeError> {
        toml::from_str(text).map_err(|e| RuntimeError::ConfigInvalid(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store.path);
        for p in [&mut self.transport.scenario, &mut self.llm.script, &mut self.substitution_table]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let invalid = |m: &str| Err(RuntimeError::ConfigInvalid(m.to_string()));
        if self.engagement.auto_approve && self.transport.kind != TransportKind::Simnet {
            return invalid("auto_approve is only allowed with the simnet transport");
        }
        if self.transport.kind == TransportKind::Live && !self.transport.enable_live {
            return invalid("the live transport needs enable_live = true (or --enable-live)");
        }
        match self.llm.backend {
            LlmBackend::Openai if self.llm.openai.is_none() => return invalid("llm.backend = \"openai\" needs [llm.openai]"),
            LlmBackend::Scripted if self.llm.script.is_none() => return invalid("llm.backend = \"scripted\" needs llm.script"),
            _ => {}
        }
        if self.filter.digest_budget == 0 {
            return invalid("filter.digest_budget must be positive");
        }
        self.engagement.validate().map_err(|e| RuntimeError::ConfigInvalid(e.to_string()))?;
        self.discovery.validate().map_err(|e| RuntimeError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }
}
