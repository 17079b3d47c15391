//! Supervised decoy engagement of chat-service operators.
//!
//! The pipeline has three phases: channel discovery and relevance filtering,
//! human-approved engagement of the accounts found there, and analytics over
//! the resulting conversations. Every observation and action is appended to a
//! replayable event log, which is the single source of truth for reports.

pub mod analytics;
pub mod discovery;
pub mod domain;
pub mod engagement;
pub mod filter;
pub mod llm;
pub mod prompts;
pub mod runtime;
pub mod store;
pub mod transport;
pub mod vision;
