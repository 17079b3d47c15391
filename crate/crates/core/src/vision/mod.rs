//! Image text, payment and pricing extraction.
//!
//! OCR runs behind [`OcrEngine`]; QR codes are never decoded from pixels here,
//! their payload strings arrive through the engine boundary like any other
//! recognised text.

mod ocr;
mod payment;
mod price;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::domain::MediaRef;

pub use ocr::{IdentityOcr, OcrEngine, OcrResult, OcrService, TesseractCli};
pub use payment::{default_patterns, extract_payment, CarrierConstraint, MatcherKind, PaymentPattern, PaymentPatterns};
pub use price::{detect_price_quotes, DurationUnit, PricePattern, PriceRules, PriceRulesConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VisionError {
    #[error("media {0} is not an image")]
    NotAnImage(String),
    #[error("OCR engine unavailable: {0}")]
    EngineUnavailable(String),
    #[error("invalid pattern {expression}: {reason}")]
    InvalidPattern { expression: String, reason: String },
}

/// Distinct person labels across the given media. Zero when nothing is labelled.
pub fn count_distinct_persons<'a>(media: impl IntoIterator<Item = &'a MediaRef>) -> usize {
    media
        .into_iter()
        .flat_map(|m| m.person_labels.iter())
        .collect::<BTreeSet<_>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MediaKind;

    fn img(id: &str, labels: &[&str]) -> MediaRef {
        MediaRef {
            media_id: id.into(),
            kind: MediaKind::Image,
            person_labels: labels.iter().map(|s| s.to_string()).collect(),
            digest: None,
        }
    }

    #[test]
    fn distinct_person_counts() {
        let three = [img("a", &["p1"]), img("b", &["p2"]), img("c", &["p1", "p2"])];
        assert_eq!(count_distinct_persons(&three), 2);
        assert_eq!(count_distinct_persons(&[]), 0);
        let same: Vec<_> = (0..5).map(|i| img(&format!("m{i}"), &["p1"])).collect();
        assert_eq!(count_distinct_persons(&same), 1);
    }
}
