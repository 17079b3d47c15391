//! Payment-method classification over message text and OCR overlays.
//!
//! Matchers run in priority order: address regexes, then QR payload
//! prefixes, then keyword sets. A match never overlaps a span already claimed
//! by a higher-priority match, and a method that produced an address or QR
//! match in a text does not also produce keyword matches from that text.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::{OcrResult, VisionError};
use crate::domain::{Carrier, EvidenceRef, PaymentDisclosure, PaymentMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    AddressRegex,
    QrPayloadPrefix,
    KeywordSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarrierConstraint {
    Any,
    TextOnly,
    ImageOnly,
}

impl CarrierConstraint {
    fn allows(self, carrier: Carrier) -> bool {
        match self {
            CarrierConstraint::Any => true,
            CarrierConstraint::TextOnly => carrier == Carrier::Text,
            CarrierConstraint::ImageOnly => carrier == Carrier::Image,
        }
    }
}

/// One configurable matcher. `image_method`, when set, replaces `method` for
/// matches found in OCR text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentPattern {
    pub method: PaymentMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_method: Option<PaymentMethod>,
    pub kind: MatcherKind,
    pub expressions: Vec<String>,
    #[serde(default = "any_carrier")]
    pub carrier: CarrierConstraint,
}

fn any_carrier() -> CarrierConstraint {
    CarrierConstraint::Any
}

impl PaymentPattern {
    fn new(method: PaymentMethod, kind: MatcherKind, expressions: &[&str]) -> Self {
        Self {
            method,
            image_method: None,
            kind,
            expressions: expressions.iter().map(|s| s.to_string()).collect(),
            carrier: CarrierConstraint::Any,
        }
    }

    fn on_image(mut self, method: PaymentMethod) -> Self {
        self.image_method = Some(method);
        self
    }

    fn only(mut self, carrier: CarrierConstraint) -> Self {
        self.carrier = carrier;
        self
    }
}

/// Shipped defaults. Best-effort; replace through config for other markets.
pub fn default_patterns() -> Vec<PaymentPattern> {
    use MatcherKind::*;
    use PaymentMethod::*;
    vec![
        // TRON base58 and EVM hex address shapes
        PaymentPattern::new(Usdt, AddressRegex, &[r"T[1-9A-HJ-NP-Za-km-z]{33}", r"0x[0-9a-fA-F]{40}"]),
        PaymentPattern::new(WeChat, AddressRegex, &[r"wxid_[a-z0-9]{6,20}"]),
        // UnionPay card numbers
        PaymentPattern::new(Bank, AddressRegex, &[r"62[0-9]{14,17}"]),
        PaymentPattern::new(Alipay, QrPayloadPrefix, &["https://qr.alipay.com/", "alipays://"]).on_image(AlipayImage),
        PaymentPattern::new(WeChat, QrPayloadPrefix, &["wxp://", "https://u.wechat.com/"]),
        PaymentPattern::new(QQImage, QrPayloadPrefix, &["https://i.qianbao.qq.com/", "mqqapi://"])
            .only(CarrierConstraint::ImageOnly),
        PaymentPattern::new(Alipay, KeywordSet, &["支付宝", "alipay", "zfb"]).on_image(AlipayImage),
        PaymentPattern::new(WeChat, KeywordSet, &["微信支付", "微信", "wechat pay", "wechat", "weixin", "vx:", "vx："]),
        PaymentPattern::new(Usdt, KeywordSet, &["usdt", "泰达币"]),
        PaymentPattern::new(QQImage, KeywordSet, &["qq钱包", "qq wallet", "qq支付", "qq pay"])
            .only(CarrierConstraint::ImageOnly),
        PaymentPattern::new(Bank, KeywordSet, &["银行卡", "银行转账", "bank card", "bank transfer"]),
        PaymentPattern::new(PaymentSolution, KeywordSet, &["第三方支付", "支付链接", "payment link", "代付"]),
    ]
}

struct Compiled {
    pattern: PaymentPattern,
    regex: Regex,
}

/// A compiled, ordered pattern set.
pub struct PaymentPatterns {
    compiled: Vec<Compiled>,
}

impl Default for PaymentPatterns {
    fn default() -> Self {
        Self::new(default_patterns()).expect("default payment patterns compile")
    }
}

#[derive(Debug, Clone)]
struct Hit {
    base: PaymentMethod,
    method: PaymentMethod,
    detail: String,
}

impl PaymentPatterns {
    pub fn new(patterns: Vec<PaymentPattern>) -> Result<Self, VisionError> {
        let mut compiled = Vec::with_capacity(patterns.len());
        for pattern in patterns {
            let source = match pattern.kind {
                MatcherKind::AddressRegex => pattern
                    .expressions
                    .iter()
                    .map(|e| format!("(?:{e})"))
                    .collect::<Vec<_>>()
                    .join("|"),
                MatcherKind::QrPayloadPrefix => format!(
                    "(?:{})\\S*",
                    pattern.expressions.iter().map(|e| regex::escape(e)).collect::<Vec<_>>().join("|")
                ),
                MatcherKind::KeywordSet => pattern
                    .expressions
                    .iter()
                    .map(|e| regex::escape(e))
                    .collect::<Vec<_>>()
                    .join("|"),
            };
            let regex = RegexBuilder::new(&source)
                .case_insensitive(pattern.kind != MatcherKind::AddressRegex)
                .build()
                .map_err(|e| VisionError::InvalidPattern { expression: source.clone(), reason: e.to_string() })?;
            compiled.push(Compiled { pattern, regex });
        }
        compiled.sort_by_key(|c| c.pattern.kind);
        Ok(Self { compiled })
    }

    pub fn patterns(&self) -> impl Iterator<Item = &PaymentPattern> {
        self.compiled.iter().map(|c| &c.pattern)
    }

    fn scan(&self, text: &str, carrier: Carrier) -> Vec<Hit> {
        let mut claimed: Vec<Range<usize>> = Vec::new();
        let mut strong: BTreeSet<PaymentMethod> = BTreeSet::new();
        let mut hits = Vec::new();
        for c in &self.compiled {
            let p = &c.pattern;
            if !p.carrier.allows(carrier) {
                continue;
            }
            if p.kind == MatcherKind::KeywordSet && strong.contains(&p.method) {
                continue;
            }
            let mut matched = false;
            for m in c.regex.find_iter(text) {
                let range = m.range();
                if claimed.iter().any(|r| r.start < range.end && range.start < r.end) {
                    continue;
                }
                if p.kind == MatcherKind::AddressRegex && !ascii_isolated(text, &range) {
                    continue;
                }
                let detail = match p.kind {
                    MatcherKind::KeywordSet => keyword_detail(text, &range),
                    _ => m.as_str().to_string(),
                };
                claimed.push(range);
                matched = true;
                let method = match carrier {
                    Carrier::Image => p.image_method.unwrap_or(p.method),
                    Carrier::Text => p.method,
                };
                hits.push(Hit { base: p.method, method, detail });
            }
            if matched && p.kind != MatcherKind::KeywordSet {
                strong.insert(p.method);
            }
        }
        hits
    }
}

/// Address tokens must not touch ASCII word characters on either side.
/// CJK text around them is fine, which `\b` would not allow.
fn ascii_isolated(text: &str, range: &Range<usize>) -> bool {
    let word = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let before = text[..range.start].chars().next_back().is_some_and(word);
    let after = text[range.end..].chars().next().is_some_and(word);
    !before && !after
}

/// The token that follows a keyword on its line, or the keyword itself.
fn keyword_detail(text: &str, range: &Range<usize>) -> String {
    let rest = &text[range.end..];
    let line = rest.split('\n').next().unwrap_or("");
    let token = line
        .trim_start_matches(|c: char| c.is_whitespace() || ":：,，;；-—=".contains(c))
        .split(|c: char| c.is_whitespace() || ",，;；。".contains(c))
        .next()
        .unwrap_or("");
    if token.is_empty() {
        text[range.clone()].to_lowercase()
    } else {
        token.chars().take(64).collect()
    }
}

/// Every matching pattern yields one disclosure, deduplicated by
/// (method, detail). Matches present only in OCR text carry `Carrier::Image`.
pub fn extract_payment(
    patterns: &PaymentPatterns,
    text: &str,
    ocr: &[OcrResult],
    message_id: &str,
) -> Vec<PaymentDisclosure> {
    let mut out: Vec<PaymentDisclosure> = Vec::new();
    let mut seen: BTreeSet<(PaymentMethod, String)> = BTreeSet::new();
    let mut in_text: HashMap<PaymentMethod, BTreeSet<String>> = HashMap::new();

    for hit in patterns.scan(text, Carrier::Text) {
        in_text.entry(hit.base).or_default().insert(hit.detail.clone());
        if seen.insert((hit.method, hit.detail.clone())) {
            out.push(PaymentDisclosure {
                method: hit.method,
                carrier: Carrier::Text,
                evidence_ref: EvidenceRef { message_id: message_id.to_string(), media_id: None },
                detail: hit.detail,
            });
        }
    }
    for result in ocr {
        for hit in patterns.scan(&result.text, Carrier::Image) {
            if in_text.get(&hit.base).is_some_and(|d| d.contains(&hit.detail)) {
                continue;
            }
            if seen.insert((hit.method, hit.detail.clone())) {
                out.push(PaymentDisclosure {
                    method: hit.method,
                    carrier: Carrier::Image,
                    evidence_ref: EvidenceRef {
                        message_id: message_id.to_string(),
                        media_id: Some(result.media_id.clone()),
                    },
                    detail: hit.detail,
                });
            }
        }
    }
    out
}
