//! Mining (duration, price) pairs out of chat text.

use std::ops::Range;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::VisionError;
use crate::domain::PriceQuote;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationUnit {
    Minutes,
    Hours,
}

/// A regex with named groups `dur` and `price`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricePattern {
    pub expression: String,
    pub unit: DurationUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRulesConfig {
    pub patterns: Vec<PricePattern>,
    /// Inclusive sanity band in CNY; quotes outside are dropped.
    pub band: (f64, f64),
}

impl Default for PriceRulesConfig {
    fn default() -> Self {
        let sep = r"\s*[:：=,，/\-～~]?\s*";
        let price = r"(?P<price>\d{1,6}(?:\.\d{1,2})?)";
        let patterns = vec![
            PricePattern {
                expression: format!(r"(?i)(?P<dur>\d{{1,3}})\s*(?:分钟|分鐘|minutes?|mins?){sep}{price}"),
                unit: DurationUnit::Minutes,
            },
            PricePattern {
                expression: format!(r"(?i)(?P<dur>\d{{1,2}}(?:\.\d)?)\s*(?:个小时|小时|小時|hours?|hrs?|h){sep}{price}"),
                unit: DurationUnit::Hours,
            },
            PricePattern {
                expression: r"(?i)(?P<price>\d{1,6}(?:\.\d{1,2})?)\s*(?:元|块|cny|rmb)\s*[/／]\s*(?P<dur>\d{1,3})\s*(?:分钟|minutes?|mins?)".into(),
                unit: DurationUnit::Minutes,
            },
        ];
        Self { patterns, band: (1.0, 100_000.0) }
    }
}

pub struct PriceRules {
    compiled: Vec<(Regex, DurationUnit)>,
    band: (f64, f64),
}

impl Default for PriceRules {
    fn default() -> Self {
        Self::new(&PriceRulesConfig::default()).expect("default price patterns compile")
    }
}

impl PriceRules {
    pub fn new(config: &PriceRulesConfig) -> Result<Self, VisionError> {
        let compiled = config
            .patterns
            .iter()
            .map(|p| {
                let re = Regex::new(&p.expression).map_err(|e| VisionError::InvalidPattern {
                    expression: p.expression.clone(),
                    reason: e.to_string(),
                })?;
                let names: Vec<_> = re.capture_names().flatten().collect();
                if !names.contains(&"dur") || !names.contains(&"price") {
                    return Err(VisionError::InvalidPattern {
                        expression: p.expression.clone(),
                        reason: "needs named groups `dur` and `price`".into(),
                    });
                }
                Ok((re, p.unit))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { compiled, band: config.band })
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }
}

/// Quotes in text order of discovery; overlapping matches from later
/// patterns are skipped. Durations are converted to whole minutes.
pub fn detect_price_quotes(rules: &PriceRules, text: &str, evidence_ref: &str) -> Vec<PriceQuote> {
    let mut claimed: Vec<Range<usize>> = Vec::new();
    let mut found: Vec<(usize, PriceQuote)> = Vec::new();
    for (re, unit) in &rules.compiled {
        for caps in re.captures_iter(text) {
            let whole = caps.get(0).expect("group 0");
            let range = whole.range();
            if claimed.iter().any(|r| r.start < range.end && range.start < r.end) {
                continue;
            }
            let (Some(dur), Some(price)) = (caps.name("dur"), caps.name("price")) else {
                continue;
            };
            let (Ok(dur), Ok(price)) = (dur.as_str().parse::<f64>(), price.as_str().parse::<f64>()) else {
                continue;
            };
            let minutes = match unit {
                DurationUnit::Minutes => dur,
                DurationUnit::Hours => dur * 60.0,
            }
            .round();
            if minutes < 1.0 || price < rules.band.0 || price > rules.band.1 {
                continue;
            }
            claimed.push(range.clone());
            found.push((
                range.start,
                PriceQuote {
                    duration_minutes: minutes as u32,
                    price_cny: price,
                    evidence_ref: evidence_ref.to_string(),
                },
            ));
        }
    }
    found.sort_by_key(|(pos, _)| *pos);
    found.into_iter().map(|(_, q)| q).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> Vec<(u32, f64)> {
        detect_price_quotes(&PriceRules::default(), text, "m")
            .into_iter()
            .map(|q| (q.duration_minutes, q.price_cny))
            .collect()
    }

    #[test]
    fn chinese_minutes_and_yuan() {
        assert_eq!(pairs("30分钟 300元"), vec![(30, 300.0)]);
    }

    #[test]
    fn no_quote_in_small_talk() {
        assert!(pairs("great weather").is_empty());
    }

    #[test]
    fn hours_convert_to_minutes() {
        assert_eq!(pairs("1小时 680"), vec![(60, 680.0)]);
        assert_eq!(pairs("1.5 hours: 900 cny"), vec![(90, 900.0)]);
    }

    #[test]
    fn several_quotes_keep_text_order() {
        assert_eq!(
            pairs("套餐: 10分钟 100元, 20 min 200 CNY, 350元/40分钟"),
            vec![(10, 100.0), (20, 200.0), (40, 350.0)]
        );
    }

    #[test]
    fn out_of_band_prices_are_dropped() {
        assert!(pairs("30分钟 0元").is_empty());
        assert!(pairs("30分钟 200000元").is_empty());
    }

    #[test]
    fn patterns_need_both_groups() {
        let cfg = PriceRulesConfig {
            patterns: vec![PricePattern { expression: r"(?P<dur>\d+)".into(), unit: DurationUnit::Minutes }],
            band: (1.0, 10.0),
        };
        assert!(PriceRules::new(&cfg).is_err());
    }
}
