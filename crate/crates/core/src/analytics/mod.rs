//! Outcome, round, payment, price and response-time statistics.
//!
//! Everything here is a pure function of conversations pulled from a store
//! snapshot; [`build_report`] gathers the lot and [`export_report`] writes it
//! out as CSV plus a short markdown summary.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Classification, Conversation, Direction, MediaRef, OutcomeKind, PaymentDisclosure, PaymentMethod, PriceQuote,
    SessionState,
};
use crate::vision::count_distinct_persons;

pub use report::{build_report, export_report, ActorRow, AnalyticsConfig, Report};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no conversations to summarize")]
    EmptyInput,
    #[error("conversation {0} has not terminated")]
    UnterminatedInput(String),
    #[error("invalid analytics config: {0}")]
    InvalidConfig(String),
    #[error("histogram edges must be non-empty, finite and strictly increasing")]
    InvalidEdges,
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

/// `count / total` as a percentage in hundredths, rounded half-up. Exact for
/// any counts, so presentation never drifts from the underlying ratio.
pub fn percent_hundredths(count: usize, total: usize) -> u64 {
    assert!(total > 0, "percentage of an empty total");
    let (c, t) = (count as u128, total as u128);
    ((c * 20_000 + t) / (2 * t)) as u64
}

/// Two-decimal percentage string, e.g. `56.60`.
pub fn format_percent(count: usize, total: usize) -> String {
    format_hundredths(percent_hundredths(count, total))
}

pub fn format_hundredths(h: u64) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

/// Half-up shares of `counts`, then nudged one hundredth at a time (largest
/// rounding error first) until they total 100.00 within 0.02. Each share
/// stays within 0.01 of its exact value.
pub fn shares_hundredths(counts: &[usize]) -> Vec<u64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut h: Vec<u64> = counts.iter().map(|&c| percent_hundredths(c, total)).collect();
    // rounding error of share i, scaled by total
    let err = |h: &[u64], i: usize| h[i] as i128 * total as i128 - counts[i] as i128 * 10_000;
    loop {
        let sum: u64 = h.iter().sum();
        if sum > 10_002 {
            let i = (0..h.len()).max_by_key(|&i| (err(&h, i), std::cmp::Reverse(i))).expect("non-empty");
            h[i] -= 1;
        } else if sum < 9_998 {
            let i = (0..h.len()).min_by_key(|&i| (err(&h, i), i)).expect("non-empty");
            h[i] += 1;
        } else {
            return h;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub total: usize,
    pub success_count: usize,
    pub no_response_count: usize,
    /// Disengaged, LLM failure and operator-terminated sessions together.
    pub premature_count: usize,
    pub success_rate: f64,
    pub premature_rate_over_total: f64,
    pub by_kind: BTreeMap<OutcomeKind, usize>,
}

pub fn outcome_summary<'a>(
    convs: impl IntoIterator<Item = &'a Conversation>,
) -> Result<OutcomeSummary, AnalyticsError> {
    let mut by_kind = BTreeMap::new();
    let mut total = 0;
    for c in convs {
        let kind = match (&c.state, &c.outcome) {
            (SessionState::Terminated, Some(o)) => o.kind,
            _ => return Err(AnalyticsError::UnterminatedInput(c.conversation_id.clone())),
        };
        *by_kind.entry(kind).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return Err(AnalyticsError::EmptyInput);
    }
    let count = |k| by_kind.get(&k).copied().unwrap_or(0);
    let success_count = count(OutcomeKind::PaymentObtained);
    let no_response_count = count(OutcomeKind::NoResponse);
    let premature_count =
        count(OutcomeKind::Disengaged) + count(OutcomeKind::LlmFailure) + count(OutcomeKind::OperatorTerminated);
    Ok(OutcomeSummary {
        total,
        success_count,
        no_response_count,
        premature_count,
        success_rate: success_count as f64 / total as f64,
        premature_rate_over_total: premature_count as f64 / total as f64,
        by_kind,
    })
}

/// Empirical CDF of rounds completed at termination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundCdf {
    /// `(round, fraction of conversations with at most that many rounds)`,
    /// one point per distinct round value.
    pub points: Vec<(u32, f64)>,
    pub sample: usize,
}

impl RoundCdf {
    pub fn at(&self, round: u32) -> f64 {
        self.points
            .iter()
            .take_while(|(r, _)| *r <= round)
            .last()
            .map_or(0.0, |(_, f)| *f)
    }
}

/// With `exclude_no_response`, conversations that never got a reply are
/// left out.
pub fn round_cdf<'a>(
    convs: impl IntoIterator<Item = &'a Conversation>,
    exclude_no_response: bool,
) -> Result<RoundCdf, AnalyticsError> {
    let mut rounds: Vec<u32> = convs
        .into_iter()
        .filter(|c| !(exclude_no_response && is_no_response(c)))
        .map(|c| c.round_counter)
        .collect();
    if rounds.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    rounds.sort_unstable();
    let n = rounds.len();
    let mut points: Vec<(u32, f64)> = Vec::new();
    for (i, r) in rounds.iter().enumerate() {
        if rounds.get(i + 1) != Some(r) {
            points.push((*r, (i + 1) as f64 / n as f64));
        }
    }
    Ok(RoundCdf { points, sample: n })
}

fn is_no_response(c: &Conversation) -> bool {
    c.outcome.as_ref().is_some_and(|o| o.kind == OutcomeKind::NoResponse) || !c.has_inbound()
}

/// Median rounds among sessions that ended with payment details.
pub fn success_median_rounds<'a>(convs: impl IntoIterator<Item = &'a Conversation>) -> Option<f64> {
    let rounds: Vec<f64> = convs
        .into_iter()
        .filter(|c| c.outcome.as_ref().is_some_and(|o| o.kind == OutcomeKind::PaymentObtained))
        .map(|c| c.round_counter as f64)
        .collect();
    five_number(&rounds).map(|f| f.median)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Min, hinges, median and max. The hinges are medians of the lower and
/// upper halves, each half including the overall median when `n` is odd.
pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(FiveNumber {
        min: s[0],
        q1: median_sorted(&s[..n.div_ceil(2)]),
        median: median_sorted(&s),
        q3: median_sorted(&s[n / 2..]),
        max: s[n - 1],
    })
}

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodShare {
    pub method: PaymentMethod,
    pub count: usize,
    /// Percentage in hundredths; see [`shares_hundredths`].
    pub percent_hundredths: u64,
}

impl MethodShare {
    pub fn percent(&self) -> f64 {
        self.percent_hundredths as f64 / 100.0
    }
}

/// Share of each method among all disclosures, most frequent first. Ties
/// keep the canonical method order. Methods never seen are omitted.
pub fn payment_distribution<'a>(disclosures: impl IntoIterator<Item = &'a PaymentDisclosure>) -> Vec<MethodShare> {
    let mut counts: BTreeMap<PaymentMethod, usize> = BTreeMap::new();
    for d in disclosures {
        *counts.entry(d.method).or_insert(0) += 1;
    }
    let seen: Vec<(PaymentMethod, usize)> = PaymentMethod::ALL
        .iter()
        .filter_map(|m| counts.get(m).map(|&count| (*m, count)))
        .collect();
    let shares = shares_hundredths(&seen.iter().map(|(_, c)| *c).collect::<Vec<_>>());
    let mut out: Vec<MethodShare> = seen
        .into_iter()
        .zip(shares)
        .map(|((method, count), percent_hundredths)| MethodShare { method, count, percent_hundredths })
        .collect();
    out.sort_by_key(|p| std::cmp::Reverse(p.count));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBin {
    /// Inclusive minute range `[lo, lo + 4]`.
    pub lo: u32,
    pub hi: u32,
    pub count: usize,
    pub stats: FiveNumber,
}

impl PriceBin {
    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

pub const PRICE_BIN_WIDTH: u32 = 5;

pub fn price_bins<'a>(quotes: impl IntoIterator<Item = &'a PriceQuote>) -> Vec<PriceBin> {
    let mut bins: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for q in quotes {
        let lo = q.duration_minutes / PRICE_BIN_WIDTH * PRICE_BIN_WIDTH;
        bins.entry(lo).or_default().push(q.price_cny);
    }
    bins.into_iter()
        .map(|(lo, prices)| PriceBin {
            lo,
            hi: lo + PRICE_BIN_WIDTH - 1,
            count: prices.len(),
            stats: five_number(&prices).expect("bins are never empty"),
        })
        .collect()
}

/// Two or more distinct people across an account's images means a platform.
pub fn classify_actor<'a>(media: impl IntoIterator<Item = &'a MediaRef>) -> Classification {
    match count_distinct_persons(media) {
        0 => Classification::Unknown,
        1 => Classification::Individual,
        _ => Classification::Platform,
    }
}

pub const DEFAULT_HISTOGRAM_EDGES_MINUTES: [f64; 8] = [0.0, 5.0, 15.0, 30.0, 60.0, 90.0, 120.0, 180.0];

/// First-reply latency counts per classification. Bin `i` covers
/// `[edges[i], edges[i + 1])`; the last bin is open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHistogram {
    pub edges_minutes: Vec<f64>,
    pub counts: BTreeMap<Classification, Vec<usize>>,
}

impl ResponseHistogram {
    pub fn labels(&self) -> Vec<String> {
        let e = &self.edges_minutes;
        (0..e.len())
            .map(|i| match e.get(i + 1) {
                Some(hi) => format!("{}-{}", e[i], hi),
                None => format!("{}+", e[i]),
            })
            .collect()
    }

    pub fn bin_of(&self, minutes: f64) -> usize {
        self.edges_minutes
            .iter()
            .rposition(|&e| minutes >= e)
            .unwrap_or(0)
    }
}

/// `classify` maps an account id to its classification. Conversations
/// without any reply are left out.
pub fn first_response_histogram<'a>(
    convs: impl IntoIterator<Item = &'a Conversation>,
    classify: impl Fn(&str) -> Classification,
    edges_minutes: &[f64],
) -> Result<ResponseHistogram, AnalyticsError> {
    let valid = !edges_minutes.is_empty()
        && edges_minutes.iter().all(|e| e.is_finite())
        && edges_minutes.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(AnalyticsError::InvalidEdges);
    }
    let mut hist = ResponseHistogram {
        edges_minutes: edges_minutes.to_vec(),
        counts: [Classification::Individual, Classification::Platform, Classification::Unknown]
            .into_iter()
            .map(|c| (c, vec![0; edges_minutes.len()]))
            .collect(),
    };
    for c in convs {
        let Some(secs) = c.first_response_latency_secs() else { continue };
        let bin = hist.bin_of(secs / 60.0);
        hist.counts.get_mut(&classify(&c.actor)).expect("every class has a row")[bin] += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub conversation_id: String,
    pub round: u32,
    pub latency_minutes: f64,
}

/// One point per answered round: the wait between our message and the first
/// reply to it.
pub fn rounds_vs_response_scatter<'a>(convs: impl IntoIterator<Item = &'a Conversation>) -> Vec<ScatterPoint> {
    let mut out = Vec::new();
    for c in convs {
        let mut awaiting = None;
        let mut round = 0;
        for m in &c.messages {
            match (m.direction, awaiting) {
                (Direction::Outbound, _) => awaiting = Some(m.timestamp),
                (Direction::Inbound, Some(sent)) => {
                    round += 1;
                    out.push(ScatterPoint {
                        conversation_id: c.conversation_id.clone(),
                        round,
                        latency_minutes: (m.timestamp - sent) as f64 / 60_000.0,
                    });
                    awaiting = None;
                }
                (Direction::Inbound, None) => {}
            }
        }
    }
    out
}
