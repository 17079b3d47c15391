use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::*;
use crate::domain::Direction;
use crate::store::Snapshot;
use crate::vision::{detect_price_quotes, PriceRules, PriceRulesConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsConfig {
    /// Leave never-answered conversations out of the round CDF.
    pub exclude_no_response: bool,
    pub histogram_edges_minutes: Vec<f64>,
    pub prices: PriceRulesConfig,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            exclude_no_response: true,
            histogram_edges_minutes: DEFAULT_HISTOGRAM_EDGES_MINUTES.to_vec(),
            prices: PriceRulesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorRow {
    pub actor_id: String,
    pub classification: Classification,
    pub distinct_persons: usize,
    pub conversations: usize,
    pub first_response_secs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub terminated: usize,
    /// Conversations still running when the snapshot was taken; excluded.
    pub open: usize,
    pub summary: Option<OutcomeSummary>,
    pub round_cdf: Option<RoundCdf>,
    pub success_median_rounds: Option<f64>,
    pub max_round: u32,
    pub disclosures_total: usize,
    pub payments: Vec<MethodShare>,
    pub quotes: Vec<PriceQuote>,
    pub price_bins: Vec<PriceBin>,
    pub actors: Vec<ActorRow>,
    pub histogram: ResponseHistogram,
    pub scatter: Vec<ScatterPoint>,
}

/// Every metric over the terminated conversations in `snapshot`.
pub fn build_report(snapshot: &Snapshot, cfg: &AnalyticsConfig) -> Result<Report, AnalyticsError> {
    let rules = PriceRules::new(&cfg.prices).map_err(|e| AnalyticsError::InvalidConfig(e.to_string()))?;
    let done: Vec<&Conversation> = snapshot
        .conversations
        .values()
        .filter(|c| c.state == SessionState::Terminated)
        .collect();

    let summary = match outcome_summary(done.iter().copied()) {
        Ok(s) => Some(s),
        Err(AnalyticsError::EmptyInput) => None,
        Err(e) => return Err(e),
    };
    let round_cdf = match round_cdf(done.iter().copied(), cfg.exclude_no_response) {
        Ok(c) => Some(c),
        Err(AnalyticsError::EmptyInput) => None,
        Err(e) => return Err(e),
    };

    let disclosures: Vec<&PaymentDisclosure> = done
        .iter()
        .filter_map(|c| snapshot.disclosures.get(&c.conversation_id))
        .flatten()
        .collect();

    let quotes = conversation_quotes(&done, &rules);

    let mut media: BTreeMap<&str, Vec<&MediaRef>> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in snapshot.actors.keys() {
        media.entry(id).or_default();
    }
    for c in &done {
        media.entry(&c.actor).or_default().extend(c.media());
        *counts.entry(&c.actor).or_insert(0) += 1;
    }
    let actors: Vec<ActorRow> = media
        .iter()
        .map(|(id, m)| ActorRow {
            actor_id: id.to_string(),
            classification: classify_actor(m.iter().copied()),
            distinct_persons: count_distinct_persons(m.iter().copied()),
            conversations: counts.get(id).copied().unwrap_or(0),
            first_response_secs: done
                .iter()
                .filter(|c| c.actor == *id)
                .filter_map(|c| c.first_response_latency_secs())
                .collect(),
        })
        .collect();
    let classes: BTreeMap<&str, Classification> =
        actors.iter().map(|a| (a.actor_id.as_str(), a.classification)).collect();

    let histogram = first_response_histogram(
        done.iter().copied(),
        |id| classes.get(id).copied().unwrap_or(Classification::Unknown),
        &cfg.histogram_edges_minutes,
    )?;
    let scatter = rounds_vs_response_scatter(done.iter().copied());

    Ok(Report {
        terminated: done.len(),
        open: snapshot.conversations.len() - done.len(),
        summary,
        round_cdf,
        success_median_rounds: success_median_rounds(done.iter().copied()),
        max_round: done.iter().map(|c| c.round_counter).max().unwrap_or(0),
        disclosures_total: disclosures.len(),
        payments: payment_distribution(disclosures),
        price_bins: price_bins(&quotes),
        quotes,
        actors,
        histogram,
        scatter,
    })
}

/// Quotes from replies, text and OCR alike. The same (duration, price) pair
/// repeated within one conversation counts once.
fn conversation_quotes(convs: &[&Conversation], rules: &PriceRules) -> Vec<PriceQuote> {
    let mut out = Vec::new();
    for c in convs {
        let mut seen = BTreeSet::new();
        for m in c.messages.iter().filter(|m| m.direction == Direction::Inbound) {
            let evidence = format!("{}/{}", c.conversation_id, m.message_id);
            for q in detect_price_quotes(rules, &m.full_text(), &evidence) {
                if seen.insert((q.duration_minutes, q.price_cny.to_bits())) {
                    out.push(q);
                }
            }
        }
    }
    out
}

fn num(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, AnalyticsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| AnalyticsError::Io(e.into_error()))
}

/// Writes one CSV per metric and `summary.md` into `dir`, returning the
/// paths written. Output bytes depend only on `report`.
pub fn export_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, AnalyticsError> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();

    let kinds = [
        OutcomeKind::PaymentObtained,
        OutcomeKind::NoResponse,
        OutcomeKind::Disengaged,
        OutcomeKind::LlmFailure,
        OutcomeKind::OperatorTerminated,
    ];
    let outcome_rows = report.summary.iter().flat_map(|s| {
        kinds.iter().map(move |k| {
            let n = s.by_kind.get(k).copied().unwrap_or(0);
            vec![format!("{k:?}"), n.to_string(), format_percent(n, s.total)]
        })
    });
    files.push(("outcomes.csv", csv_bytes(&["outcome", "count", "percent"], outcome_rows)?));

    let cdf_rows = report
        .round_cdf
        .iter()
        .flat_map(|c| c.points.iter().map(|(r, f)| vec![r.to_string(), num(*f, 6)]));
    files.push(("round_cdf.csv", csv_bytes(&["round", "cumulative_fraction"], cdf_rows)?));

    let pay_rows = report.payments.iter().map(|s| {
        vec![
            format!("{:?}", s.method),
            s.method.label().to_string(),
            s.count.to_string(),
            format_hundredths(s.percent_hundredths),
        ]
    });
    files.push(("payment_methods.csv", csv_bytes(&["method", "label", "count", "percent"], pay_rows)?));

    let quote_rows = report
        .quotes
        .iter()
        .map(|q| vec![q.evidence_ref.clone(), q.duration_minutes.to_string(), num(q.price_cny, 2)]);
    files.push(("price_quotes.csv", csv_bytes(&["evidence", "duration_minutes", "price_cny"], quote_rows)?));

    let bin_rows = report.price_bins.iter().map(|b| {
        let s = b.stats;
        let mut row = vec![b.label(), b.count.to_string()];
        row.extend([s.min, s.q1, s.median, s.q3, s.max].map(|v| num(v, 2)));
        row
    });
    files.push((
        "price_bins.csv",
        csv_bytes(&["minutes", "count", "min", "q1", "median", "q3", "max"], bin_rows)?,
    ));

    let actor_rows = report.actors.iter().map(|a| {
        let latencies: Vec<String> = a.first_response_secs.iter().map(|s| num(s / 60.0, 3)).collect();
        vec![
            a.actor_id.clone(),
            format!("{:?}", a.classification),
            a.distinct_persons.to_string(),
            a.conversations.to_string(),
            latencies.join(";"),
        ]
    });
    files.push((
        "actors.csv",
        csv_bytes(
            &["actor_id", "classification", "distinct_persons", "conversations", "first_response_minutes"],
            actor_rows,
        )?,
    ));

    let labels = report.histogram.labels();
    let mut header = vec!["classification"];
    header.extend(labels.iter().map(String::as_str));
    let hist_rows = report.histogram.counts.iter().map(|(class, counts)| {
        let mut row = vec![format!("{class:?}")];
        row.extend(counts.iter().map(|n| n.to_string()));
        row
    });
    files.push(("first_response.csv", csv_bytes(&header, hist_rows)?));

    let scatter_rows = report
        .scatter
        .iter()
        .map(|p| vec![p.conversation_id.clone(), p.round.to_string(), num(p.latency_minutes, 3)]);
    files.push((
        "rounds_vs_response.csv",
        csv_bytes(&["conversation_id", "round", "latency_minutes"], scatter_rows)?,
    ));

    files.push(("summary.md", summary_markdown(report).into_bytes()));

    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn summary_markdown(r: &Report) -> String {
    let mut s = String::from("# Engagement report\n\n");
    let _ = writeln!(s, "Terminated conversations: {}", r.terminated);
    if r.open > 0 {
        let _ = writeln!(s, "Still open (excluded): {}", r.open);
    }
    match &r.summary {
        None => s.push_str("\nNo terminated conversations.\n"),
        Some(o) => {
            let _ = writeln!(
                s,
                "\n| outcome | count | percent |\n|---|---|---|\n| success | {} | {}% |\n| no response | {} | {}% |\n| premature | {} | {}% |",
                o.success_count,
                format_percent(o.success_count, o.total),
                o.no_response_count,
                format_percent(o.no_response_count, o.total),
                o.premature_count,
                format_percent(o.premature_count, o.total),
            );
        }
    }
    if let Some(m) = r.success_median_rounds {
        let _ = writeln!(s, "\nMedian rounds to payment details: {m}");
    }
    let _ = writeln!(s, "Most rounds in any conversation: {}", r.max_round);
    let _ = writeln!(s, "\nPayment disclosures: {}", r.disclosures_total);
    if !r.payments.is_empty() {
        s.push_str("\n| method | count | percent |\n|---|---|---|\n");
        for p in &r.payments {
            let _ = writeln!(
                s,
                "| {} | {} | {}% |",
                p.method.label(),
                p.count,
                format_hundredths(p.percent_hundredths)
            );
        }
    }
    let _ = writeln!(s, "\nPrice quotes: {} in {} bins", r.quotes.len(), r.price_bins.len());
    let by_class = |c: Classification| r.actors.iter().filter(|a| a.classification == c).count();
    let _ = writeln!(
        s,
        "Accounts: {} individual, {} platform, {} unknown",
        by_class(Classification::Individual),
        by_class(Classification::Platform),
        by_class(Classification::Unknown),
    );
    s
}
