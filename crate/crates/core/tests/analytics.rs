use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use baitline_core::analytics::{
    build_report, export_report, five_number, payment_distribution, price_bins, round_cdf, shares_hundredths,
    AnalyticsConfig, Report,
};
use baitline_core::domain::{
    ActorProfile, Carrier, Classification, Conversation, EngagementOutcome, EvidenceRef, MediaKind, OutcomeKind,
    PaymentDisclosure, PaymentMethod, PriceQuote, SessionState,
};
use baitline_core::engagement::{DriveOutcome, Engine, EngineParts, EngagementPolicy};
use baitline_core::llm::RuleModel;
use baitline_core::store::{Event, EventStore, Snapshot};
use baitline_core::transport::{MediaSpec, PersonaKind, PersonaSpec, ReplyMessage, Scenario, Simnet};

/// Quartiles by Tukey's depth rule: the median sits at depth (n+1)/2 and
/// each hinge at depth (floor(median depth)+1)/2, counted from either end.
/// Half-integer depths average the two neighbours.
fn depth_oracle(values: &[f64]) -> [f64; 5] {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let at_depth = |d2: usize, from_top: bool| {
        // d2 is twice the depth
        let idx = |k: usize| if from_top { s[n - k] } else { s[k - 1] };
        if d2.is_multiple_of(2) {
            idx(d2 / 2)
        } else {
            (idx(d2 / 2) + idx(d2 / 2 + 1)) / 2.0
        }
    };
    let median_d2 = n + 1;
    let hinge_d2 = (median_d2 / 2) + 1;
    [s[0], at_depth(hinge_d2, false), at_depth(median_d2, false), at_depth(hinge_d2, true), s[n - 1]]
}

#[test]
fn quartiles_match_the_depth_rule_exhaustively() {
    let domain = [1.0, 2.0, 5.0, 9.0];
    let mut checked = 0;
    for n in 1..=8u32 {
        for code in 0..4usize.pow(n) {
            let values: Vec<f64> = (0..n).map(|i| domain[(code / 4usize.pow(i)) % 4]).collect();
            let f = five_number(&values).unwrap();
            assert_eq!([f.min, f.q1, f.median, f.q3, f.max], depth_oracle(&values), "{values:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, (1..=8).map(|n| 4usize.pow(n)).sum::<usize>());
}

fn disclosure(method: PaymentMethod) -> PaymentDisclosure {
    let carrier = if method.image_only() { Carrier::Image } else { Carrier::Text };
    PaymentDisclosure {
        method,
        carrier,
        evidence_ref: EvidenceRef { message_id: "m".into(), media_id: None },
        detail: "d".into(),
    }
}

#[test]
fn payment_shares_for_the_observed_counts() {
    use PaymentMethod::*;
    let counts = [(AlipayImage, 16), (Usdt, 15), (WeChat, 14), (Alipay, 12), (QQImage, 3), (Bank, 1), (PaymentSolution, 1)];
    let all: Vec<_> = counts.iter().flat_map(|(m, n)| (0..*n).map(|_| disclosure(*m))).collect();
    let shares = payment_distribution(&all);
    let got: Vec<(PaymentMethod, usize, u64)> =
        shares.iter().map(|s| (s.method, s.count, s.percent_hundredths)).collect();
    assert_eq!(
        got,
        [
            (AlipayImage, 16, 2581),
            (Usdt, 15, 2419),
            (WeChat, 14, 2258),
            (Alipay, 12, 1935),
            (QQImage, 3, 484),
            (Bank, 1, 161),
            (PaymentSolution, 1, 161),
        ]
    );
}

#[test]
fn seven_equal_shares_stay_within_bounds() {
    let h = shares_hundredths(&[1; 7]);
    assert_eq!(h.iter().sum::<u64>(), 10_002);
    assert!(h.iter().all(|v| *v == 1428 || *v == 1429));
}

proptest! {
    #[test]
    fn shares_total_one_hundred(counts in prop::collection::vec(0usize..500, 1..8)) {
        let total: usize = counts.iter().sum();
        prop_assume!(total > 0);
        let h = shares_hundredths(&counts);
        let sum: u64 = h.iter().sum();
        prop_assert!((9_998..=10_002).contains(&sum), "sum {sum}");
        for (c, v) in counts.iter().zip(&h) {
            let err = *v as i128 * total as i128 - *c as i128 * 10_000;
            prop_assert!(err.abs() <= total as i128, "{c}/{total} -> {v}");
        }
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one(rounds in prop::collection::vec(0u32..12, 1..60)) {
        let convs: Vec<Conversation> = rounds.iter().enumerate().map(|(i, r)| ended(i, *r)).collect();
        let cdf = round_cdf(&convs, false).unwrap();
        prop_assert!(cdf.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        prop_assert_eq!(cdf.points.last().unwrap().1, 1.0);
        for r in 0..12 {
            let brute = rounds.iter().filter(|x| **x <= r).count() as f64 / rounds.len() as f64;
            prop_assert_eq!(cdf.at(r), brute);
        }
    }

    #[test]
    fn bins_partition_quotes(pairs in prop::collection::vec((1u32..120, 1u32..2000), 0..40)) {
        let quotes: Vec<PriceQuote> = pairs
            .iter()
            .map(|(d, p)| PriceQuote { duration_minutes: *d, price_cny: *p as f64, evidence_ref: "e".into() })
            .collect();
        let bins = price_bins(&quotes);
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), quotes.len());
        for b in &bins {
            prop_assert_eq!(b.hi - b.lo, 4);
            prop_assert_eq!(b.lo % 5, 0);
            let brute = pairs.iter().filter(|(d, _)| *d >= b.lo && *d <= b.hi).count();
            prop_assert_eq!(b.count, brute);
            let s = b.stats;
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        }
    }
}

fn ended(i: usize, rounds: u32) -> Conversation {
    let mut c = Conversation::new(format!("conv-{i:04}"), "a");
    c.state = SessionState::Terminated;
    c.round_counter = rounds;
    c.outcome = Some(EngagementOutcome { kind: OutcomeKind::Disengaged, evidence: vec![] });
    c
}

#[test]
fn thirty_minute_bin_spans_the_quoted_range() {
    let q = |d: u32, p: f64| PriceQuote { duration_minutes: d, price_cny: p, evidence_ref: "e".into() };
    let quotes = [q(32, 250.0), q(33, 600.0), q(30, 400.0), q(41, 650.0)];
    let bins = price_bins(&quotes);
    assert_eq!(bins.len(), 2);
    assert_eq!((bins[0].label(), bins[0].count), ("30-34".to_string(), 3));
    assert_eq!((bins[0].stats.min, bins[0].stats.median, bins[0].stats.max), (250.0, 400.0, 600.0));
    assert_eq!((bins[1].label(), bins[1].count), ("40-44".to_string(), 1));
}

fn reply(text: &str) -> ReplyMessage {
    ReplyMessage { text: text.into(), media: vec![] }
}

fn photo(labels: &[&str], payload: &str) -> ReplyMessage {
    ReplyMessage {
        text: String::new(),
        media: vec![MediaSpec {
            kind: MediaKind::Image,
            person_labels: labels.iter().map(|s| s.to_string()).collect(),
            payload: payload.into(),
        }],
    }
}

fn small_run() -> Snapshot {
    let personas = vec![
        PersonaSpec {
            actor_id: "solo".into(),
            kind: PersonaKind::FastIndividual,
            reply_latency: None,
            script: vec![
                vec![reply("30分钟 300元"), photo(&["p1"], "")],
                vec![reply("USDT only: TX7yZ8mV4nQ2pL9sK3jH6gF5dC1bA2wE8r")],
            ],
            blocks_after: None,
        },
        PersonaSpec {
            actor_id: "studio".into(),
            kind: PersonaKind::SlowPlatform,
            reply_latency: None,
            script: vec![
                vec![photo(&["g1"], ""), photo(&["g2"], "")],
                vec![reply("40分钟 650元")],
                vec![photo(&["g1"], "https://qr.alipay.com/fkx12345")],
            ],
            blocks_after: None,
        },
        PersonaSpec { actor_id: "ghost".into(), kind: PersonaKind::Ghost, reply_latency: None, script: vec![], blocks_after: None },
    ];
    let mut store = EventStore::in_memory();
    for p in &personas {
        let profile = ActorProfile {
            actor_id: p.actor_id.clone(),
            source_channels: BTreeSet::new(),
            classification: Classification::Unknown,
            first_response_latencies: vec![],
        };
        store.append(0, Event::ActorIdentified { profile }).unwrap();
    }
    let net = Simnet::new(Scenario { seed: 9, personas: personas.clone(), ..Default::default() }).unwrap();
    let policy = EngagementPolicy { auto_approve: true, ..Default::default() };
    let mut engine = Engine::new(EngineParts::new(policy, Arc::new(RuleModel::default())), Box::new(net), store).unwrap();
    for p in &personas {
        engine.open_session(&p.actor_id).unwrap();
    }
    assert_eq!(engine.drive(None).unwrap(), DriveOutcome::Finished);
    engine.store().snapshot().clone()
}

#[test]
fn report_over_a_live_run() {
    let snap = small_run();
    let report = build_report(&snap, &AnalyticsConfig::default()).unwrap();
    let summary = report.summary.as_ref().unwrap();
    assert_eq!((summary.total, summary.success_count, summary.no_response_count), (3, 2, 1));
    assert_eq!(report.disclosures_total, 2);
    assert_eq!(report.round_cdf.as_ref().unwrap().sample, 2);
    assert_eq!(report.max_round, 3);
    let classes: Vec<(&str, Classification)> =
        report.actors.iter().map(|a| (a.actor_id.as_str(), a.classification)).collect();
    assert_eq!(
        classes,
        [("ghost", Classification::Unknown), ("solo", Classification::Individual), ("studio", Classification::Platform)]
    );
    let bins: Vec<String> = report.price_bins.iter().map(|b| b.label()).collect();
    assert_eq!(bins, ["30-34", "40-44"]);
    assert_eq!(report.histogram.counts[&Classification::Individual][0], 1);
    assert_eq!(report.histogram.counts[&Classification::Platform][0..3].iter().sum::<usize>(), 0);
    let solo_rounds: Vec<u32> = report
        .scatter
        .iter()
        .filter(|p| p.latency_minutes == 1.0)
        .map(|p| p.round)
        .collect();
    assert_eq!(solo_rounds, [1, 2]);
}

fn exported(report: &Report) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    export_report(report, dir.path())
        .unwrap()
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn export_is_byte_identical_across_runs() {
    let a = exported(&build_report(&small_run(), &AnalyticsConfig::default()).unwrap());
    let b = exported(&build_report(&small_run(), &AnalyticsConfig::default()).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.len(), 9);
}

#[test]
fn empty_store_exports_headers_only() {
    let report = build_report(&Snapshot::default(), &AnalyticsConfig::default()).unwrap();
    for (name, bytes) in exported(&report) {
        let text = String::from_utf8(bytes).unwrap();
        if name.ends_with(".csv") {
            let rows = text.lines().count();
            let expected = if name == "first_response.csv" { 4 } else { 1 };
            assert_eq!(rows, expected, "{name}");
        } else {
            assert!(text.contains("No terminated conversations"));
        }
    }
}
