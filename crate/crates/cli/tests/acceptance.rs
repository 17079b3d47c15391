//! Release gate. Each numbered criterion runs at its stated tolerance and
//! prints one PASS or FAIL line; any failure fails the target.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use baitline_core::analytics::{
    build_report, classify_actor, five_number, AnalyticsConfig, Report,
};
use baitline_core::domain::{
    ActorProfile, Carrier, Classification, MediaKind, MediaRef, OutcomeKind, PaymentMethod,
};
use baitline_core::engagement::{DriveOutcome, EngageError, Engine, EngineParts, EngagementPolicy, OperatorAction};
use baitline_core::llm::{Purpose, Scripted, ScriptedModel};
use baitline_core::runtime::{build_transport, discover, engage, engine_parts, open_store, RunConfig};
use baitline_core::store::{parse_log, read_log, replay, replay_file, Event, EventStore, Snapshot, StoreError};
use baitline_core::transport::{MediaSpec, PersonaKind, PersonaSpec, ReplyMessage, Scenario, Simnet};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    }};
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture_log() -> PathBuf {
    root().join("fixtures/reference/events.log")
}

fn baitline(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_baitline")).args(args).output().expect("spawn baitline");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Shares as printed in the payment breakdown, hundredths of a percent.
const FIGURE_SHARES: [(PaymentMethod, f64); 7] = [
    (PaymentMethod::AlipayImage, 25.81),
    (PaymentMethod::Usdt, 24.19),
    (PaymentMethod::WeChat, 22.58),
    (PaymentMethod::Alipay, 19.35),
    (PaymentMethod::QQImage, 4.84),
    (PaymentMethod::Bank, 1.61),
    (PaymentMethod::PaymentSolution, 1.61),
];
const DISCLOSURE_COUNTS: [usize; 7] = [16, 15, 14, 12, 3, 1, 1];

/// The outcome and payment statistics shared by the fixture and live runs.
fn check_headline(snapshot: &Snapshot, report: &Report) -> Outcome {
    let done: Vec<_> = snapshot.terminated_conversations().collect();
    ensure!(done.len() == 53, "{} terminated conversations, want 53", done.len());
    let count = |k: OutcomeKind| done.iter().filter(|c| c.outcome.as_ref().map(|o| o.kind) == Some(k)).count();
    let (ok, none, early) = (count(OutcomeKind::PaymentObtained), count(OutcomeKind::NoResponse), count(OutcomeKind::Disengaged));
    ensure!((ok, none, early) == (30, 15, 8), "outcomes {ok}/{none}/{early}, want 30/15/8");

    let s = report.summary.as_ref().ok_or("no summary")?;
    let success_pp = s.success_rate * 100.0;
    let premature_pp = s.premature_rate_over_total * 100.0;
    ensure!((success_pp - 56.6).abs() <= 0.05, "success rate {success_pp:.4}%");
    ensure!((premature_pp - 15.1).abs() <= 0.05, "premature rate {premature_pp:.4}%");
    ensure!((success_pp - 100.0 * ok as f64 / 53.0).abs() < 1e-9, "success rate disagrees with the raw count");

    let disclosures: Vec<_> = done.iter().flat_map(|c| snapshot.disclosures.get(&c.conversation_id).into_iter().flatten()).collect();
    ensure!(disclosures.len() == 62, "{} disclosures, want 62", disclosures.len());
    let mut by_method: BTreeMap<PaymentMethod, usize> = BTreeMap::new();
    for d in &disclosures {
        *by_method.entry(d.method).or_default() += 1;
    }
    for ((method, want_pct), want_count) in FIGURE_SHARES.iter().zip(DISCLOSURE_COUNTS) {
        let n = by_method.get(method).copied().unwrap_or(0);
        ensure!(n == want_count, "{method:?}: {n} disclosures, want {want_count}");
        let share = report.payments.iter().find(|p| p.method == *method).ok_or(format!("{method:?} missing"))?;
        let got = share.percent_hundredths as f64 / 100.0;
        ensure!((got - want_pct).abs() <= 0.01 + 1e-9, "{method:?} share {got}, want {want_pct}");
        let exact = 100.0 * n as f64 / 62.0;
        ensure!((got - exact).abs() <= 0.005 + 1e-9, "{method:?} share {got} strays from {exact}");
    }
    let order: Vec<PaymentMethod> = report.payments.iter().map(|p| p.method).collect();
    ensure!(order == FIGURE_SHARES.map(|(m, _)| m), "payment order {order:?}");
    Ok(format!(
        "success {success_pp:.2}%, premature {premature_pp:.2}%, shares {}",
        report.payments.iter().map(|p| format!("{:.2}", p.percent_hundredths as f64 / 100.0)).collect::<Vec<_>>().join("/")
    ))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let snapshot = replay_file(&fixture_log()).map_err(|e| e.to_string())?;
    let report = build_report(&snapshot, &AnalyticsConfig::default()).map_err(|e| e.to_string())?;
    let detail = check_headline(&snapshot, &report)?;

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (code, stdout, stderr) =
        baitline(&["analyze", "--log", path_str(&fixture_log()), "--out", path_str(out.path())]);
    ensure!(code == 0, "analyze exited {code}: {stderr}");
    ensure!(stdout.contains("(56.60%)"), "analyze output lacks the success rate:\n{stdout}");
    let shares = std::fs::read_to_string(out.path().join("payment_methods.csv")).map_err(|e| e.to_string())?;
    for (_, pct) in FIGURE_SHARES {
        ensure!(shares.contains(&format!(",{pct:.2}")), "payment_methods.csv lacks {pct:.2}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{detail}; {:.2} s", elapsed.as_secs_f64()))
}

fn simulate_run(dir: &Path, seed: u64) -> Result<(Vec<u8>, String), String> {
    let log = dir.join("events.log");
    let (code, stdout, stderr) = baitline(&[
        "simulate",
        "--seed",
        &seed.to_string(),
        "--log",
        path_str(&log),
        "--out",
        path_str(&dir.join("report")),
    ]);
    ensure!(code == 0, "simulate exited {code}: {stderr}");
    Ok((std::fs::read(&log).map_err(|e| e.to_string())?, stdout))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut logs = Vec::new();
    for d in &dirs {
        logs.push(simulate_run(d.path(), 7)?.0);
    }
    ensure!(logs.windows(2).all(|w| w[0] == w[1]), "seeded runs wrote different logs");
    let snapshot = replay(&parse_log(std::str::from_utf8(&logs[0]).unwrap()).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let relevant = snapshot.relevant_channels().count();
    ensure!(snapshot.channels.len() == 98 && relevant == 98, "{} channels, {relevant} relevant", snapshot.channels.len());
    ensure!(snapshot.actors.len() == 120, "{} actors", snapshot.actors.len());
    ensure!(snapshot.conversations.len() == 53, "{} sessions", snapshot.conversations.len());
    let report = build_report(&snapshot, &AnalyticsConfig::default()).map_err(|e| e.to_string())?;
    let detail = check_headline(&snapshot, &report)?;
    let other = simulate_run(tempfile::tempdir().unwrap().path(), 8)?.0;
    ensure!(other != logs[0], "a different seed produced the same log");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "98 channels, 120 accounts, 53 sessions; {detail}; 3 identical logs of {} bytes; {:.2} s",
        logs[0].len(),
        elapsed.as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let snapshot = replay_file(&fixture_log()).map_err(|e| e.to_string())?;
    let report = build_report(&snapshot, &AnalyticsConfig::default()).map_err(|e| e.to_string())?;
    let mut success_rounds: Vec<u32> = snapshot
        .terminated_conversations()
        .filter(|c| c.outcome.as_ref().map(|o| o.kind) == Some(OutcomeKind::PaymentObtained))
        .map(|c| c.round_counter)
        .collect();
    success_rounds.sort_unstable();
    let n = success_rounds.len();
    let oracle = if n % 2 == 1 {
        success_rounds[n / 2] as f64
    } else {
        (success_rounds[n / 2 - 1] + success_rounds[n / 2]) as f64 / 2.0
    };
    ensure!(report.success_median_rounds == Some(3.0), "median {:?}", report.success_median_rounds);
    ensure!(oracle == 3.0, "direct median {oracle}");
    let cdf = report.round_cdf.as_ref().ok_or("no cdf")?;
    ensure!(cdf.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1), "cdf not monotone");
    ensure!(cdf.points.last().map(|p| p.1) == Some(1.0), "cdf ends at {:?}", cdf.points.last());
    let answered: Vec<u32> = snapshot
        .terminated_conversations()
        .filter(|c| c.outcome.as_ref().map(|o| o.kind) != Some(OutcomeKind::NoResponse))
        .map(|c| c.round_counter)
        .collect();
    ensure!(cdf.sample == answered.len(), "cdf over {} conversations, want {}", cdf.sample, answered.len());
    for (r, f) in &cdf.points {
        let brute = answered.iter().filter(|x| *x <= r).count() as f64 / answered.len() as f64;
        ensure!((brute - f).abs() < 1e-12, "cdf at {r}: {f} vs {brute}");
    }
    ensure!(report.max_round <= 5, "max round {}", report.max_round);
    Ok(format!(
        "median {oracle} over {n} successes; cdf {}; max round {}",
        cdf.points.iter().map(|(r, f)| format!("{r}:{f:.3}")).collect::<Vec<_>>().join(" "),
        report.max_round
    ))
}

fn text(t: &str) -> ReplyMessage {
    ReplyMessage { text: t.into(), media: vec![] }
}

fn persona(id: &str, kind: PersonaKind, script: Vec<Vec<ReplyMessage>>) -> PersonaSpec {
    PersonaSpec { actor_id: id.into(), kind, reply_latency: None, script, blocks_after: None }
}

fn engine(personas: Vec<PersonaSpec>, model: ScriptedModel, auto_approve: bool) -> Engine {
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
    let net = Simnet::new(Scenario { seed: 21, personas, ..Default::default() }).unwrap();
    let policy = EngagementPolicy { auto_approve, ..Default::default() };
    Engine::new(EngineParts::new(policy, Arc::new(model)), Box::new(net), store).unwrap()
}

fn replays(e: &Engine) -> Result<(), String> {
    let replayed = replay(e.store().records()).map_err(|e| e.to_string())?;
    ensure!(&replayed == e.store().snapshot(), "replayed state differs from the live state");
    Ok(())
}

fn refusal_engines() -> Result<(Engine, String, Engine, String), String> {
    let mut always = engine(
        vec![persona("a", PersonaKind::FastIndividual, vec![vec![text("30分钟 300元")]])],
        ScriptedModel::new().fallback(Purpose::Draft, Scripted::Refuse),
        true,
    );
    let a = always.open_session("a").map_err(|e| e.to_string())?;
    always.drive(None).map_err(|e| e.to_string())?;

    let mut mixed = engine(
        vec![persona("b", PersonaKind::FastIndividual, vec![vec![text("300")], vec![text("30 min")], vec![]])],
        ScriptedModel::new().push_many(
            Purpose::Draft,
            [Scripted::Refuse, Scripted::Reply("ok".into()), Scripted::Refuse, Scripted::Reply("ok again".into())],
        ),
        true,
    );
    let b = mixed.open_session("b").map_err(|e| e.to_string())?;
    let until = mixed.now() + 3_600_000;
    mixed.drive(Some(until)).map_err(|e| e.to_string())?;
    Ok((always, a, mixed, b))
}

fn criterion_4() -> Outcome {
    let (always, a, mixed, b) = refusal_engines()?;
    let c = &always.store().snapshot().conversations[&a];
    let kind = c.outcome.as_ref().map(|o| o.kind);
    ensure!(kind == Some(OutcomeKind::LlmFailure), "always-refusing model ended with {kind:?}");
    let refusals = always.store().records().iter().filter(|r| matches!(r.event, Event::DraftRefused { .. })).count();
    ensure!(refusals == 3 && c.retry_counter == 3, "{refusals} refusals logged, retry counter {}", c.retry_counter);

    let c = &mixed.store().snapshot().conversations[&b];
    ensure!(!c.is_terminated(), "refusal, success, refusal terminated the session");
    ensure!(c.retry_counter == 0 && c.outbound_count() == 3, "retry {} after {} sends", c.retry_counter, c.outbound_count());
    Ok("3 straight refusals end in LlmFailure; refuse/ok/refuse keeps the session open".into())
}

fn approval_engine() -> Engine {
    let script = vec![vec![text("30分钟 300元")], vec![text("how long?")], vec![text("USDT TX7yZ8mV4nQ2pL9sK3jH6gF5dC1bA2wE8r")]];
    engine(
        vec![
            persona("a", PersonaKind::FastIndividual, script.clone()),
            persona("b", PersonaKind::SlowPlatform, script),
        ],
        ScriptedModel::new().fallback(Purpose::Draft, Scripted::Reply("sure, and then?".into())),
        false,
    )
}

fn criterion_5() -> Outcome {
    let mut e = approval_engine();
    e.open_session("a").map_err(|e| e.to_string())?;
    e.open_session("b").map_err(|e| e.to_string())?;

    let before = e.store().sequence();
    let first = e.pending().first().cloned().ok_or("no draft queued")?;
    let r = e.send_draft(&first.draft_id);
    ensure!(matches!(r, Err(EngageError::NotApproved(_))), "undecided send returned {r:?}");
    ensure!(e.store().sequence() == before, "a refused send touched the log");

    let mut rounds = 0;
    while let DriveOutcome::AwaitingOperator(_) = e.drive(None).map_err(|e| e.to_string())? {
        for (i, d) in e.pending().into_iter().enumerate() {
            let action = if i % 2 == 0 { OperatorAction::Approve } else { OperatorAction::Edit { text: "and the price?".into() } };
            e.decide(&d.draft_id, action, "op-1").map_err(|e| e.to_string())?;
        }
        rounds += 1;
        ensure!(rounds < 50, "supervised run did not finish");
    }
    let records = e.store().records();
    let mut sends = 0;
    for (i, r) in records.iter().enumerate() {
        if let Event::MessageSent { draft_id, .. } = &r.event {
            sends += 1;
            let released = records[..i].iter().rev().find_map(|p| match &p.event {
                Event::OperatorDecision { draft_id: Some(d), action, .. } if d == draft_id => Some(action.releases_draft()),
                _ => None,
            });
            ensure!(released == Some(true), "send {} of {draft_id} has no approving decision", r.sequence);
        }
    }
    ensure!(sends >= 6, "only {sends} sends");
    replays(&e)?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("events.log");
    let (code, _, err) = baitline(&["discover", "--log", path_str(&log)]);
    ensure!(code == 0, "discover exited {code}: {err}");
    let (code, out, err) = baitline(&["engage", "--log", path_str(&log)]);
    ensure!(code == 0, "engage exited {code}: {err}");
    let cli_log = read_log(&log).map_err(|e| e.to_string())?;
    ensure!(!cli_log.iter().any(|r| matches!(r.event, Event::MessageSent { .. })), "unsupervised engage sent a message");
    ensure!(out.contains("53 drafts await review"), "engage output:\n{out}");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[transport]\nkind = \"live\"\nenable_live = true\n[engagement]\nauto_approve = true\n").unwrap();
    let (code, _, _) = baitline(&["engage", "--config", path_str(&cfg)]);
    ensure!(code == 2, "auto-approve on the live transport exited {code}");
    Ok(format!("{sends} sends each preceded by approve/edit; undecided send refused; CLI engage holds 53 openers"))
}

fn upseller_engine() -> (Engine, String) {
    let image = ReplyMessage {
        text: String::new(),
        media: vec![MediaSpec { kind: MediaKind::Image, person_labels: vec![], payload: "https://qr.alipay.com/fkx7755vc".into() }],
    };
    let script = vec![vec![text("VIP show 40分钟 600元, pay first")], vec![image]];
    let model = ScriptedModel::new().fallback(Purpose::Draft, Scripted::Reply("ok, how do I pay?".into()));
    let mut e = engine(vec![persona("up", PersonaKind::Upseller, script)], model, true);
    let conv = e.open_session("up").unwrap();
    e.drive(None).unwrap();
    (e, conv)
}

fn criterion_6() -> Outcome {
    let (e, conv) = upseller_engine();
    let snap = e.store().snapshot();
    let c = &snap.conversations[&conv];
    let outcome = c.outcome.as_ref().ok_or("session still open")?;
    ensure!(outcome.kind == OutcomeKind::PaymentObtained, "ended {:?}", outcome.kind);
    let d = snap.disclosures.get(&conv).ok_or("no disclosure")?;
    ensure!(d.len() == 1, "{} disclosures", d.len());
    ensure!(d[0].method == PaymentMethod::AlipayImage && d[0].carrier == Carrier::Image, "got {:?}/{:?}", d[0].method, d[0].carrier);
    let carrier_msg = c.messages.iter().find(|m| m.message_id == d[0].evidence_ref.message_id).ok_or("evidence missing")?;
    ensure!(carrier_msg.text.is_empty() && carrier_msg.ocr_text.is_some(), "payment was not image-only");
    Ok("image-only QR gives AlipayImage via the Image carrier, session PaymentObtained".into())
}

/// Hinges as medians of the lower and upper halves, both halves taking the
/// middle value when the count is odd.
fn halves_oracle(values: &[f64]) -> [f64; 5] {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = |v: &[f64]| {
        let n = v.len();
        if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
    };
    let n = s.len();
    let half = n.div_ceil(2);
    [s[0], median(&s[..half]), median(&s), median(&s[n - half..]), s[n - 1]]
}

fn criterion_7() -> Outcome {
    let snapshot = replay_file(&fixture_log()).map_err(|e| e.to_string())?;
    let report = build_report(&snapshot, &AnalyticsConfig::default()).map_err(|e| e.to_string())?;
    let bin = report.price_bins.iter().find(|b| (b.lo, b.hi) == (30, 34)).ok_or("no 30-34 bin")?;
    ensure!(bin.stats.min == 250.0 && bin.stats.max == 600.0, "30-34 spans {}..{}", bin.stats.min, bin.stats.max);
    let in_bin: Vec<f64> = report.quotes.iter().filter(|q| (30..=34).contains(&q.duration_minutes)).map(|q| q.price_cny).collect();
    ensure!(in_bin.len() == bin.count, "bin holds {} of {} quotes", bin.count, in_bin.len());

    let domain = [1.0, 2.0, 5.0, 9.0];
    let mut cases = 0usize;
    for n in 1..=8u32 {
        for code in 0..4usize.pow(n) {
            let values: Vec<f64> = (0..n).map(|i| domain[(code / 4usize.pow(i)) % 4]).collect();
            let f = five_number(&values).ok_or("empty")?;
            let got = [f.min, f.q1, f.median, f.q3, f.max];
            ensure!(got == halves_oracle(&values), "{values:?}: {got:?}");
            cases += 1;
        }
    }
    Ok(format!("30-34 min bin spans 250-600 CNY over {} quotes; quartiles match on {cases} inputs", bin.count))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig { seed: Some(7), ..RunConfig::default() };
    cfg.engagement.auto_approve = true;
    cfg.store.path = dir.path().join("events.log");
    let model = baitline_core::runtime::build_model(&cfg).map_err(|e| e.to_string())?;
    let mut store = open_store(&cfg).map_err(|e| e.to_string())?;
    let mut transport = build_transport(&cfg, &store).map_err(|e| e.to_string())?;
    discover(&cfg, &mut store, transport.as_mut(), model.as_ref()).map_err(|e| e.to_string())?;
    let mut live = Engine::new(engine_parts(&cfg, model).map_err(|e| e.to_string())?, transport, store)
        .map_err(|e| e.to_string())?;
    engage(&mut live, None).map_err(|e| e.to_string())?;
    replays(&live)?;
    let from_disk = replay_file(&cfg.store.path).map_err(|e| e.to_string())?;
    ensure!(&from_disk == live.store().snapshot(), "the file replays to a different state");

    let (always, _, mixed, _) = refusal_engines()?;
    replays(&always)?;
    replays(&mixed)?;
    replays(&upseller_engine().0)?;
    let mut supervised = approval_engine();
    supervised.open_session("a").map_err(|e| e.to_string())?;
    while let DriveOutcome::AwaitingOperator(_) = supervised.drive(None).map_err(|e| e.to_string())? {
        for d in supervised.pending() {
            supervised.decide(&d.draft_id, OperatorAction::Approve, "op").map_err(|e| e.to_string())?;
        }
    }
    replays(&supervised)?;

    let text = std::fs::read_to_string(fixture_log()).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().collect();
    let gap = 417;
    let broken: String = lines.iter().enumerate().filter(|(i, _)| *i != gap - 1).map(|(_, l)| format!("{l}\n")).collect();
    match parse_log(&broken) {
        Err(StoreError::CorruptLog { sequence, .. }) => ensure!(sequence == gap as u64, "gap reported at {sequence}"),
        other => return Err(format!("gap went unnoticed: {:?}", other.map(|r| r.len()))),
    }
    let tampered = text.replacen("\"PaymentObtained\"", "\"NoResponse\"", 1);
    ensure!(matches!(parse_log(&tampered), Err(StoreError::CorruptLog { .. })), "edited record passed its checksum");
    Ok(format!("6 runs replay to their live state; gap at {gap} and an edited record both detected"))
}

fn criterion_9() -> Outcome {
    let snapshot = replay_file(&fixture_log()).map_err(|e| e.to_string())?;
    let report = build_report(&snapshot, &AnalyticsConfig::default()).map_err(|e| e.to_string())?;
    let h = &report.histogram;
    let edges = &h.edges_minutes;
    let five = edges.iter().position(|e| *e == 5.0).ok_or("no 5 min edge")?;
    let thirty = edges.iter().position(|e| *e == 30.0).ok_or("no 30 min edge")?;
    let individual = &h.counts[&Classification::Individual];
    let platform = &h.counts[&Classification::Platform];
    ensure!(individual.iter().sum::<usize>() > 0 && individual[five..].iter().all(|n| *n == 0), "individual mass {individual:?}");
    ensure!(platform.iter().sum::<usize>() > 0 && platform[..thirty].iter().all(|n| *n == 0), "platform mass {platform:?}");
    let latency = |class: Classification| {
        report
            .actors
            .iter()
            .filter(|a| a.classification == class)
            .flat_map(|a| a.first_response_secs.iter().copied())
            .collect::<Vec<f64>>()
    };
    let ind = latency(Classification::Individual);
    let plat = latency(Classification::Platform);
    ensure!(ind.iter().all(|s| *s < 300.0), "an individual answered after 5 min");
    ensure!(plat.iter().all(|s| *s > 1800.0), "a platform answered within 30 min");

    let labels = ["p1", "p2", "p3"];
    let mut cases = 0;
    for mask_a in 0u8..8 {
        for mask_b in 0u8..8 {
            let pick = |m: u8| labels.iter().enumerate().filter(|(i, _)| m & (1 << i) != 0).map(|(_, l)| l.to_string()).collect::<Vec<_>>();
            let media = [pick(mask_a), pick(mask_b)].map(|person_labels| MediaRef {
                media_id: "m".into(),
                kind: MediaKind::Image,
                person_labels,
                digest: None,
            });
            let distinct = (mask_a | mask_b).count_ones();
            let want = match distinct {
                0 => Classification::Unknown,
                1 => Classification::Individual,
                _ => Classification::Platform,
            };
            ensure!(classify_actor(media.iter()) == want, "labels {mask_a:03b}/{mask_b:03b}");
            cases += 1;
        }
    }
    Ok(format!(
        "{} individual replies all under 5 min, {} platform replies all over 30 min; label rule holds on {cases} cases",
        ind.len(),
        plat.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "headline statistics from the shipped log", criterion_1),
        (2, "end-to-end simulated run", criterion_2),
        (3, "round accounting", criterion_3),
        (4, "refusal retries", criterion_4),
        (5, "approval gate", criterion_5),
        (6, "payment inside an image", criterion_6),
        (7, "price bins and quartiles", criterion_7),
        (8, "replay determinism", criterion_8),
        (9, "individual vs platform", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, title, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| title.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n} PASS {title}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL {title}: {why} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
