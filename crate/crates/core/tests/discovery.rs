use std::collections::BTreeMap;

use baitline_core::discovery::{
    extract_actors, record_actors, record_channels, run_discovery, DiscoveryConfig, OfferPatterns,
};
use baitline_core::domain::DiscoverySource;
use baitline_core::llm::{Purpose, RuleModel, Scripted, ScriptedModel};
use baitline_core::prompts::PromptTemplate;
use baitline_core::store::EventStore;
use baitline_core::transport::{ChannelSpec, PostSpec, Scenario, Simnet};

fn post(sender: Option<&str>, text: &str) -> PostSpec {
    PostSpec { sender: sender.map(String::from), text: text.into(), media: vec![] }
}

fn channel(handle: &str, posts: Vec<PostSpec>) -> ChannelSpec {
    ChannelSpec { handle: handle.into(), title: handle.to_uppercase(), posts, pins: vec![], join_rejected: false }
}

fn net(channels: Vec<ChannelSpec>, listed: &[&str]) -> Simnet {
    let mut directory = BTreeMap::new();
    directory.insert("nude video chat".to_string(), listed.iter().map(|s| s.to_string()).collect());
    Simnet::new(Scenario { seed: 3, channels, directory, ..Default::default() }).unwrap()
}

fn cfg(depth_cap: u32) -> DiscoveryConfig {
    DiscoveryConfig { seed_keywords: vec!["nude video chat".into()], depth_cap, ..Default::default() }
}

fn no_synonyms() -> ScriptedModel {
    ScriptedModel::new().fallback(Purpose::Synonyms, Scripted::Reply(String::new()))
}

fn handles(report: &baitline_core::discovery::DiscoveryReport) -> Vec<&str> {
    report.records.iter().map(|r| r.handle.as_str()).collect()
}

#[test]
fn cycles_visit_each_channel_once() {
    let mut t = net(
        vec![
            channel("alpha", vec![post(None, "see @beta")]),
            channel("beta", vec![post(None, "see t.me/alpha")]),
        ],
        &["alpha"],
    );
    let report = run_discovery(&cfg(3), &mut t, &no_synonyms(), &PromptTemplate::synonyms()).unwrap();
    assert_eq!(handles(&report), ["alpha", "beta"]);
    let beta = &report.records[1];
    assert_eq!(beta.depth, 1);
    assert_eq!(beta.discovery_source, DiscoverySource::CrossLink { parent: "alpha".into() });
}

#[test]
fn zero_depth_cap_keeps_only_seeds() {
    let mut t = net(
        vec![channel("alpha", vec![post(None, "see @beta")]), channel("beta", vec![])],
        &["alpha"],
    );
    let report = run_discovery(&cfg(0), &mut t, &no_synonyms(), &PromptTemplate::synonyms()).unwrap();
    assert_eq!(handles(&report), ["alpha"]);
    assert_eq!(report.beyond_cap, ["beta"]);
}

#[test]
fn depth_is_the_shortest_hop_count() {
    let mut t = net(
        vec![
            channel("a", vec![post(None, "@b @c")]),
            channel("b", vec![post(None, "@c @d")]),
            channel("c", vec![]),
            channel("d", vec![post(None, "@e")]),
            channel("e", vec![]),
        ],
        &["a"],
    );
    let report = run_discovery(&cfg(2), &mut t, &no_synonyms(), &PromptTemplate::synonyms()).unwrap();
    let depths: Vec<(&str, u32)> = report.records.iter().map(|r| (r.handle.as_str(), r.depth)).collect();
    assert_eq!(depths, [("a", 0), ("b", 1), ("c", 1), ("d", 2)]);
    assert_eq!(report.beyond_cap, ["e"]);
}

#[test]
fn dangling_links_are_skipped() {
    let mut t = net(vec![channel("alpha", vec![post(None, "@gone")])], &["alpha"]);
    let report = run_discovery(&cfg(2), &mut t, &no_synonyms(), &PromptTemplate::synonyms()).unwrap();
    assert_eq!(handles(&report), ["alpha"]);
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.skipped[0].handle, "gone");
    assert!(report.aborted.is_none());
}

#[test]
fn seed_handles_join_directory_results() {
    let mut t = net(vec![channel("alpha", vec![]), channel("zed", vec![])], &["alpha"]);
    let config = DiscoveryConfig { seed_handles: vec!["@Zed".into()], ..cfg(1) };
    let report = run_discovery(&config, &mut t, &no_synonyms(), &PromptTemplate::synonyms()).unwrap();
    assert_eq!(handles(&report), ["alpha", "zed"]);
    assert_eq!(report.records[1].discovery_source, DiscoverySource::SeedConfig);
}

#[test]
fn synonyms_widen_the_directory_search() {
    let mut directory = BTreeMap::new();
    directory.insert("naked video chat".to_string(), vec!["hidden".to_string()]);
    let mut t = Simnet::new(Scenario {
        channels: vec![channel("hidden", vec![])],
        directory,
        ..Default::default()
    })
    .unwrap();
    let report = run_discovery(&cfg(1), &mut t, &RuleModel::default(), &PromptTemplate::synonyms()).unwrap();
    assert_eq!(report.keywords.terms.len(), 4);
    assert_eq!(handles(&report), ["hidden"]);
}

#[test]
fn one_account_in_two_channels_is_one_profile() {
    let mut t = net(
        vec![
            channel("alpha", vec![post(Some("acct-1"), "pay to chat, dm me"), post(Some("chatty"), "hello all")]),
            channel("beta", vec![post(Some("acct-1"), "30分钟 300元")]),
            channel("quiet", vec![post(Some("acct-2"), "good morning")]),
        ],
        &["alpha", "beta", "quiet"],
    );
    let report = run_discovery(&cfg(1), &mut t, &no_synonyms(), &PromptTemplate::synonyms()).unwrap();
    let actors = extract_actors(&report.records, &OfferPatterns::default());
    assert_eq!(actors.len(), 1);
    assert_eq!(actors[0].actor_id, "acct-1");
    assert_eq!(actors[0].source_channels.iter().collect::<Vec<_>>(), ["alpha", "beta"]);
}

#[test]
fn reruns_are_idempotent() {
    let channels = vec![
        channel("alpha", vec![post(Some("acct-1"), "1v1 video chat session"), post(None, "@beta")]),
        channel("beta", vec![post(Some("acct-2"), "price list in pins")]),
    ];
    let mut store = EventStore::in_memory();
    let mut added = Vec::new();
    for _ in 0..2 {
        let mut t = net(channels.clone(), &["alpha"]);
        let report = run_discovery(&cfg(2), &mut t, &no_synonyms(), &PromptTemplate::synonyms()).unwrap();
        let actors = extract_actors(&report.records, &OfferPatterns::default());
        added.push((
            record_channels(&mut store, &report.records, 1).unwrap(),
            record_actors(&mut store, &actors, 1).unwrap(),
        ));
    }
    assert_eq!(added, [(2, 2), (0, 0)]);
    assert_eq!(store.snapshot().channels.len(), 2);
}
