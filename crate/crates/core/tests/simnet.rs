use std::collections::BTreeMap;
use std::time::Duration;

use baitline_core::domain::ChannelHandle;
use baitline_core::transport::{
    ChannelSpec, DirectoryQuery, PostSpec, Scenario, Simnet, Transport, TransportError,
};

fn post(text: &str) -> PostSpec {
    PostSpec { sender: None, text: text.into(), media: vec![] }
}

fn channel(handle: &str, posts: usize, pins: usize) -> ChannelSpec {
    ChannelSpec {
        handle: handle.into(),
        title: format!("{handle} title"),
        posts: (1..=posts).map(|i| post(&format!("post {i}"))).collect(),
        pins: (1..=pins).map(|i| post(&format!("pin {i}"))).collect(),
        join_rejected: false,
    }
}

fn fixture() -> Simnet {
    let handles: Vec<String> = ["zeta", "alpha", "mu", "beta", "kappa", "delta", "eta", "gamma", "iota", "theta"]
        .iter()
        .map(|h| format!("{h}_vc"))
        .collect();
    let mut channels: Vec<ChannelSpec> = handles.iter().map(|h| channel(h, 3, 0)).collect();
    channels.push(channel("archive", 1500, 3));
    channels.push(channel("empty", 0, 0));
    let mut locked = channel("locked", 1, 0);
    locked.join_rejected = true;
    channels.push(locked);
    let mut directory = BTreeMap::new();
    directory.insert("nude video chat".to_string(), handles);
    Simnet::new(Scenario { seed: 1, channels, directory, ..Default::default() }).unwrap()
}

fn handle(raw: &str) -> ChannelHandle {
    ChannelHandle::parse(raw).unwrap()
}

#[test]
fn directory_returns_the_ten_fixture_matches() {
    let mut net = fixture();
    let found = net.query_directory(&DirectoryQuery::new("nude video chat", 50).unwrap()).unwrap();
    assert_eq!(found.len(), 10);
    let mut sorted = found.clone();
    sorted.sort();
    assert_eq!(found, sorted);
}

#[test]
fn directory_matching_ignores_case_and_spacing() {
    let mut net = fixture();
    let found = net.query_directory(&DirectoryQuery::new("  Nude   VIDEO chat", 50).unwrap()).unwrap();
    assert_eq!(found.len(), 10);
}

#[test]
fn directory_without_matches_is_empty() {
    let mut net = fixture();
    assert!(net.query_directory(&DirectoryQuery::new("gardening", 5).unwrap()).unwrap().is_empty());
}

#[test]
fn max_results_one_returns_lowest_canonical_handle() {
    let mut net = fixture();
    let all = net.query_directory(&DirectoryQuery::new("nude video chat", 50).unwrap()).unwrap();
    let oracle = all.iter().map(|h| h.canonical.clone()).min().unwrap();
    let one = net.query_directory(&DirectoryQuery::new("nude video chat", 1).unwrap()).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].canonical, oracle);
}

#[test]
fn invalid_queries_are_rejected() {
    assert!(DirectoryQuery::new("  ", 5).is_err());
    assert!(DirectoryQuery::new("x", 0).is_err());
}

#[test]
fn join_is_required_before_history() {
    let mut net = fixture();
    let h = handle("archive");
    assert_eq!(net.fetch_history(&h, 10), Err(TransportError::NotJoined("archive".into())));
    let first = net.join_channel(&h).unwrap();
    assert!(!first.already_joined);
    let second = net.join_channel(&h).unwrap();
    assert!(second.already_joined);
    assert_eq!(first.title, second.title);
    assert!(net.fetch_history(&h, 10).is_ok());
}

#[test]
fn join_errors() {
    let mut net = fixture();
    assert!(matches!(net.join_channel(&handle("nowhere")), Err(TransportError::UnknownChannel(_))));
    assert!(matches!(net.join_channel(&handle("locked")), Err(TransportError::JoinRejected(_))));
}

#[test]
fn history_keeps_the_newest_thousand_and_pins_apart() {
    let mut net = fixture();
    let h = handle("@Archive");
    net.join_channel(&h).unwrap();
    let history = net.fetch_history(&h, 1000).unwrap();
    assert_eq!(history.messages.len(), 1000);
    assert_eq!(history.messages[0].text, "post 1500");
    assert_eq!(history.messages[999].text, "post 501");
    assert!(history.messages.windows(2).all(|w| w[0].timestamp > w[1].timestamp));
    assert_eq!(history.pinned.len(), 3);
}

#[test]
fn empty_channel_history() {
    let mut net = fixture();
    let h = handle("empty");
    net.join_channel(&h).unwrap();
    let history = net.fetch_history(&h, 1000).unwrap();
    assert!(history.messages.is_empty() && history.pinned.is_empty());
}

#[test]
fn zero_advance_fires_nothing() {
    let mut net = fixture();
    let before = net.now();
    assert_eq!(net.advance_time(Duration::ZERO).unwrap(), 0);
    assert_eq!(net.now(), before);
    assert!(net.poll_events(before).is_empty());
}

#[test]
fn scenario_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    let scenario = fixture().scenario().clone();
    scenario.save(&path).unwrap();
    assert_eq!(Scenario::load(&path).unwrap(), scenario);
}
