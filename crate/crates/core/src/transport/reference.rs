//! A scripted network shaped like a mid-sized field run: 98 reachable channels
//! three hops deep from ten directory hits, 120 accounts posting offers, and
//! 53 of those accounts answering direct messages.
//!
//! Of the 53, thirty hand over payment details after one to five rounds,
//! fifteen never answer and eight drop out early. Their final messages carry
//! 62 payment disclosures between them, and early replies carry the price
//! quotes.

use std::collections::BTreeMap;

use super::scenario::{ChannelSpec, MediaSpec, PersonaKind, PersonaSpec, PostSpec, ReplyMessage, Scenario};
use crate::domain::{MediaKind, PaymentMethod};

pub const DIRECTORY_KEYWORD: &str = "nude video chat";
pub const SEED_CHANNELS: usize = 10;
pub const CHANNELS_BY_DEPTH: [usize; 4] = [SEED_CHANNELS, 30, 40, 18];
pub const OFFER_ACTORS: usize = 120;
pub const SUCCESSES: usize = 30;
pub const GHOSTS: usize = 15;
pub const DROPOUT_ROUNDS: [u32; 8] = [1, 1, 2, 2, 3, 3, 4, 5];
pub const PERSONAS: usize = SUCCESSES + GHOSTS + DROPOUT_ROUNDS.len();

/// Rounds before payment details arrive, one entry per successful persona.
pub const SUCCESS_ROUNDS: [u32; SUCCESSES] = [
    1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 4, 4, 4, 4, 4, 4, 4, 5, 5, 5, 5,
];

/// Disclosure counts per method across all successful personas.
pub const DISCLOSURES: [(PaymentMethod, usize); 7] = [
    (PaymentMethod::AlipayImage, 16),
    (PaymentMethod::Usdt, 15),
    (PaymentMethod::WeChat, 14),
    (PaymentMethod::Alipay, 12),
    (PaymentMethod::QQImage, 3),
    (PaymentMethod::Bank, 1),
    (PaymentMethod::PaymentSolution, 1),
];

/// WeChat disclosures delivered as a QR image rather than an id in text.
pub const WECHAT_AS_IMAGE: usize = 7;

/// (minutes, CNY) quoted in first replies.
pub const QUOTES: [(u32, u32); 25] = [
    (10, 100),
    (10, 150),
    (12, 120),
    (15, 200),
    (15, 180),
    (18, 220),
    (20, 260),
    (20, 300),
    (22, 280),
    (25, 320),
    (30, 250),
    (30, 400),
    (30, 450),
    (32, 600),
    (30, 350),
    (35, 450),
    (35, 500),
    (38, 480),
    (40, 600),
    (40, 680),
    (42, 640),
    (40, 620),
    (40, 650),
    (45, 550),
    (50, 660),
];

const OFFERS: [&str; 6] = [
    "pay to chat with a real girl, private video chat open now",
    "裸聊 1v1 真人 私聊我",
    "video chat service available tonight, price list in pinned",
    "paid video chat, 30分钟 300元, dm for price",
    "private show available, 1v1 only",
    "付费视频聊天 私聊我",
];

const CHATTER: [&str; 4] = ["hello everyone", "anyone online?", "good night all", "nice group"];

const SMALL_TALK: [&str; 6] = [
    "hello handsome",
    "you want to see me now?",
    "I can start right away",
    "you will like it, trust me",
    "ok honey, wait a moment",
    "so what do you like?",
];

fn seed_channel(i: usize) -> String {
    format!("nvc_seed_{i:02}")
}
fn lounge(i: usize) -> String {
    format!("vc_lounge_{i:02}")
}
fn room(i: usize) -> String {
    format!("vc_room_{i:02}")
}
fn corner(i: usize) -> String {
    format!("vc_corner_{i:02}")
}
const BEYOND: &str = "vc_far_00";
const DANGLING: &str = "vc_gone_00";

pub fn actor_id(i: usize) -> String {
    format!("acct-{:03}", i + 1)
}

/// Role slot of actor `i`: `Some(slot)` for the 53 reachable accounts,
/// interleaved across ids. Slots below 30 succeed, the next 15 ghost, the
/// rest drop out.
pub fn persona_slot(i: usize) -> Option<usize> {
    let v = (i * 37) % OFFER_ACTORS;
    (v < PERSONAS).then_some(v)
}

fn post(sender: Option<String>, text: impl Into<String>) -> PostSpec {
    PostSpec { sender, text: text.into(), media: Vec::new() }
}

fn link(h: &str) -> String {
    format!("For more information, please enter @{h}")
}

fn channels() -> Vec<ChannelSpec> {
    let tiers: Vec<Vec<String>> = vec![
        (0..CHANNELS_BY_DEPTH[0]).map(seed_channel).collect(),
        (0..CHANNELS_BY_DEPTH[1]).map(lounge).collect(),
        (0..CHANNELS_BY_DEPTH[2]).map(room).collect(),
        (0..CHANNELS_BY_DEPTH[3]).map(corner).collect(),
    ];
    let all: Vec<&String> = tiers.iter().flatten().collect();
    let mut links: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut add = |from: String, to: String| links.entry(from).or_default().push(to);
    for i in 0..SEED_CHANNELS {
        for j in 0..3 {
            add(seed_channel(i), lounge(3 * i + j));
        }
    }
    for j in 0..CHANNELS_BY_DEPTH[1] {
        add(lounge(j), room(j));
        if j + CHANNELS_BY_DEPTH[1] < CHANNELS_BY_DEPTH[2] {
            add(lounge(j), room(j + CHANNELS_BY_DEPTH[1]));
        }
        add(lounge(j), lounge((j + 1) % CHANNELS_BY_DEPTH[1]));
    }
    add(lounge(7), DANGLING.to_string());
    for m in 0..CHANNELS_BY_DEPTH[2] {
        if m < CHANNELS_BY_DEPTH[3] {
            add(room(m), corner(m));
        }
        add(room(m), seed_channel(m % SEED_CHANNELS));
    }
    add(corner(0), BEYOND.to_string());

    // offers: actor i posts in channel i mod 98, the first 30 also elsewhere
    let mut offers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..OFFER_ACTORS {
        offers.entry(i % all.len()).or_default().push(i);
        if i < 30 {
            offers.entry((i * 7 + 3) % all.len()).or_default().push(i);
        }
    }

    let mut out: Vec<ChannelSpec> = all
        .iter()
        .enumerate()
        .map(|(c, handle)| {
            let mut posts = vec![post(None, "1v1 video chat, price list pinned")];
            for (k, i) in offers.get(&c).into_iter().flatten().enumerate() {
                posts.push(post(Some(actor_id(*i)), OFFERS[(i + k) % OFFERS.len()]));
                posts.push(post(Some(format!("member-{c:02}-{k}")), CHATTER[(c + k) % CHATTER.len()]));
            }
            let pins = links.get(*handle).into_iter().flatten().map(|h| post(None, link(h))).collect();
            ChannelSpec {
                handle: handle.to_string(),
                title: format!("{} | private video chat", handle.replace('_', " ")),
                posts,
                pins,
                join_rejected: false,
            }
        })
        .collect();
    out.push(ChannelSpec {
        handle: BEYOND.to_string(),
        title: "far away".into(),
        posts: vec![post(Some("acct-900".into()), OFFERS[0])],
        pins: Vec::new(),
        join_rejected: false,
    });
    out
}

/// Methods dealt to success slot `s`: every 30th entry of the disclosure
/// list, so no slot gets the same method twice.
pub fn methods_for(slot: usize) -> Vec<(PaymentMethod, bool)> {
    let mut dealt = Vec::new();
    let mut wechat_seen = 0;
    for (method, n) in DISCLOSURES {
        for _ in 0..n {
            let as_image = match method {
                PaymentMethod::WeChat => {
                    wechat_seen += 1;
                    wechat_seen <= WECHAT_AS_IMAGE
                }
                m => m.image_only(),
            };
            dealt.push((method, as_image));
        }
    }
    dealt.into_iter().skip(slot).step_by(SUCCESSES).collect()
}

fn image(labels: &[String], payload: String) -> MediaSpec {
    MediaSpec { kind: MediaKind::Image, person_labels: labels.to_vec(), payload }
}

/// The last message of a successful persona: every dealt method, text ones
/// one per line, image ones as QR screenshots without people in them.
fn payment_message(slot: usize) -> ReplyMessage {
    let mut lines = vec!["ok baby, pay here and we start".to_string()];
    let mut media = Vec::new();
    for (method, as_image) in methods_for(slot) {
        let tag = format!("{:02}", slot);
        match (method, as_image) {
            (PaymentMethod::Usdt, _) => lines.push(format!("USDT TRC20: T{}", tron_body(slot))),
            (PaymentMethod::WeChat, false) => lines.push(format!("wxid_vc{tag}x7k2")),
            (PaymentMethod::WeChat, true) => media.push(image(&[], format!("wxp://f2f0vc{tag}q8"))),
            (PaymentMethod::Alipay, _) => lines.push(format!("支付宝: 1380013{tag}88")),
            (PaymentMethod::AlipayImage, _) => media.push(image(&[], format!("https://qr.alipay.com/fkx{tag}vc9"))),
            (PaymentMethod::QQImage, _) => media.push(image(&[], format!("https://i.qianbao.qq.com/p/{tag}v"))),
            (PaymentMethod::Bank, _) => lines.push(format!("银行卡 62220202001122{tag}45")),
            (PaymentMethod::PaymentSolution, _) => lines.push(format!("payment link: pay.vc-{tag}.example/go")),
        }
    }
    ReplyMessage { text: lines.join("\n"), media }
}

/// 33 base58 characters unique to `slot`.
fn tron_body(slot: usize) -> String {
    const B58: &[u8] = b"123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
    (0..33).map(|k| B58[(slot * 7 + k * 13) % B58.len()] as char).collect()
}

fn first_reply(quote: Option<(u32, u32)>) -> String {
    match quote {
        Some((m, p)) => format!("hi dear, {m}分钟 {p}元"),
        None => "hi dear".to_string(),
    }
}

fn labels_for(platform: bool, slot: usize) -> Vec<String> {
    if platform {
        vec![format!("girl-{slot}-a"), format!("girl-{slot}-b")]
    } else {
        vec![format!("self-{slot}")]
    }
}

fn persona(i: usize, slot: usize) -> PersonaSpec {
    let actor_id = actor_id(i);
    if slot < SUCCESSES {
        let platform = slot % 3 == 2;
        let labels = labels_for(platform, slot);
        let rounds = SUCCESS_ROUNDS[slot] as usize;
        let mut script: Vec<Vec<ReplyMessage>> = (0..rounds)
            .map(|r| vec![ReplyMessage { text: SMALL_TALK[(slot + r) % SMALL_TALK.len()].into(), media: vec![] }])
            .collect();
        script[0] = vec![
            ReplyMessage { text: first_reply(QUOTES.get(slot).copied()), media: vec![] },
            ReplyMessage { text: String::new(), media: vec![image(&labels, String::new())] },
        ];
        script[rounds - 1].push(payment_message(slot));
        let kind = if platform { PersonaKind::SlowPlatform } else { PersonaKind::FastIndividual };
        PersonaSpec { actor_id, kind, reply_latency: None, script, blocks_after: None }
    } else if slot < SUCCESSES + GHOSTS {
        PersonaSpec { actor_id, kind: PersonaKind::Ghost, reply_latency: None, script: vec![], blocks_after: None }
    } else {
        let k = DROPOUT_ROUNDS[slot - SUCCESSES - GHOSTS];
        let labels = labels_for(false, slot);
        let mut script: Vec<Vec<ReplyMessage>> = (0..k as usize)
            .map(|r| vec![ReplyMessage { text: SMALL_TALK[(slot + r) % SMALL_TALK.len()].into(), media: vec![] }])
            .collect();
        script[0].push(ReplyMessage { text: String::new(), media: vec![image(&labels, String::new())] });
        PersonaSpec {
            actor_id,
            kind: PersonaKind::Disengager { after_rounds: k },
            reply_latency: None,
            script,
            blocks_after: None,
        }
    }
}

pub fn reference_scenario(seed: u64) -> Scenario {
    let mut personas: Vec<PersonaSpec> =
        (0..OFFER_ACTORS).filter_map(|i| persona_slot(i).map(|s| persona(i, s))).collect();
    personas.sort_by(|a, b| a.actor_id.cmp(&b.actor_id));
    let mut directory = BTreeMap::new();
    directory.insert(DIRECTORY_KEYWORD.to_string(), (0..SEED_CHANNELS).map(seed_channel).collect());
    Scenario { seed, channels: channels(), directory, personas, ..Scenario::default() }
}
