//! Trace invariants over randomly generated scenarios.

use std::collections::BTreeMap;

use proptest::prelude::*;

use gvb::sim::{parse_scenario, render_trace, Component, SimConfig, TraceRecord};

const PEOPLE: [&str; 5] = ["A", "B", "C", "D", "E"];

const TRANSCRIPTS: [&str; 4] = [
    "",
    "call me back",
    "there is a fire in the kitchen and I need you to come home right now please",
    "help",
];

#[derive(Debug, Clone)]
enum Op {
    Call(usize, usize, u8),
    Burst(usize, usize, bool),
    Media(usize),
    HangUp(usize),
    Answer(usize),
    Dismiss(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..5usize, 1..5usize, 0..4u8).prop_map(|(a, k, c)| Op::Call(a, (a + k) % 5, c)),
        (0..5usize, 0..4usize, any::<bool>()).prop_map(|(a, t, k)| Op::Burst(a, t, k)),
        (0..5usize).prop_map(Op::Media),
        (0..5usize).prop_map(Op::HangUp),
        (0..5usize).prop_map(Op::Answer),
        (0..5usize).prop_map(Op::Dismiss),
    ]
}

fn scenario(t: u64, g: u64, n: u32, approve: usize, ops: &[(u64, Op)]) -> String {
    let mut s = String::new();
    for p in PEOPLE {
        s.push_str(&format!("subscriber {p}\n"));
    }
    s.push_str(&format!("policy A t={t} G={g} N={n} approve={}\n", PEOPLE[approve]));
    s.push_str("at 0 call A B\n");
    for (at, op) in ops {
        let line = match op {
            Op::Call(a, b, c) => {
                let ctx = match c {
                    0 => "",
                    1 => " loctype=Highway hour=3 hr=130 speed=14",
                    2 => " loc=(3,4) hour=4",
                    _ => " hour=2 hr=120",
                };
                format!("call {} {}{ctx}", PEOPLE[*a], PEOPLE[*b])
            }
            Op::Burst(a, tr, kw) => {
                let content = match TRANSCRIPTS[*tr] {
                    "" => "silence".to_string(),
                    text => format!("transcript=\"{text}\""),
                };
                let kw = if *kw { " keywords=\"car crash\"" } else { "" };
                format!("burst {} {content}{kw}", PEOPLE[*a])
            }
            Op::Media(a) => format!("media {} image=\"smoke in the hallway\"", PEOPLE[*a]),
            Op::HangUp(a) => format!("hangup {}", PEOPLE[*a]),
            Op::Answer(a) => format!("answer {}", PEOPLE[*a]),
            Op::Dismiss(a) => format!("dismiss {}", PEOPLE[*a]),
        };
        s.push_str(&format!("at {at} {line}\n"));
    }
    s
}

fn num(r: &TraceRecord, key: &str) -> u64 {
    r.get(key).unwrap().parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn traces_are_well_formed(
        t in 1u64..=5,
        g in 0u64..=60,
        n in 1u32..=5,
        approve in 1usize..5,
        mut ops in prop::collection::vec((0u64..300, op()), 0..40),
    ) {
        ops.sort_by_key(|(at, _)| *at);
        let src = scenario(t, g, n, approve, &ops);
        let events = parse_scenario(&src).unwrap();
        let trace = gvb::sim::run(&events, &SimConfig::default()).unwrap();

        // ordering
        for (i, w) in trace.windows(2).enumerate() {
            prop_assert!(w[0].at <= w[1].at, "time went backwards at record {}", i + 2);
        }
        for (i, r) in trace.iter().enumerate() {
            prop_assert_eq!(r.seq, i as u64 + 1);
        }
        prop_assert!(trace.first().unwrap().is(Component::Sim, "START"));
        prop_assert!(trace.last().unwrap().is(Component::Sim, "END"));

        // every permit is closed exactly once, within its window
        let mut ledgers: BTreeMap<u64, (u64, u64, u64)> = BTreeMap::new();
        let mut open: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        let mut sent: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
        for r in &trace {
            if r.is(Component::Scheduler, "LEDGER_OPEN") {
                ledgers.insert(num(r, "session"), (num(r, "t"), num(r, "G"), num(r, "N")));
            }
            if r.is(Component::Scheduler, "PERMIT") {
                let key = (num(r, "session"), num(r, "burst"));
                prop_assert!(open.insert(key, num(r, "window_end")).is_none(), "permit reissued: {}", r);
            }
            if r.is(Component::Scheduler, "BURST_SENT") || r.is(Component::Scheduler, "BURST_WINDOW_SILENT") {
                let key = (num(r, "session"), num(r, "burst"));
                let window_end = open.remove(&key);
                prop_assert!(window_end.is_some(), "burst without permit: {}", r);
                let (start, duration) = (num(r, "start"), num(r, "duration"));
                let limit = ledgers[&key.0].0;
                prop_assert!(duration >= 1 && duration <= limit, "{}", r);
                prop_assert!(start + duration <= window_end.unwrap(), "{}", r);
                prop_assert_eq!(r.at, start + duration);
                sent.entry(key.0).or_default().push((start, start + duration));
            }
        }
        prop_assert!(open.is_empty(), "unclosed permits {:?}", open);

        // per-episode budget and gap
        for (session, bursts) in &sent {
            let (_, gap, budget) = ledgers[session];
            prop_assert!(bursts.len() as u64 <= budget);
            for w in bursts.windows(2) {
                prop_assert!(w[1].0 >= w[0].1 + gap, "gap violated: {:?}", bursts);
            }
        }

        // same input, same bytes
        let again = gvb::sim::run(&events, &SimConfig::default()).unwrap();
        prop_assert_eq!(render_trace(&trace), render_trace(&again));
    }
}
