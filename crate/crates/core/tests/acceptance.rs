//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use gvb::generator::{template_text, ExternalTarget, DEFAULT_SPEAKING_RATE};
use gvb::sim::{parse_scenario, BackendConfig, Component, SimConfig, TraceRecord};
use gvb::{
    classify_tier, emergency_score, fit_to_duration, route_waiting_call, BaselineProfile,
    BurstDecision, BurstLedger, BurstPolicy, BurstRecord, CallEngine, CallerContext, DecisionKind,
    DenyReason, EmergencyAssessment, FactorConstants, FactorScores, GenerationParams, LocationType,
    MessageGenerator, Point, SubscriberId, TierThresholds, Weights,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sid(s: &str) -> SubscriberId {
    s.parse().unwrap()
}

fn run_sim(src: &str, config: &SimConfig) -> Vec<TraceRecord> {
    let events = parse_scenario(src).expect("scenario parses");
    gvb::sim::run(&events, config).expect("scenario runs")
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

// 1. tier routing table

fn routing_table() -> Outcome {
    let th = TierThresholds::new(0.9, 0.6, 0.3).map_err(|e| e.to_string())?;
    let policy = BurstPolicy::default_for(sid("A"));
    let table = [
        (0.95, DecisionKind::ConnectOverride),
        (0.7, DecisionKind::PermitVoiceBurst),
        (0.4, DecisionKind::PermitTextBurstWithBeep),
        (0.1, DecisionKind::StandardWaiting),
    ];
    for (score, want) in table {
        let mut engine = CallEngine::new();
        for id in ["A", "B", "C"] {
            engine.register(sid(id)).unwrap();
        }
        engine.place_call(&sid("A"), &sid("B"), 0).unwrap();
        let waiting = engine.place_call(&sid("C"), &sid("A"), 1).unwrap();
        let assessment = EmergencyAssessment::from_score(score, &th);
        let got = route_waiting_call(&waiting, &assessment, &policy)
            .map_err(|e| e.to_string())?
            .kind;
        check(got == want, || format!("score {score}: got {got}, want {want}"))?;
    }
    Ok("0.95/0.7/0.4/0.1 -> ConnectOverride/PermitVoiceBurst/PermitTextBurstWithBeep/StandardWaiting".into())
}

// 2. pre-approved bursts against a brute-force timeline

/// Second-by-second timeline. Each burst paints `t` busy seconds followed by
/// `g` cooling seconds; an attempt succeeds on an unpainted second while
/// budget remains.
fn timeline_oracle(t: u64, g: u64, n: usize, attempts: &[u64]) -> (Vec<u64>, Option<u64>) {
    let horizon = attempts.iter().max().copied().unwrap_or(0) as usize + 1;
    let mut painted = vec![false; horizon + (t + g) as usize + 1];
    let mut starts = Vec::new();
    let mut first_budget_denial = None;
    for &s in attempts {
        if starts.len() == n {
            first_budget_denial.get_or_insert(s);
            continue;
        }
        if painted[s as usize] {
            continue;
        }
        starts.push(s);
        for x in s..s + t + g {
            painted[x as usize] = true;
        }
    }
    (starts, first_budget_denial)
}

fn preapproved_bursts() -> Outcome {
    let (t, g, n) = (5u64, 30u64, 3u32);
    let attempts: Vec<u64> = (10..=200).collect();
    let (oracle, oracle_denial) = timeline_oracle(t, g, n as usize, &attempts);
    let offsets: Vec<u64> = oracle.iter().map(|s| s - oracle[0]).collect();
    check(offsets == [0, 35, 70], || format!("oracle offsets {offsets:?}"))?;

    // ledger, full-length bursts
    let policy = BurstPolicy::new(sid("A"), t as i64, g as i64, n as i64, BTreeSet::from([sid("C")]))
        .map_err(|e| e.to_string())?;
    let mut ledger = BurstLedger::new(1, policy);
    let mut starts = Vec::new();
    let mut denial = None;
    for &now in &attempts {
        match ledger.request_burst(now) {
            BurstDecision::Permit(p) => {
                starts.push(now);
                let rec = BurstRecord {
                    session_id: 1,
                    sequence: p.sequence,
                    start: now,
                    duration: t,
                    payload: None,
                };
                ledger.record_burst(&rec).map_err(|e| e.to_string())?;
            }
            BurstDecision::Deny(DenyReason::BudgetExhausted) => {
                denial.get_or_insert(now);
            }
            BurstDecision::Deny(_) => {}
        }
    }
    check(starts == oracle, || format!("ledger {starts:?} vs oracle {oracle:?}"))?;
    check(denial == oracle_denial, || format!("ledger denial {denial:?} vs {oracle_denial:?}"))?;

    // simulator, one attempt per second with long transcripts
    let mut src = String::from(
        "subscriber A\nsubscriber B\nsubscriber C\npolicy A t=5 G=30 N=3 approve=C\nat 0 call A B\nat 10 call C A\n",
    );
    for s in &attempts {
        src.push_str(&format!(
            "at {s} burst C transcript=\"please pick up now this is urgent and I really need to talk with you\"\n"
        ));
    }
    let trace = run_sim(&src, &SimConfig::default());
    let sent: Vec<u64> = trace
        .iter()
        .filter(|r| r.is(Component::Scheduler, "BURST_SENT"))
        .map(|r| r.get("start").unwrap().parse().unwrap())
        .collect();
    check(sent == oracle, || format!("sim {sent:?} vs oracle {oracle:?}"))?;
    let durations_ok = trace
        .iter()
        .filter(|r| r.is(Component::Scheduler, "BURST_SENT"))
        .all(|r| r.get("duration") == Some("5"));
    check(durations_ok, || "sim bursts were not full length".into())?;
    let first_deny_after_last = trace.iter().find(|r| {
        r.is(Component::Scheduler, "DENY") && r.at > *oracle.last().unwrap()
    });
    check(
        first_deny_after_last.and_then(|r| r.get("reason")) == Some("BudgetExhausted"),
        || format!("fourth attempt: {first_deny_after_last:?}"),
    )?;
    Ok(format!("starts {sent:?} = +0/+35/+70, fourth attempt BudgetExhausted"))
}

// 3. runtime scenario score

fn runtime_score() -> Outcome {
    let profile = BaselineProfile::new(
        vec![Point { x: 0.0, y: 0.0 }],
        BaselineProfile::hour_range(8, 22),
        70.0,
        false,
    )
    .map_err(|e| e.to_string())?;
    let k = FactorConstants::default();
    let w = Weights::default();
    let th = TierThresholds::default();
    let risky = CallerContext::new(Point { x: 0.0, y: 0.0 }, LocationType::Highway, 3, Some(130.0), Some(14.0))
        .map_err(|e| e.to_string())?;
    let a = EmergencyAssessment::assess(&risky, &profile, &k, &w, &th);
    // location 1, timing 5/6, health 1, activity 1
    let expected = (1.0 + 5.0 / 6.0 + 1.0 + 1.0) / 4.0;
    check((a.emergency_score - expected).abs() <= 1e-12, || {
        format!("score {} vs oracle {expected}", a.emergency_score)
    })?;
    check((a.emergency_score - 0.958).abs() <= 1e-3, || format!("score {}", a.emergency_score))?;
    check(DecisionKind::for_tier(a.tier) == DecisionKind::ConnectOverride, || {
        format!("tier {}", a.tier)
    })?;

    let calm = CallerContext::new(Point { x: 0.0, y: 0.0 }, LocationType::Home, 12, Some(70.0), Some(0.0))
        .map_err(|e| e.to_string())?;
    let b = EmergencyAssessment::assess(&calm, &profile, &k, &w, &th);
    check(b.emergency_score == 0.0, || format!("baseline score {}", b.emergency_score))?;
    check(DecisionKind::for_tier(b.tier) == DecisionKind::StandardWaiting, || {
        format!("baseline tier {}", b.tier)
    })?;

    let trace = run_sim(
        &std::fs::read_to_string(scenarios_dir().join("runtime_override.gvb")).unwrap(),
        &SimConfig::default(),
    );
    let routed = trace
        .iter()
        .find(|r| r.is(Component::Call, "ROUTED"))
        .ok_or("no ROUTED record")?;
    check(routed.get("decision") == Some("ConnectOverride"), || format!("{routed}"))?;
    Ok(format!(
        "score {:.9} -> ConnectOverride, baseline 0 -> StandardWaiting",
        a.emergency_score
    ))
}

// 4. incapacity substitution

fn incapacity_substitution() -> Outcome {
    let t = 5;
    let src = "subscriber A\nsubscriber B\nsubscriber C\npolicy A t=5 G=30 N=3 approve=C\n\
               at 0 call A B\nat 10 call C A\nat 12 burst C silence keywords=\"kitchen fire\"\n";
    let trace = run_sim(src, &SimConfig::default());
    let sent = trace
        .iter()
        .find(|r| r.is(Component::Scheduler, "BURST_SENT"))
        .ok_or("no burst sent")?;
    check(sent.get("payload") == Some("generated"), || format!("{sent}"))?;
    let text = sent.get("text").unwrap();
    check(text.contains("fire"), || format!("text {text:?}"))?;
    let duration: u64 = sent.get("duration").unwrap().parse().unwrap();
    check(duration <= t, || format!("duration {duration}"))?;

    let mut generator = MessageGenerator::template(DEFAULT_SPEAKING_RATE);
    let out = generator
        .generate("keywords: kitchen fire", &GenerationParams::default())
        .map_err(|e| e.to_string())?;
    let fitted = fit_to_duration(&out.message, t, DEFAULT_SPEAKING_RATE);
    check(fitted.text.contains("fire"), || format!("fitted {:?}", fitted.text))?;
    check(fitted.estimated_speech_seconds <= t as f64, || {
        format!("{} s", fitted.estimated_speech_seconds)
    })?;
    Ok(format!(
        "generated {text:?}, {:.2} s <= {t} s",
        fitted.estimated_speech_seconds
    ))
}

// 5. scheduler properties

/// Reference model of the gap rule, tracked from accepted records only.
struct Observer {
    t: u64,
    g: u64,
    budget: u32,
    accepted: Vec<(u64, u64)>,
    open_permit: Option<(u64, u64)>,
}

impl Observer {
    fn should_permit(&self, now: u64) -> bool {
        if self.accepted.len() as u32 >= self.budget {
            return false;
        }
        if let Some((_, end)) = self.open_permit {
            if now < end {
                return false;
            }
        }
        match self.accepted.last() {
            Some(&(_, end)) => now >= end + self.g,
            None => true,
        }
    }
}

fn one_sequence(rng: &mut ChaCha8Rng, fresh: &BurstLedger) -> Result<(), String> {
    let policy = fresh.policy();
    let (t, g, n) = (policy.burst_seconds, policy.gap_seconds, policy.max_bursts);
    let mut ledger = fresh.clone();
    let mut obs = Observer {
        t,
        g,
        budget: n,
        accepted: Vec::new(),
        open_permit: None,
    };
    let mut now = 0u64;
    for _ in 0..rng.random_range(4..24) {
        now += rng.random_range(0..=g + t + 3);
        if rng.random_ratio(1, 40) {
            ledger.dismiss();
            obs.budget = obs.accepted.len() as u32;
            obs.open_permit = None;
            continue;
        }
        let expect = obs.should_permit(now);
        let permit = match ledger.request_burst(now) {
            BurstDecision::Permit(p) => p,
            BurstDecision::Deny(reason) => {
                if expect {
                    return Err(format!("denied {reason} at {now}, model permits"));
                }
                continue;
            }
        };
        if !expect {
            return Err(format!("permitted at {now}, model denies"));
        }
        if let Some((_, end)) = obs.open_permit {
            if now < end {
                return Err(format!("overlapping permit at {now}, previous window ends {end}"));
            }
        }
        if permit.window_end != now + obs.t {
            return Err(format!("window {permit:?}"));
        }
        obs.open_permit = Some((now, permit.window_end));
        match rng.random_range(0..10) {
            0..=1 => {} // let the window lapse
            2 => {
                // over-long burst must be refused without side effects
                let bad = BurstRecord {
                    session_id: 7,
                    sequence: permit.sequence,
                    start: now,
                    duration: t + 1,
                    payload: None,
                };
                if ledger.record_burst(&bad).is_ok() {
                    return Err("accepted a burst longer than t".into());
                }
            }
            _ => {
                let duration = rng.random_range(1..=t);
                let start = now + rng.random_range(0..=t - duration);
                let rec = BurstRecord {
                    session_id: 7,
                    sequence: permit.sequence,
                    start,
                    duration,
                    payload: None,
                };
                ledger.record_burst(&rec).map_err(|e| e.to_string())?;
                if let Some(&(_, prev_end)) = obs.accepted.last() {
                    if start < prev_end + g {
                        return Err(format!("burst at {start} within {g} s of {prev_end}"));
                    }
                }
                obs.accepted.push((start, start + duration));
                obs.open_permit = None;
                now = start + duration;
            }
        }
    }
    if obs.accepted.len() as u32 > n || ledger.bursts_sent() as usize != obs.accepted.len() {
        return Err(format!("{} bursts with N={n}", obs.accepted.len()));
    }
    Ok(())
}

fn scheduler_properties() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut configs = 0;
    let mut sequences = 0u64;
    for t in 1..=5u64 {
        for g in 0..=60u64 {
            for n in 1..=5u32 {
                configs += 1;
                let policy = BurstPolicy::new(sid("A"), t as i64, g as i64, n as i64, BTreeSet::new()).unwrap();
                let fresh = BurstLedger::new(7, policy);
                for _ in 0..10_000 {
                    sequences += 1;
                    one_sequence(&mut rng, &fresh).map_err(|e| format!("t={t} G={g} N={n}: {e}"))?;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{sequences} sequences over {configs} (t,G,N), 0 violations"))
}

// 6. priority properties

fn priority_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfac7);
    let k = FactorConstants::default();
    for i in 0..10_000 {
        let locs: Vec<Point> = (0..rng.random_range(0..4))
            .map(|_| Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)).unwrap())
            .collect();
        let from = rng.random_range(0..24);
        let to = rng.random_range(0..24);
        let profile = BaselineProfile::new(
            locs,
            BaselineProfile::hour_range(from, to),
            rng.random_range(30.0..=120.0),
            rng.random_bool(0.5),
        )
        .unwrap();
        let loctype = LocationType::ALL[rng.random_range(0..LocationType::ALL.len())];
        let ctx = CallerContext::new(
            Point::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)).unwrap(),
            loctype,
            rng.random_range(0..24),
            rng.random_bool(0.8).then(|| rng.random_range(20.0..=250.0)),
            rng.random_bool(0.8).then(|| rng.random_range(0.0..80.0)),
        )
        .unwrap();
        let f = FactorScores::compute(&ctx, &profile, &k);
        for s in f.as_array() {
            check((0.0..=1.0).contains(&s), || format!("case {i}: factor {s} in {f:?}"))?;
        }

        let w = Weights::new([
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..5.0),
            rng.random_range(0.01..5.0),
        ])
        .unwrap();
        let base = emergency_score(&f, &w);
        check((0.0..=1.0).contains(&base), || format!("case {i}: score {base}"))?;

        for idx in 0..4 {
            let mut raised = f.as_array();
            raised[idx] = rng.random_range(raised[idx]..=1.0);
            let g = FactorScores {
                location: raised[0],
                timing: raised[1],
                health: raised[2],
                activity: raised[3],
            };
            let up = emergency_score(&g, &w);
            check(up >= base - 1e-15, || format!("case {i}: factor {idx} raised, {base} -> {up}"))?;
        }

        let c = rng.random_range(0.001..1000.0);
        let scaled = Weights::new(w.as_array().map(|x| x * c)).unwrap();
        let s2 = emergency_score(&f, &scaled);
        check((s2 - base).abs() <= 1e-12, || format!("case {i}: scaling by {c}: {base} vs {s2}"))?;

        let mut edges = [
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
        ];
        edges.sort_by(f64::total_cmp);
        if let Ok(th) = TierThresholds::new(edges[2], edges[1], edges[0]) {
            let a = rng.random_range(0.0..=1.0);
            let b = rng.random_range(0.0..=1.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            check(classify_tier(lo, &th) <= classify_tier(hi, &th), || {
                format!("case {i}: tier not monotone between {lo} and {hi}")
            })?;
        }
    }
    Ok("10000 cases: bounds, monotonicity, scale invariance 1e-12, tier order".into())
}

// 7. determinism

fn sha256_file(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut names = Vec::new();
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "gvb") {
            names.push(path);
        }
    }
    names.sort();
    check(!names.is_empty(), || "no golden scenarios".into())?;
    for path in &names {
        let mut hashes = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("run{run}.trace"));
            let status = Command::new(env!("CARGO_BIN_EXE_gvbsim"))
                .arg("run")
                .arg(path)
                .args(["--rng-seed", "42", "--trace"])
                .arg(&out)
                .status()
                .map_err(|e| e.to_string())?;
            check(status.success(), || format!("{} exited {status}", path.display()))?;
            hashes.push(sha256_file(&out));
        }
        check(hashes[0] == hashes[1], || format!("{} differs between runs", path.display()))?;
    }
    Ok(format!("{} scenarios hash-identical across runs", names.len()))
}

// 8. external protocol

const ONE_BURST: &str = "subscriber A\nsubscriber B\nsubscriber C\npolicy A t=5 G=30 N=3 approve=C\n\
                         at 0 call A B\nat 10 call C A\nat 12 burst C silence keywords=\"house fire\"\n";

fn external_config(addr: String, timeout: Duration) -> SimConfig {
    SimConfig {
        backend: BackendConfig::External {
            target: ExternalTarget::Tcp(addr),
            timeout,
        },
        ..SimConfig::default()
    }
}

fn external_protocol() -> Outcome {
    // replying stub
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap().to_string();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            tx.send(line).unwrap();
            writer.write_all(b"OK text=Fire%20at%20home.%20Send%20help.\n").unwrap();
        }
    });
    let trace = run_sim(ONE_BURST, &external_config(addr, Duration::from_secs(2)));
    let request = rx.recv_timeout(Duration::from_secs(1)).map_err(|_| "stub saw no request")?;
    let fields: BTreeSet<&str> = request.split(' ').collect();
    check(request.starts_with("GENERATE "), || format!("request {request:?}"))?;
    for want in ["max_words=50", "temperature=0.9", "sample=1"] {
        check(fields.contains(want), || format!("request {request:?} lacks {want}"))?;
    }
    let sent = trace
        .iter()
        .find(|r| r.is(Component::Scheduler, "BURST_SENT"))
        .ok_or("no burst sent")?;
    check(sent.get("text") == Some("Fire at home. Send help."), || format!("{sent}"))?;
    check(sent.get("backend") == Some("external"), || format!("{sent}"))?;

    // silent stub
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut line = String::new();
        let _ = BufReader::new(&stream).read_line(&mut line);
        thread::sleep(Duration::from_secs(2));
    });
    let trace = run_sim(ONE_BURST, &external_config(addr, Duration::from_millis(200)));
    let fallbacks: Vec<&TraceRecord> = trace
        .iter()
        .filter(|r| r.is(Component::Generator, "GEN_FALLBACK"))
        .collect();
    check(fallbacks.len() == 1, || format!("{} GEN_FALLBACK records", fallbacks.len()))?;
    check(fallbacks[0].get("reason") == Some("timeout"), || format!("{}", fallbacks[0]))?;
    let expected = template_text("keywords: house fire");
    let sent = trace
        .iter()
        .find(|r| r.is(Component::Scheduler, "BURST_SENT"))
        .ok_or("no burst sent after fallback")?;
    check(sent.get("text") == Some(expected.as_str()), || format!("{sent}"))?;
    check(sent.get("backend") == Some("template"), || format!("{sent}"))?;
    Ok(format!("request {request:?}; timeout -> 1 GEN_FALLBACK, template text"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("tier routing table", routing_table, Duration::from_secs(1)),
        ("pre-approved burst timeline", preapproved_bursts, Duration::from_secs(1)),
        ("runtime emergency score", runtime_score, Duration::from_secs(1)),
        ("incapacity substitution", incapacity_substitution, Duration::from_secs(1)),
        ("scheduler properties", scheduler_properties, Duration::from_secs(30)),
        ("priority properties", priority_properties, Duration::from_secs(10)),
        ("determinism", determinism, Duration::from_secs(30)),
        ("external protocol", external_protocol, Duration::from_secs(10)),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            })
            .and_then(|detail| {
                let elapsed = started.elapsed();
                if elapsed > limit {
                    Err(format!("{detail}; took {elapsed:?}, limit {limit:?}"))
                } else {
                    Ok(detail)
                }
            });
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name} ({ms} ms): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({ms} ms): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
